"""Neural-net primitives on NumPy arrays: conv2d, batch norm, ReLU, pooling,
linear, and softmax cross-entropy. Forward functions return whatever the
matching backward needs; nothing here owns parameters.

conv2d lowers to im2col + matmul. In float32 the matmul is BLAS. In float64
it switches to an order-preserving summation kernel so results are exactly
the sums a naive quadruple loop would produce, bit for bit; that is the mode
verification and reproducibility runs use.
"""

import numpy as np

from . import accel


def _conv_out_size(h, w, kh, kw, sh, sw, ph, pw):
    hout = (h + 2 * ph - kh) // sh + 1
    wout = (w + 2 * pw - kw) // sw + 1
    return hout, wout


def _as_pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


def conv2d_forward(x, weight, bias, stride=1, padding=0):
    """Cross-correlation of (N, C, H, W) with (F, C, kh, kw) kernels.

    No kernel flip. Padding is zero-fill on both spatial edges. Bias, when
    given, is added after the full k-sum so the float64 path stays exact.
    """
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(padding)
    n, c, h, w = x.shape
    f, cw, kh, kw = weight.shape
    if cw != c:
        raise ValueError(f"input has {c} channels but kernels expect {cw}")
    hout, wout = _conv_out_size(h, w, kh, kw, sh, sw, ph, pw)
    if hout < 1 or wout < 1:
        raise ValueError(
            f"kernel {kh}x{kw} stride {sh}x{sw} does not fit input {h}x{w} "
            f"with padding {ph}x{pw}"
        )

    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    w2 = np.ascontiguousarray(weight.reshape(f, c * kh * kw))
    exact = x.dtype == np.float64

    out = np.empty((n, f, hout, wout), dtype=x.dtype)
    cols = np.empty((c * kh * kw, hout * wout), dtype=x.dtype)
    for i in range(n):
        accel.im2col(xp[i], kh, kw, sh, sw, hout, wout, out=cols)
        prod = accel.matmul_kserial(w2, cols) if exact else w2 @ cols
        if bias is not None:
            prod = prod + bias[:, None]
        out[i] = prod.reshape(f, hout, wout)
    return out


def conv2d_backward(grad_out, x, weight, stride=1, padding=0):
    """Gradients of conv2d_forward w.r.t. input, weight, and bias.

    The im2col matrices are recomputed rather than cached; at these layer
    sizes the recompute is far cheaper than holding every column matrix.
    """
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(padding)
    n, c, h, w = x.shape
    f, _, kh, kw = weight.shape
    hout, wout = grad_out.shape[2], grad_out.shape[3]

    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    w2 = np.ascontiguousarray(weight.reshape(f, c * kh * kw))

    grad_w2 = np.zeros((f, c * kh * kw), dtype=x.dtype)
    grad_xp = np.zeros_like(xp)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    cols = np.empty((c * kh * kw, hout * wout), dtype=x.dtype)
    for i in range(n):
        accel.im2col(xp[i], kh, kw, sh, sw, hout, wout, out=cols)
        g2 = np.ascontiguousarray(grad_out[i].reshape(f, hout * wout))
        grad_w2 += g2 @ cols.T
        grad_cols = w2.T @ g2
        accel.col2im_add(grad_cols, kh, kw, sh, sw, hout, wout, grad_xp[i])

    grad_x = grad_xp[:, :, ph : ph + h, pw : pw + w] if (ph or pw) else grad_xp
    return np.ascontiguousarray(grad_x), grad_w2.reshape(weight.shape), grad_b


def conv2d_reference(x, weight, bias, stride=1, padding=0):
    """Quadruple-loop cross-correlation in float64, accumulated one scalar
    product at a time in (channel, ky, kx) order. Slow; test oracle only."""
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(padding)
    n, c, h, w = x.shape
    f, _, kh, kw = weight.shape
    hout, wout = _conv_out_size(h, w, kh, kw, sh, sw, ph, pw)
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    wt = weight.astype(np.float64)
    out = np.zeros((n, f, hout, wout), dtype=np.float64)
    for i in range(n):
        for j in range(f):
            for oh in range(hout):
                for ow in range(wout):
                    acc = 0.0
                    for ci in range(c):
                        for ky in range(kh):
                            for kx in range(kw):
                                acc += (
                                    wt[j, ci, ky, kx]
                                    * xp[i, ci, oh * sh + ky, ow * sw + kx]
                                )
                    if bias is not None:
                        acc = acc + float(bias[j])
                    out[i, j, oh, ow] = acc
    return out


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def batchnorm2d_forward(x, gamma, beta, running_mean, running_var, training,
                        momentum=0.1, eps=1e-5):
    """Per-channel batch norm over (N, H, W).

    Training mode normalizes with biased batch statistics and folds them
    into the running buffers in place: run = (1-momentum)*run + momentum*batch.
    Eval mode uses the running buffers as-is, so evaluating a never-trained
    model is allowed (it just normalizes with the init stats).
    Returns (y, cache); cache is None in eval mode.
    """
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must be ({c},)")
    if training:
        if x.shape[0] * x.shape[2] * x.shape[3] < 2:
            raise ValueError("batch norm needs at least 2 values per channel in training")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))  # biased
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    y = y.astype(x.dtype, copy=False)
    cache = (xhat, inv_std) if training else None
    return y, cache


def batchnorm2d_backward(grad_out, cache, gamma):
    """Gradient through training-mode batch norm, batch statistics included."""
    xhat, inv_std = cache
    m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    g = grad_out * gamma[None, :, None, None]
    grad_x = (
        g - g.mean(axis=(0, 2, 3), keepdims=True)
        - xhat * (g * xhat).mean(axis=(0, 2, 3), keepdims=True)
    ) * inv_std[None, :, None, None]
    return grad_x.astype(grad_out.dtype, copy=False), grad_gamma, grad_beta


def adaptive_avgpool2d(x, grid):
    """Average pool onto a fixed (gh, gw) grid.

    Cell (i, j) averages rows floor(i*H/gh)..floor((i+1)*H/gh)-1 and the
    matching column range, so the cells tile the input exactly.
    """
    gh, gw = grid
    n, c, h, w = x.shape
    if h < gh or w < gw:
        raise ValueError(f"input {h}x{w} smaller than pool grid {gh}x{gw}")
    out = np.empty((n, c, gh, gw), dtype=x.dtype)
    for i in range(gh):
        r0, r1 = i * h // gh, (i + 1) * h // gh
        for j in range(gw):
            c0, c1 = j * w // gw, (j + 1) * w // gw
            out[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
    return out


def adaptive_avgpool2d_backward(grad_out, in_shape, grid):
    """Spread each cell gradient uniformly over the cells it averaged."""
    gh, gw = grid
    n, c, h, w = in_shape
    grad_x = np.zeros(in_shape, dtype=grad_out.dtype)
    for i in range(gh):
        r0, r1 = i * h // gh, (i + 1) * h // gh
        for j in range(gw):
            c0, c1 = j * w // gw, (j + 1) * w // gw
            area = (r1 - r0) * (c1 - c0)
            grad_x[:, :, r0:r1, c0:c1] += grad_out[:, :, i : i + 1, j : j + 1] / area
    return grad_x


def linear_forward(x, weight, bias):
    """x (N, D) times weight (F, D) transposed, plus bias."""
    y = x @ weight.T
    if bias is not None:
        y = y + bias
    return y


def linear_backward(grad_out, x, weight):
    grad_x = grad_out @ weight
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch via a log-sum-exp stable path.

    Returns (loss, grad_logits) with grad already divided by the batch size,
    i.e. the exact gradient of the returned mean loss.
    """
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"labels must be ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - lse
    loss = -float(log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)
