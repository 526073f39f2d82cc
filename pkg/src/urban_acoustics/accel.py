"""Numba-accelerated inner loops with pure-NumPy fallbacks.

The JIT path is taken when numba imports cleanly; set URBAN_ACOUSTICS_NO_NUMBA=1
before import to force the NumPy implementations. The flag switches the two
kernels where the JIT measured faster (the order-preserving float64 matmul and
the batched FFT); im2col/col2im are strided-view copies that need no JIT. Both
paths compute the same results bit for bit (benchmarks/bench_accel.py times
them against each other).

The float64 matmul here accumulates strictly in k-order, one product at a time,
so its output is bit-for-bit reproducible and matches a plain summation loop.
BLAS matmul does not guarantee that (it blocks and reorders the reduction),
which is why the exact path exists at all.
"""

import os
import warnings

import numpy as np

NUMBA_ENABLED = False

if not os.environ.get("URBAN_ACOUSTICS_NO_NUMBA"):
    try:
        from numba import njit, prange

        # a too-old system TBB triggers a one-shot nuisance warning when the
        # parallel runtime starts; numba falls back to another layer anyway
        warnings.filterwarnings(
            "ignore", message=".*TBB threading layer requires TBB version.*"
        )
        NUMBA_ENABLED = True
    except ImportError:
        pass

if not NUMBA_ENABLED:
    # stand-ins so the decorated sources below still compile
    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range


# ---------------------------------------------------------------------------
# im2col / col2im
#
# Column layout: row index r = (c * kh + ky) * kw + kx, column index
# p = oh * wout + ow. Callers rely on this ordering when reshaping kernels.
#
# These are pure data movement, so both modes share one implementation: the
# strided-view copy beats a scalar JIT gather loop on every shape we benched
# (the windows overlap, so the view costs nothing and the copy is memcpy-like).


def im2col(xp, kh, kw, sh, sw, hout, wout, out=None):
    """Unfold a padded (C, H, W) image into a (C*kh*kw, hout*wout) matrix."""
    if out is None:
        out = np.empty((xp.shape[0] * kh * kw, hout * wout), dtype=xp.dtype)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::sh, ::sw]  # (C, hout, wout, kh, kw)
    out[...] = win.transpose(0, 3, 4, 1, 2).reshape(out.shape)
    return out


def col2im_add(cols, kh, kw, sh, sw, hout, wout, out):
    """Fold a column matrix back onto the padded image, accumulating overlaps."""
    channels = out.shape[0]
    six = cols.reshape(channels, kh, kw, hout, wout)
    for ky in range(kh):
        for kx in range(kw):
            out[:, ky : ky + sh * hout : sh, kx : kx + sw * wout : sw] += six[:, ky, kx]
    return out


# ---------------------------------------------------------------------------
# Order-preserving float64 matmul.
#
# out[i, j] = sum_k a[i, k] * b[k, j] accumulated with k ascending, no
# blocking, no pairwise tricks. Rows are independent so the numba kernel may
# parallelize over i without changing any bit of the result.


@njit(parallel=True, cache=True)
def _matmul_kserial_nb(a, b, out):
    n, k = a.shape
    m = b.shape[1]
    for i in prange(n):
        for j in range(m):
            out[i, j] = 0.0
        # k outer / j inner: unit-stride and vectorizable, yet every out[i, j]
        # still accumulates its terms with k strictly ascending
        for kk in range(k):
            aik = a[i, kk]
            for j in range(m):
                out[i, j] += aik * b[kk, j]


def _matmul_kserial_np(a, b, out):
    out[...] = 0.0
    for kk in range(a.shape[1]):
        out += a[:, kk : kk + 1] * b[kk]


def matmul_kserial(a, b):
    """float64 matmul with a fixed left-to-right summation order."""
    assert a.dtype == np.float64 and b.dtype == np.float64
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    if NUMBA_ENABLED:
        _matmul_kserial_nb(a, b, out)
    else:
        _matmul_kserial_np(a, b, out)
    return out


# ---------------------------------------------------------------------------
# Batched radix-2 FFT over the rows of a complex128 matrix.
#
# rev is the bit-reversal permutation for length n, tw[k] = exp(-2j*pi*k/n)
# for k < n/2. Rows are independent; see fourier.py for the table builders.


@njit(parallel=True, cache=True)
def _fft_rows_nb(data, rev, tw):
    rows, n = data.shape
    for i in prange(rows):
        row = data[i]
        tmp = np.empty(n, dtype=np.complex128)
        for j in range(n):
            tmp[j] = row[rev[j]]
        for j in range(n):
            row[j] = tmp[j]
        m = 2
        while m <= n:
            half = m >> 1
            step = n // m
            for s in range(0, n, m):
                for k in range(half):
                    w = tw[k * step]
                    u = row[s + k]
                    t = w * row[s + k + half]
                    row[s + k] = u + t
                    row[s + k + half] = u - t
            m <<= 1


def _fft_rows_np(data, rev, tw):
    n = data.shape[1]
    data[...] = data[:, rev]
    m = 2
    while m <= n:
        half = m >> 1
        step = n // m
        w = tw[: half * step : step]
        y = data.reshape(data.shape[0], n // m, m)
        u = y[..., :half].copy()
        t = y[..., half:] * w
        y[..., :half] = u + t
        y[..., half:] = u - t
        m <<= 1


def fft_rows_inplace(data, rev, tw):
    """In-place forward DFT of every row of a (rows, n) complex128 array."""
    if NUMBA_ENABLED:
        _fft_rows_nb(data, rev, tw)
    else:
        _fft_rows_np(data, rev, tw)
    return data
