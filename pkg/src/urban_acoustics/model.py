"""The classifier: four conv blocks, an adaptive average pool, and a two-layer
head. Each block runs conv -> ReLU -> batch norm, which is the layer order
this architecture uses throughout (norm after the activation, not before).

Parameters live in plain dicts keyed "conv1.weight", "bn3.gamma", "fc2.bias",
and so on; batch-norm running stats sit in a separate dict with keys
"bn1.mean" / "bn1.var". With the default blocks and a 10-class head the model
has 2,111,338 trainable parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from . import layers


@dataclass(frozen=True)
class ConvBlockConfig:
    out_filters: int
    kernel: tuple  # (kh, kw)
    padding: tuple  # (ph, pw)
    stride: tuple  # (sh, sw)


# filters double per block; the first two blocks use 3x5 kernels (mel x time),
# the last two 5x5, all with padding 2; only block 1 strides
DEFAULT_BLOCKS = (
    ConvBlockConfig(out_filters=32, kernel=(3, 5), padding=(2, 2), stride=(2, 2)),
    ConvBlockConfig(out_filters=64, kernel=(3, 5), padding=(2, 2), stride=(1, 1)),
    ConvBlockConfig(out_filters=128, kernel=(5, 5), padding=(2, 2), stride=(1, 1)),
    ConvBlockConfig(out_filters=256, kernel=(5, 5), padding=(2, 2), stride=(1, 1)),
)


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    in_channels: int = 2
    blocks: tuple = DEFAULT_BLOCKS
    pool_grid: tuple = (2, 4)
    fc_hidden: int = 512

    @property
    def flat_features(self):
        return self.blocks[-1].out_filters * self.pool_grid[0] * self.pool_grid[1]


# a two-block stand-in with the same cell structure, for fast tests
TINY_BLOCKS = (
    ConvBlockConfig(out_filters=4, kernel=(3, 5), padding=(2, 2), stride=(2, 2)),
    ConvBlockConfig(out_filters=4, kernel=(3, 5), padding=(2, 2), stride=(1, 1)),
)


def tiny_config(num_classes=3):
    return ModelConfig(num_classes=num_classes, blocks=TINY_BLOCKS, fc_hidden=16)


@dataclass
class Model:
    config: ModelConfig
    params: dict
    running: dict
    dtype: np.dtype
    bn_updates: int = 0  # train-mode forward passes folded into running stats


def init_params(config, seed, dtype=np.float32):
    """Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases, unit
    gammas. Weight draws come from one PCG64 stream seeded with `seed`, in
    layer order, so the same seed always builds the same model."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype)
    params = {}
    running = {}

    def kaiming(shape, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    in_ch = config.in_channels
    for b, blk in enumerate(config.blocks, start=1):
        kh, kw = blk.kernel
        params[f"conv{b}.weight"] = kaiming((blk.out_filters, in_ch, kh, kw), in_ch * kh * kw)
        params[f"conv{b}.bias"] = np.zeros(blk.out_filters, dtype=dtype)
        params[f"bn{b}.gamma"] = np.ones(blk.out_filters, dtype=dtype)
        params[f"bn{b}.beta"] = np.zeros(blk.out_filters, dtype=dtype)
        running[f"bn{b}.mean"] = np.zeros(blk.out_filters, dtype=dtype)
        running[f"bn{b}.var"] = np.ones(blk.out_filters, dtype=dtype)
        in_ch = blk.out_filters

    flat = config.flat_features
    params["fc1.weight"] = kaiming((config.fc_hidden, flat), flat)
    params["fc1.bias"] = np.zeros(config.fc_hidden, dtype=dtype)
    params["fc2.weight"] = kaiming((config.num_classes, config.fc_hidden), config.fc_hidden)
    params["fc2.bias"] = np.zeros(config.num_classes, dtype=dtype)

    return Model(config=config, params=params, running=running, dtype=dtype)


def count_params(model):
    return sum(int(p.size) for p in model.params.values())


def forward(model, x, training=False, return_caches=False):
    """Logits for a batch of feature tensors (N, in_channels, mels, frames).

    Any spatial size the conv stack and pool grid can digest is accepted;
    the channel count must match. With return_caches=True the returned
    caches feed backward(); training=True also updates batch-norm running
    stats, so eval calls must leave it False.
    """
    p = model.params
    cfg = model.config
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ValueError(
            f"expected input (N, {cfg.in_channels}, mels, frames), got {x.shape}"
        )
    if x.dtype != model.dtype:
        raise ValueError(f"input dtype {x.dtype} does not match model dtype {model.dtype}")

    caches = {"blocks": [], "in_shape": x.shape}
    h = x
    for b, blk in enumerate(cfg.blocks, start=1):
        conv_in = h
        a = layers.conv2d_forward(conv_in, p[f"conv{b}.weight"], p[f"conv{b}.bias"],
                                  stride=blk.stride, padding=blk.padding)
        r = layers.relu(a)
        h, bn_cache = layers.batchnorm2d_forward(
            r, p[f"bn{b}.gamma"], p[f"bn{b}.beta"],
            model.running[f"bn{b}.mean"], model.running[f"bn{b}.var"], training)
        if return_caches:
            caches["blocks"].append({
                "conv_in": conv_in, "pre_relu": a, "relu_out": r, "bn": bn_cache,
            })
    if training:
        model.bn_updates += 1

    pooled = layers.adaptive_avgpool2d(h, cfg.pool_grid)
    flat = pooled.reshape(x.shape[0], cfg.flat_features)
    z1 = layers.linear_forward(flat, p["fc1.weight"], p["fc1.bias"])
    h1 = layers.relu(z1)
    logits = layers.linear_forward(h1, p["fc2.weight"], p["fc2.bias"])

    if not return_caches:
        return logits
    caches["pool_in_shape"] = h.shape
    caches["flat"] = flat
    caches["z1"] = z1
    caches["h1"] = h1
    return logits, caches


def backward(model, caches, grad_logits):
    """Gradients for every entry of model.params, keyed identically."""
    p = model.params
    cfg = model.config
    grads = {}

    g, grads["fc2.weight"], grads["fc2.bias"] = layers.linear_backward(
        grad_logits, caches["h1"], p["fc2.weight"])
    g = layers.relu_backward(g, caches["z1"])
    g, grads["fc1.weight"], grads["fc1.bias"] = layers.linear_backward(
        g, caches["flat"], p["fc1.weight"])

    g = g.reshape(caches["pool_in_shape"][0], cfg.blocks[-1].out_filters,
                  cfg.pool_grid[0], cfg.pool_grid[1])
    g = layers.adaptive_avgpool2d_backward(g, caches["pool_in_shape"], cfg.pool_grid)

    for b in range(len(cfg.blocks), 0, -1):
        blk = cfg.blocks[b - 1]
        cache = caches["blocks"][b - 1]
        if cache["bn"] is None:
            raise ValueError("backward needs caches from a training-mode forward")
        g, grads[f"bn{b}.gamma"], grads[f"bn{b}.beta"] = layers.batchnorm2d_backward(
            g, cache["bn"], p[f"bn{b}.gamma"])
        g = layers.relu_backward(g, cache["pre_relu"])
        g, grads[f"conv{b}.weight"], grads[f"conv{b}.bias"] = layers.conv2d_backward(
            g, cache["conv_in"], p[f"conv{b}.weight"],
            stride=blk.stride, padding=blk.padding)
    return grads
