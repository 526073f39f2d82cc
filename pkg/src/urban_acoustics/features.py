"""Mel-spectrogram features: a (2, 64, 344) tensor per standardized clip.

Pipeline: STFT -> power -> mel filterbank -> dB with an 80 dB floor, then
optional masking augmentation, then per-example normalization. Tensors carry
a stage tag so ops can refuse input from the wrong pipeline point.
"""

import os
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio_io import WavError, decode_wav
from .dsp import STANDARD_RATE, standardize, time_shift
from .fourier import DEFAULT_STFT, stft

N_MELS = 64

STAGE_RAW = "raw-db"
STAGE_MASKED = "masked"
STAGE_NORMALIZED = "normalized"
_STAGES = (STAGE_RAW, STAGE_MASKED, STAGE_NORMALIZED)

DB_FLOOR_RANGE = 80.0
_POWER_EPS = 1e-10


class FeatureError(RuntimeError):
    """Feature extraction failed for a specific file."""


@dataclass
class SpectrogramTensor:
    data: np.ndarray  # float32, (channels, n_mels, frames)
    stage: str

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ValueError(f"expected a (2, mels, frames) tensor, got {self.data.shape}")
        if self.data.dtype != np.float32:
            raise ValueError(f"tensor must be float32, got {self.data.dtype}")
        if self.stage not in _STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass(frozen=True)
class NormalizationStats:
    mean: float
    std: float


@dataclass(frozen=True)
class AugmentConfig:
    """Training-time augmentation: circular shift plus spectrogram masks."""

    enabled: bool = True
    shift_limit: float = 0.4
    freq_mask_width: int = 6  # <= n_mels // 10
    time_mask_width: int = 34  # <= frames // 10
    n_freq_masks: int = 1
    n_time_masks: int = 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_fft_bins) float64
    sample_rate_hz: int
    f_min_hz: float
    f_max_hz: float

    @property
    def n_mels(self):
        return self.weights.shape[0]


def build_mel_filterbank(n_mels=N_MELS, n_fft_bins=513, sample_rate_hz=STANDARD_RATE,
                         f_min_hz=0.0, f_max_hz=None):
    """Triangular mel filters sampled at the FFT bin centres.

    Filter m rises linearly from mel edge m to m+1 and falls to m+2, the
    n_mels+2 edges being equally spaced in mel between f_min and f_max.
    No area normalization is applied.
    """
    if f_max_hz is None:
        f_max_hz = sample_rate_hz / 2.0
    if not 0.0 <= f_min_hz < f_max_hz:
        raise ValueError(f"need 0 <= f_min < f_max, got {f_min_hz}, {f_max_hz}")
    if f_max_hz > sample_rate_hz / 2.0:
        raise ValueError(f"f_max {f_max_hz} exceeds Nyquist {sample_rate_hz / 2.0}")
    if n_mels < 1:
        raise ValueError(f"n_mels must be positive, got {n_mels}")

    n_fft = 2 * (n_fft_bins - 1)
    bin_hz = np.arange(n_fft_bins) * (sample_rate_hz / n_fft)
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_min_hz), hz_to_mel(f_max_hz), n_mels + 2))

    weights = np.zeros((n_mels, n_fft_bins), dtype=np.float64)
    for m in range(n_mels):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    return MelFilterbank(weights, sample_rate_hz, f_min_hz, f_max_hz)


@lru_cache(maxsize=4)
def _default_filterbank(n_mels, n_fft_bins):
    return build_mel_filterbank(n_mels=n_mels, n_fft_bins=n_fft_bins)


def mel_spectrogram(clip, stft_config=DEFAULT_STFT, n_mels=N_MELS):
    """Mel power spectrogram in dB of a StandardClip, one slice per channel.

    dB values are 10*log10(power) with power floored at 1e-10, then clamped
    to within 80 dB of the tensor-wide maximum. An all-zero clip therefore
    comes out constant.
    """
    bins = stft_config.n_fft // 2 + 1
    fb = _default_filterbank(n_mels, bins)
    slices = []
    for ch in clip.samples:
        spec = stft(ch, stft_config)
        power = spec.real**2 + spec.imag**2
        mel_power = fb.weights @ power
        slices.append(10.0 * np.log10(np.maximum(mel_power, _POWER_EPS)))
    db = np.stack(slices, axis=0)
    db = np.maximum(db, db.max() - DB_FLOOR_RANGE)
    return SpectrogramTensor(db.astype(np.float32), STAGE_RAW)


def _require_unnormalized(tensor, op):
    if tensor.stage == STAGE_NORMALIZED:
        raise ValueError(f"{op} expects a raw-dB or masked tensor, got normalized")


def freq_mask(tensor, max_width, n_masks, rng):
    """Zero-information mask over random mel bands, filled with the tensor mean.

    Width is drawn uniformly from [0, max_width]; a zero draw leaves the
    tensor untouched. All channels get the same band. The fill value is the
    mean of the tensor as it was on entry, fixed across n_masks draws.
    """
    _require_unnormalized(tensor, "freq_mask")
    n_mels = tensor.data.shape[1]
    if not 0 <= max_width <= n_mels // 10:
        raise ValueError(f"freq mask width cap is {n_mels // 10}, got {max_width}")
    data = tensor.data.copy()
    fill = np.float32(data.mean(dtype=np.float64))
    for _ in range(n_masks):
        width = int(rng.integers(0, max_width + 1))
        if width == 0:
            continue
        start = int(rng.integers(0, n_mels - width + 1))
        data[:, start : start + width, :] = fill
    return SpectrogramTensor(data, STAGE_MASKED)


def time_mask(tensor, max_width, n_masks, rng):
    """Same as freq_mask but over frame columns."""
    _require_unnormalized(tensor, "time_mask")
    frames = tensor.data.shape[2]
    if not 0 <= max_width <= frames // 10:
        raise ValueError(f"time mask width cap is {frames // 10}, got {max_width}")
    data = tensor.data.copy()
    fill = np.float32(data.mean(dtype=np.float64))
    for _ in range(n_masks):
        width = int(rng.integers(0, max_width + 1))
        if width == 0:
            continue
        start = int(rng.integers(0, frames - width + 1))
        data[:, :, start : start + width] = fill
    return SpectrogramTensor(data, STAGE_MASKED)


def normalize(tensor):
    """Shift and scale the whole tensor to zero mean, unit (population) std.

    A flat tensor (std below 1e-8) maps to all zeros instead of dividing by
    noise. Returns the normalized tensor plus the stats to invert it.
    """
    _require_unnormalized(tensor, "normalize")
    x = tensor.data.astype(np.float64)
    mean = float(x.mean())
    std = float(x.std())
    if std < 1e-8:
        out = np.zeros_like(tensor.data)
    else:
        out = ((x - mean) / std).astype(np.float32)
    return SpectrogramTensor(out, STAGE_NORMALIZED), NormalizationStats(mean, std)


# ---------------------------------------------------------------------------
# On-disk cache for raw-dB tensors. One file per clip:
#   magic "USFC" | u16 version | u32 channels, mels, frames | f32 LE payload
# Payload is row-major, i.e. frames fastest. Augmented tensors are never
# cached; masking happens after the cache on every epoch.

_CACHE_MAGIC = b"USFC"
_CACHE_VERSION = 1


def write_feature_file(path, tensor):
    if tensor.stage != STAGE_RAW:
        raise ValueError(f"only raw-dB tensors are cached, got stage {tensor.stage!r}")
    c, m, t = tensor.data.shape
    blob = (
        _CACHE_MAGIC
        + struct.pack("<H", _CACHE_VERSION)
        + struct.pack("<III", c, m, t)
        + np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    )
    path = Path(path)
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def read_feature_file(path):
    blob = Path(path).read_bytes()
    if len(blob) < 18 or blob[:4] != _CACHE_MAGIC:
        raise FeatureError(f"{path}: not a feature cache file")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != _CACHE_VERSION:
        raise FeatureError(f"{path}: unsupported cache version {version}")
    c, m, t = struct.unpack_from("<III", blob, 6)
    expected = 18 + 4 * c * m * t
    if len(blob) != expected:
        raise FeatureError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=18).reshape(c, m, t).copy()
    return SpectrogramTensor(data, STAGE_RAW)


class FeatureCache:
    """Directory of raw-dB tensors keyed by a caller-chosen string."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key):
        safe = "".join(ch if (ch.isalnum() or ch in "._-") else "_" for ch in key)
        return self.directory / f"{safe}.usfc"

    def get(self, key):
        path = self._path(key)
        if not path.exists():
            return None
        return read_feature_file(path)

    def put(self, key, tensor):
        write_feature_file(self._path(key), tensor)


def extract_features(path, augment=None, rng=None, stft_config=DEFAULT_STFT,
                     n_mels=N_MELS, cache=None, cache_key=None):
    """Full file-to-tensor pipeline; returns a normalized SpectrogramTensor.

    With an enabled AugmentConfig (and its rng) the clip is circularly
    shifted before the STFT and masked after it. The cache only serves the
    un-augmented path, holding tensors from just before normalization.
    """
    augmenting = augment is not None and augment.enabled
    if augmenting and rng is None:
        raise ValueError("augmentation needs an rng")
    key = cache_key if cache_key is not None else Path(path).name

    raw = None
    if cache is not None and not augmenting:
        raw = cache.get(key)
    if raw is None:
        try:
            clip = decode_wav(Path(path).read_bytes())
        except (OSError, WavError) as exc:
            raise FeatureError(f"{path}: {exc}") from exc
        std = standardize(clip)
        if augmenting:
            std = time_shift(std, augment.shift_limit, rng)
        raw = mel_spectrogram(std, stft_config, n_mels)
        if cache is not None and not augmenting:
            cache.put(key, raw)

    spec = raw
    if augmenting:
        spec = freq_mask(spec, augment.freq_mask_width, augment.n_freq_masks, rng)
        spec = time_mask(spec, augment.time_mask_width, augment.n_time_masks, rng)
    normalized, _ = normalize(spec)
    return normalized
