"""Radix-2 FFT and the short-time Fourier transform used by the feature front end."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import accel


@dataclass(frozen=True)
class StftConfig:
    """Analysis grid for the STFT. Defaults give 344 frames on a 4 s clip."""

    n_fft: int = 1024
    hop: int = 512


DEFAULT_STFT = StftConfig()


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@lru_cache(maxsize=8)
def _fft_tables(n):
    # bit-reversal permutation and twiddle factors exp(-2j*pi*k/n), k < n/2
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
    k = np.arange(n // 2)
    tw = np.exp(-2j * np.pi * k / n).astype(np.complex128)
    return rev, tw


def fft(x):
    """Forward DFT of a 1-D signal whose length is a power of two.

    Unnormalized, matching the textbook definition
    X[k] = sum_t x[t] * exp(-2j*pi*k*t/n).
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if x.ndim != 1:
        raise ValueError(f"fft expects a 1-D signal, got shape {x.shape}")
    if not _is_pow2(n):
        raise ValueError(f"fft length must be a power of two >= 2, got {n}")
    rev, tw = _fft_tables(n)
    buf = x.astype(np.complex128).reshape(1, n).copy()
    accel.fft_rows_inplace(buf, rev, tw)
    return buf[0]


def fft_batch(frames):
    """Forward DFT of every row of a (rows, n) array, n a power of two."""
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError(f"fft_batch expects a 2-D array, got shape {frames.shape}")
    n = frames.shape[1]
    if not _is_pow2(n):
        raise ValueError(f"fft length must be a power of two >= 2, got {n}")
    rev, tw = _fft_tables(n)
    buf = frames.astype(np.complex128, copy=True)
    if not buf.flags.c_contiguous:
        buf = np.ascontiguousarray(buf)
    accel.fft_rows_inplace(buf, rev, tw)
    return buf


def hann_window(n):
    """Periodic Hann window: w[i] = 0.5 - 0.5*cos(2*pi*i/n)."""
    i = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * i / n)


# Length every clip has after standardization: 4 s at 44.1 kHz.
STANDARD_SAMPLES = 176400


def stft(samples, config=DEFAULT_STFT):
    """Complex STFT of one standardized channel.

    The signal is reflect-padded by n_fft//2 on both ends so frames are
    centred on their hop positions, windowed with a periodic Hann window,
    and transformed. Only the non-negative frequency bins are kept. The
    trailing frame is dropped to keep the frame grid even: 4 s at the
    default hop gives 345 raw frames and a (513, 344) result.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.shape[0] != STANDARD_SAMPLES:
        raise ValueError(
            f"stft expects a standardized channel of {STANDARD_SAMPLES} samples, "
            f"got shape {samples.shape}"
        )
    n_fft, hop = config.n_fft, config.hop
    if not _is_pow2(n_fft):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    if hop <= 0:
        raise ValueError(f"hop must be positive, got {hop}")

    pad = n_fft // 2
    padded = np.pad(samples, pad, mode="reflect")
    n_frames = 1 + samples.shape[0] // hop  # last one gets dropped below
    window = hann_window(n_fft)

    frames = np.empty((n_frames, n_fft), dtype=np.float64)
    for t in range(n_frames):
        start = t * hop
        frames[t] = padded[start : start + n_fft]
    frames *= window

    spec = fft_batch(frames)
    # keep bins 0..n_fft/2, frames as columns, minus the final frame
    return spec[: n_frames - 1, : n_fft // 2 + 1].T.copy()
