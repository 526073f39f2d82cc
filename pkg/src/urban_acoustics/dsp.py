"""Waveform standardization: every clip becomes 4 s of stereo at 44.1 kHz."""

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip

STANDARD_RATE = 44100
STANDARD_CHANNELS = 2
STANDARD_SAMPLES = 4 * STANDARD_RATE  # 176400


@dataclass
class StandardClip:
    """A (2, 176400) float64 waveform at 44.1 kHz."""

    samples: np.ndarray

    def __post_init__(self):
        if self.samples.shape != (STANDARD_CHANNELS, STANDARD_SAMPLES):
            raise ValueError(
                f"standard clip must be {(STANDARD_CHANNELS, STANDARD_SAMPLES)}, "
                f"got {self.samples.shape}"
            )

    @property
    def sample_rate_hz(self):
        return STANDARD_RATE


def resample(clip, target_rate_hz=STANDARD_RATE):
    """Linear-interpolation resample of every channel.

    Output sample i sits at source position i * src/target; positions past
    the last source sample hold its value. A clip already at the target rate
    is returned unchanged.
    """
    if target_rate_hz <= 0:
        raise ValueError(f"bad target rate {target_rate_hz}")
    if clip.sample_rate_hz == target_rate_hz:
        return clip
    n_src = clip.num_samples
    n_out = int(round(n_src * target_rate_hz / clip.sample_rate_hz))
    pos = np.arange(n_out) * (clip.sample_rate_hz / target_rate_hz)
    src_idx = np.arange(n_src)
    out = [np.interp(pos, src_idx, ch) for ch in clip.channels]
    return AudioClip(out, target_rate_hz)


def rechannel(clip, target_channels=STANDARD_CHANNELS):
    """Mono duplicates to stereo; extra channels beyond the target are dropped."""
    n = len(clip.channels)
    if n == target_channels:
        return clip
    if n < target_channels:
        chans = list(clip.channels) + [
            clip.channels[-1].copy() for _ in range(target_channels - n)
        ]
    else:
        chans = list(clip.channels[:target_channels])
    return AudioClip(chans, clip.sample_rate_hz)


def fix_length(clip, n_samples=STANDARD_SAMPLES):
    """Truncate or zero-pad each channel at the end to exactly n_samples."""
    out = []
    for ch in clip.channels:
        if ch.shape[0] >= n_samples:
            out.append(ch[:n_samples].copy())
        else:
            out.append(np.concatenate([ch, np.zeros(n_samples - ch.shape[0])]))
    return AudioClip(out, clip.sample_rate_hz)


def standardize(clip):
    """Resample to 44.1 kHz, rechannel to stereo, then fix the length to 4 s."""
    clip = resample(clip)
    clip = rechannel(clip)
    clip = fix_length(clip)
    return StandardClip(np.stack(clip.channels, axis=0).astype(np.float64))


def time_shift(clip, shift_limit, rng):
    """Circularly roll both channels by one shared random offset.

    The offset is drawn uniformly from [-floor(shift_limit*L),
    +floor(shift_limit*L)] inclusive, L being the clip length in samples.
    """
    if not 0.0 <= shift_limit <= 1.0:
        raise ValueError(f"shift_limit must be in [0, 1], got {shift_limit}")
    max_shift = int(shift_limit * STANDARD_SAMPLES)
    shift = int(rng.integers(-max_shift, max_shift + 1))
    return StandardClip(np.roll(clip.samples, shift, axis=1))
