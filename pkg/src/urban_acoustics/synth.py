"""Synthetic corpus generator for dataset-free testing.

Class k is a sinusoid at 200 * 2^k Hz buried in a little noise, so classes
occupy distinct mel bands and any working pipeline separates them. Clips vary
in duration (1-4 s), sample rate, and channel count to exercise the
standardization paths. The doubling tone caps the class count at 7: class 7
would sit at 25.6 kHz, past any supported Nyquist.
"""

from pathlib import Path

import numpy as np

from .audio_io import write_wav_pcm16
from .dataset import CLASS_NAMES, load_dataset

_RATES = (8000, 22050, 44100)
_TONE_BASE_HZ = 200.0
_NOISE_AMP = 0.1
_TONE_AMP = 0.6

MAX_SYNTH_CLASSES = 7


def class_tone_hz(class_id):
    return _TONE_BASE_HZ * (2.0**class_id)


def make_synthetic_corpus(out_dir, num_classes=7, per_class=10, seed=0):
    """Write WAVs plus a metadata CSV under out_dir and return the parsed
    manifest. Fully determined by (num_classes, per_class, seed)."""
    if not 1 <= num_classes <= MAX_SYNTH_CLASSES:
        raise ValueError(
            f"synthetic corpus supports 1..{MAX_SYNTH_CLASSES} classes "
            f"(tones double per class and must stay below Nyquist), got {num_classes}"
        )
    if per_class < 1:
        raise ValueError(f"per_class must be positive, got {per_class}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["slice_file_name,fsID,start,end,salience,fold,classID,class"]
    idx = 0
    for k in range(num_classes):
        tone = class_tone_hz(k)
        # keep the tone well inside the source Nyquist or linear-interp
        # resampling mangles it
        rates = [r for r in _RATES if tone <= 0.4 * r]
        for i in range(per_class):
            rng = np.random.default_rng([seed, k, i])
            rate = int(rates[int(rng.integers(len(rates)))])
            n_channels = int(rng.integers(1, 3))
            duration = float(rng.uniform(1.0, 4.0))
            n = int(round(duration * rate))
            t = np.arange(n) / rate
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            carrier = _TONE_AMP * np.sin(2.0 * np.pi * tone * t + phase)
            channels = [
                carrier + rng.uniform(-_NOISE_AMP, _NOISE_AMP, size=n)
                for _ in range(n_channels)
            ]

            fold = idx % 10 + 1
            name = f"{100000 + idx}-{k}-0-{i}.wav"
            fold_dir = out_dir / f"fold{fold}"
            fold_dir.mkdir(exist_ok=True)
            write_wav_pcm16(fold_dir / name, channels, rate)
            rows.append(
                f"{name},{100000 + idx},0.0,{duration:.6f},1,{fold},{k},{CLASS_NAMES[k]}"
            )
            idx += 1

    (out_dir / "UrbanSound8K.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return load_dataset(out_dir)
