"""Urban sound classification toolkit.

Submodules: audio_io (WAV decode), dsp (standardization), fourier (FFT/STFT),
features (mel spectrograms + augmentation), dataset (metadata/splits),
layers/model/optim (the from-scratch network), train (orchestration),
synth (test corpus), checkpoint, cli.

Kept import-light on purpose; pull in the submodules you need.
"""

__version__ = "0.1.0"
