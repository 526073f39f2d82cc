"""Minimal RIFF/WAVE reader and writer.

Reads the subset of WAV that occurs in field-recording corpora: PCM at 8, 16,
24, or 32 bits and IEEE float32, any channel count, any sample rate, chunks in
any order. Everything is decoded from an in-memory buffer; no streaming.
"""

import struct
from dataclasses import dataclass

import numpy as np


class WavError(ValueError):
    """Raised for malformed or unsupported WAV data."""


# fmt codec tags
_TAG_PCM = 0x0001
_TAG_FLOAT = 0x0003
_TAG_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class WavFormat:
    codec: str  # "pcm" or "float"
    bits_per_sample: int
    channel_count: int
    sample_rate_hz: int


@dataclass
class AudioClip:
    """Decoded audio: one float64 array in [-1, 1] per channel, equal lengths."""

    channels: list
    sample_rate_hz: int

    def __post_init__(self):
        if not self.channels:
            raise WavError("clip has no channels")
        n = self.channels[0].shape[0]
        if any(c.shape[0] != n for c in self.channels):
            raise WavError("clip channels differ in length")
        if self.sample_rate_hz <= 0:
            raise WavError(f"bad sample rate {self.sample_rate_hz}")

    @property
    def num_samples(self):
        return self.channels[0].shape[0]

    @property
    def duration_s(self):
        return self.num_samples / self.sample_rate_hz


def _chunks(data):
    """Yield (chunk_id, payload_offset, payload_size) for every RIFF chunk."""
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        yield cid, pos + 8, size
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def _parse_fmt(data, off, size):
    if size < 16:
        raise WavError(f"fmt chunk too short ({size} bytes)")
    tag, n_ch, rate, _byte_rate, _align, bits = struct.unpack_from("<HHIIHH", data, off)
    if tag == _TAG_EXTENSIBLE:
        # actual codec lives in the first two bytes of the SubFormat GUID
        if size < 40:
            raise WavError("extensible fmt chunk too short")
        tag = struct.unpack_from("<H", data, off + 24)[0]
    if tag == _TAG_PCM:
        codec = "pcm"
        if bits not in (8, 16, 24, 32):
            raise WavError(f"unsupported PCM bit depth {bits}")
    elif tag == _TAG_FLOAT:
        codec = "float"
        if bits != 32:
            raise WavError(f"unsupported float bit depth {bits}")
    else:
        raise WavError(f"unsupported codec tag 0x{tag:04x}")
    if n_ch < 1:
        raise WavError("fmt chunk declares zero channels")
    if rate <= 0:
        raise WavError(f"fmt chunk declares sample rate {rate}")
    return WavFormat(codec, bits, n_ch, rate)


def _scan(data):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError("not a RIFF/WAVE buffer")
    fmt = None
    payload = None
    for cid, off, size in _chunks(data):
        if off + size > len(data):
            if cid == b"data":
                raise WavError(
                    f"data chunk declares {size} bytes but only "
                    f"{len(data) - off} remain"
                )
            break  # malformed trailing chunk; keep what we have
        if cid == b"fmt ":
            fmt = _parse_fmt(data, off, size)
        elif cid == b"data":
            payload = data[off : off + size]
    if fmt is None:
        raise WavError("missing fmt chunk")
    return fmt, payload


def probe_format(data):
    """Return the WavFormat of a buffer without decoding samples."""
    return _scan(data)[0]


def decode_wav(data):
    """Decode a WAV buffer to an AudioClip.

    Integer PCM maps to [-1, 1] by dividing by 2^(bits-1); 8-bit is unsigned
    and re-centred first. Float samples pass through unchanged.
    """
    fmt, payload = _scan(data)
    if payload is None:
        raise WavError("missing data chunk")

    bytes_per = fmt.bits_per_sample // 8
    frame = bytes_per * fmt.channel_count
    usable = len(payload) - len(payload) % frame  # drop a ragged tail frame
    n_frames = usable // frame

    if fmt.codec == "float":
        flat = np.frombuffer(payload, dtype="<f4", count=n_frames * fmt.channel_count)
        flat = flat.astype(np.float64)
    elif fmt.bits_per_sample == 8:
        raw = np.frombuffer(payload, dtype=np.uint8, count=n_frames * fmt.channel_count)
        flat = (raw.astype(np.float64) - 128.0) / 128.0
    elif fmt.bits_per_sample == 16:
        raw = np.frombuffer(payload, dtype="<i2", count=n_frames * fmt.channel_count)
        flat = raw.astype(np.float64) / 32768.0
    elif fmt.bits_per_sample == 24:
        raw = np.frombuffer(payload, dtype=np.uint8, count=n_frames * fmt.channel_count * 3)
        raw = raw.reshape(-1, 3)
        val = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        val = np.where(val & 0x800000, val - 0x1000000, val)
        flat = val.astype(np.float64) / float(1 << 23)
    else:  # 32-bit PCM
        raw = np.frombuffer(payload, dtype="<i4", count=n_frames * fmt.channel_count)
        flat = raw.astype(np.float64) / float(1 << 31)

    planes = flat.reshape(n_frames, fmt.channel_count).T
    return AudioClip([np.ascontiguousarray(p) for p in planes], fmt.sample_rate_hz)


def write_wav_pcm16(path, channels, sample_rate_hz):
    """Write float channels in [-1, 1] as an interleaved 16-bit PCM WAV."""
    channels = [np.asarray(c, dtype=np.float64) for c in channels]
    n = channels[0].shape[0]
    if any(c.shape[0] != n for c in channels):
        raise ValueError("channels differ in length")
    stacked = np.stack(channels, axis=1)  # (frames, channels)
    ints = np.round(np.clip(stacked, -1.0, 1.0) * 32767.0).astype("<i2")
    payload = ints.tobytes()

    n_ch = len(channels)
    byte_rate = sample_rate_hz * n_ch * 2
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack(
        "<IHHIIHH", 16, _TAG_PCM, n_ch, sample_rate_hz, byte_rate, n_ch * 2, 16
    )
    data_hdr = b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + fmt + data_hdr + payload)
