import struct

import numpy as np
import pytest

from urban_acoustics import audio_io
from urban_acoustics.audio_io import WavError, decode_wav, probe_format, write_wav_pcm16


def build_wav(codec_tag, bits, channels, rate, payload, extra_chunks=(), fmt_size=None):
    """Assemble WAV bytes by hand so the decoder is tested against the RIFF
    layout itself, not against our own writer."""
    block = channels * bits // 8
    fmt_body = struct.pack("<HHIIHH", codec_tag, channels, rate, rate * block, block, bits)
    if fmt_size is not None:
        fmt_body = fmt_body.ljust(fmt_size, b"\x00")
    chunks = b""
    for cid, body in extra_chunks:
        chunks += cid + struct.pack("<I", len(body)) + body + (b"\x00" if len(body) % 2 else b"")
    body = (
        b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
        + chunks
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def test_pcm16_mono_known_values():
    payload = struct.pack("<4h", 0, 16384, -16384, -32768)
    clip = decode_wav(build_wav(1, 16, 1, 8000, payload))
    assert clip.sample_rate_hz == 8000
    assert len(clip.channels) == 1
    np.testing.assert_allclose(clip.channels[0], [0.0, 0.5, -0.5, -1.0])


def test_pcm16_stereo_deinterleave():
    payload = struct.pack("<6h", 100, -100, 200, -200, 300, -300)
    clip = decode_wav(build_wav(1, 16, 2, 44100, payload))
    np.testing.assert_allclose(clip.channels[0] * 32768, [100, 200, 300])
    np.testing.assert_allclose(clip.channels[1] * 32768, [-100, -200, -300])


def test_pcm8_unsigned_centering():
    payload = bytes([128, 255, 0, 192])
    clip = decode_wav(build_wav(1, 8, 1, 22050, payload))
    np.testing.assert_allclose(clip.channels[0], [0.0, 127 / 128, -1.0, 0.5])


def test_pcm24_sign_extension():
    def enc(v):
        return struct.pack("<i", v)[:3]

    payload = enc(0) + enc(1 << 22) + enc(-(1 << 23)) + enc((1 << 23) - 1)
    clip = decode_wav(build_wav(1, 24, 1, 48000, payload))
    np.testing.assert_allclose(
        clip.channels[0], [0.0, 0.5, -1.0, ((1 << 23) - 1) / (1 << 23)]
    )


def test_pcm32_scale():
    payload = struct.pack("<3i", 0, 1 << 30, -(1 << 31))
    clip = decode_wav(build_wav(1, 32, 1, 44100, payload))
    np.testing.assert_allclose(clip.channels[0], [0.0, 0.5, -1.0])


def test_float32_passthrough():
    payload = struct.pack("<4f", 0.0, 0.125, -0.75, 1.0)
    clip = decode_wav(build_wav(3, 32, 1, 44100, payload))
    np.testing.assert_allclose(clip.channels[0], [0.0, 0.125, -0.75, 1.0])


def test_extensible_fmt_resolves_subformat():
    # extensible fmt: 16 base bytes + cbSize + 22 extension bytes; the codec
    # tag is the first u16 of the SubFormat GUID at offset 24
    base = struct.pack("<HHIIHH", 0xFFFE, 1, 44100, 44100 * 2, 2, 16)
    ext = struct.pack("<HHI", 22, 16, 0x1) + struct.pack("<H", 1) + b"\x00" * 14
    fmt_body = base + ext
    payload = struct.pack("<2h", 1000, -1000)
    body = (
        b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    blob = b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body
    fmt = probe_format(blob)
    assert fmt.codec == "pcm"
    clip = decode_wav(blob)
    np.testing.assert_allclose(clip.channels[0] * 32768, [1000, -1000])


def test_unknown_chunks_skipped_including_odd_sized():
    payload = struct.pack("<2h", 5, -5)
    blob = build_wav(1, 16, 1, 8000, payload,
                     extra_chunks=[(b"LIST", b"junkdata"), (b"akme", b"odd")])
    clip = decode_wav(blob)
    assert clip.num_samples == 2


def test_probe_reports_format_without_decoding():
    blob = build_wav(3, 32, 2, 22050, struct.pack("<2f", 0.0, 0.0))
    fmt = probe_format(blob)
    assert (fmt.codec, fmt.bits_per_sample, fmt.channel_count, fmt.sample_rate_hz) == (
        "float", 32, 2, 22050)


def test_rejects_non_riff():
    with pytest.raises(WavError, match="RIFF"):
        decode_wav(b"OggS" + b"\x00" * 40)


def test_rejects_missing_fmt():
    body = b"data" + struct.pack("<I", 4) + b"\x00" * 4
    blob = b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body
    with pytest.raises(WavError, match="fmt"):
        decode_wav(blob)


def test_rejects_missing_data():
    fmt_body = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
    body = b"fmt " + struct.pack("<I", 16) + fmt_body
    blob = b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body
    with pytest.raises(WavError, match="data"):
        decode_wav(blob)


def test_rejects_data_size_beyond_buffer():
    blob = build_wav(1, 16, 1, 8000, struct.pack("<2h", 1, 2))
    # inflate the declared data size without adding bytes
    idx = blob.rindex(b"data")
    bad = blob[: idx + 4] + struct.pack("<I", 9999) + blob[idx + 8 :]
    with pytest.raises(WavError, match="data chunk declares"):
        decode_wav(bad)


def test_rejects_unsupported_codec():
    blob = build_wav(0x55, 16, 1, 8000, b"\x00\x00")  # mp3 tag
    with pytest.raises(WavError, match="codec tag"):
        decode_wav(blob)


def test_rejects_weird_bit_depth():
    with pytest.raises(WavError, match="bit depth"):
        decode_wav(build_wav(1, 12, 1, 8000, b"\x00\x00"))


def test_amplitude_bound_across_codecs():
    rng = np.random.default_rng(0)
    for bits, tag in ((8, 1), (16, 1), (24, 1), (32, 1), (32, 3)):
        n = 64
        if tag == 3:
            payload = rng.uniform(-1, 1, n).astype("<f4").tobytes()
        elif bits == 8:
            payload = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        elif bits == 24:
            vals = rng.integers(-(1 << 23), 1 << 23, n, dtype=np.int32)
            payload = b"".join(struct.pack("<i", int(v))[:3] for v in vals)
        else:
            dtype = "<i2" if bits == 16 else "<i4"
            payload = rng.integers(-(1 << (bits - 1)), 1 << (bits - 1), n).astype(dtype).tobytes()
        clip = decode_wav(build_wav(tag, bits, 1, 8000, payload))
        assert np.abs(clip.channels[0]).max() <= 1.0 + 1e-6


def test_writer_reader_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    left = rng.uniform(-0.9, 0.9, 500)
    right = rng.uniform(-0.9, 0.9, 500)
    path = tmp_path / "rt.wav"
    write_wav_pcm16(path, [left, right], 22050)
    clip = decode_wav(path.read_bytes())
    assert clip.sample_rate_hz == 22050
    assert len(clip.channels) == 2
    # writer scales by 32767, reader divides by 32768: half an LSB of rounding
    # plus one LSB of scale skew
    assert np.abs(clip.channels[0] - left).max() <= 1.5 / 32768
    assert np.abs(clip.channels[1] - right).max() <= 1.5 / 32768


def test_clip_duration_property():
    clip = decode_wav(build_wav(1, 16, 1, 8000, struct.pack("<4h", 0, 0, 0, 0)))
    assert clip.duration_s == pytest.approx(4 / 8000)
