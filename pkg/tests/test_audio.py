import struct

import numpy as np
import numpy.testing as npt
import pytest

from tcanlab.audio import (
    AudioClip,
    WavEncodingError,
    WavHeaderError,
    WavTruncationError,
    read_wav,
    write_wav,
)


def make_wav_bytes(payload: bytes, channels=1, bits=16, fmt=1, sr=16000,
                   data_size=None) -> bytes:
    if data_size is None:
        data_size = len(payload)
    return struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + data_size, b"WAVE",
        b"fmt ", 16, fmt, channels, sr, sr * channels * bits // 8,
        channels * bits // 8, bits,
        b"data", data_size,
    ) + payload


def test_audio_clip_validation():
    with pytest.raises(ValueError):
        AudioClip(np.array([]))
    with pytest.raises(ValueError):
        AudioClip(np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        AudioClip(np.ones(4), 0)
    clip = AudioClip([0.0, 0.5], 8000)
    assert clip.samples.dtype == np.float64
    assert clip.duration_s == pytest.approx(2 / 8000)


def test_round_trip_is_bit_exact(tmp_path, speech_clip):
    first = tmp_path / "a.wav"
    second = tmp_path / "b.wav"
    write_wav(speech_clip, first)
    loaded = read_wav(first)
    assert loaded.sample_rate_hz == speech_clip.sample_rate_hz
    write_wav(loaded, second)
    reloaded = read_wav(second)
    npt.assert_array_equal(loaded.samples, reloaded.samples)
    # payload bytes themselves survive
    assert first.read_bytes()[44:] == second.read_bytes()[44:]


def test_scaling_convention(tmp_path):
    ints = np.array([-32768, -1, 0, 1, 32767], dtype="<i2")
    path = tmp_path / "scale.wav"
    path.write_bytes(make_wav_bytes(ints.tobytes()))
    clip = read_wav(path)
    npt.assert_array_equal(clip.samples, ints.astype(float) / 32768.0)


def test_write_clamps_out_of_range(tmp_path):
    path = tmp_path / "hot.wav"
    write_wav(AudioClip(np.array([1.5, -1.5, 0.0]), 16000), path)
    clip = read_wav(path)
    npt.assert_array_equal(clip.samples, [32767 / 32768.0, -1.0, 0.0])


def test_stereo_rejected(tmp_path):
    path = tmp_path / "stereo.wav"
    path.write_bytes(make_wav_bytes(b"\x00" * 8, channels=2))
    with pytest.raises(WavEncodingError):
        read_wav(path)


def test_non_pcm_and_wrong_depth_rejected(tmp_path):
    path = tmp_path / "float.wav"
    path.write_bytes(make_wav_bytes(b"\x00" * 8, fmt=3))
    with pytest.raises(WavEncodingError):
        read_wav(path)
    path.write_bytes(make_wav_bytes(b"\x00" * 8, bits=8))
    with pytest.raises(WavEncodingError):
        read_wav(path)


def test_malformed_headers(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFF")
    with pytest.raises(WavHeaderError):
        read_wav(path)
    path.write_bytes(b"RIFX" + b"\x00" * 40)
    with pytest.raises(WavHeaderError):
        read_wav(path)
    # valid container without a data chunk
    path.write_bytes(make_wav_bytes(b"")[:36])
    with pytest.raises(WavHeaderError):
        read_wav(path)


def test_empty_and_odd_data_chunks(tmp_path):
    path = tmp_path / "odd.wav"
    path.write_bytes(make_wav_bytes(b""))
    with pytest.raises(WavHeaderError):
        read_wav(path)
    path.write_bytes(make_wav_bytes(b"\x00" * 3, data_size=3))
    with pytest.raises(WavHeaderError):
        read_wav(path)


def test_truncated_payload_names_offsets(tmp_path):
    path = tmp_path / "trunc.wav"
    path.write_bytes(make_wav_bytes(b"\x00" * 8, data_size=100))
    with pytest.raises(WavTruncationError) as err:
        read_wav(path)
    message = str(err.value)
    assert "100" in message and "44" in message  # declared size and data offset