"""WAV ingestion and emission, 16-bit PCM mono only, no resampling."""

from __future__ import annotations

import os
import wave

import numpy as np

_SCALE = 32768.0


def read_wav(path, expected_rate=None):
    """Read a mono 16-bit PCM WAV as float64 samples in [-1, 1].

    Returns (samples, sample_rate). Rejects stereo and non-16-bit files;
    when expected_rate is given a differing file rate is an error naming
    both rates, never a silent resample.
    """
    try:
        with wave.open(os.fspath(path), "rb") as wav:
            channels = wav.getnchannels()
            if channels != 1:
                raise ValueError(f"mono required, file has {channels} channels")
            width = wav.getsampwidth()
            if width != 2:
                raise ValueError(
                    f"16-bit PCM required, file has {8 * width}-bit samples")
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except wave.Error as exc:
        raise ValueError(f"not a readable WAV file: {exc}") from exc
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(
            f"file sample rate {rate} Hz does not match bank rate "
            f"{expected_rate:g} Hz (resampling is not performed)")
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / _SCALE
    return samples, rate


def write_wav(path, samples, rate):
    """Write float samples as mono 16-bit PCM, clamping to [-1, 1].

    Uses the same 32768 scale as read_wav, so a round trip moves any
    sample by at most one quantization step.
    """
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.rint(samples * _SCALE), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(int(rate))
        wav.writeframes(pcm.tobytes())
