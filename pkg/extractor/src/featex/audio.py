"""WAV loading for the extraction pipeline (16 kHz mono PCM only)."""

from __future__ import annotations

import os
import wave

import numpy as np

EXPECTED_RATE = 16_000


class AudioError(ValueError):
    pass


def load_wav(path: str | os.PathLike) -> np.ndarray:
    """16 kHz mono 16-bit WAV as float32 in [-1, 1].

    Resampling and channel mixing are out of scope: anything else is
    rejected so silently degraded features cannot happen.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            rate = wf.getframerate()
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            n = wf.getnframes()
            raw = wf.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise AudioError(f"{path}: unreadable WAV ({exc})") from exc
    if rate != EXPECTED_RATE:
        raise AudioError(f"{path}: sample rate {rate}, expected {EXPECTED_RATE}")
    if channels != 1:
        raise AudioError(f"{path}: {channels} channels, expected mono")
    if width != 2:
        raise AudioError(f"{path}: {8 * width}-bit samples, expected 16-bit PCM")
    if n == 0:
        raise AudioError(f"{path}: empty audio")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return samples
