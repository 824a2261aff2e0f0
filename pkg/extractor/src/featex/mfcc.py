"""39-dimensional MFCC baseline: 13 static coefficients plus deltas and
delta-deltas, 25 ms Hamming windows at a 10 ms hop (100 Hz frame rate)."""

from __future__ import annotations

import numpy as np
from scipy.fft import dct, rfft

from .audio import EXPECTED_RATE, AudioError

FRAME_RATE_HZ = 100.0
WINDOW = 400  # 25 ms at 16 kHz
HOP = 160  # 10 ms
N_FFT = 512
N_MELS = 26
N_CEPS = 13
PREEMPHASIS = 0.97
LOG_FLOOR = 1e-10
DELTA_WINDOW = 2


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, rate: int = EXPECTED_RATE) -> np.ndarray:
    """Triangular mel filters over the rfft bins, shape (n_mels, n_fft//2 + 1)."""
    mel_points = np.linspace(_hz_to_mel(0.0), _hz_to_mel(rate / 2.0), n_mels + 2)
    bin_points = np.floor((n_fft + 1) * _mel_to_hz(mel_points) / rate).astype(int)
    bank = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(1, n_mels + 1):
        left, center, right = bin_points[m - 1], bin_points[m], bin_points[m + 1]
        for k in range(left, center):
            bank[m - 1, k] = (k - left) / max(center - left, 1)
        for k in range(center, right):
            bank[m - 1, k] = (right - k) / max(right - center, 1)
    return bank


def deltas(features: np.ndarray, window: int = DELTA_WINDOW) -> np.ndarray:
    """Regression deltas with edge replication."""
    padded = np.pad(features, ((window, window), (0, 0)), mode="edge")
    denom = 2 * sum(n * n for n in range(1, window + 1))
    out = np.zeros_like(features)
    for n in range(1, window + 1):
        out += n * (padded[window + n : window + n + len(features)] - padded[window - n : window - n + len(features)])
    return out / denom


def extract_mfcc(samples: np.ndarray) -> np.ndarray:
    """T x 39 MFCC matrix from 16 kHz float samples.

    Raises AudioError for audio shorter than one analysis window.  A log
    floor keeps silence finite.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or len(samples) < WINDOW:
        raise AudioError(f"audio too short for one {WINDOW}-sample analysis window")
    emphasized = np.concatenate([[samples[0]], samples[1:] - PREEMPHASIS * samples[:-1]])
    n_frames = 1 + (len(emphasized) - WINDOW) // HOP
    idx = np.arange(WINDOW)[None, :] + HOP * np.arange(n_frames)[:, None]
    frames = emphasized[idx] * np.hamming(WINDOW)[None, :]
    spectrum = np.abs(rfft(frames, n=N_FFT, axis=1)) ** 2 / N_FFT
    energies = spectrum @ mel_filterbank().T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    static = dct(logmel, type=2, axis=1, norm="ortho")[:, :N_CEPS]
    d1 = deltas(static)
    d2 = deltas(d1)
    return np.concatenate([static, d1, d2], axis=1).astype(np.float32)
