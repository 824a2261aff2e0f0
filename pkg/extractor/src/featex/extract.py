"""Corpus extraction: every WAV under a directory to FTPK plus a manifest."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from . import ftpk
from .audio import load_wav
from .mfcc import FRAME_RATE_HZ as MFCC_RATE
from .mfcc import extract_mfcc
from .models import (
    TRANSFORMER_FRAME_RATE_HZ,
    checkpoint_id,
    extract_hidden_layer,
    load_pretrained,
    validate_layer,
)

logger = logging.getLogger(__name__)


@dataclass
class ExtractionSpec:
    model: str  # "hubert-base" | "mhubert" | "mandarin-hubert" | "mfcc"
    audio_dir: str
    out_dir: str
    layer: int | None = None

    def __post_init__(self):
        if self.model == "mfcc":
            if self.layer is not None:
                raise ValueError("mfcc extraction takes no --layer")
        else:
            if self.layer is None:
                raise ValueError(f"{self.model} extraction needs --layer")
            validate_layer(self.model, self.layer)

    @property
    def feature_source(self) -> str:
        if self.model == "mfcc":
            return "mfcc"
        return f"{checkpoint_id(self.model)}:L{self.layer}"


def extract(spec: ExtractionSpec, model=None) -> Path:
    """Run extraction over every .wav in the audio directory.

    Returns the manifest path.  A pre-loaded torch model can be injected
    (used by tests to avoid checkpoint downloads); otherwise the registered
    checkpoint is fetched.
    """
    audio_dir = Path(spec.audio_dir)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wavs = sorted(audio_dir.glob("*.wav"))
    if not wavs:
        raise FileNotFoundError(f"no .wav files under {audio_dir}")

    if spec.model == "mfcc":
        rate = MFCC_RATE
        compute = extract_mfcc
    else:
        rate = TRANSFORMER_FRAME_RATE_HZ
        if model is None:
            model = load_pretrained(spec.model)
        compute = lambda samples: extract_hidden_layer(model, samples, spec.layer)

    entries = []
    for wav in wavs:
        utt_id = wav.stem
        features = compute(load_wav(wav))
        path = out_dir / f"{utt_id}.ftpk"
        ftpk.write_features(features, rate, path)
        entries.append(
            {
                "utt_id": utt_id,
                "path": path.name,
                "frames": int(features.shape[0]),
                "frame_rate_hz": rate,
            }
        )
        logger.info("%s: %d frames x %d dims", utt_id, features.shape[0], features.shape[1])
    manifest_path = out_dir / "manifest.json"
    ftpk.write_manifest(entries, spec.feature_source, manifest_path)
    return manifest_path
