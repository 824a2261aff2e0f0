"""Extractor tests, including the cross-component contract with the
segmentation toolkit's corpus loader."""

import wave
from pathlib import Path

import numpy as np
import pytest
import torch
from transformers import HubertConfig, HubertModel

from featex.audio import AudioError, load_wav
from featex.extract import ExtractionSpec, extract
from featex.mfcc import extract_mfcc
from featex.models import extract_hidden_layer

import wordseg.io as wordseg_io

FIXTURES = Path(__file__).parent / "fixtures"
DURATIONS = {"fixture_a": 0.52, "fixture_b": 1.00, "fixture_c": 1.26}


@pytest.fixture(scope="module")
def tiny_hubert():
    """A small randomly initialized model with the standard 50 Hz frontend."""
    torch.manual_seed(0)
    config = HubertConfig(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        conv_dim=(32, 32, 32, 32, 32, 32, 32),
    )
    model = HubertModel(config)
    model.eval()
    return model


def test_load_wav_fixture():
    samples = load_wav(FIXTURES / "fixture_b.wav")
    assert samples.dtype == np.float32
    assert len(samples) == 16_000
    assert np.abs(samples).max() <= 1.0


def test_load_wav_rejects_bad_audio(tmp_path):
    bad = tmp_path / "bad.wav"
    with wave.open(str(bad), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(16_000)
        wf.writeframes(b"\x00\x00" * 64)
    with pytest.raises(AudioError, match="channels"):
        load_wav(bad)
    slow = tmp_path / "slow.wav"
    with wave.open(str(slow), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(8_000)
        wf.writeframes(b"\x00\x00" * 64)
    with pytest.raises(AudioError, match="sample rate"):
        load_wav(slow)
    empty = tmp_path / "empty.wav"
    with wave.open(str(empty), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(16_000)
    with pytest.raises(AudioError, match="empty"):
        load_wav(empty)


def test_mfcc_framing_arithmetic():
    feats = extract_mfcc(np.zeros(16_000, dtype=np.float32) + 1e-4)
    assert feats.shape[1] == 39
    assert 98 <= feats.shape[0] <= 100


def test_mfcc_silence_is_finite():
    feats = extract_mfcc(np.zeros(8_000, dtype=np.float32))
    assert np.all(np.isfinite(feats))


def test_mfcc_sine_has_39_columns():
    t = np.arange(16_000) / 16_000
    feats = extract_mfcc(0.5 * np.sin(2 * np.pi * 220 * t))
    assert feats.shape[1] == 39
    assert np.all(np.isfinite(feats))


def test_mfcc_too_short_raises():
    with pytest.raises(AudioError, match="too short"):
        extract_mfcc(np.zeros(200, dtype=np.float32))


def test_spec_validation():
    with pytest.raises(ValueError, match="no --layer"):
        ExtractionSpec(model="mfcc", audio_dir=".", out_dir=".", layer=9)
    with pytest.raises(ValueError, match="needs --layer"):
        ExtractionSpec(model="hubert-base", audio_dir=".", out_dir=".")
    with pytest.raises(ValueError, match="out of range"):
        ExtractionSpec(model="hubert-base", audio_dir=".", out_dir=".", layer=13)
    with pytest.raises(ValueError, match="unknown model"):
        ExtractionSpec(model="wavlm", audio_dir=".", out_dir=".", layer=3)
    spec = ExtractionSpec(model="hubert-base", audio_dir=".", out_dir=".", layer=9)
    assert spec.feature_source == "facebook/hubert-base-ls960:L9"


def test_layer_out_of_range_on_model(tiny_hubert):
    with pytest.raises(ValueError, match="out of range"):
        extract_hidden_layer(tiny_hubert, np.zeros(16_000, dtype=np.float32), 3)


def test_mfcc_extraction_passes_primary_validation(tmp_path):
    spec = ExtractionSpec(model="mfcc", audio_dir=str(FIXTURES), out_dir=str(tmp_path))
    manifest_path = extract(spec)
    manifest = wordseg_io.load_manifest(manifest_path)
    assert manifest.feature_source == "mfcc"
    mats = wordseg_io.load_corpus_features(manifest)  # cross-checks headers
    assert len(mats) == 3
    for fm in mats:
        assert fm.dim == 39
        assert fm.frame_rate_hz == 100.0


def test_transformer_extraction_passes_primary_validation(tmp_path, tiny_hubert):
    spec = ExtractionSpec(model="hubert-base", audio_dir=str(FIXTURES), out_dir=str(tmp_path), layer=2)
    manifest_path = extract(spec, model=tiny_hubert)
    manifest = wordseg_io.load_manifest(manifest_path)
    assert manifest.feature_source == "facebook/hubert-base-ls960:L2"
    mats = wordseg_io.load_corpus_features(manifest)
    assert len(mats) == 3
    for fm in mats:
        assert fm.frame_rate_hz == 50.0
        expected = DURATIONS[fm.utt_id] * 50.0
        assert abs(fm.n_frames - expected) <= 1.0, (fm.utt_id, fm.n_frames, expected)


def test_extraction_is_deterministic(tmp_path, tiny_hubert):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        extract(
            ExtractionSpec(model="hubert-base", audio_dir=str(FIXTURES), out_dir=str(out), layer=1),
            model=tiny_hubert,
        )
    for name in ("fixture_a", "fixture_b", "fixture_c"):
        assert (out1 / f"{name}.ftpk").read_bytes() == (out2 / f"{name}.ftpk").read_bytes()
    assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()


def test_extracted_features_run_through_segmentation(tmp_path, tiny_hubert):
    # End-to-end smoke: extractor output drives the primary pipeline.
    from wordseg.boundaries import SegmenterConfig, normalize_corpus, segment_utterance

    out = tmp_path / "feats"
    manifest_path = extract(
        ExtractionSpec(model="hubert-base", audio_dir=str(FIXTURES), out_dir=str(out), layer=2),
        model=tiny_hubert,
    )
    manifest = wordseg_io.load_manifest(manifest_path)
    mats = normalize_corpus(wordseg_io.load_corpus_features(manifest))
    for fm in mats:
        bs = segment_utterance(fm, SegmenterConfig(window_frames=2, prominence_threshold=0.2))
        assert bs.frames[0] == 0 and bs.frames[-1] == fm.n_frames


def test_cli_mfcc(tmp_path):
    from featex.cli import main

    out = tmp_path / "out"
    assert main(["--model", "mfcc", "--audio", str(FIXTURES), "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()
    assert main(["--model", "mfcc", "--layer", "3", "--audio", str(FIXTURES), "--out", str(out)]) == 1
    assert main(["--model", "mfcc", "--audio", str(tmp_path / "nowhere"), "--out", str(out)]) == 1
