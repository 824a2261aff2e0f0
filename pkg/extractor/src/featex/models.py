"""Pretrained speech model registry and transformer-layer feature extraction.

Checkpoints are referenced by their published identifiers and downloaded by
the transformers library on first use; nothing is bundled.  Features come
from one hidden transformer layer at the models' native 50 Hz frame rate.
"""

from __future__ import annotations

import logging

import numpy as np
import torch

logger = logging.getLogger(__name__)

TRANSFORMER_FRAME_RATE_HZ = 50.0

# model key -> (checkpoint id, transformer layer count)
MODEL_REGISTRY = {
    "hubert-base": ("facebook/hubert-base-ls960", 12),
    "mhubert": ("utter-project/mHuBERT-147", 12),
    "mandarin-hubert": ("TencentGameMate/chinese-hubert-base", 12),
}


def checkpoint_id(model_key: str) -> str:
    if model_key not in MODEL_REGISTRY:
        raise ValueError(f"unknown model {model_key!r}; choose from {sorted(MODEL_REGISTRY)} or 'mfcc'")
    return MODEL_REGISTRY[model_key][0]


def validate_layer(model_key: str, layer: int) -> None:
    checkpoint_id(model_key)
    n_layers = MODEL_REGISTRY[model_key][1]
    if not 1 <= layer <= n_layers:
        raise ValueError(f"layer {layer} out of range for {model_key} (1..{n_layers})")


def load_pretrained(model_key: str) -> torch.nn.Module:
    from transformers import AutoModel

    model = AutoModel.from_pretrained(checkpoint_id(model_key))
    model.eval()
    return model


def extract_hidden_layer(model: torch.nn.Module, samples: np.ndarray, layer: int) -> np.ndarray:
    """T x hidden features from the given transformer layer (1-indexed).

    Deterministic for an eval-mode model; hidden_states[0] is the
    convolutional frontend output, so layer L maps to hidden_states[L].
    """
    n_layers = model.config.num_hidden_layers
    if not 1 <= layer <= n_layers:
        raise ValueError(f"layer {layer} out of range (1..{n_layers})")
    with torch.no_grad():
        inputs = torch.from_numpy(np.asarray(samples, dtype=np.float32))[None, :]
        outputs = model(inputs, output_hidden_states=True)
    return outputs.hidden_states[layer][0].numpy()
