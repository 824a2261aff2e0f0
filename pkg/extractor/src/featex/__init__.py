"""Audio corpus feature extraction to the FTPK format."""

from .extract import ExtractionSpec, extract
from .mfcc import extract_mfcc
from .models import MODEL_REGISTRY, extract_hidden_layer, load_pretrained

__version__ = "0.1.0"
