"""Unsupervised word discovery from speech features.

Prominence-based boundary detection, PCA + mean-pooled segment embeddings,
seeded K-means lexicon building, DP re-segmentation over candidate
boundaries, and ZeroSpeech-style evaluation metrics.
"""

from .boundaries import (
    DissimilarityCurve,
    SegmenterConfig,
    dissimilarity_curve,
    find_prominent_peaks,
    frames_to_seconds,
    normalize_corpus,
    segment_utterance,
    smooth,
)
from .embed import PCAModel, SegmentEmbedding, SegmentRef, apply_pca, embed_all, embed_segment, fit_pca
from .eskmeans import ESKMeansConfig, SegmentationState, dp_segment, eskmeans_fit, segment_cost
from .kmeans import AssignmentTable, Codebook, KMeansResult, assign, build_lexicon, kmeans_fit, objective
from .metrics import evaluate_run, levenshtein, match_boundaries, ned, r_value, token_f1, transcribe_segment
from .types import Alignment, AlignmentEntry, BoundarySet, ClassFile, FeatureMatrix, Manifest, ManifestEntry, Segment

__version__ = "0.1.0"
