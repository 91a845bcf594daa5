"""Semantic-probability patch aggregation (VSAD) and baseline scene encoders."""

from .baselines import (
    avgpool_encode,
    fv_encode,
    gmm_fit,
    kmeans_fit,
    pca_fit,
    pca_transform,
    vlad_encode,
)
from .classifier import evaluate, predict, svm_train
from .codebook import SemanticCodebook, build_codebook, restrict
from .core import EncodedVector, PatchManifest, validate_bundle
from .encoder import VsadConfig, encode_batch, encode_vsad
from .pipeline import PipelineConfig, compare_encoders, run_pipeline
from .sampling import sample_grid
from .selection import aggregate_responses, random_selection, select_codewords

__version__ = "0.1.0"
