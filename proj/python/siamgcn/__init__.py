"""Siamese spectral graph convolutional network for graph similarity metric learning."""

from ._core import (
    Model,
    NumericError,
    ValidationError,
    chebyshev_filter,
    global_loss,
    graph_hash,
    knn_classify,
    load_checkpoint,
    normalized_laplacian,
    pca_euclidean_baseline,
    pearson_profiles,
    permutation_test,
    rescale_laplacian,
    roc_auc,
    run,
    sample_pairs,
    spectral_filter,
    symmetric_eig,
    synth_cohort,
)

__all__ = [
    "Model",
    "NumericError",
    "ValidationError",
    "chebyshev_filter",
    "global_loss",
    "graph_hash",
    "knn_classify",
    "load_checkpoint",
    "normalized_laplacian",
    "pca_euclidean_baseline",
    "pearson_profiles",
    "permutation_test",
    "rescale_laplacian",
    "roc_auc",
    "run",
    "sample_pairs",
    "spectral_filter",
    "symmetric_eig",
    "synth_cohort",
]
