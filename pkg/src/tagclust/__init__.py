"""Smoothing and entropy-weighted agglomerative co-clustering of sparse
document-tag matrices, with synthetic benchmarks, evaluation metrics and a
spectral baseline."""

from .cocluster import (
    CoclusterConfig,
    CoclusterEngine,
    StoppingEstimate,
    agglomerate,
    composite_cost,
    incremental_kl_update,
    kl_divergence,
    kl_j_symmetrized,
    merge_size_cost,
    pairwise_directed_kl,
    stopping_criterion,
)
from .core import (
    AggregatedMassMatrix,
    Dendrogram,
    MergeRecord,
    Partition,
    SparseBinaryMatrix,
    StepTrace,
    TagclustError,
    apply_merge,
    build_aggregate,
    new_singleton_partition,
)
from .metrics import (
    LabeledPartitionPair,
    completeness,
    homogeneity,
    homogeneity_completeness_v,
    mutual_information,
    relative_partition_entropy,
    restricted_partition_entropy,
    shannon_entropy,
    v_measure,
    v_measure_curve,
)
from .smoothing import (
    SinkhornResult,
    document_similarity,
    keyword_similarity,
    sinkhorn_knopp,
    smooth_binary_matrix,
    smooth_matrix,
)
from .spectral import SpectralConfig, SpectralResult, spectral_cocluster
from .synthgen import CheckerboardSpec, LabeledDataset, SplitMix64, generate_checkerboard

__version__ = "0.1.0"
