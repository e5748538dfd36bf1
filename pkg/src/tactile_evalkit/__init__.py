"""Distributional metrics and split-leakage audits for generative tactile models."""

from .baselines import (
    GaussianFit,
    RetrievalResult,
    embedding_mmd,
    fid,
    fit_gaussian,
    knn_probe,
    load_image_gray,
    psnr,
    retrieval_topk,
    ssim,
)
from .leakage import (
    LeakageReport,
    SplitAssignment,
    audit_split,
    load_split_list,
    make_noleak_split,
    split_to_lists,
    with_split,
    write_split_lists,
)
from .metrics import (
    DivergenceMatrix,
    IndeterminateDiversityError,
    SplitStrategy,
    aggregate_diversity,
    ci_tmmd,
    d_tmmd,
    divergence_matrix,
    i_tmmd,
    split_halves,
    tmmd,
)
from .mmd import (
    DegenerateBandwidthError,
    MmdConfig,
    MmdValue,
    kernel_matrix,
    median_heuristic_sigma,
    mmd2_unbiased,
    rbf_kernel,
)
from .report import MetricReport
from .store import (
    ClassPartition,
    EmbeddingSet,
    MetaRow,
    MetaTable,
    load_embeddings,
    load_embeddings_csv,
    load_meta,
    partition_by_class,
    write_embeddings,
    write_meta,
)
from .synth import (
    ScenarioOutput,
    ScenarioSpec,
    generate_scenario,
    memorizing_generator,
    run_leak_study,
)

__version__ = "0.1.0"
