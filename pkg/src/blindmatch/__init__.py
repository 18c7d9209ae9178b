"""Blind matching of embedding spaces via pairwise-distortion minimization."""

from .embeddings import (
    ClassPrototypes,
    EmbeddingMatrix,
    class_prototypes,
    load_embeddings,
    normalize_rows,
    save_embeddings,
)
from .kernels import (
    NEG_INNER,
    SQUARED_DIFF,
    DistortionSpec,
    FactorizedQap,
    KernelKind,
    SimilarityMatrix,
    cka_kernel,
    distortion,
    factorize,
    gw_kernel,
    load_similarity,
    mutual_knn_kernel,
    save_similarity,
    shuffle_curve,
    to_qap,
)
from .lap import LapSolution, solve_lap_auction, solve_lap_jv
from .qap import (
    HahnGrantConfig,
    QapSolveReport,
    solve_enumeration,
    solve_factorized_hahn_grant,
    solve_hahn_grant_reference,
)
from .heuristics import primal_heuristic, solve_2opt, solve_faq
from .transport import solve_entropic_gw
from .subset import (
    AlignmentProblem,
    SubsetSearchConfig,
    alignment_problem,
    alignment_score,
    select_subset_exact,
    select_subset_heuristic,
    top_m_subsets,
)
from .clustering import ClusterModel, kmeans_pp
from .pipeline import ExperimentConfig, matching_accuracy, run_experiment

__version__ = "0.1.0"
