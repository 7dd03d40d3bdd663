"""Learned auction mechanisms with preference constraints.

Determinism first: BLAS/OpenMP thread pools are pinned to one thread
before numpy loads, so identical seeds give bitwise-identical runs. Set
the environment variables yourself before importing to override.
"""

import os as _os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .autodiff import DomainError, ShapeError, Tape, Tensor  # noqa: E402
from .optim import Adam  # noqa: E402
from .auctions import (  # noqa: E402
    AuctionSpec,
    BidBatch,
    ValuationModel,
    bids_from_csv,
    bids_to_csv,
    check_feasibility,
    itemwise_myerson_revenue,
    revenue,
    sample_bids,
    utility,
)
from .networks import PreferenceMLP, RegretNetModel  # noqa: E402
from .preferences import (  # noqa: E402
    LabeledAllocationSet,
    PreferenceFunction,
    ProbitNoiseModel,
    allocation_similarity,
    build_labels,
    class_balance,
    flip_probabilities,
    pairwise_label,
    pca,
    preference_score,
    preference_scores,
    probit_flip,
    reference_threshold,
    uniform_allocations,
)
from .training import (  # noqa: E402
    Checkpoint,
    LagrangeState,
    TrainConfig,
    TrainResult,
    compute_misreports,
    evaluate,
    load_checkpoint,
    regret_matrix,
    restore_model,
    save_checkpoint,
    train,
    validate_select,
)
from .config import ExperimentConfig, PlotConfig, load_config  # noqa: E402
from .seeding import stream  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Adam", "AuctionSpec", "BidBatch", "Checkpoint", "DomainError",
    "ExperimentConfig", "LabeledAllocationSet", "LagrangeState", "PlotConfig",
    "PreferenceFunction", "PreferenceMLP", "ProbitNoiseModel", "RegretNetModel",
    "ShapeError", "Tape", "Tensor", "TrainConfig", "TrainResult",
    "allocation_similarity", "bids_from_csv", "bids_to_csv", "build_labels",
    "check_feasibility", "class_balance", "compute_misreports", "evaluate",
    "flip_probabilities", "itemwise_myerson_revenue", "load_checkpoint",
    "load_config", "pairwise_label", "pca", "preference_score",
    "preference_scores", "probit_flip", "reference_threshold", "regret_matrix",
    "restore_model", "revenue", "sample_bids", "save_checkpoint", "stream",
    "train", "uniform_allocations", "utility", "validate_select",
]
