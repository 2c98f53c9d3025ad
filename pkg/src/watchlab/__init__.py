"""Uncovering user interest from duration-biased, noise-contaminated
video watch-time logs."""

__version__ = "0.1.0"

from .data_model import (  # noqa: F401
    Dataset,
    DatasetStats,
    FeatureSchema,
    Interaction,
    compute_stats,
    derive_interest_label,
    ingest_csv,
    split_chronological,
    write_csv,
)
from .synthgen import Curve, SynthConfig, generate, true_curves  # noqa: F401
from .estimator import (  # noqa: F401
    BiasNoiseCurves,
    GmmOptions,
    GroupEstimate,
    fit_all_groups,
    fit_group_gmm,
    smooth_curves,
)
from .correction import (  # noqa: F401
    CorrectionParams,
    apply_method,
    denoise_postprocess,
    error_decomposition,
    label_d2co_affine,
    label_d2co_sensitivity,
    label_pcr,
    label_wtg,
    sensitivity_affine,
    sensitivity_scontrolled_numeric,
)
from .trainer import FMModel, TrainConfig, build_vocab, train  # noqa: F401
from .evaluation import (  # noqa: F401
    EvalReport,
    evaluate,
    gauc,
    improve_percentage,
    ndcg_at_k,
    oracle_labels,
)
