"""Watch time -> interest label transforms: the affine and
sensitivity-controlled corrections, the PCR/WTG/D2Q baselines with optional
denoise post-processing, and the error/sensitivity diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .data_model import Dataset, write_csv
from .errors import (
    CurveCollapse,
    DegenerateDenominator,
    LengthMismatch,
    NumericOverflow,
    OutOfInterval,
)
from .estimator import BiasNoiseCurves

METHOD_IDS = (
    "watch_time",
    "pcr",
    "pcr_denoise",
    "wtg",
    "wtg_denoise",
    "d2q",
    "d2q_denoise",
    "d2co_a",
    "d2co_s",
)

_EXP_LIMIT = 700.0  # exp argument above which float64 overflows


@dataclass(frozen=True)
class GroupWatchStats:
    d: int
    mu_w: float
    sigma_w: float
    count: int


def group_watch_stats(dataset: Dataset) -> dict:
    """Per-duration mean/std of watch time (population std)."""
    w = dataset.watch_times
    d = dataset.durations
    uniq, inverse = np.unique(d, return_inverse=True)
    out = {}
    for k in range(uniq.size):
        mask = inverse == k
        xs = w[mask]
        out[int(uniq[k])] = GroupWatchStats(
            d=int(uniq[k]),
            mu_w=float(xs.mean()),
            sigma_w=float(xs.std()),
            count=int(mask.sum()),
        )
    return out


@dataclass
class DurationBins:
    """Equal-frequency duration bins with per-row descending watch-time ranks."""

    n_bins: int
    edges: np.ndarray  # duration boundaries, len n_bins + 1
    bin_of_row: np.ndarray
    bin_sizes: np.ndarray


def build_duration_bins(dataset: Dataset, n_bins: int) -> DurationBins:
    """Split rows into duration quantile bins; rows sharing a duration always
    share a bin, so very skewed duration histograms can yield fewer distinct
    bins than requested."""
    d = dataset.durations
    qs = np.quantile(d, np.linspace(0, 1, n_bins + 1))
    edges = np.unique(qs)
    # right-closed bins: d <= edge goes to the earlier bin
    bin_of_row = np.searchsorted(edges[1:-1], d, side="left")
    sizes = np.bincount(bin_of_row, minlength=max(1, edges.size - 1))
    return DurationBins(n_bins=n_bins, edges=edges, bin_of_row=bin_of_row, bin_sizes=sizes)


def label_pcr(w, d):
    """Play-complete rate w/d (unclipped; replays can exceed 1)."""
    return np.asarray(w, dtype=np.float64) / np.asarray(d, dtype=np.float64)


def label_wtg(w, mu_w, sigma_w):
    """Duration-group z-score of watch time mapped to [0,1] through the
    standard normal CDF; a zero-variance group gives 0.5."""
    w = np.asarray(w, dtype=np.float64)
    mu = np.asarray(mu_w, dtype=np.float64)
    sigma = np.asarray(sigma_w, dtype=np.float64)
    z = np.where(sigma > 0, (w - mu) / np.where(sigma > 0, sigma, 1.0), 0.0)
    return ndtr(z)


def label_d2q(dataset: Dataset, bins: DurationBins) -> np.ndarray:
    """Quantile label: (bin_size - rank)/bin_size with descending average
    ranks of watch time inside each duration bin."""
    w = dataset.watch_times
    labels = np.empty(len(dataset))
    for b in range(bins.bin_sizes.size):
        mask = bins.bin_of_row == b
        if not mask.any():
            continue
        ranks = rankdata(-w[mask], method="average")
        size = mask.sum()
        labels[mask] = (size - ranks) / size
    return labels


def label_d2co_affine(w, w_plus, w_minus, clip: bool = True):
    """Affine correction (w - w-)/(w+ - w-)."""
    w = np.asarray(w, dtype=np.float64)
    wp = np.asarray(w_plus, dtype=np.float64)
    wm = np.asarray(w_minus, dtype=np.float64)
    if np.any(wp <= wm):
        raise CurveCollapse("bias curve must stay above noise curve")
    r = (w - wm) / (wp - wm)
    return np.clip(r, 0.0, 1.0) if clip else r


def label_d2co_sensitivity(w, w_plus, w_minus, alpha: float, clip: bool = True):
    """Exponential correction (e^{aw} - e^{aw-})/(e^{aw+} - e^{aw-}).

    Computed anchored at w- for alpha<0 and at w+ for alpha>0 so every
    exponent stays non-positive for in-interval w; expm1 keeps the small-|a|
    limit consistent with the affine correction.
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero; use label_d2co_affine instead")
    w = np.asarray(w, dtype=np.float64)
    wp = np.asarray(w_plus, dtype=np.float64)
    wm = np.asarray(w_minus, dtype=np.float64)
    if np.any(wp <= wm):
        raise CurveCollapse("bias curve must stay above noise curve")
    if alpha > 0:
        e1, e2, e3 = alpha * (w - wp), alpha * (wm - wp), alpha * (wm - wp)
        if np.any(np.maximum(e1, e2) > _EXP_LIMIT):
            raise NumericOverflow("alpha * watch time out of stable range")
        r = (np.exp(e1) - np.exp(e2)) / (-np.expm1(e3))
    else:
        e1, e2 = alpha * (w - wm), alpha * (wp - wm)
        if np.any(np.maximum(e1, e2) > _EXP_LIMIT):
            raise NumericOverflow("alpha * watch time out of stable range")
        r = np.expm1(e1) / np.expm1(e2)
    return np.clip(r, 0.0, 1.0) if clip else r


def denoise_postprocess(labels, dataset: Dataset, threshold_s: float = 5.0):
    """Zero the label wherever watch time is strictly below the threshold."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape[0] != len(dataset):
        raise LengthMismatch(f"{labels.shape[0]} labels for {len(dataset)} rows")
    return np.where(dataset.watch_times < threshold_s, 0.0, labels)


def sensitivity_affine(w, w_plus, w_minus, delta_plus, delta_minus):
    """Closed-form sensitivity of the affine correction to curve disturbances."""
    w = np.asarray(w, dtype=np.float64)
    wp = np.asarray(w_plus, dtype=np.float64)
    wm = np.asarray(w_minus, dtype=np.float64)
    if np.any((w < wm) | (w > wp)):
        raise OutOfInterval("w must lie in [w-, w+]")
    gap2 = (wp - wm) ** 2
    s_plus = (w - wm) / gap2 * abs(delta_plus)
    s_minus = (wp - w) / gap2 * abs(delta_minus)
    return s_plus, s_minus


def sensitivity_scontrolled_numeric(w, w_plus, w_minus, alpha, delta):
    """Sensitivity of the exponential correction to curve disturbances,
    via central finite differences (no closed form asserted here)."""
    w = np.asarray(w, dtype=np.float64)
    wp = np.asarray(w_plus, dtype=np.float64)
    wm = np.asarray(w_minus, dtype=np.float64)
    if np.any((w < wm) | (w > wp)):
        raise OutOfInterval("w must lie in [w-, w+]")
    h = min(1e-4, abs(delta) / 10.0)

    def r(wp_, wm_):
        return label_d2co_sensitivity(w, wp_, wm_, alpha, clip=False)

    d_plus = (r(wp + h, wm) - r(wp - h, wm)) / (2.0 * h)
    d_minus = (r(wp, wm + h) - r(wp, wm - h)) / (2.0 * h)
    return np.abs(d_plus) * abs(delta), np.abs(d_minus) * abs(delta)


def error_decomposition(curves: BiasNoiseCurves, w_max: float):
    """Per-duration upper-bound error terms of raw scaled watch time:
    (w_max - w+)/w_max from duration bias and w-/w_max from noisy watching."""
    if w_max <= 0:
        raise DegenerateDenominator("w_max must be positive")
    bias_err = (w_max - curves.w_plus) / w_max
    noise_err = curves.w_minus / w_max
    return bias_err, noise_err


@dataclass(frozen=True)
class CorrectionParams:
    method: str
    curves: BiasNoiseCurves | None = None
    alpha: float | None = None
    n_bins: int = 60
    denoise_threshold_s: float = 5.0
    clip: bool = True

    def validate(self) -> None:
        if self.method not in METHOD_IDS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHOD_IDS}")
        if self.method in ("d2co_a", "d2co_s") and self.curves is None:
            raise ValueError(f"{self.method} needs fitted bias/noise curves")
        if self.method == "d2co_s" and not self.alpha:
            raise ValueError("d2co_s needs a nonzero alpha")


@dataclass
class CorrectedDataset:
    dataset: Dataset
    labels: np.ndarray
    method: str

    def to_csv(self, path, schema=None) -> None:
        write_csv(self.dataset, path, schema)
        # append label and method columns by rewriting with extra fields
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        rows[0].extend(["label", "method"])
        for i, row in enumerate(rows[1:]):
            row.extend([repr(float(self.labels[i])), self.method])
        with open(path, "w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerows(rows)


def read_labels_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as f:
        return np.array([float(row["label"]) for row in csv.DictReader(f)])


def apply_method(dataset: Dataset, params: CorrectionParams) -> CorrectedDataset:
    """Label every row with the requested correction method."""
    params.validate()
    w = dataset.watch_times
    d = dataset.durations
    method = params.method
    base = method.replace("_denoise", "")

    if base == "watch_time":
        labels = w / w.max()
    elif base == "pcr":
        labels = label_pcr(w, d)
        if params.clip:
            labels = np.clip(labels, 0.0, 1.0)
    elif base == "wtg":
        stats = group_watch_stats(dataset)
        mu = np.array([stats[int(k)].mu_w for k in d])
        sigma = np.array([stats[int(k)].sigma_w for k in d])
        labels = label_wtg(w, mu, sigma)
    elif base == "d2q":
        bins = build_duration_bins(dataset, params.n_bins)
        labels = label_d2q(dataset, bins)
    elif base == "d2co_a":
        wp, wm = params.curves.value_at(d)
        labels = label_d2co_affine(w, wp, wm, clip=params.clip)
    elif base == "d2co_s":
        wp, wm = params.curves.value_at(d)
        labels = label_d2co_sensitivity(w, wp, wm, params.alpha, clip=params.clip)
    else:  # pragma: no cover - guarded by validate()
        raise ValueError(method)

    if method.endswith("_denoise"):
        labels = denoise_postprocess(labels, dataset, params.denoise_threshold_s)
    return CorrectedDataset(dataset=dataset, labels=labels, method=method)
