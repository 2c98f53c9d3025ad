"""Per-duration two-component Gaussian mixture fits plus the bi-directional
frequency-weighted moving average over the fitted mean sequences."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset
from .errors import EmptyCurve, GroupTooSmall, NoFittableGroups

THREADS_ENV = "WATCHLAB_THREADS"


@dataclass(frozen=True)
class GmmOptions:
    min_group_size: int = 50
    tol: float = 1e-6
    max_iter: int = 200
    var_floor: float = 1e-4


@dataclass(frozen=True)
class GroupEstimate:
    d: int
    w_plus_hat: float
    w_minus_hat: float
    var_plus: float
    var_minus: float
    weight_plus: float  # mixture weight of the engaged component
    count: int
    converged: bool
    loglik: float
    degenerate: bool = False


def _log_gauss(x, mu, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mu) ** 2 / var)


def fit_group_gmm(watch_times, options: GmmOptions | None = None, d: int = 0) -> GroupEstimate:
    """EM fit of a 1-D two-component Gaussian mixture to one duration group.

    Deterministic init: means at the 10th/90th percentiles, both variances at
    the sample variance, equal weights. The larger-mean component is reported
    as the engaged (bias) one.
    """
    options = options or GmmOptions()
    x = np.asarray(watch_times, dtype=np.float64)
    n = x.size
    if n < options.min_group_size:
        raise GroupTooSmall(n)
    if np.any(x < 0):
        raise ValueError("watch times must be non-negative")

    if np.all(x == x[0]):
        v = float(x[0])
        return GroupEstimate(
            d=d, w_plus_hat=v, w_minus_hat=v,
            var_plus=options.var_floor, var_minus=options.var_floor,
            weight_plus=0.5, count=n, converged=False, loglik=float("nan"),
            degenerate=True,
        )

    mu = np.array([np.percentile(x, 10), np.percentile(x, 90)])
    var = np.full(2, max(float(np.var(x)), options.var_floor))
    pi = np.array([0.5, 0.5])

    prev_ll = -np.inf
    converged = False
    ll = prev_ll
    for _ in range(options.max_iter):
        # E-step
        log_comp = np.log(pi)[:, None] + _log_gauss(x[None, :], mu[:, None], var[:, None])
        m = log_comp.max(axis=0)
        log_norm = m + np.log(np.exp(log_comp - m).sum(axis=0))
        resp = np.exp(log_comp - log_norm)
        ll = float(log_norm.sum())
        # likelihood must not decrease between iterations
        assert ll >= prev_ll - 1e-8 * max(1.0, abs(prev_ll)), (ll, prev_ll)
        if np.isfinite(prev_ll) and abs(ll - prev_ll) < options.tol * abs(prev_ll):
            converged = True
            break
        prev_ll = ll
        # M-step
        nk = resp.sum(axis=1)
        nk = np.maximum(nk, 1e-12)
        mu = (resp * x[None, :]).sum(axis=1) / nk
        var = (resp * (x[None, :] - mu[:, None]) ** 2).sum(axis=1) / nk
        var = np.maximum(var, options.var_floor)
        pi = nk / n

    hi, lo = (0, 1) if mu[0] >= mu[1] else (1, 0)
    return GroupEstimate(
        d=d,
        w_plus_hat=float(mu[hi]),
        w_minus_hat=float(mu[lo]),
        var_plus=float(var[hi]),
        var_minus=float(var[lo]),
        weight_plus=float(pi[hi]),
        count=n,
        converged=converged,
        loglik=ll,
    )


def fit_all_groups(dataset: Dataset, options: GmmOptions | None = None) -> dict:
    """Fit one mixture per duration value with enough rows.

    Returns {duration: GroupEstimate}. Thin groups are simply absent from the
    result (smooth_curves interpolates them). Group fits run on a small
    thread pool capped by WATCHLAB_THREADS; assembly order is sorted, so the
    result is deterministic.
    """
    options = options or GmmOptions()
    if len(dataset) == 0:
        raise NoFittableGroups("empty dataset")
    w = dataset.watch_times
    d = dataset.durations
    uniq, inverse = np.unique(d, return_inverse=True)
    groups = [(int(uniq[k]), w[inverse == k]) for k in range(uniq.size)
              if (inverse == k).sum() >= options.min_group_size]
    if not groups:
        raise NoFittableGroups("no duration group reaches min_group_size")

    max_workers = max(1, int(os.environ.get(THREADS_ENV, "1")))
    if max_workers == 1:
        fits = [fit_group_gmm(x, options, d=dk) for dk, x in groups]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            fits = list(pool.map(lambda g: fit_group_gmm(g[1], options, d=g[0]), groups))
    return {est.d: est for est in fits}


@dataclass
class BiasNoiseCurves:
    """Raw and smoothed per-duration bias/noise means, sorted by duration."""

    durations: np.ndarray
    w_plus_raw: np.ndarray
    w_minus_raw: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray
    weight_plus: np.ndarray
    counts: np.ndarray
    window: int
    fitted: np.ndarray = field(default=None)  # False where interpolated
    repaired: np.ndarray = field(default=None)  # True where w- was pushed below w+

    def value_at(self, d):
        """Curve values for arbitrary durations: linear interpolation inside
        the key range, nearest-key extension outside."""
        d = np.asarray(d, dtype=np.float64)
        keys = self.durations.astype(np.float64)
        wp = np.interp(d, keys, self.w_plus)
        wm = np.interp(d, keys, self.w_minus)
        return wp, wm

    CSV_HEADER = ["d", "w_plus_raw", "w_minus_raw", "w_plus_smooth",
                  "w_minus_smooth", "weight_plus", "count", "converged"]

    def to_csv(self, path, converged=None) -> None:
        conv = converged if converged is not None else self.fitted
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(self.CSV_HEADER)
            for i, d in enumerate(self.durations):
                writer.writerow([
                    int(d),
                    repr(float(self.w_plus_raw[i])),
                    repr(float(self.w_minus_raw[i])),
                    repr(float(self.w_plus[i])),
                    repr(float(self.w_minus[i])),
                    repr(float(self.weight_plus[i])),
                    int(self.counts[i]),
                    int(bool(conv[i])) if conv is not None else 1,
                ])

    @classmethod
    def from_csv(cls, path, window: int = 0) -> "BiasNoiseCurves":
        rows = []
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                rows.append(row)
        if not rows:
            raise EmptyCurve(f"no curve rows in {path}")
        rows.sort(key=lambda r: int(r["d"]))
        return cls(
            durations=np.array([int(r["d"]) for r in rows], dtype=np.int64),
            w_plus_raw=np.array([float(r["w_plus_raw"]) for r in rows]),
            w_minus_raw=np.array([float(r["w_minus_raw"]) for r in rows]),
            w_plus=np.array([float(r["w_plus_smooth"]) for r in rows]),
            w_minus=np.array([float(r["w_minus_smooth"]) for r in rows]),
            weight_plus=np.array([float(r["weight_plus"]) for r in rows]),
            counts=np.array([int(r["count"]) for r in rows], dtype=np.int64),
            window=window,
            fitted=np.array([bool(int(r["converged"])) for r in rows]),
        )


def _interp_missing(keys, values, fitted_mask):
    """Fill non-fitted keys from the nearest fitted neighbors (linear inside,
    nearest outside)."""
    out = np.array(values, dtype=np.float64)
    if fitted_mask.all():
        return out
    xs = keys[fitted_mask].astype(np.float64)
    ys = out[fitted_mask]
    out[~fitted_mask] = np.interp(keys[~fitted_mask].astype(np.float64), xs, ys)
    return out


def smooth_curves(raw: dict, window: int, group_counts: dict | None = None) -> BiasNoiseCurves:
    """Frequency-weighted moving average over the sorted duration keys.

    For key index i the smoothed value averages the raw values at indices
    i-T..i+T weighted by group sizes; the window shrinks at the boundaries.
    If group_counts lists durations with no fitted estimate, those keys are
    first filled by interpolation between fitted neighbors, then smoothed
    like the rest. Any key where the smoothed noise mean reaches the bias
    mean is repaired to sit just below it.
    """
    if not raw:
        raise EmptyCurve("no fitted groups to smooth")
    if window < 0:
        raise ValueError("window must be >= 0")
    all_keys = set(raw)
    if group_counts:
        all_keys |= set(group_counts)
    keys = np.array(sorted(all_keys), dtype=np.int64)
    K = keys.size
    fitted = np.array([k in raw for k in keys.tolist()])

    def pull(attr):
        return np.array([getattr(raw[k], attr) if k in raw else np.nan for k in keys.tolist()])

    wp_raw = _interp_missing(keys, pull("w_plus_hat"), fitted)
    wm_raw = _interp_missing(keys, pull("w_minus_hat"), fitted)
    wgt = _interp_missing(keys, pull("weight_plus"), fitted)
    counts = np.array(
        [raw[k].count if k in raw else (group_counts or {}).get(k, 0) for k in keys.tolist()],
        dtype=np.int64,
    )
    # interpolated keys with unknown size get weight 1 so they still
    # participate in neighboring windows
    weights = np.maximum(counts, 1).astype(np.float64)

    wp = np.empty(K)
    wm = np.empty(K)
    for i in range(K):
        lo, hi = max(0, i - window), min(K, i + window + 1)
        wsum = weights[lo:hi].sum()
        wp[i] = float(np.dot(weights[lo:hi], wp_raw[lo:hi]) / wsum)
        wm[i] = float(np.dot(weights[lo:hi], wm_raw[lo:hi]) / wsum)

    repaired = wm >= wp
    wm[repaired] = wp[repaired] * (1.0 - 1e-3)

    return BiasNoiseCurves(
        durations=keys,
        w_plus_raw=wp_raw,
        w_minus_raw=wm_raw,
        w_plus=wp,
        w_minus=wm,
        weight_plus=wgt,
        counts=counts,
        window=window,
        fitted=fitted,
        repaired=repaired,
    )
