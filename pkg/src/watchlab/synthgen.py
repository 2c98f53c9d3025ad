"""Synthetic watch-time logs with known interest probability and known
bias/noise curves.

The generative story: each user and item carries a latent embedding; the
interest probability of a pair is sigmoid of their dot product plus an
optional duration-coupling term; the realized watch time is a draw from one
of two Gaussians, the engaged one centered on the duration-bias curve, the
disengaged one on the noisy-watching curve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, Interaction
from .errors import CurveOrderViolation, OutOfRangeDuration


@dataclass(frozen=True)
class Curve:
    """Parametric mean-watch-time curve over duration.

    Families:
      power_law:  a * d**gamma
      saturating: c * (1 - exp(-d / tau))
      constant:   c
      linear:     c * d
      table:      piecewise-linear through (durations, values)
    """

    family: str
    params: dict = field(default_factory=dict)

    def __call__(self, d):
        d = np.asarray(d, dtype=np.float64)
        p = self.params
        if self.family == "power_law":
            return p["a"] * d ** p["gamma"]
        if self.family == "saturating":
            return p["c"] * (1.0 - np.exp(-d / p["tau"]))
        if self.family == "constant":
            return np.full_like(d, float(p["c"]))
        if self.family == "linear":
            return p["c"] * d
        if self.family == "table":
            return np.interp(d, np.asarray(p["durations"], dtype=np.float64),
                             np.asarray(p["values"], dtype=np.float64))
        raise ValueError(f"unknown curve family: {self.family}")


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 50_000
    n_users: int = 200
    n_items: int = 300
    latent_dim: int = 8
    duration_range: tuple = (5, 240)
    bias_curve: Curve = Curve("power_law", {"a": 0.8, "gamma": 0.9})
    noise_curve: Curve = Curve("saturating", {"c": 12.0, "tau": 60.0})
    noise_std_plus: float = 2.0
    noise_std_minus: float = 1.0
    duration_interest_coupling: float = 1.0  # lambda; 0 removes the d -> p link
    interest_scale: float = 5.0  # gain on the embedding dot product
    duration_per_item: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.noise_std_plus <= 0 or self.noise_std_minus <= 0:
            raise ValueError("component standard deviations must be positive")
        d_lo, d_hi = self.duration_range
        if not (1 <= d_lo <= d_hi):
            raise ValueError(f"bad duration_range {self.duration_range}")
        grid = np.arange(d_lo, d_hi + 1)
        wp, wm = self.bias_curve(grid), self.noise_curve(grid)
        if np.any(wm < 0) or np.any(wm >= wp):
            raise CurveOrderViolation(
                "need 0 <= noise curve < bias curve over the whole duration range"
            )


@dataclass(frozen=True)
class GroundTruthRecord:
    p_interest: float
    r_sample: int
    w_plus_d: float
    w_minus_d: float


def true_curves(config: SynthConfig, d) -> tuple:
    """Evaluate the configured bias/noise curves at duration d."""
    d_lo, d_hi = config.duration_range
    if np.any(np.asarray(d) < d_lo) or np.any(np.asarray(d) > d_hi):
        raise OutOfRangeDuration(f"duration {d} outside {config.duration_range}")
    return float(config.bias_curve(d)), float(config.noise_curve(d))


def _truncated_normal(rng, means, stds):
    """Normal draws resampled (not clamped) until non-negative."""
    out = rng.normal(means, stds)
    bad = out < 0
    while np.any(bad):
        out[bad] = rng.normal(means[bad], np.broadcast_to(stds, out.shape)[bad])
        bad = out < 0
    return out


def generate(config: SynthConfig) -> tuple:
    """Sample a synthetic Dataset plus its aligned ground-truth records."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_rows
    d_lo, d_hi = config.duration_range

    emb_u = rng.normal(0.0, 1.0, (config.n_users, config.latent_dim)) / np.sqrt(config.latent_dim)
    emb_v = rng.normal(0.0, 1.0, (config.n_items, config.latent_dim)) / np.sqrt(config.latent_dim)

    log_lo, log_hi = np.log(d_lo), np.log(d_hi)
    item_durations = np.round(np.exp(rng.uniform(log_lo, log_hi, config.n_items))).astype(np.int64)
    item_durations = np.clip(item_durations, d_lo, d_hi)

    users = rng.integers(0, config.n_users, n)
    items = rng.integers(0, config.n_items, n)
    if config.duration_per_item:
        durations = item_durations[items]
    else:
        durations = np.round(np.exp(rng.uniform(log_lo, log_hi, n))).astype(np.int64)
        durations = np.clip(durations, d_lo, d_hi)

    # standardized log-duration couples interest to duration when lambda != 0
    if log_hi > log_lo:
        z = (np.log(durations) - (log_lo + log_hi) / 2.0) / ((log_hi - log_lo) / np.sqrt(12.0))
    else:
        z = np.zeros(n)
    logits = config.interest_scale * np.einsum(
        "ij,ij->i", emb_u[users], emb_v[items]
    ) + config.duration_interest_coupling * z
    p = 1.0 / (1.0 + np.exp(-logits))
    r = (rng.uniform(0.0, 1.0, n) < p).astype(np.int64)

    w_plus = np.asarray(config.bias_curve(durations), dtype=np.float64)
    w_minus = np.asarray(config.noise_curve(durations), dtype=np.float64)
    means = np.where(r == 1, w_plus, w_minus)
    stds = np.where(r == 1, config.noise_std_plus, config.noise_std_minus)
    w = _truncated_normal(rng, means, stds)

    rows = []
    truth = []
    for i in range(n):
        rows.append(
            Interaction(
                user_id=f"u{users[i]}",
                item_id=f"i{items[i]}",
                watch_time_s=float(w[i]),
                duration_s=int(durations[i]),
                timestamp=i,
                true_interest=int(r[i]),
            )
        )
        truth.append(
            GroundTruthRecord(
                p_interest=float(p[i]),
                r_sample=int(r[i]),
                w_plus_d=float(w_plus[i]),
                w_minus_d=float(w_minus[i]),
            )
        )
    return Dataset(rows), truth


def expected_watch_dataset(dataset: Dataset, truth) -> Dataset:
    """Replace each watch time by its expectation p*w+ + (1-p)*w-.

    Used by the unbiasedness and rank-equivalence harnesses, where sampling
    noise must be switched off.
    """
    rows = []
    for r, t in zip(dataset, truth):
        w = t.p_interest * t.w_plus_d + (1.0 - t.p_interest) * t.w_minus_d
        rows.append(
            Interaction(
                user_id=r.user_id,
                item_id=r.item_id,
                watch_time_s=float(w),
                duration_s=r.duration_s,
                features=r.features,
                timestamp=r.timestamp,
                true_interest=r.true_interest,
            )
        )
    return Dataset(rows)


def matched_interest_dataset(p_values, durations, bias_curve: Curve,
                             noise_curve: Curve) -> tuple:
    """Every duration group carries the same multiset of interest values and
    watch times equal their expectations.

    This construction makes the per-group interest moments identical and
    gives all groups the same interest ranking, the regimes under which the
    standardization and quantile baselines are rank-faithful.
    """
    p_values = np.asarray(p_values, dtype=np.float64)
    rows = []
    truth = []
    i = 0
    for d in durations:
        wp = float(bias_curve(d))
        wm = float(noise_curve(d))
        if not wm < wp:
            raise CurveOrderViolation(f"noise >= bias at duration {d}")
        for p in p_values:
            w = p * wp + (1.0 - p) * wm
            rows.append(
                Interaction(
                    user_id=f"u{i}",
                    item_id=f"i{i}",
                    watch_time_s=float(w),
                    duration_s=int(d),
                    timestamp=i,
                )
            )
            truth.append(GroundTruthRecord(float(p), int(p >= 0.5), wp, wm))
            i += 1
    return Dataset(rows), truth


GROUND_TRUTH_COLUMNS = ["p_interest", "r_sample", "w_plus_d", "w_minus_d"]


def write_ground_truth_csv(truth, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(GROUND_TRUTH_COLUMNS)
        for t in truth:
            writer.writerow([repr(t.p_interest), t.r_sample, repr(t.w_plus_d), repr(t.w_minus_d)])


def read_ground_truth_csv(path):
    truth = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            truth.append(
                GroundTruthRecord(
                    p_interest=float(row["p_interest"]),
                    r_sample=int(row["r_sample"]),
                    w_plus_d=float(row["w_plus_d"]),
                    w_minus_d=float(row["w_minus_d"]),
                )
            )
    return truth
