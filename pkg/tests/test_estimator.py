import numpy as np
import pytest

from watchlab.data_model import Dataset, Interaction
from watchlab.errors import EmptyCurve, GroupTooSmall, NoFittableGroups
from watchlab.estimator import (
    BiasNoiseCurves,
    GmmOptions,
    GroupEstimate,
    fit_all_groups,
    fit_group_gmm,
    smooth_curves,
)


def mixture_sample(rng, n, w_minus, w_plus, weight_plus, s_minus=1.0, s_plus=4.0):
    r = rng.uniform(size=n) < weight_plus
    return np.where(r, rng.normal(w_plus, s_plus, n), rng.normal(w_minus, s_minus, n))


class TestFitGroupGmm:
    def test_recovers_separated_mixture(self):
        rng = np.random.default_rng(0)
        x = mixture_sample(rng, 10_000, 5.0, 40.0, 0.7, 1.0, 4.0)
        est = fit_group_gmm(x)
        assert est.w_minus_hat == pytest.approx(5.0, abs=0.2)
        assert est.w_plus_hat == pytest.approx(40.0, abs=0.5)
        assert est.weight_plus == pytest.approx(0.7, abs=0.03)
        assert est.converged

    def test_degenerate_group(self):
        est = fit_group_gmm(np.full(100, 12.0))
        assert est.degenerate
        assert not est.converged
        assert est.w_plus_hat == est.w_minus_hat == 12.0

    def test_too_small(self):
        with pytest.raises(GroupTooSmall):
            fit_group_gmm(np.ones(10), GmmOptions(min_group_size=50))

    def test_component_order(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            x = np.abs(mixture_sample(np.random.default_rng(seed), 2000, 3.0, 20.0, 0.4))
            est = fit_group_gmm(x)
            assert est.w_minus_hat <= est.w_plus_hat

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        x = mixture_sample(rng, 4000, 4.0, 30.0, 0.6)
        a = fit_group_gmm(x)
        b = fit_group_gmm(rng.permutation(x))
        assert a.w_plus_hat == pytest.approx(b.w_plus_hat, rel=1e-6)
        assert a.w_minus_hat == pytest.approx(b.w_minus_hat, rel=1e-6)


def dataset_with_groups(spec, seed=0):
    """spec: {duration: n_rows}; each group is a separated mixture."""
    rng = np.random.default_rng(seed)
    rows = []
    for d, n in spec.items():
        x = mixture_sample(rng, n, 0.1 * d + 1, 0.8 * d + 5, 0.6, 0.5, 1.0)
        x = np.abs(x)
        for i, w in enumerate(x):
            rows.append(Interaction(f"u{i%17}", f"i{i}", float(w), int(d)))
    return Dataset(rows)


class TestFitAllGroups:
    def test_counts_groups(self):
        ds = dataset_with_groups({10: 1000, 20: 1000})
        assert set(fit_all_groups(ds)) == {10, 20}

    def test_no_fittable(self):
        ds = dataset_with_groups({d: 1 for d in range(10, 40)})
        with pytest.raises(NoFittableGroups):
            fit_all_groups(ds)

    def test_thin_groups_skipped(self):
        ds = dataset_with_groups({10: 1000, 15: 10, 20: 1000})
        fits = fit_all_groups(ds)
        assert set(fits) == {10, 20}


def make_raw(counts, plus, minus=None):
    out = {}
    for i, (d, c) in enumerate(counts.items()):
        wm = minus[i] if minus is not None else plus[i] / 10
        out[d] = GroupEstimate(
            d=d, w_plus_hat=plus[i], w_minus_hat=wm, var_plus=1.0,
            var_minus=1.0, weight_plus=0.5, count=c, converged=True, loglik=0.0,
        )
    return out


class TestSmoothCurves:
    def test_hand_example(self):
        raw = make_raw({1: 2, 2: 3, 3: 5}, [10.0, 20.0, 30.0])
        curves = smooth_curves(raw, window=1)
        assert curves.w_plus[1] == pytest.approx(23.0, abs=1e-12)

    def test_window_zero_identity(self):
        raw = make_raw({1: 2, 2: 3, 3: 5}, [10.0, 20.0, 30.0])
        curves = smooth_curves(raw, window=0)
        assert np.allclose(curves.w_plus, [10, 20, 30])

    def test_full_window_global_mean(self):
        raw = make_raw({1: 2, 2: 3, 3: 5}, [10.0, 20.0, 30.0])
        curves = smooth_curves(raw, window=10)
        assert np.allclose(curves.w_plus, 23.0)

    def test_missing_interior_interpolated(self):
        raw = make_raw({10: 100, 30: 100}, [10.0, 30.0])
        curves = smooth_curves(raw, window=0, group_counts={10: 100, 20: 5, 30: 100})
        i = list(curves.durations).index(20)
        assert curves.w_plus_raw[i] == pytest.approx(20.0)
        assert not curves.fitted[i]

    def test_repair_when_noise_crosses_bias(self):
        raw = make_raw({1: 10, 2: 10}, [10.0, 10.0], minus=[10.0, 12.0])
        curves = smooth_curves(raw, window=0)
        assert (curves.w_minus < curves.w_plus).all()
        assert curves.repaired.any()

    def test_empty(self):
        with pytest.raises(EmptyCurve):
            smooth_curves({}, window=1)

    def test_csv_round_trip(self, tmp_path):
        raw = make_raw({5: 10, 9: 20, 14: 5}, [8.0, 12.0, 20.0])
        curves = smooth_curves(raw, window=1)
        path = tmp_path / "curves.csv"
        curves.to_csv(path)
        back = BiasNoiseCurves.from_csv(path)
        assert np.allclose(back.w_plus, curves.w_plus)
        assert np.allclose(back.w_minus_raw, curves.w_minus_raw)
        assert np.array_equal(back.durations, curves.durations)

    def test_value_at_interpolates_and_extends(self):
        raw = make_raw({10: 1, 20: 1}, [10.0, 20.0])
        curves = smooth_curves(raw, window=0)
        wp, _ = curves.value_at([15, 5, 50])
        assert wp[0] == pytest.approx(15.0)
        assert wp[1] == pytest.approx(10.0)  # nearest-key extension
        assert wp[2] == pytest.approx(20.0)
