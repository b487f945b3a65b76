import time

import numpy as np
import pytest

from vcgp.data_io import synth_vcm, threshold_labels
from vcgp.gp_classify import fit_classifier
from vcgp.gp_core import Dataset, fit_regressor
from vcgp.kernels import KernelSpec, Linear, Matern
from vcgp.sparse_fitc import (
    InducingSet,
    fit_fitc,
    fit_fitc_classifier,
    select_inducing,
)

SPEC = KernelSpec(
    instance_kernel=Matern(nu=1.5, lengthscale=2.0),
    task_kernel=Matern(nu=1.5, lengthscale=0.3),
)


def make_data(n, m=2, seed=0, tau2=0.05):
    return synth_vcm(n, m=m, d=1, task_kernel=SPEC.task_kernel, tau2=tau2, seed=seed).dataset


class TestSelectInducing:
    def test_all_points(self):
        data = make_data(12)
        ind = select_inducing(data, 12, seed=0)
        assert sorted(ind.indices) == list(range(12))

    def test_deterministic(self):
        data = make_data(40)
        a = select_inducing(data, 10, seed=7)
        b = select_inducing(data, 10, seed=7)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_out_of_range(self):
        data = make_data(5)
        with pytest.raises(ValueError):
            select_inducing(data, 6, seed=0)
        with pytest.raises(ValueError):
            select_inducing(data, 0, seed=0)

    def test_uniform_frequency(self):
        data = make_data(100)
        counts = np.zeros(100)
        trials = 10_000
        for t in range(trials):
            counts[select_inducing(data, 10, seed=t).indices] += 1
        freq = counts / trials
        assert np.all(np.abs(freq - 0.1) < 0.01)


class TestFITCRegression:
    def test_exact_when_inducing_is_training_set(self):
        data = make_data(80)
        exact = fit_regressor(data, SPEC, 0.05)
        fitc = fit_fitc(data, SPEC, 0.05, InducingSet(X=data.X, T=data.T))
        rng = np.random.default_rng(1)
        Xs, Ts = rng.standard_normal((30, 2)), rng.uniform(0, 1, (30, 1))
        me, ve = exact.predict_batch(Xs, Ts)
        mf, vf = fitc.predict_batch(Xs, Ts)
        np.testing.assert_allclose(mf, me, atol=1e-6)
        np.testing.assert_allclose(vf, ve, atol=1e-6)

    def test_rank_one_smoke(self):
        data = make_data(25)
        fitc = fit_fitc(data, SPEC, 0.05, select_inducing(data, 1, seed=0))
        pd = fitc.predict(np.zeros(2), np.array([[0.5]]))
        assert np.isfinite(pd.mean)
        assert pd.total_var > 0

    def test_inducing_permutation_invariance(self):
        data = make_data(60)
        ind = select_inducing(data, 15, seed=3)
        perm = np.random.default_rng(4).permutation(15)
        ind_perm = InducingSet(X=ind.X[perm], T=ind.T[perm])
        rng = np.random.default_rng(5)
        Xs, Ts = rng.standard_normal((10, 2)), rng.uniform(0, 1, (10, 1))
        m1, v1 = fit_fitc(data, SPEC, 0.05, ind).predict_batch(Xs, Ts)
        m2, v2 = fit_fitc(data, SPEC, 0.05, ind_perm).predict_batch(Xs, Ts)
        np.testing.assert_allclose(m1, m2, atol=1e-8)
        np.testing.assert_allclose(v1, v2, atol=1e-8)

    def test_close_to_exact_at_moderate_rank(self):
        spec = KernelSpec(instance_kernel=Linear(), task_kernel=Matern(nu=1.5, lengthscale=0.3))
        res = synth_vcm(900, m=3, d=1, task_kernel=spec.task_kernel, tau2=0.05, seed=2)
        data = res.dataset.subset(np.arange(800))
        test = res.dataset.subset(np.arange(800, 900))
        exact = fit_regressor(data, spec, 0.05)
        fitc = fit_fitc(data, spec, 0.05, select_inducing(data, 80, seed=6))
        me, _ = exact.predict_batch(test.X, test.T)
        mf, _ = fitc.predict_batch(test.X, test.T)
        assert np.mean(np.abs(me - mf)) < 0.05 * np.std(data.y)

    def test_runtime_scales_subquadratically_in_n(self):
        # doubling n at fixed p must less than triple the fit time
        p = 64

        def fit_time(n):
            data = make_data(n, seed=8)
            ind = select_inducing(data, p, seed=9)
            best = np.inf
            for _ in range(3):
                t0 = time.perf_counter()
                fit_fitc(data, SPEC, 0.05, ind)
                best = min(best, time.perf_counter() - t0)
            return best

        t_small, t_big = fit_time(1500), fit_time(3000)
        assert t_big < 3.0 * t_small

    def test_invalid_tau2(self):
        data = make_data(10)
        with pytest.raises(ValueError):
            fit_fitc(data, SPEC, 0.0, select_inducing(data, 5, seed=0))


class TestFITCClassification:
    def test_matches_exact_classifier_when_inducing_is_training_set(self):
        base = make_data(60, seed=11)
        data = Dataset(X=base.X, T=base.T, y=threshold_labels(base.y))
        exact = fit_classifier(data, SPEC, 0.1)
        fitc = fit_fitc_classifier(data, SPEC, 0.1, InducingSet(X=data.X, T=data.T))
        rng = np.random.default_rng(12)
        Xs, Ts = rng.standard_normal((20, 2)), rng.uniform(0, 1, (20, 1))
        np.testing.assert_allclose(
            fitc.predict_proba_batch(Xs, Ts), exact.predict_proba_batch(Xs, Ts), atol=1e-6
        )

    def test_probabilities_in_unit_interval(self):
        base = make_data(120, seed=13)
        data = Dataset(X=base.X, T=base.T, y=threshold_labels(base.y))
        fitc = fit_fitc_classifier(data, SPEC, 0.1, select_inducing(data, 20, seed=14))
        p = fitc.predict_proba_batch(data.X, data.T)
        assert np.all((p > 0) & (p < 1))

    def test_rejects_non_binary_labels(self):
        data = make_data(10, seed=15)
        with pytest.raises(ValueError):
            fit_fitc_classifier(data, SPEC, 0.1, select_inducing(data, 5, seed=0))
