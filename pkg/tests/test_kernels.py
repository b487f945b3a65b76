import math

import numpy as np
import pytest

from vcgp.kernels import (
    Constant,
    FixedGram,
    KernelSpec,
    Laplacian,
    Linear,
    Matern,
    TaskPoint,
    TaskTree,
    Tree,
    instance_gram,
    laplacian_task_kernel,
    matern,
    matern_gram_grads,
    product_kernel_matrix,
    spec_from_dict,
    spec_to_dict,
    task_gram,
    tree_laplacian,
    tree_task_kernel,
)
from vcgp.multitask_hb import random_tree, sample_hb_batch


class TestMatern:
    def test_zero_distance_equals_amplitude_squared(self):
        assert matern(0.0, nu=1.5, lengthscale=1.0, amplitude=1.0) == 1.0
        assert matern(0.0, nu=2.5, lengthscale=0.3, amplitude=2.0) == pytest.approx(4.0)

    def test_closed_form_nu_half(self):
        # m_{1/2}(u) = exp(-u); at r=1, l=1, s=1 the value is e^{-1}
        assert matern(1.0, nu=0.5) == pytest.approx(math.exp(-1.0), abs=1e-15)
        assert matern(1.0, nu=0.5) == pytest.approx(0.36787944117144233, abs=1e-12)

    def test_closed_form_nu_three_halves(self):
        # m_{3/2}(u) = (1 + sqrt(3) u) exp(-sqrt(3) u); at r=2, l=1, s=1
        expected = (1.0 + 2.0 * math.sqrt(3.0)) * math.exp(-2.0 * math.sqrt(3.0))
        assert matern(2.0, nu=1.5) == pytest.approx(expected, abs=1e-15)
        assert matern(2.0, nu=1.5) == pytest.approx(0.13973135019231467, abs=1e-12)

    def test_closed_form_nu_five_halves(self):
        u = 1.7
        expected = (1 + math.sqrt(5) * u + 5 * u**2 / 3) * math.exp(-math.sqrt(5) * u)
        assert matern(u, nu=2.5) == pytest.approx(expected, abs=1e-15)

    def test_range(self):
        r = np.linspace(0, 50, 200)
        for nu in (0.5, 1.5, 2.5):
            v = matern(r, nu=nu, lengthscale=0.7, amplitude=1.3)
            assert np.all(v > 0)
            assert np.all(v <= 1.3**2 + 1e-15)

    def test_strictly_decreasing(self):
        r = np.linspace(0.0, 20.0, 500)
        for nu in (0.5, 1.5, 2.5):
            v = matern(r, nu=nu, lengthscale=1.3, amplitude=0.8)
            assert np.all(np.diff(v) < 0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            matern(-0.1)
        with pytest.raises(ValueError):
            matern(np.inf)
        with pytest.raises(ValueError):
            matern(np.nan)
        with pytest.raises(ValueError):
            matern(1.0, nu=1.0)
        with pytest.raises(ValueError):
            matern(1.0, lengthscale=0.0)
        with pytest.raises(ValueError):
            matern(1.0, amplitude=-1.0)


class TestProductKernel:
    def test_linear_times_scalar_task(self):
        # x_i = (1,2), x_j = (3,4): inner product 11, task kernel 0.5 -> 5.5
        G = np.array([[1.0, 0.5], [0.5, 1.0]])
        spec = KernelSpec(instance_kernel=Linear(), task_kernel=FixedGram(G))
        K = product_kernel_matrix([[1.0, 2.0]], [1], [[3.0, 4.0]], [2], spec)
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(5.5)

    def test_zero_task_kernel_annihilates(self):
        G = np.array([[1.0, 0.0], [0.0, 1.0]])
        spec = KernelSpec(instance_kernel=Linear(), task_kernel=FixedGram(G))
        K = product_kernel_matrix([[5.0, -3.0]], [1], [[100.0, 7.0]], [2], spec)
        assert K[0, 0] == 0.0

    def test_psd_by_eigendecomposition(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 3))
        T = rng.uniform(0, 1, size=(6, 2))
        spec = KernelSpec(
            instance_kernel=Matern(nu=1.5, lengthscale=1.2),
            task_kernel=Matern(nu=2.5, lengthscale=0.4),
        )
        K = product_kernel_matrix(X, T, X, T, spec)
        assert np.min(np.linalg.eigvalsh(K)) >= -1e-10

    def test_symmetry_exact(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((15, 2))
        T = rng.uniform(0, 1, size=(15, 1))
        for spec in [
            KernelSpec(instance_kernel=Linear(), task_kernel=Matern(lengthscale=0.5)),
            KernelSpec(instance_kernel=Matern(), task_kernel=Constant(1.0)),
        ]:
            K = product_kernel_matrix(X, T, X, T, spec)
            assert np.array_equal(K, K.T)

    def test_hadamard_product_structure(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((10, 3))
        T = rng.uniform(0, 1, size=(10, 2))
        spec = KernelSpec(
            instance_kernel=Matern(nu=0.5, lengthscale=2.0, amplitude=1.5),
            task_kernel=Matern(nu=1.5, lengthscale=0.3, amplitude=0.7),
        )
        K = product_kernel_matrix(X, T, X, T, spec)
        KX = instance_gram(spec.instance_kernel, X, X)
        KT = task_gram(spec.task_kernel, T, T)
        np.testing.assert_allclose(K, KX * KT, atol=1e-12)

    def test_psd_random_battery(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(2, 51))
            X = rng.standard_normal((n, 2))
            T = rng.uniform(0, 1, size=(n, 1))
            spec = KernelSpec(
                instance_kernel=Matern(nu=2.5, lengthscale=float(rng.uniform(0.5, 3))),
                task_kernel=Matern(nu=0.5, lengthscale=float(rng.uniform(0.1, 2))),
            )
            K = product_kernel_matrix(X, T, X, T, spec)
            assert np.min(np.linalg.eigvalsh(K + 1e-10 * np.eye(n))) >= 0

    def test_dimension_mismatch(self):
        spec = KernelSpec(instance_kernel=Linear(), task_kernel=Constant())
        with pytest.raises(ValueError):
            product_kernel_matrix([[1.0, 2.0]], [[0.0]], [[1.0]], [[0.0]], spec)


class TestTaskTree:
    def test_single_node(self):
        tree = TaskTree(parent={}, sigma=(2.0,))
        np.testing.assert_allclose(tree_task_kernel(tree), [[4.0]])

    def test_chain_two_nodes(self):
        # generative covariance: Var(w1)=1, Var(w2)=2, Cov=1
        tree = TaskTree(parent={2: 1}, sigma=(1.0, 1.0))
        np.testing.assert_allclose(tree_task_kernel(tree), [[1.0, 1.0], [1.0, 2.0]])

    def test_star_tree(self):
        tree = TaskTree(parent={2: 1, 3: 1}, sigma=(1.0, 0.5, 2.0))
        G = tree_task_kernel(tree)
        # siblings share only the root's variance
        assert G[1, 2] == pytest.approx(1.0)
        assert G[1, 1] == pytest.approx(1.25)
        assert G[2, 2] == pytest.approx(5.0)

    def test_matches_sampler_covariance(self):
        rng = np.random.default_rng(7)
        tree = random_tree(8, rng, sigma_low=0.5, sigma_high=1.5)
        G = tree_task_kernel(tree)
        n = 200_000
        W = sample_hb_batch(tree, 1, n, seed=11)[:, :, 0]
        emp = W.T @ W / n
        se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G**2) / n)
        assert np.max(np.abs(emp - G) / se) < 4.0

    def test_positive_definite(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            tree = random_tree(int(rng.integers(1, 30)), rng)
            np.linalg.cholesky(tree_task_kernel(tree))

    def test_cycle_rejected(self):
        with pytest.raises(ValueError, match="cycle"):
            TaskTree(parent={2: 3, 3: 2}, sigma=(1.0, 1.0, 1.0))

    def test_validation(self):
        with pytest.raises(ValueError):
            TaskTree(parent={2: 1}, sigma=(1.0, -1.0))
        with pytest.raises(ValueError):
            TaskTree(parent={3: 1}, sigma=(1.0, 1.0))
        with pytest.raises(ValueError):
            TaskTree(parent={2: 5}, sigma=(1.0, 1.0))


class TestLaplacianKernel:
    def test_chain_closed_form(self):
        tree = TaskTree(parent={2: 1}, sigma=(1.0, 1.0))
        np.testing.assert_allclose(tree_laplacian(tree), [[2.0, -1.0], [-1.0, 1.0]])
        np.testing.assert_allclose(
            laplacian_task_kernel(tree), [[1.0, 1.0], [1.0, 2.0]], atol=1e-12
        )

    def test_single_node(self):
        tree = TaskTree(parent={}, sigma=(0.5,))
        np.testing.assert_allclose(tree_laplacian(tree), [[4.0]])
        np.testing.assert_allclose(laplacian_task_kernel(tree), [[0.25]], atol=1e-14)

    def test_agrees_with_tree_kernel(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            k = int(rng.integers(1, 51))
            tree = random_tree(k, rng, sigma_low=0.1, sigma_high=10.0)
            G = tree_task_kernel(tree)
            Linv = laplacian_task_kernel(tree)
            assert np.max(np.abs(Linv - G)) / np.max(np.abs(G)) < 1e-8

    def test_from_tree_parts(self):
        tree = TaskTree(parent={2: 1, 3: 2}, sigma=(1.0, 2.0, 0.5))
        lap = Laplacian.from_tree(tree)
        # edge child->parent weighted by the child's precision
        assert lap.M[1, 0] == pytest.approx(0.25)
        assert lap.M[2, 1] == pytest.approx(4.0)
        assert lap.M[0, 1] == lap.M[1, 0]
        assert lap.R[0, 0] == pytest.approx(1.0)
        assert np.all(lap.R[1:, 1:] == 0)


class TestTaskPoint:
    def test_exactly_one_variant(self):
        with pytest.raises(ValueError):
            TaskPoint()
        with pytest.raises(ValueError):
            TaskPoint(coords=(1.0,), task_id=1)

    def test_coords_finite(self):
        with pytest.raises(ValueError):
            TaskPoint(coords=(np.inf,))

    def test_id_positive(self):
        with pytest.raises(ValueError):
            TaskPoint(task_id=0)
        assert TaskPoint(task_id=3).is_discrete

    def test_gram_from_task_points(self):
        pts = [TaskPoint(coords=(0.0,)), TaskPoint(coords=(1.0,))]
        K = task_gram(Matern(nu=0.5, lengthscale=1.0), pts, pts)
        assert K[0, 1] == pytest.approx(math.exp(-1.0))


class TestSpecSerialization:
    @pytest.mark.parametrize(
        "spec",
        [
            KernelSpec(instance_kernel=Linear(), task_kernel=Constant(1.0)),
            KernelSpec(
                instance_kernel=Matern(nu=2.5, lengthscale=(1.0, 2.0), amplitude=0.5),
                task_kernel=Matern(nu=0.5, lengthscale=0.3),
            ),
            KernelSpec(
                instance_kernel=Linear(),
                task_kernel=Tree(tree=TaskTree(parent={2: 1, 3: 1}, sigma=(1.0, 0.4, 2.0))),
            ),
            KernelSpec(
                instance_kernel=Linear(),
                task_kernel=Laplacian.from_tree(TaskTree(parent={2: 1}, sigma=(1.0, 1.0))),
            ),
            KernelSpec(
                instance_kernel=Linear(),
                task_kernel=FixedGram(np.array([[2.0, 0.5], [0.5, 1.0]])),
            ),
        ],
    )
    def test_round_trip(self, spec):
        back = spec_from_dict(spec_to_dict(spec))
        T = [1, 2] if not isinstance(spec.task_kernel, (Constant, Matern)) else np.zeros((2, 1))
        K1 = task_gram(spec.task_kernel, T, T)
        K2 = task_gram(back.task_kernel, T, T)
        np.testing.assert_allclose(K1, K2, atol=1e-14)
        assert type(back.instance_kernel) is type(spec.instance_kernel)

    def test_invalid_kernel_kinds(self):
        with pytest.raises(ValueError):
            KernelSpec(instance_kernel=Constant(), task_kernel=Constant())
        with pytest.raises(ValueError):
            KernelSpec(instance_kernel=Linear(), task_kernel=Linear())


class TestMaternGradients:
    def test_gram_grads_match_finite_differences(self):
        rng = np.random.default_rng(4)
        Z = rng.standard_normal((6, 2))
        h = 1e-6
        for ls in (0.8, (0.8, 1.7)):
            kernel = Matern(nu=1.5, lengthscale=ls, amplitude=1.2)
            K, grads = matern_gram_grads(kernel, Z)
            for name, dK in grads.items():
                if name == "amplitude":
                    hi = Matern(nu=1.5, lengthscale=ls, amplitude=1.2 * math.exp(h))
                    lo = Matern(nu=1.5, lengthscale=ls, amplitude=1.2 * math.exp(-h))
                elif name == "lengthscale":
                    hi = Matern(nu=1.5, lengthscale=0.8 * math.exp(h), amplitude=1.2)
                    lo = Matern(nu=1.5, lengthscale=0.8 * math.exp(-h), amplitude=1.2)
                else:
                    d = int(name[len("lengthscale[") : -1])
                    ls_hi = list(ls)
                    ls_lo = list(ls)
                    ls_hi[d] *= math.exp(h)
                    ls_lo[d] *= math.exp(-h)
                    hi = Matern(nu=1.5, lengthscale=tuple(ls_hi), amplitude=1.2)
                    lo = Matern(nu=1.5, lengthscale=tuple(ls_lo), amplitude=1.2)
                K_hi, _ = matern_gram_grads(hi, Z)
                K_lo, _ = matern_gram_grads(lo, Z)
                fd = (K_hi - K_lo) / (2 * h)
                np.testing.assert_allclose(dK, fd, atol=1e-7)
