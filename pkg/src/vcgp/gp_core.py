"""Exact Bayesian regression for varying-coefficient GP models.

Fitting assembles the product-kernel Gram matrix K over the training data,
factorizes ``K + tau2*I`` once, and caches the factor together with
``alpha = (K + tau2*I)^{-1} y``.  Each prediction then costs one kernel
vector and one triangular solve.  The log marginal likelihood and its
analytic gradients with respect to log-hyperparameters drive tuning.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.optimize

from . import kernels
from ._linalg import NumericalError, chol_with_jitter, solve_chol, solve_lower
from .kernels import KernelSpec, Matern, TaskPoint, as_task_array, matern_gram_grads

__all__ = [
    "Dataset",
    "PredictiveDistribution",
    "FittedRegressor",
    "SearchConfig",
    "fit_regressor",
    "predict",
    "predict_batch",
    "log_marginal_likelihood",
    "lml_and_gradient",
    "tune_hyperparameters",
]

# predictive variances within this of zero are treated as rounding noise
VARIANCE_CLAMP = 1e-8

_LOG_BOUNDS = {
    "lengthscale": (math.log(1e-6), math.log(1e6)),
    "amplitude": (math.log(1e-6), math.log(1e6)),
    "tau2": (math.log(1e-8), math.log(1e6)),
}


@dataclass(frozen=True)
class Dataset:
    """Training data: instances X (n, m), task descriptors T, labels y (n,).

    ``T`` is a float array of shape (n, d) for continuous tasks or an int
    array of shape (n,) holding 1-based ids for discrete tasks; all rows must
    use the same variant.
    """

    X: np.ndarray
    T: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        T = as_task_array(self.T)
        if X.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        if not (X.shape[0] == y.shape[0] == T.shape[0]):
            raise ValueError(
                f"row counts disagree: X {X.shape[0]}, T {T.shape[0]}, y {y.shape[0]}"
            )
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("X and y must be finite")
        # private copies so freezing cannot affect caller-owned arrays
        for name, arr in (("X", X), ("T", T), ("y", y)):
            if arr.flags.writeable:
                arr = arr.copy()
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def has_discrete_tasks(self) -> bool:
        return self.T.ndim == 1

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(X=self.X[idx], T=self.T[idx], y=self.y[idx])


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian predictive at one test point: mean, latent and noise variance."""

    mean: float
    latent_var: float
    noise_var: float

    def __post_init__(self):
        object.__setattr__(self, "latent_var", _clamp_variance(self.latent_var))

    @property
    def total_var(self) -> float:
        return self.latent_var + self.noise_var


def _clamp_variance(v: float) -> float:
    """Clamp small negative variances to zero; larger ones signal a bug."""
    if v < -VARIANCE_CLAMP:
        raise NumericalError(f"predictive variance {v!r} is more negative than -{VARIANCE_CLAMP}")
    return max(float(v), 0.0)


def _as_task_row(t_star, like: np.ndarray) -> np.ndarray:
    """Normalize one task descriptor for a single test point.

    Returns a length-1 array matching the training variant: shape (1,) for
    discrete ids, shape (1, d) for continuous coordinates.
    """
    if isinstance(t_star, TaskPoint):
        arr = as_task_array([t_star])
        if (arr.ndim == 1) != (like.ndim == 1):
            raise ValueError("test task variant differs from training tasks")
    elif like.ndim == 1:
        arr = np.asarray(t_star)
        if arr.size != 1 or not np.issubdtype(arr.dtype, np.number):
            raise ValueError("discrete tasks need a single integer id per test point")
        arr = as_task_array(arr.reshape(1).astype(int), discrete=True)
    else:
        arr = np.atleast_2d(np.asarray(t_star, dtype=float))
        if arr.shape[0] != 1:
            raise ValueError("expected one task descriptor, got several")
    if arr.ndim == 2 and arr.shape[1] != like.shape[1]:
        raise ValueError("test task dimension differs from training tasks")
    return arr


@dataclass(frozen=True)
class FittedRegressor:
    """Immutable posterior state of an exact product-kernel GP regressor."""

    spec: KernelSpec
    tau2: float
    data: Dataset
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    def predict(self, x_star, t_star) -> PredictiveDistribution:
        """Predictive distribution at a single test point."""
        mean, var = self.predict_batch(
            np.atleast_2d(np.asarray(x_star, dtype=float)),
            _as_task_row(t_star, self.data.T),
        )
        return PredictiveDistribution(float(mean[0]), float(var[0]), self.tau2)

    def predict_batch(self, X_star, T_star) -> tuple[np.ndarray, np.ndarray]:
        """Predictive means and latent variances at many test points."""
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        if X_star.shape[1] != self.data.m:
            raise ValueError(
                f"test instances have {X_star.shape[1]} features, training has {self.data.m}"
            )
        T_star = as_task_array(T_star, discrete=self.data.has_discrete_tasks)
        Ks = kernels.product_kernel_matrix(self.data.X, self.data.T, X_star, T_star, self.spec)
        mean = Ks.T @ self.alpha
        V = solve_lower(self.chol, Ks)
        prior = kernels.product_kernel_diag(X_star, T_star, self.spec)
        var = prior - np.einsum("ij,ij->j", V, V)
        if np.any(var < -VARIANCE_CLAMP):
            raise NumericalError("negative predictive variance beyond clamp tolerance")
        return mean, np.maximum(var, 0.0)

    def log_marginal_likelihood(self) -> float:
        n = self.data.n
        return float(
            -0.5 * self.data.y @ self.alpha
            - np.sum(np.log(np.diag(self.chol)))
            - 0.5 * n * math.log(2.0 * math.pi)
        )


def fit_regressor(data: Dataset, spec: KernelSpec, tau2: float) -> FittedRegressor:
    """Fit the exact GP regressor by factorizing ``K + tau2 * I``.

    Raises :class:`NumericalError` (naming the kernel spec) if the Gram
    matrix is not positive definite even after the jitter escalation.
    """
    if not tau2 > 0:
        raise ValueError("tau2 must be positive")
    K = kernels.product_kernel_matrix(data.X, data.T, data.X, data.T, spec)
    A = K + tau2 * np.eye(data.n)
    L, jitter = chol_with_jitter(A, context=f"kernel spec {spec}")
    alpha = solve_chol(L, data.y)
    return FittedRegressor(spec=spec, tau2=float(tau2), data=data, chol=L, alpha=alpha, jitter=jitter)


def predict(model: FittedRegressor, x_star, t_star) -> PredictiveDistribution:
    """Functional form of :meth:`FittedRegressor.predict`."""
    return model.predict(x_star, t_star)


def predict_batch(model: FittedRegressor, X_star, T_star) -> tuple[np.ndarray, np.ndarray]:
    """Functional form of :meth:`FittedRegressor.predict_batch`."""
    return model.predict_batch(X_star, T_star)


def log_marginal_likelihood(model: FittedRegressor) -> float:
    """Log marginal likelihood of the training labels under the fitted model."""
    return model.log_marginal_likelihood()


# ---------------------------------------------------------------------------
# hyperparameters: named access, analytic gradients, search
# ---------------------------------------------------------------------------


def _matern_param_names(kernel: Matern, prefix: str) -> list[str]:
    if kernel.ard:
        names = [f"{prefix}.lengthscale[{d}]" for d in range(len(kernel.lengthscale))]
    else:
        names = [f"{prefix}.lengthscale"]
    return names + [f"{prefix}.amplitude"]


def free_param_names(spec: KernelSpec, tune_tau2: bool = True) -> list[str]:
    """Names of the continuously tunable parameters of a kernel spec.

    Only Matern kernels carry free parameters; tree, Laplacian, constant and
    fixed-Gram task kernels are fixed by their structure.
    """
    names: list[str] = []
    if isinstance(spec.instance_kernel, Matern):
        names += _matern_param_names(spec.instance_kernel, "instance")
    if isinstance(spec.task_kernel, Matern):
        names += _matern_param_names(spec.task_kernel, "task")
    if tune_tau2:
        names.append("tau2")
    return names


def _get_param(spec: KernelSpec, tau2: float, name: str) -> float:
    if name == "tau2":
        return float(tau2)
    side, _, attr = name.partition(".")
    kernel = spec.instance_kernel if side == "instance" else spec.task_kernel
    if attr.startswith("lengthscale["):
        d = int(attr[len("lengthscale[") : -1])
        return float(np.atleast_1d(kernel.lengthscale)[d])
    return float(getattr(kernel, attr))


def _set_params(spec: KernelSpec, tau2: float, values: Mapping[str, float]) -> tuple[KernelSpec, float]:
    inst, task = spec.instance_kernel, spec.task_kernel
    for side in ("instance", "task"):
        kernel = inst if side == "instance" else task
        if not isinstance(kernel, Matern):
            continue
        ls = np.atleast_1d(np.asarray(kernel.lengthscale, dtype=float)).copy()
        amp = kernel.amplitude
        changed = False
        for name, v in values.items():
            if not name.startswith(side + "."):
                continue
            attr = name[len(side) + 1 :]
            if attr == "lengthscale":
                ls[:] = v
            elif attr.startswith("lengthscale["):
                ls[int(attr[len("lengthscale[") : -1])] = v
            elif attr == "amplitude":
                amp = float(v)
            else:
                raise KeyError(f"unknown parameter {name!r}")
            changed = True
        if changed:
            new_ls = float(ls[0]) if ls.size == 1 else tuple(float(v) for v in ls)
            kernel = replace(kernel, lengthscale=new_ls, amplitude=amp)
            if side == "instance":
                inst = kernel
            else:
                task = kernel
    new_tau2 = float(values.get("tau2", tau2))
    return KernelSpec(instance_kernel=inst, task_kernel=task), new_tau2


def lml_and_gradient(
    data: Dataset, spec: KernelSpec, tau2: float
) -> tuple[float, dict[str, float]]:
    """Log marginal likelihood and its gradient w.r.t. log-hyperparameters.

    The gradient follows the standard identity
    ``d lml / d theta = 0.5 * tr((alpha alpha^T - A^{-1}) dK/dtheta)`` with
    ``A = K + tau2*I``, combined with the product rule for the instance/task
    Gram factors.  Keys match :func:`free_param_names`.
    """
    X, T, y = data.X, data.T, data.y
    n = data.n
    inst, task = spec.instance_kernel, spec.task_kernel

    if isinstance(inst, Matern):
        KX, dKX = matern_gram_grads(inst, X)
    else:
        KX, dKX = kernels.instance_gram(inst, X, X), {}
    if isinstance(task, Matern):
        KT, dKT = matern_gram_grads(task, as_task_array(T, discrete=False))
    else:
        KT, dKT = kernels.task_gram(task, T, T), {}

    A = KX * KT + tau2 * np.eye(n)
    L, _ = chol_with_jitter(A, context=f"kernel spec {spec}")
    alpha = solve_chol(L, y)
    lml = float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi))

    Ainv = solve_chol(L, np.eye(n))
    M = np.outer(alpha, alpha) - Ainv
    grad: dict[str, float] = {}
    for name, dK in dKX.items():
        grad[f"instance.{name}"] = 0.5 * float(np.sum(M * (dK * KT)))
    for name, dK in (dKT or {}).items():
        grad[f"task.{name}"] = 0.5 * float(np.sum(M * (KX * dK)))
    grad["tau2"] = 0.5 * float(np.trace(M)) * tau2
    return lml, grad


@dataclass(frozen=True)
class SearchConfig:
    """How to search hyperparameters when tuning by marginal likelihood.

    ``method="gradient"`` runs multi-start quasi-Newton ascent on the
    log-parameters with analytic gradients (``n_restarts`` seeded random
    restarts around the template, stopping when the gradient infinity-norm
    drops below ``grad_tol`` or after ``max_iter`` iterations).
    ``method="grid"`` evaluates the Cartesian product of the per-parameter
    value lists in ``grid`` (parameters absent from the grid keep their
    template values); this is the fallback for task kernels whose parameters
    are fixed by structure.
    """

    method: str = "gradient"
    n_restarts: int = 5
    max_iter: int = 200
    grad_tol: float = 1e-5
    restart_scale: float = 1.0
    seed: int = 0
    tau2_init: float = 0.1
    tune_tau2: bool = True
    grid: Mapping[str, Sequence[float]] | None = None

    def __post_init__(self):
        if self.method not in ("gradient", "grid"):
            raise ValueError("search method must be 'gradient' or 'grid'")
        if self.method == "grid" and not self.grid:
            raise ValueError("grid search needs a non-empty grid")
        if not self.tau2_init > 0:
            raise ValueError("tau2_init must be positive")


def _bounds_for(name: str) -> tuple[float, float]:
    key = "tau2" if name == "tau2" else name.split(".", 1)[1].split("[", 1)[0]
    return _LOG_BOUNDS[key]


def tune_hyperparameters(
    data: Dataset, spec_template: KernelSpec, search: SearchConfig
) -> tuple[KernelSpec, float]:
    """Pick the hyperparameters maximizing the log marginal likelihood.

    Deterministic given ``search.seed``.  Raises :class:`NumericalError`
    when every candidate fails to factorize.
    """
    if data.n < 2:
        raise ValueError("tuning needs at least two training points")
    if search.method == "grid":
        return _tune_grid(data, spec_template, search.tau2_init, search)
    return _tune_gradient(data, spec_template, search.tau2_init, search)


def grid_candidates(spec: KernelSpec, tau2_0: float, grid: Mapping) -> list[tuple[KernelSpec, float]]:
    """Cartesian grid of (spec, tau2) candidates, in deterministic order.

    Grid entries naming parameters the given kernel spec does not have
    (e.g. a task lengthscale when the task kernel is constant) are ignored,
    and the resulting duplicate candidates are dropped.
    """
    relevant = set(free_param_names(spec, tune_tau2=True))
    names = sorted(grid)
    out = []
    seen = set()
    for combo in itertools.product(*(grid[name] for name in names)):
        values = {n: float(v) for n, v in zip(names, combo) if n in relevant}
        key = tuple(sorted(values.items()))
        if key in seen:
            continue
        seen.add(key)
        out.append(_set_params(spec, tau2_0, values))
    return out


def _tune_grid(data, spec, tau2_0, search) -> tuple[KernelSpec, float]:
    best = None
    for cand_spec, cand_tau2 in grid_candidates(spec, tau2_0, search.grid):
        try:
            lml = fit_regressor(data, cand_spec, cand_tau2).log_marginal_likelihood()
        except NumericalError:
            continue
        if best is None or lml > best[0]:
            best = (lml, cand_spec, cand_tau2)
    if best is None:
        raise NumericalError("every grid candidate failed to factorize")
    return best[1], best[2]


def _tune_gradient(data, spec, tau2_0, search) -> tuple[KernelSpec, float]:
    names = free_param_names(spec, tune_tau2=search.tune_tau2)
    if not names:
        # nothing to tune; keep the template
        fit_regressor(data, spec, tau2_0)
        return spec, tau2_0
    theta0 = np.array([math.log(_get_param(spec, tau2_0, n)) for n in names])
    bounds = [_bounds_for(n) for n in names]
    fail_penalty = 1e25

    def objective(theta):
        values = dict(zip(names, np.exp(theta)))
        cand_spec, cand_tau2 = _set_params(spec, tau2_0, values)
        try:
            lml, grad = lml_and_gradient(data, cand_spec, cand_tau2)
        except NumericalError:
            return fail_penalty, np.zeros_like(theta)
        g = np.array([grad.get(n, 0.0) for n in names])
        return -lml, -g

    rng = np.random.default_rng(search.seed)
    starts = [theta0] + [
        theta0 + search.restart_scale * rng.standard_normal(theta0.shape)
        for _ in range(max(search.n_restarts - 1, 0))
    ]
    best = None
    for start in starts:
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        res = scipy.optimize.minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": search.max_iter, "gtol": search.grad_tol},
        )
        if res.fun < fail_penalty and (best is None or res.fun < best[0]):
            best = (res.fun, res.x)
    if best is None:
        raise NumericalError("hyperparameter search failed for every restart")
    values = dict(zip(names, np.exp(best[1])))
    return _set_params(spec, tau2_0, values)
