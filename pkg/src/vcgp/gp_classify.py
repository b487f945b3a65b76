"""Binary GP classification with a logistic likelihood and Laplace inference.

The latent model puts the observation noise inside the latent covariance:
latent values z have prior ``N(0, K + tau2*I)`` and labels follow
``y_i ~ Bernoulli(sigmoid(z_i))``.  The posterior mode is found by damped
Newton iteration; predictions integrate the logistic likelihood against the
Gaussian Laplace approximation with Gauss-Hermite quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._linalg import NumericalError, chol_with_jitter, solve_lower, solve_upper
from .gp_core import VARIANCE_CLAMP, Dataset, SearchConfig, _as_task_row, grid_candidates
from .kernels import KernelSpec, as_task_array

__all__ = [
    "FittedClassifier",
    "fit_classifier",
    "predict_proba",
    "predict_proba_batch",
    "laplace_log_marginal",
    "tune_classifier_hyperparameters",
]

NEWTON_MAX_ITER = 100
NEWTON_GRAD_TOL = 1e-8
NEWTON_MAX_HALVINGS = 20
GH_NODES = 32

_gh_x, _gh_w = np.polynomial.hermite.hermgauss(GH_NODES)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _log_likelihood(y: np.ndarray, z: np.ndarray) -> float:
    # sum_i [y_i z_i - log(1 + e^{z_i})], computed stably
    return float(y @ z - np.sum(np.logaddexp(0.0, z)))


def logistic_gaussian_integral(mu, var):
    """E[sigmoid(z)] for z ~ N(mu, var), via 32-node Gauss-Hermite quadrature."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    sd = np.sqrt(np.maximum(var, 0.0))
    z = mu[..., None] + math.sqrt(2.0) * sd[..., None] * _gh_x
    vals = sigmoid(z) @ _gh_w / math.sqrt(math.pi)
    return vals if vals.ndim else float(vals)


@dataclass(frozen=True)
class LaplaceState:
    """Converged Newton state for a latent Gaussian with dense covariance A."""

    mode: np.ndarray        # posterior mode of z
    dual: np.ndarray        # A^{-1} mode, maintained exactly by the iteration
    pi: np.ndarray          # sigmoid(mode)
    W: np.ndarray           # diagonal of the negative log-likelihood Hessian
    B_chol: np.ndarray      # lower Cholesky of I + sqrt(W) A sqrt(W)
    log_lik: float          # log p(y | mode)
    iterations: int


def laplace_mode(A: np.ndarray, y: np.ndarray, context: str = "covariance") -> LaplaceState:
    """Find the mode of ``log p(y|z) - 0.5 z^T A^{-1} z`` by damped Newton.

    Works in the dual parameterization ``z = A a`` so the quadratic term is
    available without solves.  Each step is halved (up to 20 times) until the
    objective does not decrease; the objective is therefore non-decreasing
    across iterations.  Convergence is declared when the gradient
    infinity-norm falls below 1e-8.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    a = np.zeros(n)
    z = np.zeros(n)
    psi = _log_likelihood(y, z)
    for iteration in range(1, NEWTON_MAX_ITER + 1):
        pi = sigmoid(z)
        grad = (y - pi) - a
        if np.max(np.abs(grad)) < NEWTON_GRAD_TOL:
            W = pi * (1.0 - pi)
            sw = np.sqrt(W)
            B = np.eye(n) + sw[:, None] * A * sw[None, :]
            L, _ = chol_with_jitter(B, context=f"Laplace system for {context}")
            return LaplaceState(
                mode=z, dual=a, pi=pi, W=W, B_chol=L,
                log_lik=_log_likelihood(y, z), iterations=iteration - 1,
            )
        W = pi * (1.0 - pi)
        sw = np.sqrt(W)
        B = np.eye(n) + sw[:, None] * A * sw[None, :]
        L, _ = chol_with_jitter(B, context=f"Laplace system for {context}")
        b = W * z + (y - pi)
        # Newton target in the dual: a_new = b - sqrt(W) B^{-1} sqrt(W) A b
        v = solve_lower(L, sw * (A @ b))
        a_new = b - sw * solve_upper(L.T, v)
        direction = a_new - a
        step = 1.0
        roundoff = 1e-12 * (1.0 + abs(psi))
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            a_try = a + step * direction
            z_try = A @ a_try
            psi_try = _log_likelihood(y, z_try) - 0.5 * a_try @ z_try
            if psi_try >= psi - roundoff:
                break
            step *= 0.5
        else:
            raise NumericalError(
                f"Newton step failed to improve the latent posterior after "
                f"{NEWTON_MAX_HALVINGS} halvings (gradient norm "
                f"{np.max(np.abs(grad)):.3e})"
            )
        a = a_try
        z = z_try
        psi = psi_try
    raise NumericalError(
        f"Laplace Newton iteration did not converge in {NEWTON_MAX_ITER} steps; "
        f"final gradient infinity-norm {np.max(np.abs((y - sigmoid(z)) - a)):.3e}"
    )


@dataclass(frozen=True)
class FittedClassifier:
    """Immutable Laplace-approximate posterior of a GP classifier."""

    spec: KernelSpec
    tau2: float
    data: Dataset
    state: LaplaceState
    jitter: float = 0.0

    @property
    def mode(self) -> np.ndarray:
        return self.state.mode

    @property
    def W(self) -> np.ndarray:
        return self.state.W

    def predict_proba(self, x_star, t_star) -> float:
        p = self.predict_proba_batch(
            np.atleast_2d(np.asarray(x_star, dtype=float)),
            _as_task_row(t_star, self.data.T),
        )
        return float(p[0])

    def predict_proba_batch(self, X_star, T_star) -> np.ndarray:
        """Probability of class 1 at each test point."""
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        if X_star.shape[1] != self.data.m:
            raise ValueError(
                f"test instances have {X_star.shape[1]} features, training has {self.data.m}"
            )
        T_star = as_task_array(T_star, discrete=self.data.has_discrete_tasks)
        Ks = kernels.product_kernel_matrix(self.data.X, self.data.T, X_star, T_star, self.spec)
        mu = Ks.T @ self.state.dual
        prior = kernels.product_kernel_diag(X_star, T_star, self.spec) + self.tau2
        V = solve_lower(self.state.B_chol, np.sqrt(self.state.W)[:, None] * Ks)
        var = prior - np.einsum("ij,ij->j", V, V)
        if np.any(var < -VARIANCE_CLAMP):
            raise NumericalError("negative latent predictive variance beyond clamp tolerance")
        return logistic_gaussian_integral(mu, np.maximum(var, 0.0))

    def log_marginal_likelihood(self) -> float:
        """Laplace approximation of log p(y | X, T, hyperparameters)."""
        s = self.state
        return float(
            s.log_lik - 0.5 * s.mode @ s.dual - np.sum(np.log(np.diag(s.B_chol)))
        )


def fit_classifier(data: Dataset, spec: KernelSpec, tau2: float) -> FittedClassifier:
    """Fit the Laplace-approximate GP classifier.

    Labels must be 0/1.  Raises :class:`NumericalError` if the Newton
    iteration does not converge within 100 steps.
    """
    if not tau2 > 0:
        raise ValueError("tau2 must be positive")
    y = data.y
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("classification labels must be 0 or 1")
    K = kernels.product_kernel_matrix(data.X, data.T, data.X, data.T, spec)
    A = K + tau2 * np.eye(data.n)
    # factorization check (and jitter) up front so failures name the spec
    _, jitter = chol_with_jitter(A, context=f"kernel spec {spec}")
    state = laplace_mode(A + jitter * np.eye(data.n), y, context=f"kernel spec {spec}")
    return FittedClassifier(spec=spec, tau2=float(tau2), data=data, state=state, jitter=jitter)


def predict_proba(model: FittedClassifier, x_star, t_star) -> float:
    """Functional form of :meth:`FittedClassifier.predict_proba`."""
    return model.predict_proba(x_star, t_star)


def predict_proba_batch(model: FittedClassifier, X_star, T_star) -> np.ndarray:
    """Functional form of :meth:`FittedClassifier.predict_proba_batch`."""
    return model.predict_proba_batch(X_star, T_star)


def laplace_log_marginal(model: FittedClassifier) -> float:
    """Functional form of :meth:`FittedClassifier.log_marginal_likelihood`."""
    return model.log_marginal_likelihood()


def tune_classifier_hyperparameters(
    data: Dataset, spec_template: KernelSpec, search: SearchConfig
) -> tuple[KernelSpec, float]:
    """Grid search maximizing the Laplace-approximate marginal likelihood.

    The Laplace evidence has no cheap analytic gradient through the mode, so
    classification tuning always uses the grid method.
    """
    if search.grid is None:
        raise ValueError("classifier tuning requires a grid search configuration")
    best = None
    for cand_spec, cand_tau2 in grid_candidates(spec_template, search.tau2_init, search.grid):
        try:
            lml = fit_classifier(data, cand_spec, cand_tau2).log_marginal_likelihood()
        except NumericalError:
            continue
        if best is None or lml > best[0]:
            best = (lml, cand_spec, cand_tau2)
    if best is None:
        raise NumericalError("every grid candidate failed during classifier tuning")
    return best[1], best[2]
