"""Kernels for varying-coefficient Gaussian process models.

An observation carries an instance vector ``x`` and a task descriptor ``t``
(either a point in R^d or a discrete task id).  The model covariance is the
product of an instance kernel and a scalar task kernel,

    k((x, t), (x', t')) = k_X(x, x') * k_T(t, t'),

which is the covariance that an isotropic multivariate GP prior over the
coefficient function induces on the observed outputs.  This module provides
the instance kernels (linear, Matern), the task kernels (constant, Matern,
tree-structured, graph-Laplacian, explicit Gram), Gram-matrix assembly, and
the closed-form task covariances for tree-structured task hierarchies.

All kernel evaluations are pure functions and all types are immutable after
construction, so they can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "TaskPoint",
    "TaskTree",
    "Linear",
    "Matern",
    "Constant",
    "Tree",
    "Laplacian",
    "FixedGram",
    "KernelSpec",
    "matern",
    "instance_gram",
    "task_gram",
    "product_kernel_matrix",
    "product_kernel_diag",
    "tree_task_kernel",
    "tree_laplacian",
    "laplacian_task_kernel",
    "spec_to_dict",
    "spec_from_dict",
]

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)

_MATERN_NUS = (0.5, 1.5, 2.5)


# ---------------------------------------------------------------------------
# task descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskPoint:
    """A single task descriptor: continuous coordinates or a discrete id.

    Exactly one of ``coords`` and ``task_id`` must be given.  Discrete ids
    are 1-based, matching the node numbering of :class:`TaskTree`.
    """

    coords: tuple[float, ...] | None = None
    task_id: int | None = None

    def __post_init__(self):
        if (self.coords is None) == (self.task_id is None):
            raise ValueError("TaskPoint takes exactly one of coords or task_id")
        if self.coords is not None:
            c = tuple(float(v) for v in np.atleast_1d(self.coords))
            if not all(math.isfinite(v) for v in c):
                raise ValueError("TaskPoint coords must be finite")
            object.__setattr__(self, "coords", c)
        else:
            t = int(self.task_id)
            if t < 1:
                raise ValueError("task_id must be >= 1")
            object.__setattr__(self, "task_id", t)

    @property
    def is_discrete(self) -> bool:
        return self.task_id is not None


def as_task_array(t, *, discrete: bool | None = None) -> np.ndarray:
    """Normalize task descriptors to the internal array form.

    Continuous tasks become a float array of shape ``(n, d)``; discrete tasks
    an int array of shape ``(n,)`` with 1-based ids.  Accepts arrays, single
    :class:`TaskPoint` objects, or sequences of them.
    """
    if isinstance(t, TaskPoint):
        t = [t]
    if isinstance(t, (list, tuple)) and t and isinstance(t[0], TaskPoint):
        if any(p.is_discrete != t[0].is_discrete for p in t):
            raise ValueError("task points must all be of the same variant")
        if t[0].is_discrete:
            return np.array([p.task_id for p in t], dtype=int)
        return np.array([p.coords for p in t], dtype=float)
    arr = np.asarray(t)
    if discrete is None:
        discrete = arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer)
    if discrete:
        arr = np.asarray(arr, dtype=int).reshape(-1)
        if arr.size and arr.min() < 1:
            raise ValueError("discrete task ids must be >= 1")
        return arr
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("task coordinates must be finite")
    return arr


@dataclass(frozen=True)
class TaskTree:
    """A directed tree over tasks 1..k with per-node standard deviations.

    ``parent`` maps each non-root node l in {2..k} to its parent; node 1 is
    always the root.  ``sigma[l-1]`` is the standard deviation of node l's
    conditional (the root's marginal for l=1).
    """

    parent: Mapping[int, int]
    sigma: tuple[float, ...]

    def __post_init__(self):
        sigma = tuple(float(s) for s in np.atleast_1d(np.asarray(self.sigma, dtype=float)))
        object.__setattr__(self, "sigma", sigma)
        k = len(sigma)
        if k < 1:
            raise ValueError("tree needs at least one node")
        if any(not (s > 0.0) or not math.isfinite(s) for s in sigma):
            raise ValueError("all sigma values must be positive and finite")
        parent = {int(c): int(p) for c, p in dict(self.parent).items()}
        object.__setattr__(self, "parent", parent)
        if set(parent) != set(range(2, k + 1)):
            raise ValueError(f"parent map must cover exactly nodes 2..{k}")
        if any(not 1 <= p <= k for p in parent.values()):
            raise ValueError("parent ids must lie in 1..k")
        # every node must reach the root without revisiting a node
        for node in range(2, k + 1):
            seen = {node}
            cur = node
            while cur != 1:
                cur = parent[cur]
                if cur in seen:
                    raise ValueError(f"parent map contains a cycle through node {node}")
                seen.add(cur)

    @property
    def k(self) -> int:
        return len(self.sigma)

    def root_path(self, node: int) -> list[int]:
        """Nodes from the root down to ``node``, inclusive."""
        path = []
        cur = int(node)
        while cur != 1:
            path.append(cur)
            cur = self.parent[cur]
        path.append(1)
        path.reverse()
        return path

    def topological_order(self) -> list[int]:
        """Node order in which every parent precedes its children."""
        return sorted(range(1, self.k + 1), key=lambda n: len(self.root_path(n)))


# ---------------------------------------------------------------------------
# kernel families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Linear:
    """Linear instance kernel ``k(x, x') = x^T x'``."""


@dataclass(frozen=True)
class Matern:
    """Matern kernel with smoothness nu in {1/2, 3/2, 5/2}.

    ``lengthscale`` may be a positive scalar or a per-dimension vector
    (automatic relevance determination); ``amplitude`` is the output scale s,
    so the kernel value at zero distance is ``s**2``.
    """

    nu: float = 1.5
    lengthscale: Union[float, tuple[float, ...]] = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if float(self.nu) not in _MATERN_NUS:
            raise ValueError(f"nu must be one of {_MATERN_NUS}")
        object.__setattr__(self, "nu", float(self.nu))
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscale must be positive and finite")
        if ls.size == 1:
            object.__setattr__(self, "lengthscale", float(ls[0]))
        else:
            object.__setattr__(self, "lengthscale", tuple(float(v) for v in ls))
        if not (float(self.amplitude) > 0.0):
            raise ValueError("amplitude must be positive")
        object.__setattr__(self, "amplitude", float(self.amplitude))

    @property
    def ard(self) -> bool:
        return isinstance(self.lengthscale, tuple)


@dataclass(frozen=True)
class Constant:
    """Constant task kernel ``k(t, t') = value`` (default 1)."""

    value: float = 1.0

    def __post_init__(self):
        if not (float(self.value) > 0.0):
            raise ValueError("constant kernel value must be positive")
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Tree:
    """Task kernel over discrete tasks given by a tree-structured hierarchy.

    The Gram matrix is the covariance of the hierarchical generative process
    in which each node's coefficient vector is Gaussian around its parent's:
    entry (t, t') accumulates the variances along the shared ancestry of t
    and t' (see :func:`tree_task_kernel`).
    """

    tree: TaskTree


@dataclass(frozen=True)
class Laplacian:
    """Task kernel given by the pseudoinverse of a regularized graph Laplacian.

    ``M`` is a symmetric weighted adjacency matrix over tasks and ``R`` a
    diagonal regularizer; the Gram matrix is ``pinv(D + R - M)`` with ``D``
    the weighted degree matrix.  :meth:`from_tree` builds the (M, R) pair
    whose kernel equals the tree-structured task covariance.
    """

    M: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("M must be square")
        if not np.allclose(M, M.T):
            raise ValueError("M must be symmetric")
        if R.shape != M.shape or not np.allclose(R, np.diag(np.diag(R))):
            raise ValueError("R must be diagonal and match M's shape")
        M = M.copy()
        R = R.copy()
        M.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "R", R)

    @classmethod
    def from_tree(cls, tree: TaskTree) -> "Laplacian":
        k = tree.k
        # adjacency with rows indexed by child: A[l-1, pa(l)-1] = 1
        A = np.zeros((k, k))
        for child, pa in tree.parent.items():
            A[child - 1, pa - 1] = 1.0
        B = np.diag([0.0] + [1.0 / s**2 for s in tree.sigma[1:]])
        BA = B @ A
        M = BA + BA.T
        R = np.zeros((k, k))
        R[0, 0] = 1.0 / tree.sigma[0] ** 2
        return cls(M=M, R=R)


@dataclass(frozen=True)
class FixedGram:
    """Task kernel over discrete tasks given by an explicit PSD Gram matrix."""

    gram: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.gram, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("gram must be square")
        if not np.allclose(G, G.T):
            raise ValueError("gram must be symmetric")
        G = G.copy()
        G.setflags(write=False)
        object.__setattr__(self, "gram", G)


InstanceKernel = Union[Linear, Matern]
TaskKernel = Union[Constant, Matern, Tree, Laplacian, FixedGram]

_INSTANCE_KINDS = (Linear, Matern)
_TASK_KINDS = (Constant, Matern, Tree, Laplacian, FixedGram)


@dataclass(frozen=True)
class KernelSpec:
    """Product kernel: an instance kernel paired with a task kernel."""

    instance_kernel: InstanceKernel
    task_kernel: TaskKernel = field(default_factory=Constant)

    def __post_init__(self):
        if not isinstance(self.instance_kernel, _INSTANCE_KINDS):
            raise ValueError("instance kernel must be Linear or Matern")
        if not isinstance(self.task_kernel, _TASK_KINDS):
            raise ValueError(
                "task kernel must be Constant, Matern, Tree, Laplacian or FixedGram"
            )

    def __str__(self):
        return f"{type(self.instance_kernel).__name__} x {type(self.task_kernel).__name__}"


# ---------------------------------------------------------------------------
# scalar Matern evaluation
# ---------------------------------------------------------------------------


def _matern_shape(u: np.ndarray, nu: float) -> np.ndarray:
    """The unit-amplitude Matern profile m_nu(u) at scaled distance u."""
    if nu == 0.5:
        return np.exp(-u)
    if nu == 1.5:
        su = _SQRT3 * u
        return (1.0 + su) * np.exp(-su)
    if nu == 2.5:
        su = _SQRT5 * u
        return (1.0 + su + su * su / 3.0) * np.exp(-su)
    raise ValueError(f"nu must be one of {_MATERN_NUS}")


def _matern_neg_u_dshape(u: np.ndarray, nu: float) -> np.ndarray:
    """Returns -u * m_nu'(u), the building block of lengthscale derivatives."""
    if nu == 0.5:
        return u * np.exp(-u)
    if nu == 1.5:
        return 3.0 * u * u * np.exp(-_SQRT3 * u)
    if nu == 2.5:
        return (5.0 / 3.0) * u * u * (1.0 + _SQRT5 * u) * np.exp(-_SQRT5 * u)
    raise ValueError(f"nu must be one of {_MATERN_NUS}")


def matern(r, nu: float = 1.5, lengthscale: float = 1.0, amplitude: float = 1.0):
    """Matern covariance as a function of distance.

    Parameters
    ----------
    r : float or ndarray
        Non-negative distances.
    nu : float
        Smoothness, one of 1/2, 3/2, 5/2.
    lengthscale, amplitude : float
        Positive scale parameters; the value at ``r=0`` is ``amplitude**2``.
    """
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("distances must be finite")
    if np.any(r < 0):
        raise ValueError("distances must be non-negative")
    if not lengthscale > 0 or not amplitude > 0:
        raise ValueError("lengthscale and amplitude must be positive")
    out = amplitude**2 * _matern_shape(r / lengthscale, float(nu))
    return out if out.ndim else float(out)


def _scaled_dist(Z1: np.ndarray, Z2: np.ndarray, kernel: Matern) -> np.ndarray:
    ls = np.atleast_1d(np.asarray(kernel.lengthscale, dtype=float))
    if ls.size not in (1, Z1.shape[1]):
        raise ValueError(
            f"lengthscale has {ls.size} entries but points have {Z1.shape[1]} dimensions"
        )
    return cdist(Z1 / ls, Z2 / ls)


def _matern_gram(kernel: Matern, Z1: np.ndarray, Z2: np.ndarray) -> np.ndarray:
    u = _scaled_dist(Z1, Z2, kernel)
    return kernel.amplitude**2 * _matern_shape(u, kernel.nu)


def matern_gram_grads(kernel: Matern, Z: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Gram matrix of a Matern kernel plus derivatives w.r.t. log-parameters.

    Returns the symmetric Gram over ``Z`` and a dict of matrices
    ``d K / d log(theta)`` keyed by ``"lengthscale"`` (or
    ``"lengthscale[i]"`` per dimension in the ARD case) and ``"amplitude"``.
    """
    Z = np.asarray(Z, dtype=float)
    u = _scaled_dist(Z, Z, kernel)
    s2 = kernel.amplitude**2
    K = s2 * _matern_shape(u, kernel.nu)
    g = s2 * _matern_neg_u_dshape(u, kernel.nu)
    grads: dict[str, np.ndarray] = {}
    if kernel.ard:
        ls = np.asarray(kernel.lengthscale, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_u2 = np.where(u > 0, 1.0 / np.maximum(u, 1e-300) ** 2, 0.0)
        for d in range(ls.size):
            diff2 = (Z[:, None, d] - Z[None, :, d]) ** 2 / ls[d] ** 2
            grads[f"lengthscale[{d}]"] = g * diff2 * inv_u2
    else:
        grads["lengthscale"] = g
    grads["amplitude"] = 2.0 * K
    return K, grads


# ---------------------------------------------------------------------------
# Gram assembly
# ---------------------------------------------------------------------------


def instance_gram(kernel: InstanceKernel, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Instance-kernel Gram matrix between the rows of X1 and X2."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != X2.shape[1]:
        raise ValueError(f"feature dimensions differ: {X1.shape[1]} vs {X2.shape[1]}")
    if isinstance(kernel, Linear):
        return X1 @ X2.T
    if isinstance(kernel, Matern):
        return _matern_gram(kernel, X1, X2)
    raise TypeError(f"not an instance kernel: {kernel!r}")


def _discrete_lookup(G: np.ndarray, T1: np.ndarray, T2: np.ndarray) -> np.ndarray:
    k = G.shape[0]
    for T in (T1, T2):
        if T.size and (T.min() < 1 or T.max() > k):
            raise ValueError(f"task ids must lie in 1..{k}")
    return G[np.ix_(T1 - 1, T2 - 1)]


def task_gram(kernel: TaskKernel, T1, T2) -> np.ndarray:
    """Task-kernel Gram matrix between two sets of task descriptors."""
    if isinstance(kernel, Constant):
        n1 = as_task_array(T1).shape[0]
        n2 = as_task_array(T2).shape[0]
        return np.full((n1, n2), kernel.value)
    if isinstance(kernel, Matern):
        T1 = as_task_array(T1, discrete=False)
        T2 = as_task_array(T2, discrete=False)
        if T1.shape[1] != T2.shape[1]:
            raise ValueError("task coordinate dimensions differ")
        return _matern_gram(kernel, T1, T2)
    if isinstance(kernel, Tree):
        G = tree_task_kernel(kernel.tree)
    elif isinstance(kernel, Laplacian):
        G = laplacian_task_kernel_from_parts(kernel.M, kernel.R)
    elif isinstance(kernel, FixedGram):
        G = kernel.gram
    else:
        raise TypeError(f"not a task kernel: {kernel!r}")
    T1 = as_task_array(T1, discrete=True)
    T2 = as_task_array(T2, discrete=True)
    return _discrete_lookup(G, T1, T2)


def product_kernel_matrix(X1, T1, X2, T2, spec: KernelSpec) -> np.ndarray:
    """Entrywise product of the instance Gram and the task Gram.

    Entry (i, j) is ``k_X(x1_i, x2_j) * k_T(t1_i, t2_j)``.  When the two
    point sets coincide the result is symmetric PSD.
    """
    KX = instance_gram(spec.instance_kernel, X1, X2)
    KT = task_gram(spec.task_kernel, T1, T2)
    if KX.shape != KT.shape:
        raise ValueError(
            f"instance rows and task rows disagree: {KX.shape} vs {KT.shape}"
        )
    return KX * KT


def product_kernel_diag(X, T, spec: KernelSpec) -> np.ndarray:
    """Diagonal of the product-kernel Gram of a point set with itself."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(spec.instance_kernel, Linear):
        dx = np.einsum("ij,ij->i", X, X)
    else:
        dx = np.full(X.shape[0], spec.instance_kernel.amplitude**2)
    tk = spec.task_kernel
    if isinstance(tk, Constant):
        dt = np.full(X.shape[0], tk.value)
    elif isinstance(tk, Matern):
        dt = np.full(X.shape[0], tk.amplitude**2)
    else:
        if isinstance(tk, Tree):
            G = tree_task_kernel(tk.tree)
        elif isinstance(tk, Laplacian):
            G = laplacian_task_kernel_from_parts(tk.M, tk.R)
        else:
            G = tk.gram
        ids = as_task_array(T, discrete=True)
        dt = np.diag(G)[ids - 1]
    return dx * dt


# ---------------------------------------------------------------------------
# tree-structured task covariances
# ---------------------------------------------------------------------------


def tree_task_kernel(tree: TaskTree) -> np.ndarray:
    """Task covariance of the hierarchical tree process, in closed form.

    Node l's coefficient vector equals its parent's plus isotropic noise of
    variance sigma_l^2, with the root drawn around zero.  The covariance of
    any single coordinate between nodes t and t' is therefore the sum of
    sigma_l^2 over the nodes l shared by both root paths.  Computed by that
    recursion directly -- no matrix inversion -- which is exact and O(k^2 *
    depth).  The result is symmetric positive definite.
    """
    k = tree.k
    var = np.asarray(tree.sigma, dtype=float) ** 2
    paths = [tree.root_path(node) for node in range(1, k + 1)]
    # cumulative variance along each root path, for prefix sums
    cum = [np.cumsum([var[n - 1] for n in p]) for p in paths]
    G = np.empty((k, k))
    for i in range(k):
        pi = paths[i]
        for j in range(i, k):
            pj = paths[j]
            depth = 0
            for a, b in zip(pi, pj):
                if a != b:
                    break
                depth += 1
            G[i, j] = G[j, i] = cum[i][depth - 1] if depth else 0.0
    return G


def tree_laplacian(tree: TaskTree) -> np.ndarray:
    """Regularized graph Laplacian ``L = D + R - M`` of a task tree.

    Edges run from each child to its parent with weight equal to the child's
    precision; the root's precision enters through the regularizer ``R``.
    ``L`` is the exact inverse of :func:`tree_task_kernel`'s Gram matrix.
    """
    lap = Laplacian.from_tree(tree)
    D = np.diag(lap.M.sum(axis=1))
    return D + lap.R - lap.M


def laplacian_task_kernel_from_parts(M: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Pseudoinverse of ``D + R - M`` via symmetric eigendecomposition.

    Eigenvalues below ``1e-12 * max(eigenvalue)`` are treated as zero.  For a
    tree-derived (M, R) the Laplacian is invertible, so the pseudoinverse is
    the plain inverse.
    """
    M = np.asarray(M, dtype=float)
    R = np.asarray(R, dtype=float)
    D = np.diag(M.sum(axis=1))
    L = D + R - M
    evals, evecs = np.linalg.eigh(L)
    cutoff = 1e-12 * max(evals.max(), 0.0)
    inv = np.where(evals > cutoff, 1.0 / np.where(evals > cutoff, evals, 1.0), 0.0)
    return (evecs * inv) @ evecs.T


def laplacian_task_kernel(tree: TaskTree) -> np.ndarray:
    """Task covariance obtained from the graph-Laplacian construction.

    Equals :func:`tree_task_kernel` for every valid tree; kept as an
    independent route for verification.
    """
    lap = Laplacian.from_tree(tree)
    return laplacian_task_kernel_from_parts(lap.M, lap.R)


# ---------------------------------------------------------------------------
# (de)serialization of kernel specs, used by the experiment config format
# ---------------------------------------------------------------------------


def _kernel_to_dict(kernel) -> dict:
    if isinstance(kernel, Linear):
        return {"type": "linear"}
    if isinstance(kernel, Matern):
        ls = kernel.lengthscale
        return {
            "type": "matern",
            "nu": kernel.nu,
            "lengthscale": list(ls) if isinstance(ls, tuple) else ls,
            "amplitude": kernel.amplitude,
        }
    if isinstance(kernel, Constant):
        return {"type": "constant", "value": kernel.value}
    if isinstance(kernel, Tree):
        return {
            "type": "tree",
            "parent": {str(c): p for c, p in sorted(kernel.tree.parent.items())},
            "sigma": list(kernel.tree.sigma),
        }
    if isinstance(kernel, Laplacian):
        return {"type": "laplacian", "M": kernel.M.tolist(), "R": kernel.R.tolist()}
    if isinstance(kernel, FixedGram):
        return {"type": "fixed_gram", "gram": kernel.gram.tolist()}
    raise TypeError(f"cannot serialize kernel {kernel!r}")


def _kernel_from_dict(d: Mapping) -> InstanceKernel | TaskKernel:
    kind = d["type"]
    if kind == "linear":
        return Linear()
    if kind == "matern":
        ls = d.get("lengthscale", 1.0)
        if isinstance(ls, (list, tuple)):
            ls = tuple(float(v) for v in ls)
        return Matern(
            nu=float(d.get("nu", 1.5)),
            lengthscale=ls,
            amplitude=float(d.get("amplitude", 1.0)),
        )
    if kind == "constant":
        return Constant(value=float(d.get("value", 1.0)))
    if kind == "tree":
        tree = TaskTree(
            parent={int(c): int(p) for c, p in d["parent"].items()},
            sigma=tuple(float(s) for s in d["sigma"]),
        )
        return Tree(tree=tree)
    if kind == "laplacian":
        if "parent" in d:
            tree = TaskTree(
                parent={int(c): int(p) for c, p in d["parent"].items()},
                sigma=tuple(float(s) for s in d["sigma"]),
            )
            return Laplacian.from_tree(tree)
        return Laplacian(M=np.asarray(d["M"], dtype=float), R=np.asarray(d["R"], dtype=float))
    if kind == "fixed_gram":
        return FixedGram(gram=np.asarray(d["gram"], dtype=float))
    raise ValueError(f"unknown kernel type {kind!r}")


def spec_to_dict(spec: KernelSpec) -> dict:
    """JSON-friendly representation of a :class:`KernelSpec`."""
    return {
        "instance_kernel": _kernel_to_dict(spec.instance_kernel),
        "task_kernel": _kernel_to_dict(spec.task_kernel),
    }


def spec_from_dict(d: Mapping) -> KernelSpec:
    """Inverse of :func:`spec_to_dict`."""
    return KernelSpec(
        instance_kernel=_kernel_from_dict(d["instance_kernel"]),
        task_kernel=_kernel_from_dict(d["task_kernel"]),
    )
