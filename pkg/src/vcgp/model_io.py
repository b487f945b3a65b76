"""Versioned on-disk format for fitted models.

Layout of a model file:

  line 1   ASCII magic: ``VCGP-MODEL 1 <kind>`` with kind in
           {regressor, classifier}
  line 2   JSON header: kernel spec, tau2, jitter, array shapes and task
           variant, in a fixed key order
  rest     the arrays named in the header, concatenated as row-major
           little-endian float64 (int64 for discrete task ids)

The header's ``arrays`` list fixes both the order and the shapes, so the
payload is self-describing and byte-deterministic.
"""

from __future__ import annotations

import json

import numpy as np

from .gp_classify import FittedClassifier, LaplaceState
from .gp_core import Dataset, FittedRegressor
from .kernels import spec_from_dict, spec_to_dict

__all__ = ["save_model", "load_model"]

_MAGIC = "VCGP-MODEL 1"


def _model_arrays(model) -> dict[str, np.ndarray]:
    common = {"X": model.data.X, "T": model.data.T, "y": model.data.y}
    if isinstance(model, FittedRegressor):
        return {**common, "chol": model.chol, "alpha": model.alpha}
    if isinstance(model, FittedClassifier):
        s = model.state
        return {
            **common,
            "mode": s.mode,
            "dual": s.dual,
            "pi": s.pi,
            "W": s.W,
            "B_chol": s.B_chol,
        }
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def save_model(model, path) -> None:
    """Write a fitted regressor or classifier to ``path``."""
    if isinstance(model, FittedRegressor):
        kind = "regressor"
        extra = {}
    elif isinstance(model, FittedClassifier):
        kind = "classifier"
        extra = {"log_lik": model.state.log_lik, "iterations": model.state.iterations}
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    arrays = _model_arrays(model)
    header = {
        "spec": spec_to_dict(model.spec),
        "tau2": model.tau2,
        "jitter": model.jitter,
        "discrete_tasks": model.data.has_discrete_tasks,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays.items()],
        **extra,
    }
    with open(path, "wb") as fh:
        fh.write(f"{_MAGIC} {kind}\n".encode())
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for name, arr in arrays.items():
            dtype = "<i8" if name == "T" and arr.dtype.kind == "i" else "<f8"
            fh.write(np.ascontiguousarray(arr).astype(dtype).tobytes())


def load_model(path):
    """Read a model written by :func:`save_model`."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode().strip()
        if not magic.startswith(_MAGIC):
            raise ValueError(f"not a model file (bad magic line {magic!r})")
        kind = magic[len(_MAGIC) :].strip()
        header = json.loads(fh.readline().decode())
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            if name == "T" and header["discrete_tasks"]:
                dtype = np.dtype("<i8")
            else:
                dtype = np.dtype("<f8")
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ValueError(f"model file truncated while reading array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()

    spec = spec_from_dict(header["spec"])
    data = Dataset(X=arrays["X"], T=arrays["T"], y=arrays["y"])
    if kind == "regressor":
        return FittedRegressor(
            spec=spec,
            tau2=header["tau2"],
            data=data,
            chol=arrays["chol"],
            alpha=arrays["alpha"],
            jitter=header["jitter"],
        )
    if kind == "classifier":
        state = LaplaceState(
            mode=arrays["mode"],
            dual=arrays["dual"],
            pi=arrays["pi"],
            W=arrays["W"],
            B_chol=arrays["B_chol"],
            log_lik=header["log_lik"],
            iterations=header["iterations"],
        )
        return FittedClassifier(
            spec=spec, tau2=header["tau2"], data=data, state=state, jitter=header["jitter"]
        )
    raise ValueError(f"unknown model kind {kind!r}")
