"""Synthetic matrices for noise-only checks of the MP machinery."""

import re

import numpy as np

from .sparse import InteractionMatrix


def gaussian(n: int, m: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, m)) * scale


def bernoulli(n: int, m: int, p: float, seed: int = 0) -> InteractionMatrix:
    rng = np.random.default_rng(seed)
    r, c = np.nonzero(rng.random((n, m)) < p)
    return InteractionMatrix.from_coo(r, c, (n, m))


_SPEC = re.compile(r"^(gaussian|bernoulli):(\d+)x(\d+)(?::([0-9.eE+-]+))?$")


def from_spec(spec: str, seed: int = 0):
    """Parse ``gaussian:NxM`` or ``bernoulli:NxM:P``."""
    mt = _SPEC.match(spec.strip())
    if not mt:
        raise ValueError(f"bad synthetic spec {spec!r}; expected gaussian:NxM or bernoulli:NxM:P")
    kind, n, m, p = mt.group(1), int(mt.group(2)), int(mt.group(3)), mt.group(4)
    if kind == "gaussian":
        if p is not None:
            raise ValueError("gaussian takes no density parameter")
        return gaussian(n, m, seed)
    if p is None:
        raise ValueError("bernoulli needs a density, e.g. bernoulli:1000x500:0.05")
    return bernoulli(n, m, float(p), seed)
