"""Marchenko-Pastur bulk: density, edges, scale fitting and noise-rank counts.

For ``C = X^T X / n`` with ``X`` of shape ``n x m`` and i.i.d. entries of
variance ``sigma2``, the eigenvalue density of ``C`` tends to

    rho(lam) = sqrt((lam_plus - lam)(lam - lam_minus)) / (2 pi q sigma2 lam)

on ``[sigma2 (1 - sqrt q)^2, sigma2 (1 + sqrt q)^2]`` with ``q = m / n <= 1``.
Wide matrices (``m > n``) are transposed first so that ``q`` stays in (0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy import integrate, optimize

from .errors import FitError, InvalidParameterError
from .sparse import InteractionMatrix
from .spectra import SolverOptions, truncated_svd

FULL_DENSE_CAP = 5000


def bulk_edges(q: float, sigma2: float = 1.0) -> tuple[float, float]:
    if not (0 < q <= 1):
        raise InvalidParameterError(f"q={q} outside (0, 1]; transpose the matrix first")
    if not sigma2 > 0:
        raise InvalidParameterError("sigma2 must be positive")
    r = np.sqrt(q)
    return sigma2 * (1 - r) ** 2, sigma2 * (1 + r) ** 2


@dataclass(frozen=True)
class MPModel:
    q: float
    sigma2: float = 1.0
    lambda_minus: float = field(init=False)
    lambda_plus: float = field(init=False)

    def __post_init__(self):
        lo, hi = bulk_edges(self.q, self.sigma2)
        object.__setattr__(self, "lambda_minus", lo)
        object.__setattr__(self, "lambda_plus", hi)

    def density(self, lam):
        return mp_density(lam, self)

    def as_dict(self):
        return {"q": self.q, "sigma2": self.sigma2,
                "lambda_minus": self.lambda_minus, "lambda_plus": self.lambda_plus}


@dataclass(frozen=True)
class SpectrumSample:
    """Eigenvalues of ``C = X^T X / n_samples`` (descending, clamped at 0).

    ``implicit_zeros`` counts the zero eigenvalues of the larger Gram matrix
    that were never computed because the smaller side was used.
    """

    eigenvalues: np.ndarray
    n_samples: int
    n_variables: int
    complete: bool = True
    implicit_zeros: int = 0
    transposed: bool = False

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        if np.any(ev < -1e-10 * max(1.0, np.abs(ev).max(initial=0.0))):
            raise InvalidParameterError("spectrum has significantly negative eigenvalues")
        ev = np.sort(np.clip(ev, 0.0, None))[::-1]
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def q(self) -> float:
        return self.n_variables / self.n_samples


def mp_density(lam, model: MPModel):
    """Density at ``lam`` (scalar or array); zero outside the open support."""
    lam_arr = np.asarray(lam, dtype=np.float64)
    if np.any(np.isnan(lam_arr)):
        raise InvalidParameterError("NaN eigenvalue")
    lo, hi = model.lambda_minus, model.lambda_plus
    inside = (lam_arr > lo) & (lam_arr < hi)
    out = np.zeros_like(lam_arr)
    x = lam_arr[inside]
    out[inside] = np.sqrt((hi - x) * (x - lo)) / (2 * np.pi * model.q * model.sigma2 * x)
    return float(out) if out.ndim == 0 else out


def _cdf_integrand(t, q):
    # lam = lo + (hi - lo)(1 - cos t)/2 removes both edge singularities
    lo, hi = bulk_edges(q, 1.0)
    half = (hi - lo) / 2
    lam = lo + half * (1 - np.cos(t))
    return (half * np.sin(t)) ** 2 / (2 * np.pi * q * lam)


def mp_cdf(x: float, model: MPModel) -> float:
    lo, hi = model.lambda_minus, model.lambda_plus
    if x <= lo:
        return 0.0
    if x >= hi:
        return 1.0
    z = x / model.sigma2
    ulo, uhi = bulk_edges(model.q, 1.0)
    t = np.arccos(1 - 2 * (z - ulo) / (uhi - ulo))
    val, _ = integrate.quad(_cdf_integrand, 0.0, t, args=(model.q,), epsabs=1e-13, epsrel=1e-12)
    return float(min(max(val, 0.0), 1.0))


@lru_cache(maxsize=256)
def _unit_quantile(q: float, p: float) -> float:
    m = MPModel(q, 1.0)
    return optimize.brentq(lambda x: mp_cdf(x, m) - p, m.lambda_minus, m.lambda_plus, xtol=1e-14)


def mp_quantile(p: float, model: MPModel) -> float:
    return model.sigma2 * _unit_quantile(float(model.q), float(p))


def _orient(shape):
    n, m = shape
    return (n, m, False) if m <= n else (m, n, True)


def covariance_spectrum(X, mode="full_dense", k: int | None = None,
                        opts: SolverOptions | None = None, cap: int = FULL_DENSE_CAP) -> SpectrumSample:
    """Eigenvalues of ``X^T X / n`` (after transposing wide matrices).

    ``mode='full_dense'`` computes every eigenvalue from the singular values of
    the dense matrix; ``mode='top_k'`` runs the Lanczos solver for the ``k``
    largest only and marks the sample incomplete.
    """
    n_s, n_v, transposed = _orient(X.shape)
    zeros = 0
    if mode == "full_dense":
        if n_v > cap:
            raise InvalidParameterError(
                f"smaller dimension {n_v} exceeds the dense cap {cap}; use mode='top_k'")
        A = X.to_dense() if isinstance(X, InteractionMatrix) else np.asarray(X, dtype=np.float64)
        s = scipy.linalg.svdvals(A)
        ev = s ** 2 / n_s
        complete = True
        zeros = n_s - n_v
    elif mode == "top_k":
        if k is None or k < 1:
            raise InvalidParameterError("top_k mode needs k >= 1")
        f = truncated_svd(X, k, opts)
        ev = f.sigma ** 2 / n_s
        complete = False
    else:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    return SpectrumSample(ev, n_s, n_v, complete=complete, implicit_zeros=zeros,
                          transposed=transposed)


def fit_sigma2(s: SpectrumSample, max_iter: int = 50, rtol: float = 1e-10) -> MPModel:
    """Scale the MP law so its median matches the median of the empirical bulk.

    The bulk is re-selected as the eigenvalues at or below the current upper
    edge on every pass, so signal eigenvalues stop influencing the fit; the
    loop stops at a fixed point.
    """
    if not s.complete:
        raise FitError("fitting needs the complete spectrum")
    ev = s.eigenvalues
    if ev.size < 2 or np.ptp(ev) <= 1e-12 * ev.max(initial=0.0):
        raise FitError("degenerate spectrum: all eigenvalues equal")
    q = s.q
    med_unit = _unit_quantile(float(q), 0.5)
    sigma2 = float(np.median(ev)) / med_unit
    for _ in range(max_iter):
        if not sigma2 > 0:
            raise FitError("fitted scale collapsed to zero")
        bulk = ev[ev <= bulk_edges(q, sigma2)[1]]
        if bulk.size == 0:
            raise FitError("no eigenvalues inside the bulk")
        new = float(np.median(bulk)) / med_unit
        if abs(new - sigma2) <= rtol * sigma2:
            sigma2 = new
            break
        sigma2 = new
    else:
        raise FitError(f"sigma2 fit did not settle in {max_iter} iterations")
    return MPModel(q, sigma2)


def noise_rank(s: SpectrumSample, model: MPModel, edge_buffer: float = 0.0) -> int:
    """Number of eigenvalues strictly above ``lambda_plus * (1 + edge_buffer)``."""
    if edge_buffer < 0:
        raise InvalidParameterError("edge_buffer must be >= 0")
    return int(np.count_nonzero(s.eigenvalues > model.lambda_plus * (1 + edge_buffer)))


def mass_outside_bulk(s: SpectrumSample, model: MPModel) -> float:
    ev = s.eigenvalues
    out = (ev < model.lambda_minus) | (ev > model.lambda_plus)
    return float(out.mean())


@dataclass(frozen=True)
class SpectrumHistogram:
    edges: np.ndarray
    centers: np.ndarray
    empirical: np.ndarray
    mp: np.ndarray
    overflow: np.ndarray

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def l1_distance(self) -> float:
        return float(np.sum(np.abs(self.empirical - self.mp)) * self.width)

    def rows(self):
        return list(zip(self.centers.tolist(), self.empirical.tolist(), self.mp.tolist()))


def spectrum_histogram(s: SpectrumSample, bins: int, model: MPModel, spike_factor: float = 2.0,
                       include_zeros: bool = False) -> SpectrumHistogram:
    """Uniform histogram of the spectrum over ``[0, max(lambda_plus, largest non-spike)]``.

    Eigenvalues above ``spike_factor * lambda_plus`` go to ``overflow`` instead
    of stretching the bins.  The density is normalized over binned values.
    """
    if bins < 2:
        raise InvalidParameterError("need at least 2 bins")
    ev = s.eigenvalues
    if include_zeros and s.implicit_zeros:
        ev = np.concatenate([ev, np.zeros(s.implicit_zeros)])
    if ev.size == 0:
        raise InvalidParameterError("empty spectrum")
    spike = ev > spike_factor * model.lambda_plus
    binned = ev[~spike]
    if binned.size == 0:
        raise InvalidParameterError("every eigenvalue is an overflow spike")
    upper = max(model.lambda_plus, float(binned.max()))
    counts, edges = np.histogram(binned, bins=bins, range=(0.0, upper))
    width = edges[1] - edges[0]
    centers = (edges[:-1] + edges[1:]) / 2
    emp = counts / (binned.size * width)
    return SpectrumHistogram(edges, centers, emp, mp_density(centers, model), np.sort(ev[spike])[::-1])


def write_histogram_csv(path, h: SpectrumHistogram):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "empirical", "mp"])
        for row in h.rows():
            w.writerow([f"{v:.12g}" for v in row])


def write_spectrum_csv(path, s: SpectrumSample, model: MPModel | None = None):
    """One row per eigenvalue: ``lambda,empirical,mp`` where ``empirical`` is the
    rank-based survival fraction and ``mp`` the fitted density (blank without a model)."""
    ev = s.eigenvalues
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "empirical", "mp"])
        dens = mp_density(ev, model) if model is not None else None
        for i, lam in enumerate(ev):
            w.writerow([f"{lam:.12g}", f"{(i + 1) / ev.size:.12g}",
                        "" if dens is None else f"{dens[i]:.12g}"])
