"""Truncated SVD of sparse interaction matrices and operations on the factors.

The solver is a thick-restarted Golub-Kahan-Lanczos bidiagonalization in the
augmented-restart style of Baglama & Reichel (irlba): after each expansion the
``keep`` best Ritz triplets are retained together with the residual vector, so
the projected matrix becomes diagonal-plus-arrow rather than bidiagonal.  Both
Krylov bases are fully reorthogonalized (classical Gram-Schmidt, applied twice).

Component numbers in this module are 1-based: component 1 is the dominant
singular triplet.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, EmptyModelError, InvalidParameterError
from .sparse import InteractionMatrix, matvec, rmatvec

log = logging.getLogger(__name__)

DENSE_ORACLE_CAP = 2000
_EPS = np.finfo(np.float64).eps


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 1000
    subspace_dim: int | None = None
    seed: int = 0
    reorthogonalization: str = "full"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidParameterError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be >= 1")
        if self.reorthogonalization != "full":
            raise InvalidParameterError("only full reorthogonalization is implemented")

    def resolved_subspace_dim(self, k: int) -> int:
        p = self.subspace_dim if self.subspace_dim is not None else max(2 * k + 1, k + 20)
        if p <= k:
            raise InvalidParameterError(f"subspace_dim {p} must exceed k={k}")
        return p


@dataclass(frozen=True, eq=False)
class TruncatedSVD:
    """``X ~ U diag(sigma) V^T``, singular values descending."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    sign_convention: bool = False
    rank_deficient: bool = False
    residuals: np.ndarray | None = None
    iterations: int = 0
    tolerance: float | None = None
    seed: int | None = None

    @property
    def k(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def n(self) -> int:
        return int(self.U.shape[0])

    @property
    def m(self) -> int:
        return int(self.V.shape[0])


def _operator(X):
    """(shape, A @ v, A.T @ u) for an InteractionMatrix, dense array or scipy sparse matrix."""
    if isinstance(X, InteractionMatrix):
        return X.shape, (lambda v: matvec(X, v)), (lambda u: rmatvec(X, u))
    if isinstance(X, np.ndarray):
        A = np.asarray(X, dtype=np.float64)
        return A.shape, A.__matmul__, (lambda u: u @ A)
    if hasattr(X, "tocsr"):
        A = X.tocsr().astype(np.float64)
        At = A.T.tocsr()
        return A.shape, A.__matmul__, At.__matmul__
    raise TypeError(f"unsupported matrix type {type(X).__name__}")


def _orthogonalize(w, basis):
    """Project ``w`` off ``basis`` columns twice; returns (w, accumulated coefficients)."""
    if basis.shape[1] == 0:
        return w, np.zeros(0)
    c = basis.T @ w
    w = w - basis @ c
    c2 = basis.T @ w
    w = w - basis @ c2
    return w, c + c2


def _random_unit_orthogonal(rng, basis):
    dim, used = basis.shape
    if used >= dim:
        return None
    for _ in range(3):
        w, _ = _orthogonalize(rng.standard_normal(dim), basis)
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            return w / nrm
    return None


def truncated_svd(X, k: int, opts: SolverOptions | None = None) -> TruncatedSVD:
    """Top-``k`` singular triplets by restarted Lanczos bidiagonalization.

    Converged triplets satisfy ``||X v_i - s_i u_i|| <= tol * s_1`` and
    ``||X^T u_i - s_i v_i|| <= tol * s_1``.  Singular values at roundoff level
    are not returned; the result is then shorter than ``k`` and flagged
    ``rank_deficient``.
    """
    opts = opts or SolverOptions()
    (n, m), mv, rmv = _operator(X)
    if not 1 <= k <= min(n, m):
        raise InvalidParameterError(f"k={k} outside [1, min(n, m)={min(n, m)}]")
    # iterate with the short side on Q so an exhausted subspace ends with beta = 0
    flipped = n < m
    if flipped:
        n, m, mv, rmv = m, n, rmv, mv
    p = min(opts.resolved_subspace_dim(k), min(n, m))
    keep = min(p - 1, k + (p - k) // 2) if p > k else k
    rng = np.random.default_rng(opts.seed)

    P = np.zeros((n, p))
    Q = np.zeros((m, p + 1))
    B = np.zeros((p, p))
    q0 = rng.standard_normal(m)
    Q[:, 0] = q0 / np.linalg.norm(q0)
    anorm = 0.0
    j0 = 0
    best = None
    for it in range(1, opts.max_iterations + 1):
        for j in range(j0, p):
            w, h = _orthogonalize(mv(Q[:, j]), P[:, :j])
            alpha = np.linalg.norm(w)
            anorm = max(anorm, alpha, np.abs(h).max(initial=0.0))
            B[:j, j] = h
            if alpha <= 1e-13 * anorm * np.sqrt(n):
                # q_j is (numerically) in the null space direction: continue with a fresh vector
                alpha = 0.0
                w = _random_unit_orthogonal(rng, P[:, :j])
                P[:, j] = w if w is not None else 0.0
            else:
                P[:, j] = w / alpha
            B[j, j] = alpha
            r, _ = _orthogonalize(rmv(P[:, j]), Q[:, :j + 1])
            beta = np.linalg.norm(r)
            anorm = max(anorm, beta)
            if beta <= 1e-13 * anorm * np.sqrt(m):
                beta = 0.0
                r = _random_unit_orthogonal(rng, Q[:, :j + 1])
                Q[:, j + 1] = r if r is not None else 0.0
            else:
                Q[:, j + 1] = r / beta

        Xb, S, Ybt = np.linalg.svd(B)
        Yb = Ybt.T
        res = np.abs(beta * Xb[p - 1, :])
        smax = S[0]
        if smax == 0.0:
            warnings.warn("matrix is numerically zero; returning a rank-0 factorization",
                          RankDeficiencyWarning, stacklevel=2)
            if flipped:
                n, m = m, n
            return TruncatedSVD(np.zeros((n, 0)), np.zeros(0), np.zeros((m, 0)),
                                rank_deficient=True, residuals=np.zeros(0), iterations=it,
                                tolerance=opts.tolerance, seed=opts.seed)
        rank_tol = max(n, m) * _EPS * smax * 10
        k_eff = int(min(k, np.count_nonzero(S > rank_tol)))
        conv = res[:k_eff] <= opts.tolerance * smax
        if best is None or res[:k_eff].max() < best[0].max():
            best = (res[:k_eff].copy(), it)
        log.debug("restart %d: %d/%d converged, max residual %.3e", it, conv.sum(), k_eff,
                  res[:k_eff].max() / smax)
        if conv.all():
            break
        if it == opts.max_iterations:
            raise ConvergenceError(
                f"{conv.sum()}/{k_eff} triplets converged after {it} restarts",
                residuals=best[0] / smax, iterations=it)
        # thick restart: keep the best Ritz vectors plus the residual direction
        P[:, :keep] = P @ Xb[:, :keep]
        Q[:, :keep] = Q[:, :p] @ Yb[:, :keep]
        Q[:, keep] = Q[:, p]
        B[:] = 0.0
        B[np.arange(keep), np.arange(keep)] = S[:keep]
        j0 = keep

    U = P @ Xb[:, :k_eff]
    V = Q[:, :p] @ Yb[:, :k_eff]
    if flipped:
        U, V = V, U
    sigma = S[:k_eff].copy()
    rank_deficient = k_eff < k
    if rank_deficient:
        warnings.warn(f"requested k={k} but numerical rank is {k_eff}", RankDeficiencyWarning,
                      stacklevel=2)
    out = TruncatedSVD(U, sigma, V, rank_deficient=rank_deficient, iterations=it,
                       tolerance=opts.tolerance, seed=opts.seed)
    return replace(out, residuals=factor_residuals(X, out))


def factor_residuals(X, f: TruncatedSVD) -> np.ndarray:
    """max(||X v_i - s_i u_i||, ||X^T u_i - s_i v_i||) / s_1 for every component."""
    if f.k == 0:
        return np.zeros(0)
    _, mv, rmv = _operator(X)
    out = np.empty(f.k)
    for i in range(f.k):
        a = np.linalg.norm(mv(f.V[:, i]) - f.sigma[i] * f.U[:, i])
        b = np.linalg.norm(rmv(f.U[:, i]) - f.sigma[i] * f.V[:, i])
        out[i] = max(a, b)
    return out / f.sigma[0]


def dense_svd_oracle(X_dense, k: int, cap: int = DENSE_ORACLE_CAP) -> TruncatedSVD:
    """Reference factors from LAPACK ``gesvd`` (Householder bidiagonalization + implicit QR)."""
    A = X_dense.to_dense() if isinstance(X_dense, InteractionMatrix) else np.asarray(X_dense, dtype=float)
    n, m = A.shape
    if min(n, m) > cap:
        raise InvalidParameterError(f"min(n, m)={min(n, m)} exceeds the dense oracle cap {cap}")
    if not 1 <= k <= min(n, m):
        raise InvalidParameterError(f"k={k} outside [1, {min(n, m)}]")
    U, S, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
    smax = S[0] if S.size else 0.0
    k_eff = int(min(k, np.count_nonzero(S > max(n, m) * _EPS * smax * 10))) if smax > 0 else 0
    if k_eff < k:
        warnings.warn(f"requested k={k} but numerical rank is {k_eff}", RankDeficiencyWarning,
                      stacklevel=2)
    f = TruncatedSVD(U[:, :k_eff].copy(), S[:k_eff].copy(), Vt[:k_eff].T.copy(),
                     rank_deficient=k_eff < k, tolerance=1e-10)
    return replace(f, residuals=factor_residuals(A, f))


@dataclass(frozen=True)
class EigenReport:
    """Per-component Gram residuals, each divided by s_1^2.

    ``item_residuals[i] = ||X^T X v_i - s_i^2 v_i|| / s_1^2`` and
    ``user_residuals[i]`` the same for ``X X^T`` and ``u_i``.  The Rayleigh
    quotients are the eigenvalues each Gram operator assigns to the vectors.
    """

    item_residuals: np.ndarray
    user_residuals: np.ndarray
    item_eigenvalues: np.ndarray
    user_eigenvalues: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(max(self.item_residuals.max(initial=0.0), self.user_residuals.max(initial=0.0)))


def eigencheck(X, f: TruncatedSVD) -> EigenReport:
    _, mv, rmv = _operator(X)
    k = f.k
    ir, ur, il, ul = (np.zeros(k) for _ in range(4))
    s1sq = f.sigma[0] ** 2 if k else 1.0
    for i in range(k):
        v, u, s2 = f.V[:, i], f.U[:, i], f.sigma[i] ** 2
        gv = rmv(mv(v))
        gu = mv(rmv(u))
        ir[i] = np.linalg.norm(gv - s2 * v) / s1sq
        ur[i] = np.linalg.norm(gu - s2 * u) / s1sq
        il[i] = v @ gv / (v @ v)
        ul[i] = u @ gu / (u @ u)
    return EigenReport(ir, ur, il, ul)


def _component_set(ids, k):
    ids = {int(i) for i in ids}
    bad = [i for i in ids if not 1 <= i <= k]
    if bad:
        raise InvalidParameterError(f"component numbers {sorted(bad)} outside [1, {k}]")
    return ids


def remove_components(f: TruncatedSVD, drop) -> TruncatedSVD:
    """Factors without the listed (1-based) components, order preserved.

    ``drop={1}`` removes the dominant pair (u_1, v_1); the same scores follow
    from setting ``sigma[0] = 0`` and keeping every column.
    """
    drop = _component_set(drop, f.k)
    keep = [i for i in range(f.k) if i + 1 not in drop]
    if not keep:
        raise EmptyModelError("dropping every component leaves an empty model")
    res = None if f.residuals is None else f.residuals[keep]
    return replace(f, U=f.U[:, keep], sigma=f.sigma[keep], V=f.V[:, keep], residuals=res)


def keep_components(f: TruncatedSVD, keep) -> TruncatedSVD:
    keep = _component_set(keep, f.k)
    return remove_components(f, set(range(1, f.k + 1)) - keep)


def zero_sigma(f: TruncatedSVD, components) -> TruncatedSVD:
    """Same columns, with the listed singular values set to 0."""
    comps = _component_set(components, f.k)
    s = f.sigma.copy()
    s[[c - 1 for c in comps]] = 0.0
    return replace(f, sigma=s)


def fix_signs(f: TruncatedSVD) -> TruncatedSVD:
    """Orient every pair so that the V column sums to >= 0.

    Flipping u_i and v_i together leaves ``U diag(s) V^T`` unchanged.  A column
    summing to exactly zero is oriented by its largest-magnitude entry.
    """
    colsum = f.V.sum(axis=0)
    sign = np.where(colsum < 0, -1.0, 1.0)
    flat = np.abs(colsum) <= 1e-14 * np.abs(f.V).sum(axis=0)
    for i in np.flatnonzero(flat):
        j = np.argmax(np.abs(f.V[:, i]))
        sign[i] = -1.0 if f.V[j, i] < 0 else 1.0
    return replace(f, U=f.U * sign, V=f.V * sign, sign_convention=True)


def dump_component(f: TruncatedSVD, i: int, side: str = "item") -> list[tuple[int, float]]:
    """(entity index, value) rows of u_i (``side='user'``) or v_i (``side='item'``)."""
    if not 1 <= i <= f.k:
        raise InvalidParameterError(f"component {i} outside [1, {f.k}]")
    if side not in ("user", "item"):
        raise InvalidParameterError("side must be 'user' or 'item'")
    col = (f.U if side == "user" else f.V)[:, i - 1]
    return list(enumerate(col.tolist()))


def save_factors(f: TruncatedSVD, path, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (U, sigma, V as little-endian float64, C order) and ``<path>.json``."""
    path = Path(path)
    binp, meta = path.with_suffix(".bin"), path.with_suffix(".json")
    with open(binp, "wb") as fh:
        for a in (f.U, f.sigma, f.V):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    info = {
        "n": f.n, "m": f.m, "k": f.k,
        "layout": ["U[n,k]", "sigma[k]", "V[m,k]"], "dtype": "<f8", "order": "C",
        "tolerance": f.tolerance, "seed": f.seed, "sign_convention": f.sign_convention,
        "rank_deficient": f.rank_deficient, "iterations": f.iterations,
        "residuals": None if f.residuals is None else f.residuals.tolist(),
    }
    info.update(extra or {})
    meta.write_text(json.dumps(info, indent=2))
    return binp, meta


def load_factors(path) -> tuple[TruncatedSVD, dict]:
    path = Path(path)
    info = json.loads(path.with_suffix(".json").read_text())
    n, m, k = info["n"], info["m"], info["k"]
    raw = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    if raw.size != n * k + k + m * k:
        raise ValueError(f"{path.with_suffix('.bin')}: size does not match sidecar (n={n}, m={m}, k={k})")
    U = raw[:n * k].reshape(n, k)
    sigma = raw[n * k:n * k + k]
    V = raw[n * k + k:].reshape(m, k)
    res = info.get("residuals")
    f = TruncatedSVD(U.astype(np.float64), sigma.astype(np.float64), V.astype(np.float64),
                     sign_convention=bool(info.get("sign_convention")),
                     rank_deficient=bool(info.get("rank_deficient")),
                     residuals=None if res is None else np.asarray(res),
                     iterations=int(info.get("iterations", 0)),
                     tolerance=info.get("tolerance"), seed=info.get("seed"))
    return f, info


def options_dict(opts: SolverOptions) -> dict:
    return asdict(opts)
