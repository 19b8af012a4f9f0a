"""Dense-matrix primitives, quantiles, and evaluation metrics.

Everything in this module is pure and operates on plain float64 numpy
arrays; values are never mutated after construction, so all functions are
safe to call concurrently.

The project-wide vectorization convention is column-major: ``vec`` stacks
matrix columns and ``unvec`` is its inverse.
"""

import math
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidInputError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class SvdResult(NamedTuple):
    """Compact SVD ``m = u @ diag(s) @ v.T`` with orthonormal u, v columns."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite 2-D float64 array."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major vectorization of a matrix."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`vec`; `cols` defaults to `rows` (square case)."""
    cols = rows if cols is None else cols
    v = np.asarray(v, dtype=np.float64)
    if v.size != rows * cols:
        raise InvalidInputError(f"cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def svd(m, k: Optional[int] = None) -> SvdResult:
    """Deterministic dense SVD, optionally truncated to the top `k` triplets.

    Sign convention: each left singular vector is flipped so that its
    largest-magnitude entry is positive (the right vector follows so the
    reconstruction is unchanged). Singular values come back descending with
    LAPACK's stable ordering for ties.
    """
    m = as_matrix(m)
    if k is not None and not 1 <= k <= min(m.shape):
        raise InvalidInputError(f"truncation rank {k} out of range for shape {m.shape}")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier
        u, s, vt = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
    if k is not None:
        u, s, vt = u[:, :k], s[:k], vt[:k]
    anchors = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[anchors, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    return SvdResult(u * signs, s, (vt * signs[:, None]).T)


def finite_quantile(values: Sequence[float], alpha: float) -> float:
    """Alpha-quantile of a finite multiset: the smallest element t with
    ``#{x <= t} / m >= alpha`` (an order statistic, no interpolation)."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise InvalidInputError("quantile of an empty collection")
    if not np.isfinite(vals).all():
        raise InvalidInputError("quantile input contains non-finite values")
    if not (0.0 < alpha <= 1.0):
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    m = vals.size
    j = min(max(math.ceil(alpha * m), 1), m)
    # guard the ceil against float round-off in alpha * m
    while j > 1 and (j - 1) / m >= alpha:
        j -= 1
    while j < m and j / m < alpha:
        j += 1
    return float(np.partition(vals, j - 1)[j - 1])


def std_normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def truncated_gaussian_second_moment(x: float) -> float:
    """Integral of t^2 phi(t) for t in [-x, x], phi the standard normal pdf.

    Closed form ``erf(x / sqrt(2)) - 2 x phi(x)``; nondecreasing in x with
    limit 1 as x grows.
    """
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise InvalidInputError(f"argument must be finite and >= 0, got {x}")
    return math.erf(x / math.sqrt(2.0)) - 2.0 * x * std_normal_pdf(x)


def rel_fro_error(m, mstar) -> float:
    """Relative Frobenius error ||m - mstar||_F / ||mstar||_F."""
    m = as_matrix(m, "m")
    mstar = as_matrix(mstar, "mstar")
    if m.shape != mstar.shape:
        raise InvalidInputError(f"shape mismatch {m.shape} vs {mstar.shape}")
    denom = np.linalg.norm(mstar)
    if denom == 0.0:
        raise InvalidInputError("reference matrix has zero Frobenius norm")
    return float(np.linalg.norm(m - mstar) / denom)


def check_orthonormal(q: np.ndarray, tol: float = 1e-8, name: str = "matrix") -> np.ndarray:
    q = as_matrix(q, name)
    k = q.shape[1]
    resid = np.linalg.norm(q.T @ q - np.eye(k))
    if resid > tol * math.sqrt(k):
        raise InvalidInputError(f"{name} columns are not orthonormal (residual {resid:.3e})")
    return q


def subspace_distance(u_hat, u_star) -> float:
    """Spectral norm of the difference of the two orthogonal projectors.

    Symmetric in its arguments and invariant under right-multiplication of
    either basis by an orthogonal matrix.
    """
    u_hat = check_orthonormal(u_hat, name="u_hat")
    u_star = check_orthonormal(u_star, name="u_star")
    if u_hat.shape[0] != u_star.shape[0]:
        raise InvalidInputError("bases must live in the same ambient space")
    diff = u_hat @ u_hat.T - u_star @ u_star.T
    return float(np.linalg.norm(diff, 2))


def snr(mstar, sigma: float) -> float:
    """Signal-to-noise ratio ||mstar||_F^2 / sigma^2 (inf when sigma == 0)."""
    mstar = as_matrix(mstar, "mstar")
    if sigma < 0 or not math.isfinite(sigma):
        raise InvalidInputError(f"sigma must be finite and >= 0, got {sigma}")
    if sigma == 0.0:
        return math.inf
    return float(np.linalg.norm(mstar) ** 2 / sigma**2)


def rip_deficit(designs, x, z) -> float:
    """Normalized deviation of the empirical bilinear form from <x, z>.

    Returns ``|mean_i <A_i,x><A_i,z> - <x,z>| / (||x||_F ||z||_F)``. This is
    a diagnostic statistic over the given designs, not an isometry
    certificate.
    """
    x = as_matrix(x, "x")
    z = as_matrix(z, "z")
    if x.shape != z.shape:
        raise InvalidInputError(f"shape mismatch {x.shape} vs {z.shape}")
    designs = np.asarray(designs, dtype=np.float64)
    if designs.ndim == 2:
        designs = designs[None]
    if designs.ndim != 3 or designs.shape[0] == 0:
        raise InvalidInputError("designs must be a non-empty list of matrices")
    if designs.shape[1:] != x.shape:
        raise InvalidInputError(f"design shape {designs.shape[1:]} mismatches {x.shape}")
    nx, nz = np.linalg.norm(x), np.linalg.norm(z)
    if nx == 0.0 or nz == 0.0:
        raise InvalidInputError("x and z must both be nonzero")
    flat = designs.reshape(designs.shape[0], -1)
    px = flat @ x.ravel()
    pz = flat @ z.ravel()
    return float(abs(np.mean(px * pz) - float(np.vdot(x, z))) / (nx * nz))
