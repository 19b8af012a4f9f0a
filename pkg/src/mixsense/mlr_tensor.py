"""Mixed linear regression via the method of moments and a robust tensor
power method.

Pipeline: split the samples in two halves, form second/third order moment
estimates, whiten with the rank-K part of the second moment, decompose the
whitened third-order tensor into K eigenpairs by deflated power iteration,
and map the eigenpairs back to regression vectors and mixture weights.
"""

import warnings
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from . import core
from .errors import (
    DegenerateMomentError,
    DegenerateWhiteningError,
    InvalidInputError,
    RankCollapseError,
)

WEIGHT_FLAG_THRESHOLD = 1.5


class VecSamples(NamedTuple):
    """A batch of vector regression samples: designs (N, d) and targets (N,)."""

    a: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def dim(self) -> int:
        return int(self.a.shape[1])


@dataclass(frozen=True)
class MomentSet:
    m0: float            # mean squared target
    m1: np.ndarray       # (d,) scaled third-order vector moment
    m2: np.ndarray       # (d, d) centered second moment
    m3: np.ndarray       # (d, d, d) corrected symmetric third moment


@dataclass(frozen=True)
class MlrEstimate:
    """K recovered regression vectors with mixture weights.

    Component order is the extraction order of the tensor power method (a
    global permutation of the truth is inherent to the problem). A weight is
    flagged when it exceeds 1.5, which finite-sample noise can produce.
    """

    betas: np.ndarray         # (K, d)
    weights: np.ndarray       # (K,)
    weight_flagged: np.ndarray  # (K,) bool


def _check_samples(samples: VecSamples) -> VecSamples:
    a = np.asarray(samples.a, dtype=np.float64)
    y = np.asarray(samples.y, dtype=np.float64).ravel()
    if a.ndim != 2 or a.shape[0] != y.size or a.shape[1] < 1:
        raise InvalidInputError(f"inconsistent sample arrays: a {a.shape}, y {y.shape}")
    if not (np.isfinite(a).all() and np.isfinite(y).all()):
        raise InvalidInputError("samples contain non-finite values")
    return VecSamples(a, y)


def split_samples(samples: VecSamples, seed) -> Tuple[VecSamples, VecSamples]:
    """Bernoulli(0.5) split into two disjoint halves.

    If either half comes out empty the split is retried with an incremented
    sub-seed, up to 8 times.
    """
    samples = _check_samples(samples)
    if samples.n < 2:
        raise InvalidInputError("need at least 2 samples to split")
    for attempt in range(8):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)))
        mask = rng.random(samples.n) < 0.5
        if mask.any() and (~mask).any():
            return (
                VecSamples(samples.a[mask], samples.y[mask]),
                VecSamples(samples.a[~mask], samples.y[~mask]),
            )
    raise InvalidInputError("sample split degenerate after 8 attempts")


def third_moment_correction(m: np.ndarray) -> np.ndarray:
    """Symmetric tensor ``sum_i (m x e_i x e_i + e_i x m x e_i + e_i x e_i x m)``.

    Entry (a, b, c) equals ``m_a [b==c] + m_b [a==c] + m_c [a==b]``.
    """
    m = np.asarray(m, dtype=np.float64).ravel()
    eye = np.eye(m.size)
    return (
        np.einsum("a,bc->abc", m, eye)
        + np.einsum("b,ac->abc", m, eye)
        + np.einsum("c,ab->abc", m, eye)
    )


def moments(set1: VecSamples, set2: VecSamples) -> MomentSet:
    """Moment estimates; `set1` feeds the even moments (m0, m2) and `set2`
    the odd ones (m1, m3), mirroring the sample split."""
    set1, set2 = _check_samples(set1), _check_samples(set2)
    if set1.dim != set2.dim:
        raise InvalidInputError("sample halves have different dimensions")
    d = set1.dim
    n1, n2 = set1.n, set2.n
    y1sq = set1.y**2
    y2cu = set2.y**3
    m0 = float(np.mean(y1sq))
    m1 = (y2cu @ set2.a) / (6.0 * n2)
    m2 = (set1.a * y1sq[:, None]).T @ set1.a / (2.0 * n1) - 0.5 * m0 * np.eye(d)
    weighted = set2.a * y2cu[:, None]
    raw3 = (weighted.T @ _row_outer(set2.a)).reshape(d, d, d) / (6.0 * n2)
    return MomentSet(m0=m0, m1=m1, m2=m2, m3=raw3 - third_moment_correction(m1))


def _row_outer(a: np.ndarray) -> np.ndarray:
    """(N, d) -> (N, d*d) rows of vectorized outer products a_i a_i^T."""
    n, d = a.shape
    return (a[:, :, None] * a[:, None, :]).reshape(n, d * d)


def whiten(m2: np.ndarray, K: int) -> np.ndarray:
    """Whitening map W = U diag(s)^(-1/2) from the rank-K SVD of m2, so that
    W.T @ m2 @ W is the K x K identity for an exactly rank-K PSD input."""
    m2 = core.as_matrix(m2, "m2")
    d = m2.shape[0]
    if m2.shape != (d, d) or not 1 <= K <= d:
        raise InvalidInputError(f"need square m2 and 1 <= K <= d, got {m2.shape}, K={K}")
    res = core.svd(m2)
    if res.s[0] <= 0.0:
        raise RankCollapseError("second moment is identically zero")
    if res.s[K - 1] <= 1e-10 * res.s[0]:
        raise DegenerateMomentError(
            f"second moment rank below K={K}: spectrum ratio {res.s[K-1] / res.s[0]:.2e}"
        )
    return res.u[:, :K] / np.sqrt(res.s[:K])


def whitened_tensor(t3: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Multilinear contraction t3(w, w, w) along all three modes."""
    t3 = np.asarray(t3, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if t3.ndim != 3 or len(set(t3.shape)) != 1:
        raise InvalidInputError(f"expected a cubic tensor, got shape {t3.shape}")
    if w.ndim != 2 or w.shape[0] != t3.shape[0]:
        raise InvalidInputError(f"map shape {w.shape} mismatches tensor dim {t3.shape[0]}")
    out = np.tensordot(t3, w, axes=([0], [0]))
    out = np.tensordot(out, w, axes=([0], [0]))
    return np.tensordot(out, w, axes=([0], [0]))


class TensorApply(NamedTuple):
    value: float          # t3(u, u, u)
    map: np.ndarray       # t3(I, u, u)


def tensor_apply(t3: np.ndarray, u: np.ndarray) -> TensorApply:
    t3 = np.asarray(t3, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64).ravel()
    d = u.size
    if t3.shape != (d, d, d):
        raise InvalidInputError(f"tensor shape {t3.shape} mismatches vector dim {d}")
    mapped = t3.reshape(d, d * d) @ np.outer(u, u).ravel()
    return TensorApply(value=float(mapped @ u), map=mapped)


def robust_tensor_power(
    t3: np.ndarray,
    K: int,
    restarts: int,
    iters: int,
    seed,
) -> List[Tuple[float, np.ndarray]]:
    """Deflated power iteration extracting K eigenpairs of a symmetric
    third-order tensor.

    Each round runs `restarts` random unit starts for `iters` iterations of
    ``u <- normalize(t3(I, u, u))``, keeps the candidate with the largest
    value (ties to the earliest restart), flips the sign so the eigenvalue
    is positive, and deflates. Pairs come back in extraction order.
    """
    if restarts < 1 or iters < 1:
        raise InvalidInputError("restarts and iters must be >= 1")
    t3 = np.asarray(t3, dtype=np.float64).copy()
    d = t3.shape[0]
    rng = np.random.default_rng(seed)
    pairs: List[Tuple[float, np.ndarray]] = []
    for _ in range(K):
        tmat = t3.reshape(d, d * d)
        best_lam, best_u = -np.inf, None
        for _ in range(restarts):
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            for _ in range(iters):
                mapped = tmat @ np.outer(u, u).ravel()
                norm = np.linalg.norm(mapped)
                if norm < 1e-300:
                    break
                u = mapped / norm
            lam = float(tensor_apply(t3, u).value)
            if lam < 0.0:
                lam, u = -lam, -u
            if lam > best_lam:
                best_lam, best_u = lam, u
        if best_u is None or best_lam < 1e-12:
            raise RankCollapseError(
                f"power method found no component after {len(pairs)} extractions"
            )
        pairs.append((best_lam, best_u))
        t3 -= best_lam * np.einsum("i,j,k->ijk", best_u, best_u, best_u)
    return pairs


def unwhiten(pairs: List[Tuple[float, np.ndarray]], w: np.ndarray) -> MlrEstimate:
    """Map whitened eigenpairs back to weights and regression vectors:
    ``weight = 1 / lam^2`` and ``beta = lam * w (w^T w)^(-1) u``."""
    w = core.as_matrix(w, "whitening matrix")
    sv = np.linalg.svd(w, compute_uv=False)
    if sv[0] == 0.0 or (sv[-1] / sv[0]) ** 2 <= 1e-12:
        raise DegenerateWhiteningError("whitening matrix Gram is numerically singular")
    pinv = w @ np.linalg.inv(w.T @ w)
    lams = np.array([lam for lam, _ in pairs])
    if (lams <= 0.0).any():
        raise InvalidInputError("eigenvalues must be positive after sign fixing")
    betas = np.stack([lam * (pinv @ u) for lam, u in pairs])
    weights = 1.0 / lams**2
    flagged = weights > WEIGHT_FLAG_THRESHOLD
    if flagged.any():
        warnings.warn(
            f"{int(flagged.sum())} mixture weight(s) exceed {WEIGHT_FLAG_THRESHOLD}; "
            "estimates kept but flagged",
            RuntimeWarning,
        )
    return MlrEstimate(betas=betas, weights=weights, weight_flagged=flagged)


def solve_mlr(
    samples: VecSamples,
    K: int,
    seed,
    restarts: Optional[int] = None,
    iters: int = 100,
) -> MlrEstimate:
    """Full mixed-linear-regression solve on one batch of samples."""
    samples = _check_samples(samples)
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    restarts = 10 + 2 * K if restarts is None else restarts
    split_seed, power_seed = np.random.SeedSequence(entropy=seed).generate_state(2, np.uint64)
    half1, half2 = split_samples(samples, int(split_seed))
    mom = moments(half1, half2)
    w = whiten(mom.m2, K)
    t3 = whitened_tensor(mom.m3, w)
    pairs = robust_tensor_power(t3, K, restarts=restarts, iters=iters, seed=int(power_seed))
    return unwhiten(pairs, w)
