"""Full three-stage recovery: subspace estimation, mixed-regression
initialization, then one truncated-gradient refinement per component."""

import itertools
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize

from . import core, spectral
from .errors import InvalidInputError, MixsenseError, PipelineStageError
from .initialization import (
    InitializationResult,
    compress_samples,
    estimate_component_ranks,
    lift_and_factor,
)
from .mlr_tensor import solve_mlr
from .scaledtgd import TgdConfig, TgdTrace, run_scaledtgd
from .synth import Dataset, GroundTruth


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one end-to-end run.

    Step sizes and truncating fractions are derived from per-component
    proportions as ``eta_k = eta_scale / p_k`` and ``alpha_k = alpha_scale *
    p_k``. In theory mode the truncating scale is restricted to [0.6, 0.8],
    and stage 2 must run on an independent sample set.
    """

    k_components: int
    supplied_r_joint: Optional[int] = None
    supplied_ranks: Optional[Tuple[int, ...]] = None
    supplied_proportions: Optional[Tuple[float, ...]] = None
    eta_scale: float = 1.3
    alpha_scale: float = 0.8
    t0: int = 200
    early_stop_tol: float = 0.0
    reuse_samples: bool = True
    theory_mode: bool = False
    seed: int = 0
    tensor_restarts: Optional[int] = None
    tensor_iters: int = 100
    rank_max: Optional[int] = None
    gap_floor: float = 1e-12
    threads: int = 1

    def __post_init__(self):
        if self.k_components < 1:
            raise InvalidInputError("k_components must be >= 1")
        if not 0.0 < self.eta_scale <= 1.3:
            raise InvalidInputError(f"eta_scale must lie in (0, 1.3], got {self.eta_scale}")
        if self.theory_mode:
            if not 0.6 <= self.alpha_scale <= 0.8:
                raise InvalidInputError(
                    f"theory mode requires alpha_scale in [0.6, 0.8], got {self.alpha_scale}"
                )
        elif not 0.0 < self.alpha_scale <= 1.0:
            raise InvalidInputError(f"alpha_scale must lie in (0, 1], got {self.alpha_scale}")
        if self.t0 < 1:
            raise InvalidInputError("t0 must be >= 1")
        if self.threads < 1:
            raise InvalidInputError("threads must be >= 1")
        for name in ("supplied_ranks", "supplied_proportions"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(val))
                if len(getattr(self, name)) != self.k_components:
                    raise InvalidInputError(f"{name} must have length {self.k_components}")


class StepParams(NamedTuple):
    eta: float
    alpha: float


def default_params(proportions: Sequence[float], cfg: PipelineConfig) -> List[StepParams]:
    """Per-component step size and truncating fraction from proportions.

    The truncating fraction is capped at 1 in case an estimated proportion
    overshoots.
    """
    params = []
    for p in proportions:
        if not p > 0:
            raise InvalidInputError(f"proportions must be positive, got {p}")
        params.append(StepParams(eta=cfg.eta_scale / p, alpha=min(cfg.alpha_scale * p, 1.0)))
    return params


class AlignmentResult(NamedTuple):
    perm: Tuple[int, ...]   # perm[k] = estimate index assigned to truth k
    total_cost: float


def align_components(estimates: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> AlignmentResult:
    """Assignment of estimates to truths minimizing the summed relative
    error, exhaustively for K <= 8 and by linear assignment beyond.

    Ties break to the lexicographically smallest permutation.
    """
    if len(estimates) != len(truths) or not estimates:
        raise InvalidInputError("need equally many estimates and truths")
    K = len(truths)
    cost = np.empty((K, K))
    for k, truth in enumerate(truths):
        for j, est in enumerate(estimates):
            cost[k, j] = core.rel_fro_error(est, truth)
    if K <= 8:
        best_perm, best_cost = None, np.inf
        for perm in itertools.permutations(range(K)):
            total = float(sum(cost[k, perm[k]] for k in range(K)))
            if total < best_cost:
                best_perm, best_cost = perm, total
        return AlignmentResult(perm=best_perm, total_cost=best_cost)
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    perm = tuple(int(cols[np.argwhere(rows == k)[0, 0]]) for k in range(K))
    return AlignmentResult(perm=perm, total_cost=float(cost[rows, cols].sum()))


@dataclass
class Stage1Report:
    r_used: int
    dist_u: Optional[float] = None
    dist_v: Optional[float] = None


@dataclass
class ComponentReport:
    """Diagnostics for one component in extraction order."""

    rel_error: Optional[float]
    init_error: Optional[float]
    trace: TgdTrace


@dataclass
class RecoveryReport:
    estimates: List[np.ndarray]
    permutation: Tuple[int, ...]
    per_component: List[ComponentReport]
    stage1: Stage1Report
    weights: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "estimates": [m.tolist() for m in self.estimates],
            "permutation": list(self.permutation),
            "per_component": [
                {
                    "rel_error": c.rel_error,
                    "init_error": c.init_error,
                    "trace": [
                        {"iter": t, "tau": tau, "kept": kept, "rel_error": err}
                        for t, tau, kept, err in c.trace.rows()
                    ],
                }
                for c in self.per_component
            ],
            "stage1": {
                "r_used": self.stage1.r_used,
                "dist_u": self.stage1.dist_u,
                "dist_v": self.stage1.dist_v,
            },
            "weights": self.weights.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, **kwargs)


def joint_basis(bases: Sequence[np.ndarray]) -> np.ndarray:
    """Orthonormal basis of the union of the given column spaces."""
    stacked = np.hstack(list(bases))
    res = core.svd(stacked)
    rank = int(np.sum(res.s > 1e-10 * res.s[0]))
    return res.u[:, :rank]


def _stage(tag: str):
    """Context manager tagging stage failures."""
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, MixsenseError):
                raise PipelineStageError(tag, str(exc)) from exc
            return False

    return _Ctx()


def run_pipeline(
    d_main: Dataset,
    d_mlr: Optional[Dataset],
    cfg: PipelineConfig,
    truth: Optional[GroundTruth] = None,
) -> RecoveryReport:
    """Run all three stages and assemble an evaluation report.

    Stage 2 reuses `d_main` unless `cfg.reuse_samples` is False, in which
    case `d_mlr` must be supplied. Proportions for the per-component step
    policy come from `cfg.supplied_proportions` first, then from `truth`
    when given, then from the estimated mixture weights. The permutation in
    the report is evaluation-only and never feeds back into the solver.
    """
    K = cfg.k_components
    use_split = cfg.theory_mode or not cfg.reuse_samples
    if use_split and d_mlr is None:
        raise InvalidInputError("independent stage-2 samples required when not reusing")

    with _stage("stage1"):
        y_mat = spectral.data_matrix(d_main)
        spectrum = core.svd(y_mat).s
        if cfg.supplied_r_joint is not None:
            r_joint = cfg.supplied_r_joint
        else:
            max_rank = cfg.rank_max or max(1, min(d_main.n1, d_main.n2) // 2)
            r_joint = spectral.estimate_rank(spectrum, max_rank, cfg.gap_floor)
            if r_joint == 0:
                raise InvalidInputError("data matrix spectrum is degenerate")
        sub = spectral.subspace_estimate(y_mat, r_joint)

    with _stage("stage2"):
        d_stage2 = d_mlr if use_split else d_main
        samples = compress_samples(d_stage2, sub)
        mlr = solve_mlr(
            samples, K, seed=cfg.seed,
            restarts=cfg.tensor_restarts, iters=cfg.tensor_iters,
        )
        if cfg.supplied_ranks is not None:
            ranks = list(cfg.supplied_ranks)
        else:
            s_hats = [core.unvec(b, r_joint) for b in mlr.betas]
            ranks = estimate_component_ranks(s_hats, cfg.gap_floor)
            if any(r == 0 for r in ranks):
                raise InvalidInputError(f"degenerate component spectrum, ranks {ranks}")
        factors = [lift_and_factor(mlr.betas[k], sub, ranks[k]) for k in range(K)]
        init = InitializationResult(factors=factors, mlr=mlr)

    if cfg.supplied_proportions is not None:
        proportions = list(cfg.supplied_proportions)
    elif truth is not None:
        proportions = list(truth.proportions)
    else:
        proportions = list(init.mlr.weights)
    if cfg.theory_mode and min(proportions) < 1.0 / (4.0 * K):
        warnings.warn(
            f"smallest proportion {min(proportions):.3g} is below 1/(4K); "
            "the balanced-mixture regime no longer holds",
            RuntimeWarning,
        )
    params = default_params(proportions, cfg)

    truth_mats = truth.matrices() if truth is not None else None
    init_products = [f.product() for f in init.factors]
    trace_targets: List[Optional[np.ndarray]] = [None] * K
    init_errors: List[Optional[float]] = [None] * K
    if truth_mats is not None:
        for k in range(K):
            errs = [core.rel_fro_error(init_products[k], m) for m in truth_mats]
            j = int(np.argmin(errs))
            trace_targets[k] = truth_mats[j]
            init_errors[k] = errs[j]

    def _refine(k: int):
        tgd_cfg = TgdConfig(
            eta=params[k].eta, alpha=params[k].alpha,
            t0=cfg.t0, early_stop_tol=cfg.early_stop_tol,
        )
        return run_scaledtgd(d_main, init.factors[k], tgd_cfg, truth=trace_targets[k])

    with _stage("stage3"):
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                runs = list(pool.map(_refine, range(K)))
        else:
            runs = [_refine(k) for k in range(K)]

    estimates = [run.final.product() for run in runs]
    if truth_mats is not None:
        alignment = align_components(estimates, truth_mats)
        inverse = {alignment.perm[k]: k for k in range(K)}
        rel_errors = [
            core.rel_fro_error(estimates[j], truth_mats[inverse[j]]) for j in range(K)
        ]
        dist_u = core.subspace_distance(
            sub.u, joint_basis([c.u_star for c in truth.components])
        )
        dist_v = core.subspace_distance(
            sub.v, joint_basis([c.v_star for c in truth.components])
        )
    else:
        alignment = AlignmentResult(perm=tuple(range(K)), total_cost=0.0)
        rel_errors = [None] * K
        dist_u = dist_v = None

    return RecoveryReport(
        estimates=estimates,
        permutation=alignment.perm,
        per_component=[
            ComponentReport(rel_error=rel_errors[k], init_error=init_errors[k], trace=runs[k].trace)
            for k in range(K)
        ],
        stage1=Stage1Report(r_used=r_joint, dist_u=dist_u, dist_v=dist_v),
        weights=init.mlr.weights.copy(),
    )
