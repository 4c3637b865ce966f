"""Difference quotients A(T', eps), their iterated limits, and path overtaking.

``A(T', eps) = (1/eps) * sum_{t<=T'} [U(c + eps q) - U(c)]`` sampled on a grid.
When both iterated limits (eps then T, T then eps) exist and agree and the
columns settle together, the limits may be interchanged; the undiscounted
order-3 counterexample has one limit infinite and the other finite.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import DomainError, compile_expr, real_part
from .dsl import ProblemSpec
from .euler import FREE_INITIAL, PINNED_INITIAL, stage_gradients
from .paths import as_values, perturbation_values, window

__all__ = [
    "DEFAULT_EPS",
    "DEFAULT_T_AXIS",
    "EPS_FLOOR",
    "DiagGrid",
    "AssumptionVerdict",
    "OvertakingComparison",
    "stage_differences",
    "objective_diff_sum",
    "v_eps_T",
    "build_a_grid",
    "assess_assumptions",
    "overtaking_compare",
    "UNIFORM",
    "NON_UNIFORM",
    "INCONCLUSIVE",
]

DEFAULT_EPS = (1e-1, 1e-2, 1e-3, 1e-4)
DEFAULT_T_AXIS = (10, 20, 40, 80, 160, 320, 640)
EPS_FLOOR = 1e-8

UNIFORM = "uniform"
NON_UNIFORM = "non-uniform"
INCONCLUSIVE = "inconclusive"

# trailing increment ratio at or above which a monotone sequence is read as divergent
_NON_DECAY_RATIO = 0.9
_GROWTH_FACTOR = 10.0
_NOISE = 1e-8


def _pinned(spec, mode):
    return spec.pinned_times if mode == PINNED_INITIAL else ()


def stage_differences(
    spec: ProblemSpec, values: np.ndarray, qv: np.ndarray, eps: float, upto: int
) -> np.ndarray:
    """U(c + eps q) - U(c) at each stage t = 0..upto."""
    fn = compile_expr(spec.utility)
    N = spec.order
    shifted = values + eps * qv[: values.shape[0]]
    out = np.empty(upto + 1)
    for t in range(upto + 1):
        try:
            hi = fn(window(shifted, t, N), t, spec.params)
            lo = fn(window(values, t, N), t, spec.params)
        except DomainError as exc:
            raise exc.at_time(t) from None
        out[t] = real_part(hi) - real_part(lo)
    return out


def _prepare(spec, path, q, T_last, mode):
    values = as_values(path)
    H = T_last + spec.order - 1
    if values.shape[0] - 1 < H:
        raise IndexError(f"path ends at t={values.shape[0] - 1}, need t={H}")
    values = values[: H + 1]
    qv = perturbation_values(spec, q, H, path=values, pinned_times=_pinned(spec, mode))
    return values, qv


def objective_diff_sum(
    spec: ProblemSpec, path, q, eps: float, T_prime: int, mode: str = FREE_INITIAL
) -> float:
    """sum_{t=0}^{T'} [U(c + eps q) - U(c)] without the 1/eps factor."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    values, qv = _prepare(spec, path, q, T_prime, mode)
    return float(np.sum(stage_differences(spec, values, qv, eps, T_prime)))


def v_eps_T(
    spec: ProblemSpec, path, q, eps: float, T: int, T_max: int, mode: str = FREE_INITIAL
) -> float:
    """min over T <= T' <= T_max of the objective difference sum."""
    if T > T_max:
        raise ValueError("T must not exceed T_max")
    if not eps > 0:
        raise ValueError("eps must be positive")
    values, qv = _prepare(spec, path, q, T_max, mode)
    partial_sums = np.cumsum(stage_differences(spec, values, qv, eps, T_max))
    return float(np.min(partial_sums[T:]))


@dataclass(frozen=True)
class DiagGrid:
    """``A[k, m]`` is A(T_values[k], eps_values[m])."""

    eps_values: tuple
    T_values: tuple
    A: np.ndarray
    exact_columns: tuple = ()  # eps values replaced by the exact directional derivative

    def __post_init__(self):
        if self.A.shape != (len(self.T_values), len(self.eps_values)):
            raise ValueError("grid shape does not match its axes")
        if not np.all(np.isfinite(self.A)):
            raise ValueError("grid has non-finite entries")

    def column(self, eps: float) -> np.ndarray:
        return self.A[:, self.eps_values.index(eps)]


def build_a_grid(
    spec: ProblemSpec,
    path,
    q,
    eps_values: Sequence[float] = DEFAULT_EPS,
    T_values: Sequence[int] = DEFAULT_T_AXIS,
    mode: str = FREE_INITIAL,
    threads: int = 1,
) -> DiagGrid:
    """Fill the A grid column by column from cumulative stage differences.

    Columns with eps below ``EPS_FLOOR`` hold the exact directional derivative
    sums instead of a difference quotient and are listed in ``exact_columns``.
    """
    eps_values = tuple(float(e) for e in eps_values)
    T_values = tuple(int(t) for t in T_values)
    if not eps_values or not T_values:
        raise ValueError("grid axes must be non-empty")
    if any(e <= 0 for e in eps_values) or any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError("eps values must be positive and strictly decreasing")
    if T_values[0] < 0 or any(b <= a for a, b in zip(T_values, T_values[1:])):
        raise ValueError("T values must be non-negative and strictly increasing")
    T_last = T_values[-1]
    values, qv = _prepare(spec, path, q, T_last, mode)
    idx = np.array(T_values)

    def directional():
        N = spec.order
        grads = stage_gradients(spec, values, range(T_last + 1))
        d = np.array([np.sum(grads[t] * qv[t : t + N].T) for t in range(T_last + 1)])
        return np.cumsum(d)[idx]

    def column(eps):
        if eps < EPS_FLOOR:
            return directional()
        return np.cumsum(stage_differences(spec, values, qv, eps, T_last))[idx] / eps

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(column, eps_values))
    else:
        cols = [column(e) for e in eps_values]
    exact = tuple(e for e in eps_values if e < EPS_FLOOR)
    return DiagGrid(eps_values, T_values, np.column_stack(cols), exact)


# --------------------------------------------------------------------------
# Iterated limits


@dataclass(frozen=True)
class AssumptionVerdict:
    L1: float  # lim_{eps->0} lim_{T->inf}; +-inf when divergent
    L2: float  # lim_{T->inf} lim_{eps->0}
    uniformity_defect: tuple  # ((T, max_eps |A(T,eps) - A(T_max,eps)|), ...)
    classification: str
    tol: float
    column_limits: tuple = ()
    row_limits: tuple = ()
    details: dict = field(default_factory=dict)

    @property
    def l1_divergent(self) -> bool:
        return math.isinf(self.L1)

    @property
    def l2_divergent(self) -> bool:
        return math.isinf(self.L2)

    def to_dict(self) -> dict:
        def enc(x):
            return "divergent" if math.isinf(x) else x

        return {
            "L1": enc(self.L1),
            "L2": enc(self.L2),
            "uniformity_defect": [[t, d] for t, d in self.uniformity_defect],
            "classification": self.classification,
            "tol": self.tol,
            "column_limits": [enc(x) for x in self.column_limits],
            "row_limits": [enc(x) for x in self.row_limits],
            "details": self.details,
            "reading": "uniform-in-eps convergence of A(T, eps) as T grows",
        }


def _limit_along(seq: np.ndarray) -> float:
    """Limit of a sampled sequence: +-inf if it keeps growing, else an extrapolated value.

    A sequence is divergent when it is strictly monotone over the window and
    its increments are not decaying (last/previous ratio >= 0.9), or it grows
    by 10x while its increments are not shrinking fast.  Otherwise the tail is
    extrapolated as a geometric series of increments.
    """
    seq = np.asarray(seq, dtype=float)
    if seq.size < 3:
        return float(seq[-1])
    d = np.diff(seq)
    # difference quotients at small eps carry ~1e-10 relative rounding
    noise = _NOISE * max(1.0, float(np.max(np.abs(seq))))
    if np.all(np.abs(d) <= noise):
        return float(seq[-1])
    increasing = np.all(d > noise)
    decreasing = np.all(d < -noise)
    if increasing or decreasing:
        ratio = abs(d[-1]) / abs(d[-2])
        grew = abs(seq[-1]) > _GROWTH_FACTOR * abs(seq[0]) and ratio >= 0.5
        if ratio >= _NON_DECAY_RATIO or grew:
            return math.inf if increasing else -math.inf
    if d[-2] != 0.0:
        r = d[-1] / d[-2]
        if abs(r) < _NON_DECAY_RATIO:
            return float(seq[-1] + d[-1] * r / (1.0 - r))
    return float(seq[-1])


def _to_zero_eps(eps: Sequence[float], vals: Sequence[float]) -> float:
    """Linear extrapolation to eps -> 0 from the two smallest eps samples."""
    e1, e2 = eps[-1], eps[-2]
    v1, v2 = vals[-1], vals[-2]
    if math.isinf(v1) or math.isinf(v2):
        return v1 if math.isinf(v1) else v2
    return float(v1 - e1 * (v2 - v1) / (e2 - e1))


def assess_assumptions(grid: DiagGrid, tol: float = 1e-4) -> AssumptionVerdict:
    """Estimate both iterated limits and classify uniform convergence.

    ``L1`` takes each eps column to its T-limit, then extrapolates to eps -> 0;
    ``L2`` extrapolates each T row to eps -> 0, then takes the T-limit.
    Divergence of the smallest-eps column makes L1 divergent.
    """
    eps, Ts, A = grid.eps_values, grid.T_values, grid.A
    if len(eps) < 4 or len(Ts) < 4:
        raise ValueError("grid too small: need at least 4 values on each axis")
    if eps[0] / eps[-1] < 100.0 - 1e-9:
        raise ValueError("grid too small: eps axis must span at least two decades")
    if Ts[0] > 0 and Ts[-1] / Ts[0] < 4.0:
        raise ValueError("grid too small: T axis must span a factor of 4")

    col_limits = tuple(_limit_along(A[:, m]) for m in range(len(eps)))
    if math.isinf(col_limits[-1]):
        L1 = col_limits[-1]
    else:
        L1 = _to_zero_eps(eps, col_limits)

    row_limits = tuple(_to_zero_eps(eps, A[k, :]) for k in range(len(Ts)))
    L2 = _limit_along(np.array(row_limits))

    defect = tuple((int(T), float(np.max(np.abs(A[k, :] - A[-1, :])))) for k, T in enumerate(Ts))
    settled = defect[-2][1] <= tol

    if math.isinf(L1) and math.isinf(L2):
        label = INCONCLUSIVE
    elif math.isinf(L1) or math.isinf(L2):
        label = NON_UNIFORM
    elif abs(L1 - L2) > tol:
        label = NON_UNIFORM
    elif settled:
        label = UNIFORM
    else:
        label = INCONCLUSIVE

    growth = [
        float(A[-1, m] / A[0, m]) if A[0, m] != 0 else math.nan for m in range(len(eps))
    ]
    details = {
        "eps_values": list(eps),
        "T_values": list(Ts),
        "column_growth_last_over_first": [g if math.isfinite(g) else None for g in growth],
        "exact_columns": list(grid.exact_columns),
    }
    return AssumptionVerdict(L1, L2, defect, label, tol, col_limits, row_limits, details)


# --------------------------------------------------------------------------
# Overtaking


@dataclass(frozen=True)
class OvertakingComparison:
    T_values: np.ndarray
    D: np.ndarray  # D(T') = sum_{t<=T'} [U along A - U along B]
    verdict: str  # "A-overtakes-B" | "B-overtakes-A" | "incomparable"
    margin: float


def overtaking_compare(
    spec: ProblemSpec,
    pathA,
    pathB,
    T_max: int,
    margin: Optional[float] = None,
    pinned_times: Sequence[int] = (),
) -> OvertakingComparison:
    """Partial-sum comparison of two paths on 0..T_max.

    A overtakes B when D stays at or above ``margin`` over the trailing half of
    the window (symmetrically for B).  ``margin`` defaults to 1e-9 times
    max(1, max |D|).
    """
    a, b = as_values(pathA), as_values(pathB)
    N = spec.order
    for name, v in (("first", a), ("second", b)):
        if v.shape[0] - 1 < T_max + N - 1:
            raise IndexError(f"{name} path ends at t={v.shape[0] - 1}, need t={T_max + N - 1}")
    for t in pinned_times:
        if not np.array_equal(a[t], b[t]):
            raise ValueError(f"paths differ at pinned time t={t}")
    fn = compile_expr(spec.utility)
    diffs = np.empty(T_max + 1)
    for t in range(T_max + 1):
        try:
            ua = real_part(fn(window(a, t, N), t, spec.params))
            ub = real_part(fn(window(b, t, N), t, spec.params))
        except DomainError as exc:
            raise exc.at_time(t) from None
        diffs[t] = ua - ub
    D = np.cumsum(diffs)
    if margin is None:
        margin = 1e-9 * max(1.0, float(np.max(np.abs(D))))
    tail = D[(T_max + 1) // 2 :]
    if np.all(tail >= margin):
        verdict = "A-overtakes-B"
    elif np.all(tail <= -margin):
        verdict = "B-overtakes-A"
    else:
        verdict = "incomparable"
    return OvertakingComparison(np.arange(T_max + 1), D, verdict, margin)
