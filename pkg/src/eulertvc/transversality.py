"""Transversality boundary terms along a path and their liminf/limsup on a window.

For a truncation index T' the boundary term collects the derivatives of the
last stages with respect to the variables just past the truncation,

    B(T') = sum_{k=1}^{N-1} sum_i d(U(T'-N+1+k) + ... + U(T'))/dc_i(T'+k) * q_i(T'+k).

A path passing the test has liminf B <= 0 for q and limsup B >= 0 (the
mirrored perturbation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import StageEnv, partial
from .dsl import PerturbationSpec, ProblemSpec
from .euler import FREE_INITIAL, PINNED_INITIAL
from .paths import as_values, perturbation_values

__all__ = [
    "BoundaryTermSeries",
    "TvcVerdict",
    "boundary_term",
    "tvc_series",
    "classify_tvc",
    "michel_series",
    "SATISFIED",
    "VIOLATED",
    "INCONCLUSIVE",
]

SATISFIED = "satisfied"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

DRIFT_TOL = 1e-3
ZETA_REL = 1e-8


@dataclass(frozen=True)
class BoundaryTermSeries:
    entries: tuple  # ((T', value), ...)
    window: tuple  # (T_min, T_max)

    def __post_init__(self):
        ts = [t for t, _ in self.entries]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("T' values must be strictly increasing")
        if not all(math.isfinite(v) for _, v in self.entries):
            raise ValueError("boundary terms must be finite")

    @property
    def T_values(self) -> np.ndarray:
        return np.array([t for t, _ in self.entries], dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.entries], dtype=float)

    def running_inf(self) -> np.ndarray:
        """inf over T <= T' <= T_max, indexed like the entries."""
        return np.minimum.accumulate(self.values[::-1])[::-1]

    def running_sup(self) -> np.ndarray:
        return np.maximum.accumulate(self.values[::-1])[::-1]

    def scaled(self, factor: float) -> "BoundaryTermSeries":
        return BoundaryTermSeries(tuple((t, factor * v) for t, v in self.entries), self.window)


@dataclass(frozen=True)
class TvcVerdict:
    liminf_estimate: float
    limsup_estimate: float
    classification: str
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "liminf_estimate": self.liminf_estimate,
            "limsup_estimate": self.limsup_estimate,
            "classification": self.classification,
            "evidence": self.evidence,
        }


def _pinned_times(spec: ProblemSpec, mode: str) -> tuple:
    return spec.pinned_times if mode == PINNED_INITIAL else ()


def _q_values(spec, q, horizon, path, mode):
    return perturbation_values(spec, q, horizon, path=path, pinned_times=_pinned_times(spec, mode))


def _boundary(spec: ProblemSpec, values: np.ndarray, qv: np.ndarray, T_prime: int) -> float:
    N, n = spec.order, spec.dim
    total = 0.0
    for k in range(1, N):
        target = T_prime + k
        for i in range(n):
            d = 0.0
            for s in range(max(0, T_prime - N + 1 + k), T_prime + 1):
                env = StageEnv(s, values[s : s + N].T, spec.params)
                d += partial(spec.utility, (i, target - s), env)
            total += d * qv[target, i]
    return total


def _check_extent(spec, values, T_prime):
    need = T_prime + spec.order - 1
    if values.shape[0] - 1 < need:
        raise IndexError(f"path ends at t={values.shape[0] - 1}, boundary term needs t={need}")
    if T_prime < 0:
        raise ValueError("T' must be non-negative")


def boundary_term(
    spec: ProblemSpec, path, q, T_prime: int, mode: str = FREE_INITIAL
) -> float:
    """Boundary term at ``T_prime`` for perturbation ``q`` (a spec or an array)."""
    values = as_values(path)
    _check_extent(spec, values, T_prime)
    qv = _q_values(spec, q, T_prime + spec.order - 1, values, mode)
    return _boundary(spec, values, qv, T_prime)


def tvc_series(
    spec: ProblemSpec,
    path,
    q,
    T_min: int,
    T_max: int,
    mode: str = FREE_INITIAL,
) -> BoundaryTermSeries:
    if T_min < spec.order - 1:
        raise ValueError(f"T_min must be at least N-1 = {spec.order - 1}")
    if T_max < T_min:
        raise ValueError("T_max must be >= T_min")
    values = as_values(path)
    _check_extent(spec, values, T_max)
    qv = _q_values(spec, q, T_max + spec.order - 1, values, mode)
    entries = tuple((T, _boundary(spec, values, qv, T)) for T in range(T_min, T_max + 1))
    return BoundaryTermSeries(entries, (T_min, T_max))


def classify_tvc(series: BoundaryTermSeries, threshold: Optional[float] = None) -> TvcVerdict:
    """Estimate liminf/limsup on the trailing half of the window and classify.

    The series must first have settled: the spread over its last quarter may
    not exceed 1e-3 of the largest magnitude seen, otherwise the verdict is
    inconclusive.  A settled series violates the condition when its trailing
    half stays above ``threshold`` (or below ``-threshold``) by more than its
    own spread, so a tail still decaying toward zero is not mistaken for a
    nonzero limit.  ``threshold`` defaults to 1e-8 times the largest magnitude.
    """
    vals = series.values
    if vals.size == 0:
        raise ValueError("empty series")
    Ts = series.T_values
    scale = float(np.max(np.abs(vals)))
    zeta = ZETA_REL * scale if threshold is None else float(threshold)

    half = vals[len(vals) // 2 :]
    quarter = vals[-max(1, len(vals) // 4) :]
    liminf = float(np.min(half))
    limsup = float(np.max(half))
    spread = limsup - liminf
    drift = float(np.max(quarter) - np.min(quarter))
    settled = drift <= DRIFT_TOL * scale

    if not settled:
        label = INCONCLUSIVE
    elif liminf - spread > zeta or limsup + spread < -zeta:
        label = VIOLATED
    else:
        label = SATISFIED
    evidence = {
        "window": [int(Ts[0]), int(Ts[-1])],
        "trailing_window": [int(Ts[len(vals) // 2]), int(Ts[-1])],
        "threshold": zeta,
        "trailing_spread": spread,
        "last_quarter_drift": drift,
        "max_magnitude": scale,
    }
    return TvcVerdict(liminf, limsup, label, evidence)


def michel_series(
    spec: ProblemSpec,
    path,
    alpha_bar: float,
    T_min: int,
    T_max: int,
    mode: str = FREE_INITIAL,
) -> BoundaryTermSeries:
    """Boundary series for the perturbation ``alpha_bar`` times the path itself."""
    return tvc_series(spec, path, PerturbationSpec("scaled", alpha=alpha_bar), T_min, T_max, mode)
