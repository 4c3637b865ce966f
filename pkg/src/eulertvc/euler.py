"""Euler rows of the order-N problem and the summation-by-parts identity.

Every row is written in the unified form

    E_i(t) = d/dc_i(t) [U(max(0, t-N+1)) + ... + U(t)],

which gives the short boundary rows for t < N-1 and the full N-stage rows
afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Dual, DomainError, compile_expr
from .dsl import PerturbationSpec, ProblemSpec
from .paths import PathLike, as_values, perturbation_values, window

__all__ = [
    "FREE_INITIAL",
    "PINNED_INITIAL",
    "EulerSystem",
    "stage_gradients",
    "euler_residual",
    "euler_rows",
    "assemble_system",
    "directional_derivative_identity",
]

FREE_INITIAL = "free-initial"
PINNED_INITIAL = "pinned-initial"
MODES = (FREE_INITIAL, PINNED_INITIAL)


def stage_gradients(spec: ProblemSpec, values: np.ndarray, stages) -> dict:
    """Map stage s -> n x N array of dU(s)/dc_i(s+j) along ``values``."""
    fn = compile_expr(spec.utility)
    n, order = spec.dim, spec.order
    out = {}
    for s in stages:
        base = window(values, s, order)
        g = np.zeros((n, order))
        for i in range(n):
            for j in range(order):
                w = [row[:] for row in base]
                w[i][j] = Dual(w[i][j], 1.0)
                try:
                    r = fn(w, s, spec.params)
                except DomainError as exc:
                    raise exc.at_time(s) from None
                g[i, j] = r.deriv if isinstance(r, Dual) else 0.0
        out[s] = g
    return out


def _check_window(spec: ProblemSpec, values: np.ndarray, last_stage: int):
    need = last_stage + spec.order - 1
    if values.shape[1] != spec.dim:
        raise ValueError(f"path has {values.shape[1]} components, problem has {spec.dim}")
    if values.shape[0] - 1 < need:
        raise IndexError(
            f"window out of range: stage {last_stage} needs c up to t={need}, "
            f"path ends at t={values.shape[0] - 1}"
        )


def euler_residual(spec: ProblemSpec, path: PathLike, t: int) -> np.ndarray:
    """Euler row at time ``t`` (length-n vector)."""
    values = as_values(path)
    if t < 0:
        raise IndexError("time index must be non-negative")
    _check_window(spec, values, t)
    first = max(0, t - spec.order + 1)
    grads = stage_gradients(spec, values, range(first, t + 1))
    return sum(grads[s][:, t - s] for s in range(first, t + 1))


def euler_rows(spec: ProblemSpec, path: PathLike, times) -> np.ndarray:
    """Stack of Euler rows for ``times`` (shape len(times) x n), sharing stage work."""
    values = as_values(path)
    times = list(times)
    if not times:
        return np.zeros((0, spec.dim))
    _check_window(spec, values, max(times))
    stages = sorted({s for t in times for s in range(max(0, t - spec.order + 1), t + 1)})
    grads = stage_gradients(spec, values, stages)
    rows = np.zeros((len(times), spec.dim))
    for k, t in enumerate(times):
        for s in range(max(0, t - spec.order + 1), t + 1):
            rows[k] += grads[s][:, t - s]
    return rows


@dataclass(frozen=True)
class EulerSystem:
    """Truncated Euler system on rows ``row_times`` with unknown c at the same times.

    Unknowns are ordered time-major, then component.
    """

    spec: ProblemSpec
    T_prime: int
    mode: str
    row_times: tuple
    index: dict = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.row_times) * self.spec.dim

    @property
    def horizon(self) -> int:
        """Last time index referenced by the rows, T' + N - 1."""
        return self.T_prime + self.spec.order - 1

    @property
    def bandwidth(self) -> int:
        return self.spec.dim * self.spec.order - 1

    def unknown_index(self, t: int, i: int) -> int:
        return self.index[(t, i)]

    def residual(self, path: PathLike) -> np.ndarray:
        """Flat residual vector (length m) at ``path``."""
        return euler_rows(self.spec, path, self.row_times).ravel()


def assemble_system(spec: ProblemSpec, T_prime: int, mode: str = FREE_INITIAL) -> EulerSystem:
    N = spec.order
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if T_prime < N - 1:
        raise ValueError(f"T' = {T_prime} must be at least N-1 = {N - 1}")
    if mode == PINNED_INITIAL:
        if not spec.pins_complete():
            have = {(t, i) for t, i, _ in spec.pinned_initial}
            missing = [
                f"{spec.var_names[i]}({t})"
                for t in range(N - 1)
                for i in range(spec.dim)
                if (t, i) not in have
            ]
            raise ValueError("pinned-initial mode needs init values for " + ", ".join(missing))
        first = N - 1
    else:
        first = 0
    times = tuple(range(first, T_prime + 1))
    index = {(t, i): k * spec.dim + i for k, t in enumerate(times) for i in range(spec.dim)}
    return EulerSystem(spec=spec, T_prime=T_prime, mode=mode, row_times=times, index=index)


def directional_derivative_identity(
    spec: ProblemSpec,
    path: PathLike,
    q,
    T_prime: int,
) -> tuple[float, float]:
    """Both sides of the regrouped directional-derivative sum up to ``T_prime``.

    ``lhs`` sums dU(t)/dc_i(t+j) * q_i(t+j) stage by stage; ``rhs`` weights
    the Euler rows by q(t) for t <= T' and adds the tail groups in
    q(T'+1)..q(T'+N-1).
    """
    N, n = spec.order, spec.dim
    values = as_values(path)
    H = T_prime + N - 1
    _check_window(spec, values, T_prime)
    if isinstance(q, PerturbationSpec):
        qv = perturbation_values(spec, q, H, path=values)
    else:
        qv = as_values(q)
        if qv.shape[0] - 1 < H or qv.shape[1] != n:
            raise ValueError(f"perturbation must be at least {H + 1} x {n}, got {qv.shape}")
    grads = stage_gradients(spec, values, range(T_prime + 1))

    lhs = 0.0
    for t in range(T_prime + 1):
        lhs += float(np.sum(grads[t] * qv[t : t + N].T))

    rhs = 0.0
    for t in range(T_prime + 1):
        row = np.zeros(n)
        for s in range(max(0, t - N + 1), t + 1):
            row += grads[s][:, t - s]
        rhs += float(row @ qv[t])
    for k in range(1, N):
        tail = np.zeros(n)
        for s in range(max(0, T_prime - N + 1 + k), T_prime + 1):
            tail += grads[s][:, T_prime + k - s]
        rhs += float(tail @ qv[T_prime + k])
    return lhs, rhs
