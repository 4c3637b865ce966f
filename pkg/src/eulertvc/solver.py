"""Damped Newton solution of the truncated Euler system and steady states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .autodiff import Dual, DomainError, compile_expr
from .dsl import ProblemSpec
from .euler import PINNED_INITIAL, EulerSystem
from .paths import Path, as_values, window

__all__ = [
    "SolverError",
    "ConvergenceError",
    "SingularJacobianError",
    "SolveOptions",
    "SolveReport",
    "steady_state",
    "solve_truncated",
    "stage_hessian",
]

STEADY_CLAMP = "steady-state-clamp"
REPLICATE_LAST = "replicate-last"


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    pass


class SingularJacobianError(SolverError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 100
    residual_tolerance: float = 1e-10
    backtrack: float = 0.5
    min_step: float = 1e-6
    tail_policy: str = STEADY_CLAMP
    initial_guess: Union[None, float, Path, np.ndarray] = None

    def __post_init__(self):
        if not self.residual_tolerance > 0:
            raise ValueError("residual_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tail_policy not in (STEADY_CLAMP, REPLICATE_LAST):
            raise ValueError(f"unknown tail policy {self.tail_policy!r}")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual_norm: float
    path: Path
    tail_policy: str = STEADY_CLAMP
    steady_state: Optional[np.ndarray] = None
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual_norm": self.final_residual_norm,
            "tail_policy": self.tail_policy,
            "steady_state": None if self.steady_state is None else self.steady_state.tolist(),
        }


# --------------------------------------------------------------------------
# Second derivatives through a nested dual pass


def stage_hessian(fn, win: list, t: int, params) -> tuple[np.ndarray, np.ndarray]:
    """Gradient (n*N) and Hessian (n*N x n*N) of one stage, slots flattened (i, j) -> i*N + j."""
    n = len(win)
    order = len(win[0])
    size = n * order
    grad = np.zeros(size)
    hess = np.zeros((size, size))
    flat = [x for row in win for x in row]
    for a in range(size):
        for b in range(a, size):
            w = [[float(x) for x in row] for row in win]
            for k in range(size):
                inner = 1.0 if k == a else 0.0
                outer = 1.0 if k == b else 0.0
                if inner or outer:
                    w[k // order][k % order] = Dual(Dual(flat[k], inner), Dual(outer, 0.0))
            r = fn(w, t, params)
            if isinstance(r, Dual):
                d2 = r.deriv.deriv if isinstance(r.deriv, Dual) else 0.0
                if a == b:
                    grad[a] = r.value.deriv if isinstance(r.value, Dual) else 0.0
            else:
                d2 = 0.0
            hess[a, b] = hess[b, a] = d2
    return grad, hess


# --------------------------------------------------------------------------
# Steady state


def _stationary(spec: ProblemSpec, cbar: np.ndarray, t0: int, with_jac: bool):
    """Euler row at ``t0`` on the constant path c = cbar, and d/dcbar of it."""
    fn = compile_expr(spec.utility)
    n, N = spec.dim, spec.order
    res = np.zeros(n)
    jac = np.zeros((n, n))
    for j in range(N):
        s = t0 - j
        base = [[float(cbar[i])] * N for i in range(n)]
        for i in range(n):
            if not with_jac:
                w = [row[:] for row in base]
                w[i][j] = Dual(base[i][j], 1.0)
                r = fn(w, s, spec.params)
                res[i] += r.deriv if isinstance(r, Dual) else 0.0
                continue
            for k in range(n):
                # inner seed on slot (i, j); outer seed on every lag of component k
                w = [row[:] for row in base]
                for i2 in range(n):
                    for l in range(N):
                        inner = 1.0 if (i2, l) == (i, j) else 0.0
                        outer = 1.0 if i2 == k else 0.0
                        if inner or outer:
                            w[i2][l] = Dual(Dual(base[i2][l], inner), Dual(outer, 0.0))
                r = fn(w, s, spec.params)
                if not isinstance(r, Dual):
                    continue
                if k == 0:
                    res[i] += r.value.deriv if isinstance(r.value, Dual) else 0.0
                jac[i, k] += r.deriv.deriv if isinstance(r.deriv, Dual) else 0.0
    return res, jac


_GUESSES = (0.5, 1.0, 0.1, 0.0, 2.0, -1.0, 10.0)


def steady_state(
    spec: ProblemSpec,
    guess: Optional[Sequence[float]] = None,
    tol: float = 1e-12,
    max_iterations: int = 100,
) -> np.ndarray:
    """Constant vector zeroing the stationary Euler row.

    The row is taken at t0 = N-1, so a multiplicative ``delta^t`` factor only
    rescales it.  The solution is rejected unless the row also vanishes at
    later times, i.e. the utility really is stationary up to such a factor.
    """
    n, N = spec.dim, spec.order
    if guess is None:
        last: Exception = ConvergenceError("no starting point tried")
        for g in _GUESSES:
            try:
                return steady_state(spec, [g] * n, tol, max_iterations)
            except (SolverError, DomainError) as exc:
                last = exc
        raise ConvergenceError(f"steady state not found from default guesses: {last}")

    x = np.array(guess, dtype=float).reshape(n)
    t0 = N - 1
    res, jac = _stationary(spec, x, t0, True)
    for _ in range(max_iterations):
        norm = np.max(np.abs(res))
        if norm <= 0.01 * tol:
            break
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("singular Jacobian in steady-state iteration") from None
        lam = 1.0
        while True:
            trial = x + lam * step
            try:
                r_trial, j_trial = _stationary(spec, trial, t0, True)
                ok = np.all(np.isfinite(r_trial)) and np.max(np.abs(r_trial)) < norm
            except DomainError:
                ok = False
            if ok:
                break
            lam *= 0.5
            if lam < 1e-10:
                break
        if not ok:
            break
        if np.max(np.abs(trial - x)) <= 1e-16 * max(1.0, np.max(np.abs(x))):
            x, res, jac = trial, r_trial, j_trial
            break
        x, res, jac = trial, r_trial, j_trial
    if not np.max(np.abs(res)) <= tol:
        raise ConvergenceError(
            f"steady-state residual {np.max(np.abs(res)):.3e} above tolerance {tol:g}"
        )
    for later in (t0 + 1, t0 + 7):
        r_later, _ = _stationary(spec, x, later, False)
        scale = max(1.0, float(np.max(np.abs(res))))
        if np.max(np.abs(r_later)) > 1e3 * tol * scale and not np.allclose(
            r_later, 0.0, atol=1e-9
        ):
            raise ConvergenceError("utility is not stationary; no time-invariant steady state")
    return x


# --------------------------------------------------------------------------
# Truncated system


def _initial_values(system: EulerSystem, opts: SolveOptions, cbar) -> np.ndarray:
    spec = system.spec
    H, n = system.horizon, spec.dim
    guess = opts.initial_guess
    if guess is None:
        values = np.tile(cbar if cbar is not None else np.ones(n), (H + 1, 1))
    elif isinstance(guess, (int, float)):
        values = np.full((H + 1, n), float(guess))
    else:
        g = as_values(guess)
        if g.shape[1] != n:
            raise ValueError(f"initial guess has {g.shape[1]} components, expected {n}")
        values = np.empty((H + 1, n))
        k = min(H + 1, g.shape[0])
        values[:k] = g[:k]
        values[k:] = g[k - 1]
    if system.mode == PINNED_INITIAL:
        for t, i, v in spec.pinned_initial:
            values[t, i] = v
    return values


class _Assembler:
    """Residual and banded Jacobian of an EulerSystem over a full value array."""

    def __init__(self, system: EulerSystem, tail_policy: str, cbar):
        self.system = system
        self.spec = system.spec
        self.fn = compile_expr(system.spec.utility)
        self.tail_policy = tail_policy
        self.cbar = cbar
        self.first = system.row_times[0]
        self.T = system.T_prime

    def unknown_time(self, u: int) -> Optional[int]:
        if u < self.first:
            return None
        if u > self.T:
            return self.T if self.tail_policy == REPLICATE_LAST else None
        return u

    def fill(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        n = self.spec.dim
        out = values.copy()
        out[self.first : self.T + 1] = x.reshape(-1, n)
        if self.tail_policy == REPLICATE_LAST:
            out[self.T + 1 :] = out[self.T]
        else:
            out[self.T + 1 :] = self.cbar
        return out

    def residual(self, values: np.ndarray) -> np.ndarray:
        spec, N, n = self.spec, self.spec.order, self.spec.dim
        res = np.zeros((self.T - self.first + 1, n))
        for s in range(0, self.T + 1):
            base = window(values, s, N)
            for j in range(N):
                t = s + j
                if t < self.first or t > self.T:
                    continue
                for i in range(n):
                    w = [row[:] for row in base]
                    w[i][j] = Dual(w[i][j], 1.0)
                    try:
                        r = self.fn(w, s, spec.params)
                    except DomainError as exc:
                        raise exc.at_time(s) from None
                    res[t - self.first, i] += r.deriv if isinstance(r, Dual) else 0.0
        return res.ravel()

    def jacobian_banded(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Residual and Jacobian in LAPACK band storage (bandwidth nN-1 each side)."""
        spec, N, n = self.spec, self.spec.order, self.spec.dim
        m = self.system.m
        bw = n * N - 1
        ab = np.zeros((2 * bw + 1, m))
        res = np.zeros(m)
        for s in range(0, self.T + 1):
            try:
                grad, hess = stage_hessian(self.fn, window(values, s, N), s, spec.params)
            except DomainError as exc:
                raise exc.at_time(s) from None
            for a in range(n * N):
                i, j = divmod(a, N)
                t = s + j
                if t < self.first or t > self.T:
                    continue
                row = (t - self.first) * n + i
                res[row] += grad[a]
                for b in range(n * N):
                    k, l = divmod(b, N)
                    u = self.unknown_time(s + l)
                    if u is None:
                        continue
                    col = (u - self.first) * n + k
                    ab[bw + row - col, col] += hess[a, b]
        return res, ab


def solve_truncated(system: EulerSystem, opts: SolveOptions = SolveOptions()) -> SolveReport:
    """Newton iteration with backtracking on the residual max-norm.

    Returns a report with ``converged=False`` when the iteration budget runs out
    or the step length falls below ``opts.min_step``.  A singular Jacobian
    raises :class:`SingularJacobianError`.
    """
    spec = system.spec
    guesses = [None]
    if isinstance(opts.initial_guess, (int, float)):
        guesses.insert(0, [float(opts.initial_guess)] * spec.dim)
    cbar = None
    for g in guesses:
        try:
            cbar = steady_state(spec, g)
            break
        except (SolverError, DomainError):
            continue
    policy = opts.tail_policy
    if policy == STEADY_CLAMP and cbar is None:
        policy = REPLICATE_LAST

    asm = _Assembler(system, policy, cbar)
    values = _initial_values(system, opts, cbar)
    x = values[asm.first : system.T_prime + 1].ravel().copy()
    values = asm.fill(values, x)
    bw = system.bandwidth

    res, ab = asm.jacobian_banded(values)
    norm = float(np.max(np.abs(res))) if res.size else 0.0
    history = [norm]
    it = 0
    converged = norm <= opts.residual_tolerance
    while not converged and it < opts.max_iterations:
        it += 1
        try:
            step = solve_banded((bw, bw), ab, -res)
        except (LinAlgError, ValueError) as exc:
            raise SingularJacobianError(f"singular banded Jacobian at iteration {it}: {exc}") from None
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError(f"singular banded Jacobian at iteration {it}")
        lam = 1.0
        accepted = False
        while lam >= opts.min_step:
            x_trial = x + lam * step
            v_trial = asm.fill(values, x_trial)
            try:
                r_trial = asm.residual(v_trial)
                n_trial = float(np.max(np.abs(r_trial)))
            except DomainError:
                n_trial = math.inf
            if np.isfinite(n_trial) and n_trial < norm:
                accepted = True
                break
            lam *= opts.backtrack
        if not accepted:
            break
        x, values = x_trial, v_trial
        res, ab = asm.jacobian_banded(values)
        norm = float(np.max(np.abs(res)))
        history.append(norm)
        converged = norm <= opts.residual_tolerance

    return SolveReport(
        converged=converged,
        iterations=it,
        final_residual_norm=norm,
        path=Path(values),
        tail_policy=policy,
        steady_state=cbar,
        history=history,
    )
