import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulertvc.dsl import PerturbationSpec
from eulertvc.euler import PINNED_INITIAL, assemble_system
from eulertvc.paths import Path
from eulertvc.solver import solve_truncated
from eulertvc.transversality import (
    BoundaryTermSeries,
    classify_tvc,
    boundary_term,
    michel_series,
    tvc_series,
)

from oracles import to_sympy
import sympy as sp


@pytest.fixture
def ce_solved(counterexample):
    return solve_truncated(assemble_system(counterexample, 60)).path


def test_counterexample_boundary_term(counterexample, ce_solved):
    q = counterexample.perturbations["p"]
    assert boundary_term(counterexample, ce_solved, q, 10) == pytest.approx(1.0, abs=1e-14)


def test_counterexample_series_is_constant(counterexample, ce_solved):
    s = tvc_series(counterexample, ce_solved, counterexample.perturbations["p"], 5, 50)
    np.testing.assert_allclose(s.values, 1.0, atol=1e-14)
    v = classify_tvc(s, 1e-8)
    assert v.classification == "violated" and v.liminf_estimate == pytest.approx(1.0)


def test_zero_perturbation_series(counterexample, ce_solved):
    s = tvc_series(counterexample, ce_solved, np.zeros((ce_solved.horizon + 1, 1)), 5, 50)
    assert not s.values.any()
    assert classify_tvc(s).classification == "satisfied"


def brute_boundary(spec, values, q, T):
    """Boundary term from sympy derivatives of the last stages."""
    N = spec.order
    syms = [sp.Symbol(f"c{t}") for t in range(len(values))]
    total = 0
    for k in range(1, N):
        stages = sum(
            to_sympy(spec.utility, [[syms[s + j] for j in range(N)]], s, spec.params)
            for s in range(T - N + 1 + k, T + 1)
        )
        total += sp.diff(stages, syms[T + k]) * q[T + k]
    return float(total.subs({s: float(v) for s, v in zip(syms, values)}))


def test_series_matches_brute_force(counterexample):
    rng = np.random.default_rng(3)
    values = rng.uniform(-2, 2, size=(23, 1))
    q = rng.uniform(-1, 1, size=(23, 1))
    s = tvc_series(counterexample, values, q, 2, 20)
    want = [brute_boundary(counterexample, values[:, 0], q[:, 0], T) for T in range(2, 21)]
    np.testing.assert_allclose(s.values, want, rtol=1e-13, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(2, 15), st.integers(0, 2**32 - 1))
def test_linear_in_perturbation(a, b, T, seed):
    from eulertvc import problems

    spec = problems.load("counterexample")
    rng = np.random.default_rng(seed)
    path = rng.uniform(-2, 2, size=(T + 3, 1))
    q1, q2 = rng.uniform(-1, 1, size=(2, T + 3, 1))
    lhs = boundary_term(spec, path, a * q1 + b * q2, T)
    rhs = a * boundary_term(spec, path, q1, T) + b * boundary_term(spec, path, q2, T)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


def test_michel_counterexample_value(counterexample):
    path = Path.constant(0.625, 30)
    s = michel_series(counterexample, path, 0.5, 5, 25)
    np.testing.assert_allclose(s.values, 0.3125, atol=1e-14)


def test_michel_factors_out_alpha(counterexample, ce_solved):
    half = michel_series(counterexample, ce_solved, 0.5, 5, 40)
    quarter = michel_series(counterexample, ce_solved, 0.25, 5, 40)
    np.testing.assert_allclose(quarter.values, 0.5 * half.values, rtol=1e-14)
    own = tvc_series(counterexample, ce_solved, ce_solved.values, 5, 40)
    np.testing.assert_allclose(half.values, 0.5 * own.values, rtol=1e-14)


def test_michel_on_decaying_path(tracking):
    path = Path((0.8 ** np.arange(80.0))[:, None])
    s = michel_series(tracking, path, 0.5, 10, 70)
    assert abs(s.values[-1]) < 1e-8
    assert classify_tvc(s).classification == "satisfied"


def test_mirrored_perturbation_flips_sign(counterexample, ce_solved):
    q = counterexample.perturbations["p"]
    neg = PerturbationSpec("step", t0=q.t0, level=-q.level)
    up = tvc_series(counterexample, ce_solved, q, 5, 30)
    down = tvc_series(counterexample, ce_solved, neg, 5, 30)
    np.testing.assert_allclose(down.values, -up.values)
    v = classify_tvc(down)
    assert v.classification == "violated" and v.limsup_estimate == pytest.approx(-1.0)


def test_tracking_michel_decays_geometrically(tracking):
    path = solve_truncated(assemble_system(tracking, 70, PINNED_INITIAL)).path
    s = michel_series(tracking, path, 0.5, 10, 60, PINNED_INITIAL)
    C = abs(s.values[0]) / 0.9**10
    assert abs(s.values[-1]) <= 1e-2 * C
    v = classify_tvc(s)
    assert v.classification == "satisfied" and abs(v.liminf_estimate) <= 1e-4


def test_classify_inconclusive_on_drift():
    s = BoundaryTermSeries(tuple((t, float(t)) for t in range(5, 51)), (5, 50))
    assert classify_tvc(s).classification == "inconclusive"


def test_running_infimum():
    s = BoundaryTermSeries(((1, 3.0), (2, 1.0), (3, 2.0)), (1, 3))
    assert s.running_inf().tolist() == [1.0, 1.0, 2.0]


def test_window_must_start_after_initial_block(counterexample, ce_solved):
    with pytest.raises(ValueError):
        tvc_series(counterexample, ce_solved, counterexample.perturbations["p"], 1, 20)
