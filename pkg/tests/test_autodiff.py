import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulertvc import problems
from eulertvc.autodiff import DomainError, Dual, StageEnv, evaluate, grad_stage, partial, powi
from eulertvc.dsl import parse_expr, parse_problem

from oracles import central_difference


@pytest.fixture
def ce_env():
    spec = problems.load("counterexample")
    return spec, StageEnv(3, np.array([[0.625, 0.625, 0.625]]), spec.params)


def test_evaluate_counterexample_stage(ce_env):
    spec, env = ce_env
    assert evaluate(spec.utility, env) == pytest.approx(0.609375, abs=1e-15)


def test_partials_and_gradient(ce_env):
    spec, env = ce_env
    assert partial(spec.utility, (0, 0), env) == pytest.approx(-0.75, abs=1e-15)
    assert partial(spec.utility, (0, 1), env) == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(grad_stage(spec.utility, env), [[-0.75, 0.5, 0.25]], atol=1e-15)


def test_dual_arithmetic():
    x = Dual(2.0, 1.0)
    y = x * x - 3 / x + powi(x, 3)
    assert y.value == pytest.approx(4 - 1.5 + 8)
    assert y.deriv == pytest.approx(4 + 0.75 + 12)


def test_powi_negative_exponent():
    y = powi(Dual(2.0, 1.0), -2)
    assert y.value == pytest.approx(0.25)
    assert y.deriv == pytest.approx(-0.25)


def test_nested_dual_second_derivative():
    x = Dual(Dual(1.5, 1.0), Dual(1.0, 0.0))
    y = x * x * x
    assert y.deriv.deriv == pytest.approx(6 * 1.5)


def test_time_dependent_discount():
    spec = problems.load("discounted_tracking")
    env = StageEnv(2, np.array([[0.3, 0.4]]), spec.params)
    g = grad_stage(spec.utility, env)
    d = 0.81
    want0 = d * (-2 * (0.3 - 1.0) + 2 * 0.5 * 0.1)
    want1 = d * (-2 * 0.5 * 0.1)
    np.testing.assert_allclose(g, [[want0, want1]], rtol=1e-14)


def test_multicomponent_seeding_is_complete():
    spec = parse_problem("vars x, y\nutility U = x(t)*y(t+1) + y(t)^2 - ln(x(t+1))")
    w = np.array([[1.2, 0.8], [0.5, -0.3]])
    g = grad_stage(spec.utility, StageEnv(0, w, {}))
    np.testing.assert_allclose(g, [[-0.3, -1 / 0.8], [1.0, 1.2]], rtol=1e-14)


@pytest.mark.parametrize(
    "src, window",
    [
        ("ln(c(t))", [[-1.0]]),
        ("1/(c(t) - 1)", [[1.0]]),
        ("c(t)^0.5", [[-2.0]]),
    ],
)
def test_domain_errors(src, window):
    with pytest.raises(DomainError):
        evaluate(parse_expr(src), StageEnv(0, np.array(window), {}))


def test_domain_error_reports_time():
    spec = problems.load("ramsey")
    err = None
    try:
        partial(spec.utility, (0, 0), StageEnv(4, np.array([[0.1, 5.0]]), spec.params))
    except DomainError as exc:
        err = exc.at_time(4)
    assert err is not None and "4" in str(err)


EXPRS = [
    "exp(c(t)) * c(t+1)^3 - c(t+1)/(1 + c(t)^2)",
    "ln(2 + c(t)^2) * t - 0.3^t * c(t+1)",
    "(c(t) - c(t+1))^4 / (3 + exp(-c(t)))",
]


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(EXPRS),
    st.floats(-2, 2),
    st.floats(-2, 2),
    st.integers(0, 6),
    st.integers(0, 1),
)
def test_partials_match_central_differences(src, x0, x1, t, j):
    expr = parse_expr(src)
    env = StageEnv(t, np.array([[x0, x1]]), {})
    ad = partial(expr, (0, j), env)
    fd = central_difference(expr, (0, j), env)
    assert abs(ad - fd) <= 1e-6 * max(1.0, abs(fd))


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_gradient_is_linear_in_the_utility(a, b, x0, x1):
    f = parse_expr(EXPRS[0])
    g = parse_expr(EXPRS[2])
    combo = parse_expr(f"{a!r}*({EXPRS[0]}) + {b!r}*({EXPRS[2]})")
    env = StageEnv(1, np.array([[x0, x1]]), {})
    want = a * grad_stage(f, env) + b * grad_stage(g, env)
    got = grad_stage(combo, env)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12 * (1 + np.max(np.abs(want))))


def test_evaluate_matches_python_math():
    expr = parse_expr(EXPRS[1])
    env = StageEnv(3, np.array([[0.4, -1.1]]), {})
    assert evaluate(expr, env) == pytest.approx(math.log(2.16) * 3 - 0.3**3 * -1.1, rel=1e-15)
