import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavirs.conic import ConicError, ConicProgram, residuals, solve


def lp():
    p = ConicProgram()
    x = p.var((), "x")
    p.ge(x, 1.0, name="lb")
    p.minimize(x)
    return p, x


def test_lp():
    p, x = lp()
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.value(x) == pytest.approx(1.0, abs=1e-7)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_sdp_trace():
    p = ConicProgram()
    S = p.symmetric(2)
    p.psd(S)
    p.eq(S[0, 0], 1.0)
    p.eq(S[1, 1], 1.0)
    p.minimize(S[0, 0] + S[1, 1])
    sol = solve(p)
    assert sol.objective == pytest.approx(2.0, abs=1e-7)


def test_exp_cone_log():
    p = ConicProgram()
    t = p.var((), "t")
    p.log_ge(t, 5.0)
    p.maximize(t)
    sol = solve(p)
    assert sol.value(t) == pytest.approx(math.log(5.0), abs=1e-7)


def test_socp_and_rsoc():
    p = ConicProgram()
    t = p.var((), "t")
    p.soc(t, [3.0, 4.0])
    p.minimize(t)
    assert solve(p).objective == pytest.approx(5.0, abs=1e-7)
    p = ConicProgram()
    y = p.var((), "y")
    p.rsoc(y, 2.0, [3.0])  # 9 <= 2 y
    p.minimize(y)
    assert solve(p).objective == pytest.approx(4.5, abs=1e-7)


def test_hermitian_sdp():
    """max Re(V01) over 2x2 Hermitian PSD with unit diagonal is 1."""
    p = ConicProgram()
    V = p.hermitian_psd(2)
    p.eq(V.re[0, 0], 1.0)
    p.eq(V.re[1, 1], 1.0)
    H = np.array([[0, 0.5j], [-0.5j, 0]])  # Re Tr(H V) = Im(V01)
    p.maximize(V.inner(H))
    sol = solve(p)
    assert -sol.objective == pytest.approx(1.0, abs=1e-7)
    Vv = V.value(sol.x)
    assert abs(Vv[0, 1]) == pytest.approx(1.0, abs=1e-6)


def test_status_reporting():
    p = ConicProgram()
    x = p.var((), "x")
    p.ge(x, 1.0)
    p.le(x, 0.0)
    p.minimize(x)
    assert solve(p).status == "infeasible"
    p = ConicProgram()
    x = p.var((), "x")
    p.minimize(x)
    assert solve(p).status == "unbounded"


def test_residuals():
    p, x = lp()
    assert all(r.violation <= 1e-9 for r in residuals(p, np.array([2.0])))
    assert residuals(p, np.array([0.0]))[0].violation == pytest.approx(1.0)
    q = ConicProgram()
    S = q.symmetric(2)
    q.psd(S)
    v = np.array([1.0, 2.0])
    point = np.array([1.0, 2.0, 4.0])  # vv^T in upper-triangular declaration order
    assert residuals(q, point)[0].violation == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(np.outer(v, v)[np.triu_indices(2)], point)
    with pytest.raises(ConicError):
        residuals(p, np.zeros(3))


def test_undeclared_variable_rejected():
    p = ConicProgram()
    other = ConicProgram()
    other.var(3)
    with pytest.raises(ConicError):
        p.ge(other.var((), "z"), 0.0)


def test_text_dump():
    p, _ = lp()
    text = p.to_text()
    assert text.startswith("conic-program 1\nvariables 1\n")
    assert "cone nonneg lb 1" in text and text.endswith("end\n")


@given(st.floats(-10, 10), st.floats(0.1, 10))
def test_lp_box_optimum(c, ub):
    p = ConicProgram()
    x = p.var((), "x")
    p.le(x, ub)
    p.ge(x, -ub)
    p.minimize(c * x)
    sol = solve(p)
    assert sol.objective == pytest.approx(-abs(c) * ub, abs=1e-7 * max(1, abs(c) * ub))
