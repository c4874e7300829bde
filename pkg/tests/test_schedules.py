import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from holonome.schedules import (
    T_D, Schedule, adiabatic_metrics, bump_normalization, diabatic_error_linear_tau,
    diabatic_error_numeric, evaluate, slowdown_for_average, windowed_delta,
)


def test_boundaries():
    assert evaluate(Schedule("linear", 2.0), 0.0) == pytest.approx((1.0, 0.0))
    f, g = evaluate(Schedule("trig", 3.0), 3.0)
    assert abs(f) < 1e-15 and g == pytest.approx(1.0)
    s = Schedule("bump", 4.0)
    assert float(s.tau(2.0)) == pytest.approx(2.0, abs=1e-12)


def test_out_of_range_time():
    with pytest.raises(ValueError):
        evaluate(Schedule("linear", 1.0), 1.5)
    with pytest.raises(ValueError):
        Schedule("cubic")


def test_bump_normalization_matches_scipy():
    from scipy.integrate import quad
    ref = quad(lambda x: math.exp(-1 / math.sin(math.pi * x)) if 0 < x < 1 else 0.0, 0, 1,
               epsabs=0, epsrel=1e-13, limit=200)[0]
    assert bump_normalization() == pytest.approx(ref, rel=1e-10)


def test_bump_flat_at_endpoints():
    s = Schedule("bump", 1.0)
    h = 1e-3
    for t0 in (0.0, 1.0):
        assert abs(float(s.dtau(t0))) < 1e-10
        d2 = (float(s.dtau(min(t0 + h, 1.0))) - float(s.dtau(max(t0 - h, 0.0)))) / h
        assert abs(d2) < 1e-10


def test_trig_gap_constant():
    m = adiabatic_metrics(Schedule("trig", 10.0), 0.0)
    assert m.gap_min == pytest.approx(2.0, abs=1e-9)


def test_linear_gap_min():
    m = adiabatic_metrics(Schedule("linear", 10.0), np.pi / 4)
    assert m.gap_min == pytest.approx(math.sqrt(2), rel=1e-6)


def test_ratio_halves_when_T_doubles():
    a = adiabatic_metrics(Schedule("linear", 10.0), 0.0).ratio
    b = adiabatic_metrics(Schedule("linear", 20.0), 0.0).ratio
    assert b / a == pytest.approx(0.5, rel=0.05)


def _ode_leakage(eps):
    T = T_D / eps

    def rhs(t, y):
        a = math.pi * t / T
        h = np.array([[math.cos(a), -1j * math.sin(a)], [1j * math.sin(a), -math.cos(a)]])
        return -1j * h @ y

    sol = solve_ivp(rhs, [0, T], np.array([1, 0], complex), method="DOP853", rtol=1e-12, atol=1e-14)
    return abs(sol.y[0, -1]) ** 2


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.02])
def test_linear_tau_closed_form_vs_ode(eps):
    assert diabatic_error_linear_tau(eps)[0] == pytest.approx(_ode_leakage(eps), abs=1e-6)
    assert diabatic_error_numeric("linear", 1 / eps) == pytest.approx(_ode_leakage(eps), abs=1e-9)


def test_adiabatic_limit():
    assert diabatic_error_linear_tau(1e-4)[0] < 1e-8
    assert slowdown_for_average(1e-4) == pytest.approx(70.7, abs=0.1)
    for kind in ("linear", "trig", "bump"):
        assert diabatic_error_numeric(kind, 500.0) < 1e-7


def test_windowed_linear_near_threshold():
    assert 0.5e-4 < windowed_delta("linear", 70.0) < 2e-4


def test_bump_below_threshold_at_17():
    assert diabatic_error_numeric("bump", 17.0) <= 1e-5


def test_bump_decay_accelerates():
    d = [diabatic_error_numeric("bump", r) for r in (8.5, 17.0, 34.0, 68.0)]
    ratios = [b / a for a, b in zip(d, d[1:])]
    assert all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:]))
