import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from scipy.optimize import brentq

from virodyn.model import (
    TABLE1,
    ParameterError,
    Parameters,
    equilibrium_residual,
    infected_equilibrium,
    n_crit,
    phi_fixed_point_residual,
    r_crit,
    reaction_rhs,
    reproduction_ratio,
    t_of_v,
    uninfected_equilibrium,
    uninfected_t,
)

from conftest import parameters

P300 = TABLE1.with_(n_burst=300.0, r=1.0)


def test_table_defaults():
    assert TABLE1.alpha == 1.5 and TABLE1.gamma == 0.001
    assert (TABLE1.mu_T, TABLE1.mu_I, TABLE1.mu_V) == (0.1, 0.5, 10.0)
    assert (TABLE1.t_max, TABLE1.n_burst, TABLE1.r, TABLE1.d_v, TABLE1.ell) == (1500.0, 1000.0, 0.2, 1.0, 1.0)


@pytest.mark.parametrize(
    "changes, needle",
    [
        ({"mu_I": 0.05}, "mu_I > mu_T"),
        ({"t_max": 10.0}, "t_max > alpha/mu_T"),
        ({"alpha": -1.0}, "alpha"),
        ({"r": -0.1}, "r must be non-negative"),
        ({"d_v": -1.0}, "d_v"),
        ({"n_burst": 0.0}, "n_burst"),
        ({"gamma": float("nan")}, "gamma"),
    ],
)
def test_invalid_parameters(changes, needle):
    with pytest.raises(ParameterError, match=needle.replace("(", r"\(")):
        TABLE1.with_(**changes)


def test_rhs_at_zero_is_source_only():
    assert reaction_rhs(TABLE1, 0.0, 0.0, 0.0) == (1.5, 0.0, 0.0)


def test_rhs_vanishes_at_uninfected():
    eq = uninfected_equilibrium(TABLE1)
    assert max(map(abs, reaction_rhs(TABLE1, *eq.as_tuple()))) < 1e-10
    assert eq.i_cells == 0.0 and eq.virus == 0.0


def test_rhs_vanishes_at_infected():
    eq = infected_equilibrium(P300)
    assert eq is not None
    assert equilibrium_residual(P300, eq) < 1e-10
    assert eq.t_cells == pytest.approx(10 / (0.001 * 300), rel=1e-14)


def test_rhs_accepts_arrays():
    t = np.array([1.0, 2.0])
    dt, di, dv = reaction_rhs(TABLE1, t, t, t)
    assert dt.shape == (2,)


def test_uninfected_r_zero_limit():
    assert uninfected_t(TABLE1, 0.0) == 15.0
    assert uninfected_t(TABLE1, 1e-12) == pytest.approx(15.0, rel=1e-9)


def test_uninfected_matches_bisection():
    p = TABLE1
    f = lambda x: p.alpha - p.mu_T * x + p.r * x * (1 - x / p.t_max)
    root = brentq(f, 0.0, p.t_max, xtol=1e-14)
    assert uninfected_t(p) == pytest.approx(root, rel=1e-12)
    assert 0 < root < p.t_max


def test_infected_absent_below_threshold():
    n = n_crit(TABLE1) * 0.99
    assert infected_equilibrium(TABLE1.with_(n_burst=n)) is None


def test_infected_virus_vanishes_on_interface():
    p = TABLE1.with_(n_burst=n_crit(TABLE1))
    g_n = p.gamma * p.n_burst
    i_i = (p.alpha / p.mu_I - p.mu_T * p.mu_V / (g_n * p.mu_I)
           + p.mu_V * p.r / (g_n * p.mu_I) * (1 - p.mu_V / (g_n * p.t_max)))
    assert abs(i_i) < 1e-12
    assert reproduction_ratio(p) == pytest.approx(1.0, abs=1e-12)


def test_reproduction_ratio_limits():
    assert reproduction_ratio(TABLE1) > 1
    assert reproduction_ratio(TABLE1.with_(n_burst=1e-9)) < 1e-9


def test_n_crit_limits():
    assert n_crit(TABLE1, 0.0) == pytest.approx(666.67, rel=1e-3)
    assert n_crit(TABLE1, math.inf) == pytest.approx(6.67, rel=1e-3)
    assert n_crit(TABLE1, 1e9) == pytest.approx(10 / 1.5, rel=1e-3)


def test_r_crit_value_and_domain():
    assert r_crit(TABLE1, 300.0) == pytest.approx(0.05625, abs=1e-6)
    assert r_crit(TABLE1, 1000.0) == 0.0
    with pytest.raises(ParameterError):
        r_crit(TABLE1, 10 / 1.5)


def test_n_crit_strictly_decreasing():
    rs = np.linspace(0.0, 1e3, 5001)
    vals = np.array([n_crit(TABLE1, r) for r in rs])
    assert np.all(np.diff(vals) < 0)


def test_r_crit_round_trip():
    clamp = TABLE1.mu_T * TABLE1.mu_V / (TABLE1.alpha * TABLE1.gamma)
    for r in np.linspace(1e-4, 50.0, 200):
        n = n_crit(TABLE1, r)
        assert n < clamp
        assert r_crit(TABLE1, n) == pytest.approx(r, rel=1e-9, abs=1e-12)


def test_phi_residual():
    eq = infected_equilibrium(P300)
    assert phi_fixed_point_residual(P300, 0.0) == 0.0
    assert abs(phi_fixed_point_residual(P300, eq.virus)) < 1e-9 * P300.mu_V * eq.virus
    assert abs(phi_fixed_point_residual(P300, 2 * eq.virus)) > 1e-3 * P300.mu_V * eq.virus
    with pytest.raises(ParameterError):
        phi_fixed_point_residual(P300.with_(r=0.0), 1.0)


def test_phi_matches_printed_closed_form():
    p = P300
    for v in (0.1, 10.0, 922.0, 5000.0):
        b = p.r - p.mu_T - p.gamma * v
        closed = p.gamma * p.n_burst * v / (2 * p.r) * (b + math.sqrt(b * b + 4 * p.alpha * p.r / p.t_max)) * p.t_max
        assert phi_fixed_point_residual(p, v) + p.mu_V * v == pytest.approx(closed, rel=1e-10)


@settings(max_examples=1000, deadline=None)
@given(parameters())
def test_equilibria_properties(p):
    xu = uninfected_equilibrium(p)
    assert 0 < xu.t_cells < p.t_max
    assert equilibrium_residual(p, xu) < 1e-10
    xi = infected_equilibrium(p)
    assume(xi is not None)
    assert min(xi.as_tuple()) > 0
    assert xi.t_cells < p.t_max
    assert equilibrium_residual(p, xi) < 1e-10
    if p.r > 0:
        assert t_of_v(p, xi.virus) == pytest.approx(xi.t_cells, rel=1e-10)
