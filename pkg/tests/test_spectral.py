import math

import pytest
from hypothesis import given, strategies as st

from virodyn.spectral import (
    build_mode_table,
    lattice_count,
    multiplicity,
    paper_index,
    table_for_bound,
)


@given(st.integers(1, 5000))
def test_multiplicity_matches_lattice_count(n):
    assert multiplicity(n) == lattice_count(n)


def test_small_table():
    t = build_mode_table(1.0, 10)
    assert [e.n for e in t.entries] == [0, 1, 2, 4, 5, 8, 9, 10]
    assert [e.multiplicity for e in t.entries] == [1, 4, 4, 4, 8, 4, 4, 8]
    assert t[1].lam == pytest.approx(4 * math.pi**2)


def test_numbers_with_odd_power_of_3_mod_4_prime_missing():
    t = build_mode_table(1.0, 50)
    ns = {e.n for e in t.entries}
    for bad in (3, 6, 7, 11, 12, 21):
        assert bad not in ns
        assert multiplicity(bad) == 0


def test_multiplicity_expanded_positions():
    t = build_mode_table(1.0, 40)
    assert paper_index(t, 97, "with_multiplicity_1based") == pytest.approx(116 * math.pi**2)
    assert paper_index(t, 98, "with_multiplicity_1based") == pytest.approx(128 * math.pi**2)
    cum = dict(zip((e.n for e in t.entries), t.cumulative_multiplicity()))
    assert cum[29] == 97


def test_distinct_index():
    t = build_mode_table(1.0, 40)
    assert paper_index(t, 15) == pytest.approx(116 * math.pi**2)
    with pytest.raises(IndexError):
        paper_index(t, len(t))
    with pytest.raises(IndexError):
        paper_index(t, 0, "with_multiplicity_1based")
    with pytest.raises(ValueError):
        paper_index(t, 0, "bogus")


def test_ell_scaling():
    a = build_mode_table(1.0, 20).lambdas
    b = build_mode_table(2 * math.pi, 20).lambdas
    assert b[1:] == pytest.approx(a[1:] / (4 * math.pi**2))


def test_table_for_bound_covers_bound():
    t = table_for_bound(1.0, 1239.5, extra=2)
    above = [e for e in t.entries if e.lam > 1239.5]
    assert len(above) >= 2
    assert t[15].lam < 1239.5 < t[16].lam


def test_bad_inputs():
    with pytest.raises(ValueError):
        multiplicity(0)
    with pytest.raises(ValueError):
        build_mode_table(0.0, 4)
    assert lattice_count(0) == 1
    assert lattice_count(-1) == 0
