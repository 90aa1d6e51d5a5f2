import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdlsae.core_math import bernoulli_entropy as H
from mdlsae.toys import (FLAT_HIERARCHY, NO_SPLIT, SPLIT, TREE_HIERARCHY, CodingScheme,
                         ToyWorld, bisect, enumeration_oracle, hier_analysis, hier_phase_grid,
                         split_analysis, split_dl_gap, split_l0_dominance_check,
                         split_phase_boundary, split_phase_grid)

# 40-digit mpmath evaluations
SPLIT_HALF_INDEPENDENT = 2.4338343733773985917
HIER_ANIMAL_BIRD = 1.1812908992306926182
FLAT_ANIMAL_BIRD = 1.2196806094328008473


def feasible_worlds(n=21):
    grid = np.linspace(0, 1, n)
    for pa in grid:
        for pb in grid:
            for rho in np.linspace(-1, 1, n):
                try:
                    yield ToyWorld(float(pa), float(pb), float(rho))
                except ValueError:
                    continue


def test_world_rejects_infeasible_joint():
    with pytest.raises(ValueError):
        ToyWorld(0.5, 0.5, -1.5)
    with pytest.raises(ValueError):
        ToyWorld(0.9, 0.1, 1.0)  # joint would exceed min(p_a, p_b)
    with pytest.raises(ValueError):
        ToyWorld(1.2)


@pytest.mark.parametrize("p", [0.1, 0.37, 0.5, 0.9])
def test_perfect_correlation_collapses_to_one_feature(p):
    c = split_analysis(ToyWorld(p, p, 1.0))
    assert c.dl_scheme2 == H(p)
    assert c.dl_scheme1 == pytest.approx(2 * H(p))
    assert c.preferred == "scheme2"


def test_disjoint_features_tie():
    w = ToyWorld(0.5, 0.5, -1.0)
    assert w.p_ab == 0.0
    c = split_analysis(w)
    assert c.dl_scheme1 == c.dl_scheme2 and c.l0_scheme1 == c.l0_scheme2
    assert c.preferred == "tie"


def test_independent_halves_prefer_no_split():
    c = split_analysis(ToyWorld(0.5, 0.5, 0.0))
    assert c.dl_scheme1 == pytest.approx(2.0, abs=1e-12)
    assert c.dl_scheme2 == pytest.approx(SPLIT_HALF_INDEPENDENT, abs=1e-12)
    assert c.preferred == "scheme1"
    assert enumeration_oracle(ToyWorld(0.5, 0.5, 0.0), SPLIT) == pytest.approx(
        SPLIT_HALF_INDEPENDENT, abs=1e-12)


def test_l0_dominance_examples():
    assert ToyWorld(0.5, 0.5, 0.5).p_ab == pytest.approx(0.375)
    assert split_l0_dominance_check(ToyWorld(0.5, 0.5, 0.5))
    assert not split_l0_dominance_check(ToyWorld(0.5, 0.5, -1.0))
    assert split_l0_dominance_check(ToyWorld(1.0, 1.0, 0.0))


def test_l0_dominance_on_grid():
    for w in feasible_worlds():
        c = split_analysis(w)
        if w.p_ab > 0:
            assert c.l0_scheme2 < c.l0_scheme1
        else:
            assert c.l0_scheme2 == c.l0_scheme1


def test_closed_forms_match_enumeration_on_grid():
    count = 0
    for w in feasible_worlds():
        c = split_analysis(w)
        assert abs(c.dl_scheme1 - enumeration_oracle(w, NO_SPLIT)) < 1e-12
        assert abs(c.dl_scheme2 - enumeration_oracle(w, SPLIT)) < 1e-12
        count += 1
    assert count > 21 * 21


def test_hier_animal_bird():
    w = ToyWorld.hierarchy(0.3, 0.5)
    assert w.p_b == pytest.approx(0.15)
    c = hier_analysis(w)
    assert c.dl_scheme2 == pytest.approx(HIER_ANIMAL_BIRD, abs=1e-12)
    assert c.dl_scheme1 == pytest.approx(FLAT_ANIMAL_BIRD, abs=1e-12)
    assert c.preferred == "scheme2"
    assert c.l0_scheme1 == 0.3
    assert c.l0_scheme2 == pytest.approx(0.8)
    assert c.l0_scheme2_expected == pytest.approx(0.45)
    assert enumeration_oracle(w, TREE_HIERARCHY) == pytest.approx(HIER_ANIMAL_BIRD, abs=1e-12)
    assert enumeration_oracle(w, FLAT_HIERARCHY) == pytest.approx(FLAT_ANIMAL_BIRD, abs=1e-12)


@pytest.mark.parametrize("pa", [0.2, 0.5, 0.8])
def test_hier_degenerate_ties(pa):
    assert hier_analysis(ToyWorld.hierarchy(pa, 0.0)).preferred == "tie"
    assert hier_analysis(ToyWorld.hierarchy(pa, 1.0)).preferred == "tie"


def test_hier_rejects_child_more_likely_than_parent():
    with pytest.raises(ValueError):
        hier_analysis(ToyWorld(0.2, 0.5, 0.0))


def test_hier_dominance_on_interior_grid():
    grid = np.linspace(0.01, 0.99, 99)
    for pa in grid:
        for pba in grid:
            w = ToyWorld.hierarchy(float(pa), float(pba))
            c = hier_analysis(w)
            assert c.dl_scheme2 <= c.dl_scheme1 + 1e-12
            assert abs(c.dl_scheme2 - enumeration_oracle(w, TREE_HIERARCHY)) < 1e-12
            assert abs(c.dl_scheme1 - enumeration_oracle(w, FLAT_HIERARCHY)) < 1e-12


@given(st.floats(0, 1), st.floats(0, 1))
def test_hier_dominance_property(pa, pba):
    c = hier_analysis(ToyWorld.hierarchy(pa, pba))
    assert c.dl_scheme2 <= c.dl_scheme1 + 1e-12


def test_oracle_rejects_bad_schemes():
    w = ToyWorld.hierarchy(0.3, 0.5)
    with pytest.raises(ValueError):
        enumeration_oracle(w, CodingScheme({"a": lambda a, b: a}, parents={"a": "missing"}))
    with pytest.raises(ValueError):
        # A can fire without B
        enumeration_oracle(w, CodingScheme({"A": lambda a, b: a, "B": lambda a, b: b},
                                           parents={"A": "B"}))


def test_gap_signs_at_half():
    assert split_dl_gap(0.5, 0.0) == pytest.approx(SPLIT_HALF_INDEPENDENT - 2.0, abs=1e-12)
    assert split_dl_gap(0.5, 1.0) == pytest.approx(-1.0, abs=1e-12)


def test_phase_boundary_roots():
    ps = np.linspace(0.05, 0.95, 19)
    for p, rho in split_phase_boundary(ps, tol=1e-6):
        assert rho is not None and 0 < rho < 1
        assert abs(split_dl_gap(p, rho)) < 1e-5
        assert split_dl_gap(p, min(rho + 1e-3, 1.0)) < 0


def test_bisection_step_count():
    root, steps = bisect(lambda r: split_dl_gap(0.5, r), 0.0, 1.0, 1e-6)
    assert steps <= 30
    assert abs(split_dl_gap(0.5, root)) < 1e-5


def test_phase_boundary_absent_without_sign_change():
    root, steps = bisect(lambda r: 1.0 + r, 0.0, 1.0, 1e-6)
    assert root is None and steps == 0
    with pytest.raises(ValueError):
        split_phase_boundary([1.0])


def test_split_grid_records():
    rows = split_phase_grid([0.5], np.linspace(0, 1, 11))
    assert len(rows) == 11
    assert rows[0]["preferred"] == "nosplit" and rows[-1]["preferred"] == "split"
    for r in rows:
        c = split_analysis(ToyWorld(0.5, 0.5, r["rho"]))
        assert r["dl_split"] == c.dl_scheme2 and r["dl_nosplit"] == c.dl_scheme1


def test_hier_grid_records():
    rows = hier_phase_grid(np.linspace(0.01, 0.99, 99), np.linspace(0.01, 0.99, 99))
    assert len(rows) == 99 * 99
    assert all(r["dl_hier"] <= r["dl_flat"] + 1e-12 for r in rows)
    assert math.isclose(rows[0]["p_b_given_a"], 0.01)
