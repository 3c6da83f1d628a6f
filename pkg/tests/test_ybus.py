"""Admittance-matrix assembly checks against hand values and an
independent sparsity/entry oracle built straight from the branch list."""

from __future__ import annotations

import cmath
import dataclasses
import math

import numpy as np
import pytest

from evgridplan.matpower import BranchRecord
from evgridplan.ybus import ZeroImpedanceBranch, build_ybus

from conftest import make_random_case, make_two_bus_case


def test_single_line_reactance_only():
    # y = 1/(0.1j) = -10j
    y = build_ybus(make_two_bus_case(r=0.0, x=0.1)).matrix
    expected = np.array([[-10j, 10j], [10j, -10j]])
    assert np.allclose(y, expected, atol=1e-12)


def test_line_charging_splits_per_end():
    y0 = build_ybus(make_two_bus_case(x=0.1, b_total=0.0)).matrix
    y1 = build_ybus(make_two_bus_case(x=0.1, b_total=0.2)).matrix
    assert np.allclose(np.diag(y1 - y0), [0.1j, 0.1j], atol=1e-12)
    assert y1[0, 1] == y0[0, 1]


def test_bus_shunt_on_diagonal():
    case = make_two_bus_case(x=0.1)
    shunted = dataclasses.replace(case.buses[1], gs_mw=5.0, bs_mvar=30.0)
    case = dataclasses.replace(case, buses=(case.buses[0], shunted))
    y = build_ybus(case).matrix
    assert cmath.isclose(y[1, 1], -10j + (5 + 30j) / 100.0, abs_tol=1e-12)


def test_case30_sparsity_matches_branch_list(case30):
    """Off-diagonal zeros sit exactly where no branch connects the pair."""
    y = build_ybus(case30).matrix
    pos = case30.bus_positions()
    connected = np.zeros((case30.n, case30.n), dtype=bool)
    for br in case30.branches:
        if br.in_service:
            f, t = pos[br.from_bus], pos[br.to_bus]
            connected[f, t] = connected[t, f] = True
    offdiag = ~np.eye(case30.n, dtype=bool)
    assert np.array_equal((y != 0) & offdiag, connected)


def test_symmetry_without_taps(case30):
    y = build_ybus(case30).matrix
    assert np.max(np.abs(y - y.T)) < 1e-12


def test_symmetry_random_cases():
    rng = np.random.default_rng(7)
    for _ in range(10):
        case = make_random_case(int(rng.integers(3, 9)), rng)
        y = build_ybus(case).matrix
        assert np.max(np.abs(y - y.T)) < 1e-12


def test_row_sums_vanish_without_shunts():
    rng = np.random.default_rng(11)
    for _ in range(10):
        case = make_random_case(int(rng.integers(3, 9)), rng, charging=False)
        y = build_ybus(case).matrix
        assert np.max(np.abs(y.sum(axis=1))) < 1e-9


def test_zero_impedance_branch_rejected():
    case = make_two_bus_case(r=0.0, x=0.0)
    with pytest.raises(ZeroImpedanceBranch):
        build_ybus(case)


def test_out_of_service_branch_skipped():
    case = make_two_bus_case(x=0.1)
    dead = BranchRecord(1, 2, 0.0, 0.1, 0.0, in_service=False)
    case = dataclasses.replace(case, branches=(dead,))
    y = build_ybus(case).matrix
    assert np.all(y == 0)


def test_transformer_tap_and_shift_entries():
    """Tap 0.95, 30 degree shift, checked against the assembly formula
    evaluated by hand for a single branch."""
    tap, shift = 0.95, 30.0
    case = make_two_bus_case(r=0.01, x=0.1, b_total=0.04)
    br = BranchRecord(1, 2, 0.01, 0.1, 0.04, tap=tap, shift_deg=shift)
    case = dataclasses.replace(case, branches=(br,))
    y = build_ybus(case).matrix

    ys = 1 / complex(0.01, 0.1)
    ysh = 0.02j
    t = tap * cmath.exp(1j * math.radians(shift))
    assert cmath.isclose(y[0, 0], (ys + ysh) / tap**2, rel_tol=1e-12)
    assert cmath.isclose(y[1, 1], ys + ysh, rel_tol=1e-12)
    assert cmath.isclose(y[0, 1], -ys / t.conjugate(), rel_tol=1e-12)
    assert cmath.isclose(y[1, 0], -ys / t, rel_tol=1e-12)
    # shifted transformer breaks complex symmetry
    assert abs(y[0, 1] - y[1, 0]) > 1e-6
