import math

import numpy as np
import pytest

from habitfbp.dual import SolverControls, shoot_y0
from habitfbp.primal import PrimalSolution
from habitfbp.utility import concavify, make_power
from habitfbp.validate import (
    coverage,
    dual_residuals,
    envelope_residual,
    euler_residuals,
    fd_check,
    legendre_round_trip,
    primal_residuals,
    run_suite,
    scan_check,
    smooth_pasting,
    structure_checks,
    tail_bound,
)

from conftest import BASE, POWER


def test_full_suite_passes(any_case):
    checks = run_suite(any_case)
    failed = [(c.name, c.measured, c.detail) for c in checks if not c.passed]
    assert not failed
    names = {c.name for c in checks}
    for expected in ("dual_residual", "primal_residual", "smooth_pasting", "tail_bound", "psi_below_cap"):
        assert expected in names


def test_residual_levels(power):
    d = power.dual
    _, r = dual_residuals(d, 1000)
    assert np.max(np.abs(r)) < 1e-7
    _, r = euler_residuals(d)
    assert np.max(np.abs(r)) < 1e-10
    _, r = primal_residuals(power, 1000)
    assert np.max(np.abs(r)) < 1e-6
    assert max(smooth_pasting(d).values()) < 1e-8
    assert legendre_round_trip(power) < 1e-9
    assert envelope_residual(d.spec, d.envelope) < 1e-10


def test_residual_check_detects_an_inconsistent_ode(power):
    # a 1e-4 error in the integrated system must surface in the dual residual
    import copy

    d = copy.copy(power.dual)
    good = d._rhs
    d._rhs = lambda s, f, q: (good(s, f, q)[0], good(s, f, q)[1] * (1 + 1e-4))
    _, r = dual_residuals(d, 200)
    assert np.max(np.abs(r)) > 1e-6


def test_perturbed_grid_breaks_smooth_pasting(power):
    # the residual integrates from stored nodes, so wrong node values are caught at y0 instead
    from dataclasses import replace

    bad = replace(power.dual, psis=power.dual.psis * (1 + 1e-4))
    assert max(smooth_pasting(bad).values()) > 1e-6


def test_structure_checks_named(power):
    checks = {c.name: c for c in structure_checks(power)}
    assert checks["c_jump_to_c0"].passed
    assert checks["pi_continuous_at_x0"].measured < 1e-8


def test_tail_bound_resolved_for_defaults(power):
    tb = tail_bound(power.dual)
    assert tb[0.5]["ok"] is True
    assert tb[0.1]["ok"] is True


def test_loosened_truncation_is_flagged():
    spec = make_power(**POWER)
    loose = PrimalSolution(shoot_y0(BASE, spec, concavify(spec), SolverControls(y_min_factor=1e-2)))
    assert not coverage(loose).passed
    checks = {c.name: c for c in run_suite(loose, n_residual=200)}
    assert not checks["tail_bound"].passed


def test_oracle_checks(power):
    fd = fd_check(power, per_decade=200)
    assert fd.passed and fd.measured < 1e-2
    sc = scan_check(power)
    assert sc.passed
    d = sc.as_dict()
    assert d["name"] == "scan_oracle" and math.isfinite(d["measured"])
