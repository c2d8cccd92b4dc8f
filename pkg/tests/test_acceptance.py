"""Acceptance criteria 1-9 at desk scale (2D, 16x16, lambda = 2).

Every test prints one PASS/FAIL line with the measured quantities against the
pinned tolerances; the same lines are repeated in the terminal summary.
Runtime budgets are part of each verdict.
"""
from fpi import acceptance as acc


def test_criterion_1_energy_balance(report_criterion):
    r = report_criterion(acc.energy_balance())
    assert r.passed, r.line()


def test_criterion_2_accretivity(report_criterion):
    r = report_criterion(acc.accretivity())
    assert r.passed, r.line()


def test_criterion_3_exponential_stability(report_criterion):
    r = report_criterion(acc.exponential_stability())
    assert r.passed, r.line()


def test_criterion_4_nonlinear_decay(report_criterion):
    r = report_criterion(acc.nonlinear_decay())
    assert r.passed, r.line()


def test_criterion_5_stokes_oracles(report_criterion):
    r = report_criterion(acc.stokes_oracles())
    assert r.passed, r.line()


def test_criterion_6_gradient_consistency(report_criterion):
    r = report_criterion(acc.gradient_consistency())
    assert r.passed, r.line()


def test_criterion_7_absorbing_set(report_criterion):
    r = report_criterion(acc.absorbing_set())
    assert r.passed, r.line()


def test_criterion_8_stabilizability(report_criterion):
    r = report_criterion(acc.stabilizability())
    assert r.passed, r.line()


def test_criterion_9_one_step_oracle(report_criterion):
    r = report_criterion(acc.one_step_oracle())
    assert r.passed, r.line()
