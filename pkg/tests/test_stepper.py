import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpi.grid import GridSpec, build_grid
from fpi.plate import PotentialSpec
from fpi.state import SystemState
from fpi.stepper import (
    LEDGER_COLUMNS, EnergyLedger, ForcingSpec, InitialSpec, RunConfig, continuous_dependence_probe,
    decay_rate_fit, energy_parts, forcing_field, initial_state, iterate, lyapunov_descent_rate,
    lyapunov_threshold, lyapunov_W, run, step, total_energy,
)

SMALL = GridSpec(2, (8, 8), lame_lambda=2.0)
LINEAR = RunConfig(SMALL, PotentialSpec("zero"), ForcingSpec(), InitialSpec("random", 1.0), dt=0.01, T=1.0)


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(dt=-1.0), dict(theta=0.4), dict(theta=1.1),
                                dict(T=-1.0), dict(cadence=0), dict(corrections=4), dict(eta=-0.1)])
def test_run_config_validation(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


def test_zero_state_stays_at_rest():
    cfg = RunConfig(SMALL, PotentialSpec("quartic"), ForcingSpec(), InitialSpec("zero"), T=0.2)
    *_, last = iterate(cfg, initial_state(build_grid(SMALL), cfg.initial))
    assert last.norm() == 0.0


def test_step_rejects_foreign_grid():
    g = build_grid(GridSpec(2, (5, 5)))
    with pytest.raises(ValueError):
        step(SystemState.zeros(g), LINEAR)


def test_forcing_is_divergence_free_and_nonzero():
    g = build_grid(SMALL)
    for kind in ("vortex", "shear"):
        G = forcing_field(g, ForcingSpec(kind, 2.0))
        assert np.abs(G).max() > 0.1
        assert np.abs(g.divergence @ G).max() < 1e-9


def test_states_stay_divergence_free_and_invariants():
    cfg = RunConfig(SMALL, PotentialSpec("quartic", 5.0), ForcingSpec("vortex", 2.0), InitialSpec("random", 1.0),
                    dt=0.01, T=0.3)
    g = build_grid(SMALL)
    for s in iterate(cfg, initial_state(g, cfg.initial)):
        assert np.abs(g.divergence @ s.v).max() <= 10 * cfg.tol


@pytest.mark.parametrize("theta", [0.5, 0.75, 1.0])
def test_linear_energy_monotone(theta):
    from dataclasses import replace
    cfg = replace(LINEAR, theta=theta)
    e = [total_energy(s, cfg.potential) for s in iterate(cfg, initial_state(build_grid(SMALL), cfg.initial))]
    assert np.all(np.diff(e) <= 10 * cfg.tol)


def test_crank_nicolson_norm_nonincreasing_per_step():
    g = build_grid(SMALL)
    norms = [s.norm() for s in iterate(LINEAR, initial_state(g, LINEAR.initial))]
    assert np.all(np.diff(norms) <= LINEAR.dt**2)


def _residual(dt, theta=0.5):
    cfg = RunConfig(SMALL, PotentialSpec("quartic", 1.0), ForcingSpec("vortex", 1.0), InitialSpec("bump", 0.5),
                    dt=dt, T=1.0, theta=theta)
    _, led = run(cfg)
    return led.max_residual / led.total[0]


def test_ledger_residual_second_order_crank_nicolson():
    r = [_residual(dt) for dt in (0.01, 0.005)]
    assert r[0] / r[1] >= 3.6


def test_ledger_residual_first_order_backward_euler():
    r = [_residual(dt, theta=1.0) for dt in (0.01, 0.005)]
    assert r[0] / r[1] >= 1.8


def test_unforced_energy_nonincreasing_with_potential():
    cfg = RunConfig(SMALL, PotentialSpec("quartic", 10.0), ForcingSpec(), InitialSpec("bump", 0.5), dt=0.005, T=1.0)
    _, led = run(cfg)
    assert np.all(np.diff(led.total) <= 1e-3 * led.total[0] * cfg.dt)


def test_a_priori_bound_under_forcing():
    cfg = RunConfig(SMALL, PotentialSpec("quartic", 1.0), ForcingSpec("vortex", 3.0), InitialSpec("random", 1.0),
                    dt=0.01, T=2.0)
    g = build_grid(SMALL)
    _, led = run(cfg)
    G = forcing_field(g, cfg.forcing)
    # E(t) <= E(0) + int (G, v) with |(G, v)| <= ||G|| sqrt(2 E): bounded growth certificate
    e0 = led.total[0]
    bound = (np.sqrt(e0) + led.t * np.sqrt(g.fluid_inner(G, G) / 2)) ** 2 + np.abs(led.column("residual"))
    assert np.all(led.total <= bound)
    assert np.all(led.column("norm_H") ** 2 <= 2 * bound)


def test_energy_parts_components(rng):
    g = build_grid(SMALL)
    s = SystemState(g, rng.standard_normal(g.n_velocity), np.zeros(g.n_plate), np.zeros(g.n_plate))
    spec = PotentialSpec("quartic")
    assert total_energy(SystemState.zeros(g), spec) == 0.0
    assert total_energy(s, spec) == pytest.approx(0.5 * g.fluid_inner(s.v, s.v))
    U = initial_state(g, InitialSpec("random", 1.0))
    assert total_energy(U, spec) == pytest.approx(sum(energy_parts(U, spec)))


def test_lyapunov_sandwich_on_random_states():
    g = build_grid(SMALL)
    eta = lyapunov_threshold(g)
    spec = PotentialSpec("quartic", 2.0)
    assert lyapunov_W(SystemState.zeros(g), eta, spec) == 0.0
    for k in range(100):
        U = initial_state(g, InitialSpec("random", 0.1 + k / 20, modes=4, seed=k))
        e = total_energy(U, spec)
        assert lyapunov_W(U, 0.0, spec) == e
        w = lyapunov_W(U, eta, spec)
        assert 0.5 * e <= w <= 2.0 * e
    with pytest.raises(ValueError):
        lyapunov_W(U, -1.0, spec)


def test_lyapunov_descent_unforced():
    cfg = RunConfig(SMALL, PotentialSpec("quartic", 10.0), ForcingSpec(), InitialSpec("bump", 0.5), dt=0.01, T=3.0)
    _, led = run(cfg)
    assert lyapunov_descent_rate(led) > 0.5


def test_continuous_dependence_linear_contraction():
    g = build_grid(SMALL)
    a = initial_state(g, InitialSpec("random", 1.0, seed=1))
    b = initial_state(g, InitialSpec("random", 1.0, seed=2))
    ratio = continuous_dependence_probe(a, b, LINEAR)
    assert ratio[0] == pytest.approx(1.0) and ratio.max() <= 1.0 + LINEAR.dt
    assert not np.any(continuous_dependence_probe(a, a, LINEAR))


def test_continuous_dependence_nonlinear_bounded():
    from dataclasses import replace
    cfg = replace(LINEAR, potential=PotentialSpec("quartic", 5.0), forcing=ForcingSpec("vortex", 2.0), T=0.5)
    g = build_grid(SMALL)
    sups = []
    for k in range(10):
        a = initial_state(g, InitialSpec("random", 1.0, seed=2 * k))
        b = initial_state(g, InitialSpec("random", 1.0, seed=2 * k + 1))
        sups.append(continuous_dependence_probe(a, b, cfg).max())
    assert max(sups) < 5.0


def test_decay_fit_degenerate_and_linear_rate():
    cfg = RunConfig(SMALL, PotentialSpec("zero"), ForcingSpec(), InitialSpec("zero"), T=0.1)
    _, led = run(cfg)
    assert decay_rate_fit(led).degenerate
    from fpi.spectral import assemble_generator, spectral_abscissa
    cfg = RunConfig(SMALL, PotentialSpec("zero"), ForcingSpec(), InitialSpec("bump", 0.5), dt=0.01, T=6.0)
    _, led = run(cfg)
    fit = decay_rate_fit(led)
    gap = -spectral_abscissa(assemble_generator(build_grid(SMALL)))
    assert fit.decays and fit.r2 >= 0.95
    assert abs(fit.alpha - gap) <= 0.2 * gap


def test_decay_fit_flags_growth():
    led = EnergyLedger()
    for t in np.linspace(0, 1, 11):
        led.rows.append((t, 0, 0, 0, 0, 0, 0, 0, np.exp(t), 0))
    with pytest.warns(RuntimeWarning):
        fit = decay_rate_fit(led)
    assert not fit.decays


def test_ledger_csv_header_and_determinism():
    cfg = RunConfig(SMALL, PotentialSpec("quartic", 1.0), ForcingSpec("vortex", 1.0), InitialSpec("random", 1.0),
                    T=0.2)
    a, b = run(cfg)[1].to_csv(), run(cfg)[1].to_csv()
    assert a == b
    assert a.splitlines()[0] == ",".join(LEDGER_COLUMNS)
    assert EnergyLedger().to_csv() == ",".join(LEDGER_COLUMNS) + "\n"


def test_residual_spike_warns():
    cfg = RunConfig(SMALL, PotentialSpec("quartic", 1e4), ForcingSpec(), InitialSpec("bump", 1.0), dt=0.05, T=0.5)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        try:
            run(cfg)
        except Exception:
            pass
    assert any("residual spike" in str(w.message) for w in rec)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 1.0]))
def test_linear_step_never_increases_energy(seed, theta):
    from dataclasses import replace
    g = build_grid(SMALL)
    cfg = replace(LINEAR, theta=theta, T=0.05)
    U = initial_state(g, InitialSpec("random", 1.0, seed=seed))
    e = [total_energy(s, cfg.potential) for s in iterate(cfg, U)]
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_snapshots_cadence():
    from dataclasses import replace
    snaps, led = run(replace(LINEAR, T=0.25, cadence=10))
    assert [round(s.t, 10) for s in snaps] == [0.0, 0.1, 0.2, 0.25]
    assert len(led.rows) == 26
