"""Long-time diagnostics: absorbing set, stabilizability estimate, dimension and regularity probes.

All probes run on the Lyapunov functional ``W`` of :mod:`fpi.stepper` with the
default weight ``eta`` (the sandwich threshold), for which

    ||U||_H^2 / 4 <= E / 2 <= W <= 2 E,

so sublevel sets of ``W`` sit inside explicit phase-space balls.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog
from scipy.spatial.distance import pdist
from scipy.stats import spearmanr

from .grid import build_grid
from .plate import apply_plate_operator, check_dissipativity
from .spectral import assemble_generator, spectral_abscissa
from .state import SystemState
from .stepper import (
    EnergyLedger, InitialSpec, RunConfig, initial_state, iterate, lyapunov_threshold, run,
    stepper_for,
)
from .stokes import laplacian, leray_project, trace_gamma


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FPI_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = _workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def random_ensemble(cfg: RunConfig, n: int, r_max: float, seed: int = 0) -> list[SystemState]:
    """``n`` smooth random states with H-norms spread evenly over ``(0, r_max]``."""
    grid = build_grid(cfg.grid)
    radii = r_max * np.arange(1, n + 1) / n
    base = cfg.initial if cfg.initial.kind == "random" else InitialSpec("random")
    return [initial_state(grid, replace(base, kind="random", amplitude=float(r), seed=seed + k))
            for k, r in enumerate(radii)]


# -- absorbing set ---------------------------------------------------------------

@dataclass
class AbsorbingReport:
    """Outcome of :func:`absorbing_set_check`.

    The absorbing set is ``B = {W <= W_B}`` with ``W_B = (1 + margin) K`` and
    ``K = (c1 / c0)(c_f + ||G||^2)``; it lies in the H-ball of radius
    ``ball_radius = 2 sqrt(W_B)``.
    """

    c0: float
    c1: float
    c_f: float
    forcing_norm2: float
    level: float
    ball_radius: float
    initial_norms: np.ndarray
    entry_times: np.ndarray
    envelope_ok: np.ndarray
    calibration: np.ndarray
    restart_ok: bool
    restart_max_W: float
    entry_norm_correlation: float
    escapes: list[int] = field(default_factory=list)
    ledgers: list[EnergyLedger] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.envelope_ok) and np.all(np.isfinite(self.entry_times)) and self.restart_ok)


def _envelope(t, w0, c0, k):
    e = np.exp(-c0 * t)
    return w0 * e + k * (1.0 - e)


def absorbing_set_check(cfg: RunConfig, ensemble: list[SystemState] | None = None, n: int = 10,
                        r_max: float = 2.0, c0: float | None = None, margin: float = 1.0,
                        restart_T: float = 5.0, seed: int = 0, floor: float = 1e-6) -> AbsorbingReport:
    """Run an ensemble and check the exponential envelope for ``W`` and absorption.

    ``c0`` defaults to half the linear spectral gap ``-abscissa`` (the descent
    rate that survives the nonlinearity with room to spare).  ``c1`` is the
    smallest constant in the differential inequality
    ``dW/dt + c0 W <= c1 (c_f + ||G||^2)`` over the even-indexed trajectories,
    inflated by 10%; the integrated envelope is then checked on every
    trajectory, so the odd-indexed half is a genuine out-of-sample test.
    ``c_f`` is the dissipativity constant of the potential times ``|Omega|``.  With ``G = 0`` and ``c_f = 0`` the level collapses to
    ``floor * max W(0)``.

    Forward invariance is tested by restarting from each trajectory's state at
    its entry time and at its final time for ``restart_T``.
    """
    grid = build_grid(cfg.grid)
    eta = cfg.eta if cfg.eta is not None else lyapunov_threshold(grid)
    if ensemble is None:
        ensemble = random_ensemble(cfg, n, r_max, seed)
    if c0 is None:
        c0 = -0.5 * spectral_abscissa(assemble_generator(grid))
    G = stepper_for(cfg).G
    g2 = grid.fluid_inner(G, G)
    area = float(np.prod(grid.spec.extents[:-1]))
    c_f = check_dissipativity(cfg.potential, delta=0.5).c2 * area

    results = _map(lambda U0: run(cfg, U0, eta=eta)[1], ensemble)
    source = c_f + g2
    ratios = []
    for led in results:
        # smallest c1 with dW/dt + c0 W <= c1 source on every step (midpoint form)
        t, W = led.t, led.column("W_lyap")
        rate = np.diff(W) / np.diff(t) + 0.5 * c0 * (W[1:] + W[:-1])
        ratios.append(float(rate.max()) / source if source > 0 and rate.size else 0.0)
    ratios = np.array(ratios)
    calib = np.arange(len(results)) % 2 == 0
    c1 = 1.1 * max(float(ratios[calib].max()), 0.0) if source > 0 else 0.0

    k_inf = c1 / c0 * source
    w0_max = max(float(led.column("W_lyap")[0]) for led in results)
    level = (1.0 + margin) * k_inf if k_inf > 0 else floor * w0_max
    tol = 1e-12 * max(w0_max, 1.0)
    env_ok, entry, escapes = [], [], []
    for k, led in enumerate(results):
        t, W = led.t, led.column("W_lyap")
        env_ok.append(bool(np.all(W <= _envelope(t, W[0], c0, k_inf) + tol)))
        outside = np.nonzero(W > level)[0]
        if outside.size == 0:
            entry.append(0.0)
        elif outside[-1] == len(W) - 1:
            entry.append(np.inf)
            escapes.append(k)
        else:
            entry.append(float(t[outside[-1] + 1]))
    entry = np.array(entry)

    restarts = []
    for k, led in enumerate(results):
        if not np.isfinite(entry[k]):
            continue
        snaps, _ = run(cfg, ensemble[k], eta=eta, keep_every=1)
        idx = int(np.searchsorted([s.t for s in snaps], entry[k] - 1e-12))
        restarts += [snaps[idx].with_time(0.0), snaps[-1].with_time(0.0)]
    rcfg = replace(cfg, T=restart_T)
    rmax = 0.0
    for led in _map(lambda U: run(rcfg, U, eta=eta)[1], restarts):
        rmax = max(rmax, float(led.column("W_lyap").max()))
    restart_ok = bool(restarts) and rmax <= level + tol

    norms = np.array([U.norm() for U in ensemble])
    fin = np.isfinite(entry)
    corr = float(spearmanr(norms[fin], entry[fin]).statistic) if fin.sum() > 2 and np.ptp(entry[fin]) > 0 else 0.0
    return AbsorbingReport(c0=float(c0), c1=float(c1), c_f=float(c_f), forcing_norm2=float(g2),
                           level=float(level), ball_radius=float(2.0 * np.sqrt(level)),
                           initial_norms=norms, entry_times=entry, envelope_ok=np.array(env_ok),
                           calibration=calib, restart_ok=restart_ok, restart_max_W=rmax,
                           entry_norm_correlation=corr, escapes=escapes, ledgers=results)


# -- stabilizability --------------------------------------------------------------

@dataclass
class StabilizabilityReport:
    """Constants of ``||dU(t)|| <= c0 e^{-w t} ||dU(0)|| + c_R int_0^t e^{-w (t-s)} ||du(s)|| ds``.

    ``margins[k]`` is the smallest ``(rhs - lhs) / ||dU(0)||`` over the samples
    of pair ``k``; the estimate holds for the pair when it is nonnegative.
    """

    c0: float
    omega: float
    c_R: float
    radius: float
    margins: np.ndarray
    calibration: np.ndarray
    worst_time: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margins >= 0.0))


def _pair_series(cfg: RunConfig, pair, omega: float):
    a, b = pair
    g = a.grid
    t, lhs, du, rad = [], [], [], 0.0
    for s, r in zip(iterate(cfg, a), iterate(cfg, b)):
        d = s - r
        t.append(s.t)
        lhs.append(d.norm())
        du.append(np.sqrt(g.plate_inner(d.u, d.u)))
        rad = max(rad, s.norm(), r.norm())
    t, lhs, du = map(np.array, (t, lhs, du))
    # I(t) = int_0^t e^{-w (t - s)} du(s) ds by the trapezoid rule on the recursion
    hist = np.zeros_like(t)
    for n in range(1, len(t)):
        h = t[n] - t[n - 1]
        e = np.exp(-omega * h)
        hist[n] = e * hist[n - 1] + 0.5 * h * (e * du[n - 1] + du[n])
    return t, lhs, lhs[0] * np.exp(-omega * t), hist, rad


def stabilizability_check(cfg: RunConfig, pairs: list[tuple[SystemState, SystemState]] | None = None,
                          n: int = 10, r_max: float = 1.0, omega: float | None = None,
                          omega_fraction: float = 0.9, inflate: float = 1.25,
                          seed: int = 0) -> StabilizabilityReport:
    """Fit ``(c0, c_R)`` by linear programming and check the estimate on every pair.

    ``omega`` defaults to ``omega_fraction`` times the linear spectral gap
    ``-abscissa``; the slack absorbs the polynomial prefactor of the slowest
    mode and the small damping defect of the time discretization.  The LP minimizes
    the integrated bound subject to the inequality on the even-indexed pairs;
    the constants are then inflated by ``inflate`` and checked on all pairs.
    """
    grid = build_grid(cfg.grid)
    if omega is None:
        omega = -omega_fraction * spectral_abscissa(assemble_generator(grid))
    if pairs is None:
        ens = random_ensemble(cfg, 2 * n, r_max, seed)
        pairs = list(zip(ens[0::2], ens[1::2]))
    series = _map(lambda p: _pair_series(cfg, p, omega), pairs)
    calib = np.arange(len(pairs)) % 2 == 0
    rows, rhs = [], []
    cost = np.zeros(2)
    for k, (t, lhs, a, b, _) in enumerate(series):
        if lhs[0] == 0.0:
            continue
        cost += [a.sum() / lhs[0], b.sum() / lhs[0]]
        if calib[k]:
            rows.append(-np.column_stack([a, b]) / lhs[0])
            rhs.append(-lhs / lhs[0])
    if rows:
        lp = linprog(cost + 1e-12, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=[(0, None)] * 2,
                     method="highs")
        c0, c_r = (inflate * lp.x) if lp.success else (np.inf, np.inf)
    else:
        c0, c_r = 1.0, 0.0
    margins, worst = [], []
    for t, lhs, a, b, _ in series:
        if lhs[0] == 0.0:
            # identical pair: both sides vanish
            margins.append(0.0 if np.all(lhs == 0.0) else -np.inf)
            worst.append(0.0)
            continue
        m = (c0 * a + c_r * b - lhs) / lhs[0]
        margins.append(float(m.min()))
        worst.append(float(t[np.argmin(m)]))
    return StabilizabilityReport(c0=float(c0), omega=float(omega), c_R=float(c_r),
                                 radius=float(max(s[4] for s in series)), margins=np.array(margins),
                                 calibration=calib, worst_time=np.array(worst))


# -- dimension probe -------------------------------------------------------------

def energy_coordinates(states: list[SystemState]) -> np.ndarray:
    """Rows ``X`` with ``||X_i - X_j||_2 = ||U_i - U_j||_H``."""
    g = states[0].grid
    L = sla.cholesky(g.plate_stiffness.toarray(), lower=False)
    sv, sw = np.sqrt(g.cell_volume), np.sqrt(g.plate_cell_area)
    return np.array([np.concatenate([sv * s.v, L @ s.u, sw * s.w]) for s in states])


@dataclass
class DimensionEstimate:
    """Correlation-dimension estimate (heuristic; no rigorous error bar)."""

    dimension: float
    band: tuple[float, float]
    n_samples: int
    degenerate: bool
    radii: np.ndarray
    correlation: np.ndarray
    label: str = "heuristic correlation-dimension estimate"


def correlation_dimension(points: np.ndarray, n_radii: int = 24, fit_range: tuple[float, float] = (0.02, 0.3),
                          atol: float = 1e-6) -> DimensionEstimate:
    """Grassberger-Procaccia slope of ``log C(r)`` against ``log r``.

    ``fit_range`` gives the quantiles of the pairwise-distance distribution
    bounding the scaling window.  The band is the spread of slopes fitted on
    the lower and upper halves of the window.  A point cloud whose diameter is
    below ``atol * max(1, max ||x||)`` is a single point: dimension 0.

    Raises
    ------
    ValueError
        With fewer than 10 points.
    """
    X = np.asarray(points, float)
    if X.shape[0] < 10:
        raise ValueError(f"insufficient samples for a dimension estimate: {X.shape[0]} < 10")
    dist = pdist(X)
    scale = max(1.0, float(np.linalg.norm(X, axis=1).max()))
    if dist.max() <= atol * scale:
        return DimensionEstimate(0.0, (0.0, 0.0), X.shape[0], True, np.array([]), np.array([]))
    pos = np.sort(dist[dist > 0])
    lo, hi = np.quantile(pos, fit_range)
    r = np.geomspace(lo, hi, n_radii)
    C = np.searchsorted(pos, r, side="right") / dist.size
    x, y = np.log(r), np.log(np.maximum(C, 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    half = n_radii // 2
    s1 = float(np.polyfit(x[:half], y[:half], 1)[0])
    s2 = float(np.polyfit(x[half:], y[half:], 1)[0])
    return DimensionEstimate(slope, (min(s1, s2, slope), max(s1, s2, slope)), X.shape[0], False, r, C)


def entry_time(ledger: EnergyLedger, factor: float = 2.0) -> float:
    """Time after which ``W`` stays below ``factor`` times its tail maximum (last 20%)."""
    t, W = ledger.t, ledger.column("W_lyap")
    tail = W[t >= t[0] + 0.8 * (t[-1] - t[0])]
    level = factor * float(tail.max())
    outside = np.nonzero(W > level)[0]
    return float(t[outside[-1] + 1]) if outside.size else 0.0


def dimension_probe(cfg: RunConfig, U0: SystemState | None = None, n_samples: int = 400,
                    window: float | None = None, transient: float | None = None,
                    **kwargs) -> DimensionEstimate:
    """Correlation dimension of post-transient samples of one trajectory.

    ``transient`` defaults to five empirical entry times of a pilot run of
    length ``cfg.T``; ``window`` (default ``cfg.T``) is then sampled at
    ``n_samples`` evenly spaced steps; the window is stretched when it
    has fewer steps than samples.  Remaining keywords go to
    :func:`correlation_dimension`.
    """
    grid = build_grid(cfg.grid)
    U0 = initial_state(grid, cfg.initial) if U0 is None else U0
    if transient is None:
        transient = 5.0 * entry_time(run(cfg, U0)[1])
    window = cfg.T if window is None else window
    n0 = int(round(transient / cfg.dt))
    nw = max(int(round(window / cfg.dt)), n_samples - 1)
    # evenly spaced over a fixed window, so more samples means denser sampling
    picks = set((n0 + np.round(np.linspace(0, nw, n_samples))).astype(int).tolist())
    total = replace(cfg, T=(n0 + nw) * cfg.dt)
    samples = [s for k, s in enumerate(iterate(total, U0)) if k in picks]
    return correlation_dimension(energy_coordinates(samples), **kwargs)


# -- regularity ------------------------------------------------------------------

REGULARITY_NAMES = ("v_t", "P_Lap_v", "A_half_u_t", "u_tt", "Au_plus_gamma")


@dataclass
class RegularityReport:
    """Tail suprema of the five monitored quantities and a no-growth verdict.

    ``halves[name] = (sup over first half of the tail, sup over second half)``.
    """

    sups: dict[str, float]
    halves: dict[str, tuple[float, float]]
    bounded: dict[str, bool]
    times: np.ndarray = field(repr=False)
    series: dict[str, np.ndarray] = field(repr=False)

    @property
    def passed(self) -> bool:
        return all(self.bounded.values())


def attractor_regularity_check(cfg: RunConfig, U0: SystemState | None = None, tail: float = 0.5,
                               growth_tol: float = 0.05, atol: float = 1e-9) -> RegularityReport:
    """Monitor ``||v_t||``, ``||P_L Delta_h v||``, ``||A^{1/2} u_t||``, ``||u_tt||``, ``||Au + gamma v||``.

    Time derivatives are backward differences over one step.  The quantities
    are sampled every ``cfg.cadence`` steps over the last ``tail`` fraction of
    the run.  A quantity is bounded when the sup over the second half of the
    tail does not exceed the sup over the first half by more than
    ``growth_tol`` (relative) plus ``atol``.
    """
    g = build_grid(cfg.grid)
    U0 = initial_state(g, cfg.initial) if U0 is None else U0
    n_tail = int(round((1.0 - tail) * cfg.n_steps))
    vals = {k: [] for k in REGULARITY_NAMES}
    times = []
    prev = None
    for k, s in enumerate(iterate(cfg, U0)):
        if k > n_tail and (k - n_tail) % cfg.cadence == 0 and prev is not None:
            dt = s.t - prev.t
            vt, utt = (s.v - prev.v) / dt, (s.w - prev.w) / dt
            plap = leray_project(g, laplacian(g, s.v, s.w), tol=cfg.tol)
            r = apply_plate_operator(g, s.u) + trace_gamma(g, s.v, s.w, stencil="compatible")
            vals["v_t"].append(np.sqrt(g.fluid_inner(vt, vt)))
            vals["P_Lap_v"].append(np.sqrt(g.fluid_inner(plap, plap)))
            vals["A_half_u_t"].append(np.sqrt(max(g.plate_form(s.w, s.w), 0.0)))
            vals["u_tt"].append(np.sqrt(g.plate_inner(utt, utt)))
            vals["Au_plus_gamma"].append(np.sqrt(g.plate_inner(r, r)))
            times.append(s.t)
        prev = s
    series = {k: np.array(v) for k, v in vals.items()}
    sups, halves, bounded = {}, {}, {}
    for k, v in series.items():
        if v.size == 0:
            sups[k], halves[k], bounded[k] = 0.0, (0.0, 0.0), True
            continue
        m = v.size // 2
        a = float(v[:max(m, 1)].max())
        b = float(v[m:].max())
        sups[k], halves[k] = float(v.max()), (a, b)
        bounded[k] = b <= (1.0 + growth_tol) * a + atol
    return RegularityReport(sups, halves, bounded, np.array(times), series)
