"""Monolithic theta-scheme for the coupled fluid-plate system and its energy ledger."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, GridSpec, build_grid
from .plate import PotentialSpec, nonlinear_force, plate_eigensystem, potential_energy
from .state import SystemState
from .stokes import extension_matrix, extension_norm, leray_project, trace_gamma

FORCING_KINDS = ("zero", "vortex", "shear")
INITIAL_KINDS = ("zero", "bump", "random")
LEDGER_COLUMNS = ("t", "E_fluid", "E_plate_kinetic", "E_plate_elastic", "E_potential",
                  "dissipation_cum", "work_cum", "residual", "norm_H", "W_lyap")


class SolverError(RuntimeError):
    """The per-step linear solve failed or produced non-finite values."""


@dataclass(frozen=True)
class ForcingSpec:
    """Time-independent body force; the stored field is its Leray projection.

    ``vortex``: curl of ``amplitude * prod sin^2(pi x_a / L_a)``.
    ``shear``: horizontal force ``amplitude * sin(pi x_d / L_d) e_1`` (a
    constant force would be a pure gradient in the closed box and project to 0).
    """

    kind: str = "zero"
    amplitude: float = 0.0

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"forcing kind must be one of {FORCING_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class InitialSpec:
    """Initial state recipe.

    ``bump``: plate displacement ``amplitude * prod sin(pi x_a / L_a)``, fluid and
    plate velocity at rest.  ``random``: smooth random state built from the
    lowest ``modes`` sine modes of every field, fluid part Leray-projected.
    """

    kind: str = "bump"
    amplitude: float = 0.1
    modes: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"initial kind must be one of {INITIAL_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to advance one trajectory."""

    grid: GridSpec = field(default_factory=GridSpec)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    dt: float = 0.01
    T: float = 2.0
    theta: float = 0.5
    tol: float = 1e-10
    cadence: int = 10
    corrections: int = 0
    eta: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.T >= 0:
            raise ValueError(f"T must be nonnegative, got {self.T!r}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [1/2, 1], got {self.theta!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")
        if not 0 <= self.corrections <= 3:
            raise ValueError("corrections must be between 0 and 3")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


# -- fields --------------------------------------------------------------------

def _sin_profile(coords, extents, power=1):
    out = 1.0
    for x, L in zip(coords, extents):
        out = out * np.sin(np.pi * x / L) ** power
    return out


def forcing_field(grid: Grid, spec: ForcingSpec) -> np.ndarray:
    """Discretely divergence-free force ``G = P_L G~`` on the interior faces."""
    if spec.kind == "zero" or spec.amplitude == 0.0:
        return np.zeros(grid.n_velocity)
    L = grid.spec.extents
    d = grid.d
    if spec.kind == "shear":
        raw = grid.velocity_from_function(lambda m, *x: np.sin(np.pi * x[-1] / L[-1]) * (m == 0))
    else:
        # G~ = (d_z s, 0, ..., -d_x s) for the stream-like profile s
        def comp(m, *x):
            if m == 0:
                s = np.ones_like(x[0])
                for a in range(d - 1):
                    s = s * np.sin(np.pi * x[a] / L[a]) ** 2
                zz = np.pi * x[-1] / L[-1]
                return s * 2 * np.sin(zz) * np.cos(zz) * np.pi / L[-1]
            if m == d - 1:
                s = np.sin(np.pi * x[-1] / L[-1]) ** 2
                for a in range(1, d - 1):
                    s = s * np.sin(np.pi * x[a] / L[a]) ** 2
                xx = np.pi * x[0] / L[0]
                return -s * 2 * np.sin(xx) * np.cos(xx) * np.pi / L[0]
            return np.zeros_like(x[0])
        raw = grid.velocity_from_function(comp)
    return spec.amplitude * leray_project(grid, raw)


def initial_state(grid: Grid, spec: InitialSpec) -> SystemState:
    L = grid.spec.extents
    if spec.kind == "zero":
        return SystemState.zeros(grid)
    if spec.kind == "bump":
        u = grid.plate_from_function(lambda m, *x: _sin_profile(x, L[:-1]) * (1.0 if m == 0 else 0.5))
        return SystemState(grid, np.zeros(grid.n_velocity), spec.amplitude * u, np.zeros(grid.n_plate))
    rng = np.random.default_rng(spec.seed)
    k = max(1, spec.modes)

    def smooth(ext, positions_fn, ncomp):
        parts = []
        for m in range(ncomp):
            coords = positions_fn(m)
            f = np.zeros_like(coords[0])
            for ks in np.ndindex(*(k,) * len(coords)):
                term = rng.standard_normal() / (1.0 + sum(ks))
                for x, L_a, kk in zip(coords, ext, ks):
                    term = term * np.sin((kk + 1) * np.pi * x / L_a)
                f = f + term
            parts.append(f.ravel())
        return np.concatenate(parts)

    w = smooth(L[:-1], grid.plate_positions, grid.d - 1)
    u = smooth(L[:-1], grid.plate_positions, grid.d - 1)
    v = leray_project(grid, smooth(L, grid.velocity_positions, grid.d))
    s = SystemState(grid, v, u, w)
    return s.scaled(spec.amplitude / max(s.norm(), 1e-300))


# -- energies ------------------------------------------------------------------

def energy_parts(state: SystemState, spec: PotentialSpec) -> tuple[float, float, float, float]:
    g = state.grid
    return (0.5 * g.fluid_inner(state.v, state.v), 0.5 * g.plate_inner(state.w, state.w),
            0.5 * g.plate_form(state.u, state.u), potential_energy(g, state.u, spec))


def total_energy(state: SystemState, spec: PotentialSpec) -> float:
    """``1/2 ||v||^2 + 1/2 (||u_t||^2 + a(u, u)) + int Phi(u)``."""
    return float(sum(energy_parts(state, spec)))


def dissipation_rate(state: SystemState) -> float:
    """``nu ||grad v||^2`` with the plate velocity as wall value on Omega."""
    g = state.grid
    return g.nu * g.gradient_form(state.v, state.v, state.w, state.w)


@lru_cache(maxsize=16)
def lyapunov_threshold(grid: Grid) -> float:
    """Largest ``eta`` for which ``E/2 <= W <= 2 E`` follows from measured norms.

    Uses ``|(u, u_t)| + |(v, N0 u)| <= (1 + ||N0||) lambda_1^{-1/2} E``.
    """
    lam1 = float(plate_eigensystem(grid)[0][0])
    return math.sqrt(lam1) / (2.0 * (1.0 + extension_norm(grid)))


def lyapunov_cross(state: SystemState) -> float:
    """``(u, u_t)_Omega + (v, N0 u)_O``."""
    g = state.grid
    n0u = extension_matrix(g) @ state.u
    return g.plate_inner(state.u, state.w) + g.fluid_inner(state.v, n0u)


def lyapunov_W(state: SystemState, eta: float, spec: PotentialSpec) -> float:
    """``W = E + eta [(u, u_t)_Omega + (v, N0 u)_O]``."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    e = total_energy(state, spec)
    return e if eta == 0 else e + eta * lyapunov_cross(state)


# -- time stepping -------------------------------------------------------------

class Stepper:
    """Factorized monolithic theta-scheme for one (grid, dt, theta) triple.

    Unknowns per step: interior face velocities, plate velocity, pressure and a
    gauge multiplier.  The plate velocity doubles as the tangential wall value
    of the fluid on Omega, so the interface condition is exact.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        g = self.grid = build_grid(cfg.grid)
        dt, th, nu, vol = cfg.dt, cfg.theta, g.nu, g.cell_volume
        mp = g.plate_cell_area
        nv, nb, nc = g.n_velocity, g.n_plate, g.n_pressure
        K, Kvb, Kbb, Kp, D = g.stiffness, g.coupling, g.boundary_stiffness, g.plate_stiffness, g.divergence
        self.G = forcing_field(g, cfg.forcing)
        ones = sp.csr_matrix(np.ones((nc, 1)))
        blocks = [
            [vol / dt * sp.identity(nv) + nu * th * K, nu * th * Kvb, -vol * D.T, None],
            [nu * th * Kvb.T, mp / dt * sp.identity(nb) + th * th * dt * Kp + nu * th * Kbb, None, None],
            [-vol * D, None, None, ones],
            [None, None, ones.T, None],
        ]
        self._lu = spla.splu(sp.bmat(blocks, format="csc"))
        self._sizes = (nv, nb, nc)

    def _rhs(self, s: SystemState, f: np.ndarray) -> np.ndarray:
        g, cfg = self.grid, self.cfg
        dt, th, nu, vol, mp = cfg.dt, cfg.theta, g.nu, g.cell_volume, g.plate_cell_area
        nv, nb, nc = self._sizes
        r_v = vol / dt * s.v - nu * (1 - th) * (g.stiffness @ s.v + g.coupling @ s.w) + vol * self.G
        r_b = (mp / dt * s.w - g.plate_stiffness @ (s.u + th * (1 - th) * dt * s.w)
               - nu * (1 - th) * (g.coupling.T @ s.v + g.boundary_stiffness @ s.w) - mp * f)
        return np.concatenate([r_v, r_b, np.zeros(nc + 1)])

    def _predict(self, s: SystemState) -> np.ndarray:
        # u(t + theta dt) by a second-order Taylor step through the plate equation
        g, cfg = self.grid, self.cfg
        spec = cfg.potential
        tau = cfg.theta * cfg.dt
        acc = -(g.plate_stiffness @ s.u) / g.plate_cell_area - trace_gamma(g, s.v, s.w, stencil="compatible")
        acc = acc - nonlinear_force(g, s.u, spec)
        return s.u + tau * s.w + 0.5 * tau * tau * acc

    def step(self, s: SystemState) -> SystemState:
        g, cfg = self.grid, self.cfg
        spec = cfg.potential
        nv, nb, nc = self._sizes
        dt, th = cfg.dt, cfg.theta
        nonlinear = spec.kind != "zero"
        f = nonlinear_force(g, self._predict(s), spec) if nonlinear else np.zeros(nb)
        for k in range(cfg.corrections + 1):
            x = self._lu.solve(self._rhs(s, f))
            if not np.all(np.isfinite(x)):
                raise SolverError(f"non-finite solution at t={s.t + dt:.6g}")
            v, w = x[:nv], x[nv:nv + nb]
            u = s.u + dt * (th * w + (1 - th) * s.w)
            if not nonlinear or k == cfg.corrections:
                break
            f = nonlinear_force(g, th * u + (1 - th) * s.u, spec)
        return SystemState(g, v, u, w, s.t + dt)


@lru_cache(maxsize=16)
def stepper_for(cfg: RunConfig) -> Stepper:
    return Stepper(cfg)


def step(state: SystemState, cfg: RunConfig) -> SystemState:
    """Advance ``state`` by one step of ``cfg.dt``."""
    if state.grid is not build_grid(cfg.grid):
        raise ValueError("state grid does not match cfg.grid")
    return stepper_for(cfg).step(state)


def iterate(cfg: RunConfig, U0: SystemState) -> Iterator[SystemState]:
    """Yield ``U0`` and then every step up to ``cfg.T``."""
    st = stepper_for(cfg)
    s = U0
    yield s
    for _ in range(cfg.n_steps):
        s = st.step(s)
        yield s


# -- ledger --------------------------------------------------------------------

@dataclass
class EnergyLedger:
    """Per-step energy record; ``residual = E(t) + dissipation - E(0) - work``."""

    rows: list[tuple[float, ...]] = field(default_factory=list)
    eta: float = 0.0

    def column(self, name: str) -> np.ndarray:
        i = LEDGER_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def total(self) -> np.ndarray:
        return sum(self.column(c) for c in LEDGER_COLUMNS[1:5])

    @property
    def max_residual(self) -> float:
        r = self.column("residual")
        return float(np.abs(r).max()) if r.size else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(LEDGER_COLUMNS)
        for r in self.rows:
            wr.writerow([repr(float(x)) for x in r])
        return buf.getvalue()


class LedgerRecorder:
    def __init__(self, cfg: RunConfig, eta: float):
        self.cfg, self.eta = cfg, eta
        self.G = stepper_for(cfg).G
        self.ledger = EnergyLedger(eta=eta)
        self._prev = None

    def record(self, s: SystemState) -> None:
        g, spec = s.grid, self.cfg.potential
        parts = energy_parts(s, spec)
        e = float(sum(parts))
        q = dissipation_rate(s)
        pw = g.fluid_inner(self.G, s.v)
        if self._prev is None:
            self.e0 = e
            diss = work = 0.0
        else:
            t0, q0, pw0, diss0, work0 = self._prev
            dt = s.t - t0
            diss = diss0 + 0.5 * dt * (q0 + q)
            work = work0 + 0.5 * dt * (pw0 + pw)
        res = e + diss - self.e0 - work
        w_lyap = e + self.eta * lyapunov_cross(s) if self.eta else e
        self.ledger.rows.append((s.t, *parts, diss, work, res, s.norm(), w_lyap))
        self._prev = (s.t, q, pw, diss, work)


def run(cfg: RunConfig, U0: SystemState | None = None, eta: float | None = None,
        keep_every: int | None = None):
    """Advance to ``cfg.T``; returns ``(snapshots, ledger)``.

    Snapshots are kept every ``cfg.cadence`` steps (plus the final state); the
    ledger has one row per step.  ``eta`` defaults to ``cfg.eta`` and then to
    :func:`lyapunov_threshold`.
    """
    grid = build_grid(cfg.grid)
    U0 = initial_state(grid, cfg.initial) if U0 is None else U0
    if eta is None:
        eta = cfg.eta if cfg.eta is not None else lyapunov_threshold(grid)
    every = keep_every or cfg.cadence
    rec = LedgerRecorder(cfg, eta)
    snaps = []
    last = None
    spike = None
    for n, s in enumerate(iterate(cfg, U0)):
        rec.record(s)
        if n % every == 0:
            snaps.append(s)
        if n > 0 and spike is None:
            r = rec.ledger.rows
            jump = abs(r[-1][7] - r[-2][7])
            if jump > 0.1 * max(rec.e0, 1e-300) and rec.e0 > 0:
                spike = s.t
                warnings.warn(f"energy residual spike at t={s.t:.4g}: explicit nonlinearity "
                              f"may be unstable, reduce dt or enable corrections", RuntimeWarning)
        last = (n, s)
    if last is not None and last[0] % every:
        snaps.append(last[1])
    return snaps, rec.ledger


# -- probes --------------------------------------------------------------------

def continuous_dependence_probe(U0: SystemState, Uh0: SystemState, cfg: RunConfig) -> np.ndarray:
    """``[||U - Uh||^2 + int ||grad(v - vh)||^2] / ||U0 - Uh0||^2`` at every step.

    Returns zeros when the initial states coincide.
    """
    d0 = (U0 - Uh0).norm() ** 2
    n = cfg.n_steps + 1
    if d0 == 0.0:
        return np.zeros(n)
    g = U0.grid
    out = np.empty(n)
    integral, q_prev, t_prev = 0.0, None, None
    for k, (a, b) in enumerate(zip(iterate(cfg, U0), iterate(cfg, Uh0))):
        dv, dw = a.v - b.v, a.w - b.w
        q = g.gradient_form(dv, dv, dw, dw)
        if q_prev is not None:
            integral += 0.5 * (a.t - t_prev) * (q + q_prev)
        q_prev, t_prev = q, a.t
        out[k] = ((a - b).norm() ** 2 + integral) / d0
    return out


@dataclass
class DecayFit:
    alpha: float
    r2: float
    intercept: float
    degenerate: bool = False
    decays: bool = True
    t_start: float = 0.0


def decay_rate_fit(ledger: EnergyLedger, tail: float = 0.5, floor: float = 1e-13) -> DecayFit:
    """Least-squares fit of ``log ||U(t)||_H`` over the last ``tail`` fraction of the run.

    Samples below ``floor`` times the initial norm are dropped (round-off).
    ``degenerate`` flags an identically zero trajectory; ``decays`` is False
    when the fitted slope is not negative.
    """
    t = ledger.t
    nrm = ledger.column("norm_H")
    if nrm.size == 0 or not np.any(nrm > 0):
        return DecayFit(0.0, 0.0, -np.inf, degenerate=True, decays=False)
    t0 = t[0] + (1.0 - tail) * (t[-1] - t[0])
    keep = (t >= t0) & (nrm > floor * nrm[0] if nrm[0] > 0 else nrm > 0)
    if keep.sum() < 3:
        return DecayFit(0.0, 0.0, -np.inf, degenerate=True, decays=False, t_start=t0)
    x, y = t[keep], np.log(nrm[keep])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 0.0
    fit = DecayFit(float(-slope), r2, float(icpt), t_start=float(t0))
    if slope >= 0:
        fit.decays = False
        warnings.warn("trajectory does not decay over the fitted tail", RuntimeWarning)
    return fit


def lyapunov_descent_rate(ledger: EnergyLedger, floor: float = 1e-9) -> float:
    """Largest ``c0`` with ``W(t_{n+1}) <= W(t_n) exp(-c0 dt)`` on every step.

    Steps where ``W`` has fallen below ``floor * W(0)`` are round-off and skipped.
    """
    t, W = ledger.t, ledger.column("W_lyap")
    if W.size < 2 or W[0] <= 0:
        return 0.0
    ok = W[:-1] > floor * W[0]
    if not np.any(ok):
        return 0.0
    ratio = W[1:][ok] / W[:-1][ok]
    dt = np.diff(t)[ok]
    return float(np.min(-np.log(np.maximum(ratio, 1e-300)) / dt))
