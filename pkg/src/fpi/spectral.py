"""Dense generator of the linear coupled system and its stability certificates.

The state on free unknowns is ``y = (a; u; w)`` where ``v = Z a`` and ``Z`` is
an orthonormal basis of the discretely divergence-free interior fields.  The
interface condition ``v|_Omega = (w; 0)`` is eliminated by substitution, which
moves the wall part of the shear trace into the (3,3) block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .grid import Grid
from .plate import apply_plate_operator
from .state import SystemState
from .stokes import extension_matrix, laplacian, leray_project, solve_stationary_stokes, trace_gamma

MAX_DENSE = 5000


class DimensionError(ValueError):
    """Grid too large for dense assembly."""


@lru_cache(maxsize=16)
def divergence_free_basis(grid: Grid) -> np.ndarray:
    """Orthonormal basis of ``ker D`` on the interior faces."""
    z = sla.null_space(grid.divergence.toarray())
    z.setflags(write=False)
    return z


@dataclass(eq=False)
class GeneratorMatrix:
    grid: Grid
    basis: np.ndarray
    matrix: np.ndarray
    gram: np.ndarray
    sizes: tuple[int, int] = field(default=(0, 0))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def block(self, i: int, j: int) -> np.ndarray:
        na, nb = self.sizes
        cuts = [0, na, na + nb, na + 2 * nb]
        return self.matrix[cuts[i - 1]:cuts[i], cuts[j - 1]:cuts[j]]

    def to_state(self, y: np.ndarray) -> SystemState:
        na, nb = self.sizes
        return SystemState(self.grid, self.basis @ y[:na], y[na:na + nb], y[na + nb:])

    def from_state(self, U: SystemState) -> np.ndarray:
        """Coordinates of ``U``; the fluid part is orthogonally projected onto ``ker D``."""
        return np.concatenate([self.basis.T @ U.v, U.u, U.w])

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(x @ (self.gram @ y))


def generator_dimension(grid: Grid) -> int:
    return grid.n_velocity - grid.n_pressure + 1 + 2 * grid.n_plate


def assemble_generator(grid: Grid) -> GeneratorMatrix:
    """Dense matrix of ``cal A`` on ``(a; u; w)`` together with the energy Gram matrix.

    Raises
    ------
    DimensionError
        When the state dimension exceeds ``MAX_DENSE``.
    """
    n = generator_dimension(grid)
    if n > MAX_DENSE:
        raise DimensionError(f"state dimension {n} exceeds dense limit {MAX_DENSE}")
    Z = divergence_free_basis(grid)
    nu, vol, mp = grid.nu, grid.cell_volume, grid.plate_cell_area
    K = grid.stiffness
    Kvb = grid.coupling.toarray()
    Kbb = grid.boundary_stiffness.toarray()
    Kp = grid.plate_stiffness.toarray()
    na, nb = Z.shape[1], grid.n_plate
    A = np.zeros((na + 2 * nb,) * 2)
    A[:na, :na] = nu / vol * (Z.T @ (K @ Z))
    A[:na, na + nb:] = nu / vol * (Z.T @ Kvb)
    A[na:na + nb, na + nb:] = -np.eye(nb)
    A[na + nb:, :na] = nu / mp * (Kvb.T @ Z)
    A[na + nb:, na:na + nb] = Kp / mp
    A[na + nb:, na + nb:] = nu / mp * Kbb
    H = sla.block_diag(vol * np.eye(na), Kp, mp * np.eye(nb))
    return GeneratorMatrix(grid, Z, A, H, (na, nb))


def apply_generator(U: SystemState) -> SystemState:
    """``cal A U`` from the field operators (no assembled matrix).

    ``(P_L(-nu Delta_h v); -u_t; gamma v + A u)`` with the plate velocity as
    wall value of ``v``.
    """
    g = U.grid
    fluid = leray_project(g, -g.nu * laplacian(g, U.v, U.w), tol=1e-13)
    plate = trace_gamma(g, U.v, U.w, stencil="compatible") + apply_plate_operator(g, U.u)
    return SystemState(g, fluid, -U.w, plate, U.t)


@dataclass
class AccretivityReport:
    max_identity_error: float
    min_pairing: float
    min_symmetric_eigenvalue: float
    zero_fluid_pairing: float
    witness: np.ndarray | None = None

    @property
    def accretive(self) -> bool:
        return self.min_symmetric_eigenvalue >= -1e-10 and self.min_pairing >= -1e-10


def dissipation_of(M: GeneratorMatrix, y: np.ndarray) -> float:
    """``nu ||grad v||^2`` for coordinates ``y`` (wall value = plate velocity)."""
    U = M.to_state(y)
    g = M.grid
    return g.nu * g.gradient_form(U.v, U.v, U.w, U.w)


def check_accretivity(M: GeneratorMatrix, n_samples: int = 100, seed: int = 0) -> AccretivityReport:
    """Compare ``(cal A U, U)_H`` with ``nu ||grad v||^2`` on random states.

    ``max_identity_error`` is relative to ``||U||_H^2``.  The symmetric part of
    ``H cal A`` is also checked for positive semidefiniteness in the H-metric.
    ``zero_fluid_pairing`` takes a state with the interior fluid at rest; the
    plate velocity still drives the wall shear, so the pairing must reduce to
    that wall dissipation (the skew plate blocks cancel).
    """
    rng = np.random.default_rng(seed)
    na, nb = M.sizes
    worst, min_pair, witness = 0.0, np.inf, None
    HA = M.gram @ M.matrix
    for _ in range(n_samples):
        y = rng.standard_normal(M.dim)
        pair = float(y @ (HA @ y))
        err = abs(pair - dissipation_of(M, y)) / M.inner(y, y)
        if err > worst:
            worst = err
        if pair < min_pair:
            min_pair, witness = pair, y
    sym = 0.5 * (HA + HA.T)
    lam_min = float(sla.eigh(sym, M.gram, eigvals_only=True)[0])
    # interior fluid at rest: only the wall shear survives, the plate blocks cancel
    y0 = rng.standard_normal(M.dim)
    y0[:na] = 0.0
    w0 = y0[na + nb:]
    wall = M.grid.nu * M.grid.top_weight * float(w0 @ w0)
    zero_pair = abs(float(y0 @ (HA @ y0)) - wall) / M.inner(y0, y0)
    return AccretivityReport(worst, min_pair, lam_min, zero_pair, witness if min_pair < -1e-10 else None)


@dataclass
class GeneratorSolve:
    U: SystemState
    relative_residual: float
    constructive: SystemState
    route_difference: float
    condition_number: float


def solve_generator_constructive(grid: Grid, F: SystemState) -> SystemState:
    """Solve ``cal A U = F`` field by field: ``u_t = -h0``, Stokes for ``v``, plate for ``u``."""
    g_field = leray_project(grid, F.v, tol=1e-13)
    w = -F.u
    st = solve_stationary_stokes(grid, g_field, w, tol=1e-13)
    rhs = F.w - trace_gamma(grid, st.v, w, stencil="compatible")
    u = sla.solve(grid.plate_stiffness.toarray(), grid.plate_cell_area * rhs, assume_a="sym")
    return SystemState(grid, st.v, u, w)


def solve_generator(M: GeneratorMatrix, F: SystemState) -> GeneratorSolve:
    """Direct dense solve of ``cal A U = F`` with a cross-check by the constructive route.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the assembled generator is singular.
    """
    f = M.from_state(F)
    y = np.linalg.solve(M.matrix, f)
    res = np.sqrt(M.inner(M.matrix @ y - f, M.matrix @ y - f) / max(M.inner(f, f), 1e-300))
    U = M.to_state(y)
    C = solve_generator_constructive(M.grid, F)
    diff = (U - C).norm() / max(U.norm(), 1e-300)
    return GeneratorSolve(U, float(res), C, float(diff), float(np.linalg.cond(M.matrix)))


def spectrum(M: GeneratorMatrix) -> np.ndarray:
    """Eigenvalues of ``-cal A`` sorted by real part, descending (ties by imaginary part)."""
    ev = np.linalg.eigvals(-M.matrix)
    order = np.lexsort((-ev.imag, -ev.real))
    return ev[order]


def spectral_abscissa(M: GeneratorMatrix) -> float:
    """``max Re lambda`` over the eigenvalues of ``-cal A``."""
    return float(np.max(np.linalg.eigvals(-M.matrix).real))


def semigroup_norm(M: GeneratorMatrix, t: float = 1.0) -> float:
    """``||exp(-t cal A)||`` in the operator norm induced by ``(.,.)_H``."""
    L = np.linalg.cholesky(M.gram)
    E = sla.expm(-t * M.matrix)
    W = L.T @ E @ np.linalg.inv(L.T)
    return float(np.linalg.norm(W, 2))


def propagate(M: GeneratorMatrix, U: SystemState, t: float) -> SystemState:
    """``exp(-t cal A) U`` by dense matrix exponential."""
    return M.to_state(sla.expm(-t * M.matrix) @ M.from_state(U))


def lyapunov_cross_matrix(M: GeneratorMatrix) -> np.ndarray:
    """Symmetric matrix of ``(u, u_t)_Omega + (v, N0 u)_O`` in coordinates ``y``."""
    na, nb = M.sizes
    g = M.grid
    C = np.zeros_like(M.matrix)
    half = 0.5 * g.plate_cell_area * np.eye(nb)
    C[na:na + nb, na + nb:] = half
    C[na + nb:, na:na + nb] = half
    X = 0.5 * g.cell_volume * (M.basis.T @ extension_matrix(g))
    C[:na, na:na + nb] = X
    C[na:na + nb, :na] = X.T
    return C


def lyapunov_descent_rate_linear(M: GeneratorMatrix, eta: float) -> float:
    """Decay rate ``c0`` of ``W`` for the unforced linear flow at the given ``eta``.

    With ``W = y^T B y / 2``, ``B = H + 2 eta C``, the linear flow gives
    ``dW/dt = -y^T P y`` for the symmetrized ``P = H cal A + 2 eta C cal A``, so
    ``c0`` is twice the smallest generalized eigenvalue of ``(P, B)``.
    Positive means ``W`` decays at least like ``exp(-c0 t)``.
    """
    C = lyapunov_cross_matrix(M)
    P = M.gram @ M.matrix + 2.0 * eta * (C @ M.matrix)
    P = 0.5 * (P + P.T)
    B = M.gram + 2.0 * eta * C
    return 2.0 * float(sla.eigh(P, B, eigvals_only=True)[0])
