"""Fluid-side operators: Leray projection, Stokes operator, extension N0, shear trace.

Sign conventions (uniform face volume ``|c|``):

* discrete gradient of a cell field ``q`` on interior faces is ``-D.T @ q``;
* ``-Delta_h v = (K v + K_vb b) / |c|`` where ``b`` is the tangential wall
  value on Omega (zero on S).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid
from .linalg import conjugate_gradient

DEFAULT_TOL = 1e-10
DEFAULT_MAXITER = 10_000


def _zero_mean(q):
    return q - q.mean()


def laplacian(grid: Grid, v: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Ghost-cell vector Laplacian on interior faces; ``b`` is the top wall value."""
    out = grid.stiffness @ v
    if b is not None:
        out = out + grid.coupling @ b
    return -out / grid.cell_volume


def gradient(grid: Grid, q: np.ndarray) -> np.ndarray:
    """Face gradient of a cell-centred scalar (zero normal flux at walls)."""
    return -(grid.divergence.T @ q)


def leray_project(grid: Grid, w: np.ndarray, tol: float = DEFAULT_TOL,
                  maxiter: int = DEFAULT_MAXITER, return_pressure: bool = False):
    """Orthogonal projection of ``w`` onto discretely divergence-free fields.

    Solves the Neumann pressure Poisson problem ``D D^T q = D w`` by conjugate
    gradients on zero-mean fields and returns ``w - D^T q``.

    Raises
    ------
    ConvergenceError
        If the Poisson solve does not reach ``tol``.
    """
    D = grid.divergence
    rhs = D @ w
    scale = max(np.linalg.norm(w) / np.sqrt(max(grid.n_velocity, 1)), 1e-300)
    if np.linalg.norm(rhs) <= 1e-15 * scale:
        q = np.zeros(grid.n_pressure)
    else:
        q, _ = conjugate_gradient(lambda x: D @ (D.T @ x), rhs, tol=tol, maxiter=maxiter,
                                  project=_zero_mean)
    v = w - D.T @ q
    return (v, q) if return_pressure else v


def apply_stokes_operator(grid: Grid, v: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``A0 v = -nu P_L Delta_h v`` with homogeneous Dirichlet data."""
    return leray_project(grid, -grid.nu * laplacian(grid, v), tol=tol)


@lru_cache(maxsize=16)
def _stiffness_factor(grid: Grid):
    return spla.splu(sp.csc_matrix(grid.stiffness))


@dataclass
class StokesSolution:
    v: np.ndarray
    p: np.ndarray
    iterations: int
    momentum_residual: float
    divergence_residual: float
    boundary_residual: float = 0.0


def solve_stationary_stokes(grid: Grid, g: np.ndarray | None = None, psi: np.ndarray | None = None,
                            tol: float = DEFAULT_TOL, maxiter: int = DEFAULT_MAXITER) -> StokesSolution:
    """Solve ``-nu Delta v + grad p = g``, ``div v = 0``, ``v = 0`` on S, ``v = (psi; 0)`` on Omega.

    Uzawa-type scheme: conjugate gradients on the pressure Schur complement
    ``D K^{-1} D^T``, with the velocity block ``K`` applied through a cached
    sparse factorization.  The pressure is returned with zero mean.  The
    boundary condition on Omega enters through the ghost values, so the
    reported boundary residual is exactly zero.
    """
    nu, vol = grid.nu, grid.cell_volume
    D = grid.divergence
    g = np.zeros(grid.n_velocity) if g is None else np.asarray(g, float)
    psi = np.zeros(grid.n_plate) if psi is None else np.asarray(psi, float)
    rhs = vol * g - nu * (grid.coupling @ psi)
    lu = _stiffness_factor(grid)
    kr = lu.solve(rhs)

    def schur(q):
        return D @ lu.solve(D.T @ q)

    b = -(D @ kr) / vol
    if np.linalg.norm(b) == 0.0:
        p, its = np.zeros(grid.n_pressure), 0
    else:
        p, its = conjugate_gradient(schur, b, tol=tol * 1e-2, maxiter=maxiter, project=_zero_mean)
    v = (kr + vol * lu.solve(D.T @ p)) / nu
    mom = nu * (grid.stiffness @ v) - vol * (D.T @ p) - rhs
    return StokesSolution(
        v=v, p=p, iterations=its,
        momentum_residual=float(np.linalg.norm(mom) / max(np.linalg.norm(rhs), 1e-300)),
        divergence_residual=float(np.abs(D @ v).max()) if v.size else 0.0,
    )


def harmonic_extension_N0(grid: Grid, psi: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Velocity part of the Stokes solve with zero force and wall data ``psi`` on Omega."""
    return solve_stationary_stokes(grid, None, psi, tol=tol).v


@lru_cache(maxsize=16)
def extension_matrix(grid: Grid) -> np.ndarray:
    """Dense ``N0`` (interior velocities x plate nodes), one Stokes solve per column."""
    cols = [harmonic_extension_N0(grid, e) for e in np.eye(grid.n_plate)]
    out = np.array(cols).T
    out.setflags(write=False)
    return out


def extension_norm(grid: Grid, iterations: int = 200, seed: int = 0) -> float:
    """``||N0||`` from the Y-norm to the O-norm by power iteration on ``N0^* N0``."""
    n0 = extension_matrix(grid)
    ratio = grid.cell_volume / grid.plate_cell_area
    x = np.random.default_rng(seed).standard_normal(grid.n_plate)
    lam = 0.0
    for _ in range(iterations):
        y = ratio * (n0.T @ (n0 @ x))
        lam_new = np.linalg.norm(y) / np.linalg.norm(x)
        x = y / np.linalg.norm(y)
        if abs(lam_new - lam) <= 1e-14 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))


def trace_gamma(grid: Grid, v: np.ndarray, b: np.ndarray | None = None, p: np.ndarray | None = None,
                stencil: str = "three_point") -> np.ndarray:
    """Tangential shear ``nu dv^i/dx_d`` on Omega, one value per plate node.

    ``b`` is the wall value of the tangential velocity (the plate velocity).
    The pressure does not enter the tangential stress and ``p`` is accepted
    only for interface symmetry.

    ``stencil='three_point'`` is the second-order one-sided difference through
    the wall value and the two top face layers.  ``stencil='compatible'`` is
    the two-point flux ``2 (b - v_top) / h`` that is the exact adjoint of the
    ghost-cell Laplacian; the coupled dynamics use it.
    """
    del p
    hz = grid.h[-1]
    b = np.zeros(grid.n_plate) if b is None else np.asarray(b, float)
    v1 = v[grid.top_faces]
    if stencil == "compatible":
        return grid.nu * 2.0 * (b - v1) / hz
    if stencil == "three_point":
        v2 = v[grid.second_faces]
        return grid.nu * (8.0 * b - 9.0 * v1 + v2) / (3.0 * hz)
    raise ValueError(f"unknown stencil {stencil!r}")


def greens_identity_check(grid: Grid, v: np.ndarray, u: np.ndarray, b: np.ndarray | None = None,
                          stencil: str = "three_point") -> float:
    """``|nu (Delta v, N0 u) + nu (grad v, grad N0 u) - (gamma v, u)_Omega|``.

    ``b`` is the wall value of ``v`` on Omega.  With the compatible trace the
    residual is round-off; with the three-point trace it measures the
    consistency error of the trace stencil.
    """
    b = np.zeros(grid.n_plate) if b is None else np.asarray(b, float)
    n0u = harmonic_extension_N0(grid, u)
    nu = grid.nu
    term1 = nu * grid.fluid_inner(laplacian(grid, v, b), n0u)
    term2 = nu * grid.gradient_form(v, n0u, b, u)
    term3 = grid.plate_inner(trace_gamma(grid, v, b, stencil=stencil), u)
    return abs(term1 + term2 - term3)
