"""Box geometry, MAC staggered layout, plate layout and discrete inner products.

The fluid occupies the box ``[0, L_0] x ... x [0, L_{d-1}]``.  The last axis is
vertical; the top face ``x_{d-1} = L_{d-1}`` is the plate interface Omega and
every other face belongs to the rigid wall S.

Velocity component ``m`` lives on the faces normal to axis ``m`` (only the
interior faces carry unknowns, boundary-normal values are zero).  The plate
has one displacement component per horizontal axis, and plate component ``m``
is collocated with the top-layer faces of fluid component ``m``, so the
interface condition ``v|_Omega = (u_t; 0)`` needs no interpolation.

All discrete operators are derived from a single Dirichlet form per field.
The ghost-cell Laplacian, the gradient norm and the shear trace are then
exact adjoints of each other, which is what makes the discrete energy balance
close to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp


class GridError(ValueError):
    """Invalid grid specification or mismatched grid data."""


def lambda_from_poisson(mu: float) -> float:
    """Lame-type coupling ``lambda = (1 + mu) / (1 - mu)``."""
    if not 0.0 < mu < 0.5:
        raise GridError(f"poisson_mu must lie in (0, 1/2), got {mu!r}")
    return (1.0 + mu) / (1.0 - mu)


@dataclass(frozen=True)
class GridSpec:
    """Resolution and physical parameters of a run.

    Parameters
    ----------
    dimensions : int
        2 (1D plate, reduced mode) or 3 (2D plate).
    cells : tuple of int
        Cells per axis, vertical axis last.
    extents : tuple of float, optional
        Box side lengths; unit box by default.
    nu : float
        Viscosity.
    lame_lambda : float, optional
        Plate coupling parameter.  Derived from ``poisson_mu`` when omitted.
    poisson_mu : float, optional
        Poisson ratio in (0, 1/2).
    """

    dimensions: int = 2
    cells: tuple[int, ...] = (16, 16)
    extents: tuple[float, ...] | None = None
    nu: float = 1.0
    lame_lambda: float | None = None
    poisson_mu: float | None = None

    def __post_init__(self):
        d = self.dimensions
        if d not in (2, 3):
            raise GridError(f"dimensions must be 2 or 3, got {d!r}")
        cells = tuple(int(n) for n in self.cells)
        if len(cells) != d:
            raise GridError(f"cells must have {d} entries, got {self.cells!r}")
        if min(cells) < 3:
            raise GridError(f"cells_per_axis must be >= 3 on every axis, got {cells}")
        object.__setattr__(self, "cells", cells)
        extents = (1.0,) * d if self.extents is None else tuple(float(x) for x in self.extents)
        if len(extents) != d or min(extents) <= 0:
            raise GridError(f"extents must be {d} positive lengths, got {self.extents!r}")
        object.__setattr__(self, "extents", extents)
        if not self.nu > 0:
            raise GridError(f"nu must be positive, got {self.nu!r}")
        lam = self.lame_lambda
        if self.poisson_mu is not None:
            derived = lambda_from_poisson(self.poisson_mu)
            if lam is not None and abs(lam - derived) > 1e-12 * max(1.0, derived):
                raise GridError(
                    f"lame_lambda={lam!r} inconsistent with poisson_mu={self.poisson_mu!r} "
                    f"(expected {derived!r})"
                )
            lam = derived
        if lam is None:
            lam = 1.0
        if lam < 0:
            raise GridError(f"lame_lambda must be nonnegative, got {lam!r}")
        object.__setattr__(self, "lame_lambda", float(lam))


@dataclass(frozen=True)
class BoundaryMap:
    """Classification of every boundary cell face into Omega or S.

    ``faces`` rows are ``(axis, side, *cell_index)`` with side -1/+1.
    """

    dimensions: int
    faces: np.ndarray
    on_plate: np.ndarray

    @property
    def n_plate_faces(self) -> int:
        return int(self.on_plate.sum())

    def normal(self, row: int) -> np.ndarray:
        axis, side = self.faces[row, :2]
        n = np.zeros(self.dimensions)
        n[axis] = side
        return n


def _node_stiffness(n: int, h: float) -> sp.csr_matrix:
    # unknowns at interior nodes 1..n-1, zero at both ends
    m = n - 1
    return sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="csr") / h**2


def _cell_stiffness(n: int, h: float) -> sp.csr_matrix:
    # unknowns at cell centres, zero wall value half a cell away (ghost reflection)
    main = 2 * np.ones(n)
    main[0] = main[-1] = 3
    return sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1], format="csr") / h**2


def _node_difference(n: int, h: float) -> sp.csr_matrix:
    # cell i -> (face_{i+1} - face_i)/h; interior face k sits at (k+1)h
    rows = np.concatenate([np.arange(n - 1), np.arange(1, n)])
    cols = np.concatenate([np.arange(n - 1), np.arange(n - 1)])
    vals = np.concatenate([np.ones(n - 1), -np.ones(n - 1)]) / h
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n - 1))


def _kron_all(mats: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return sp.csr_matrix(out)


def _staggered_shapes(cells: Sequence[int]) -> list[tuple[int, ...]]:
    return [tuple(n - 1 if a == m else n for a, n in enumerate(cells)) for m in range(len(cells))]


def _dirichlet_form(cells, h, vol) -> sp.csr_matrix:
    """Block-diagonal Dirichlet form of a staggered vector field with zero walls."""
    blocks = []
    for m in range(len(cells)):
        terms = []
        for a in range(len(cells)):
            mats = [sp.identity(s, format="csr") for s in _staggered_shapes(cells)[m]]
            mats[a] = _node_stiffness(cells[a], h[a]) if a == m else _cell_stiffness(cells[a], h[a])
            terms.append(_kron_all(mats))
        blocks.append(vol * sum(terms))
    return sp.block_diag(blocks, format="csr")


def _divergence(cells, h) -> sp.csr_matrix:
    cols = []
    for m in range(len(cells)):
        mats = [sp.identity(n, format="csr") for n in cells]
        mats[m] = _node_difference(cells[m], h[m])
        cols.append(_kron_all(mats))
    return sp.hstack(cols, format="csr")


def _positions(shape, h, node_axis):
    axes = []
    for a, n in enumerate(shape):
        if a == node_axis:
            axes.append((np.arange(n) + 1.0) * h[a])
        else:
            axes.append((np.arange(n) + 0.5) * h[a])
    return np.meshgrid(*axes, indexing="ij")


@dataclass(frozen=True, eq=False)
class Grid:
    """Discrete layout and operators built from a :class:`GridSpec`.

    Vectors are flat float arrays:

    * velocity ``v``: interior faces, components concatenated, C order with the
      vertical axis last;
    * pressure ``p``: cell centres, C order;
    * plate fields ``u``, ``u_t``: plate nodes, components concatenated.
    """

    spec: GridSpec
    h: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(L / n for L, n in zip(self.spec.extents, self.spec.cells)))

    # -- sizes --------------------------------------------------------------
    @property
    def d(self) -> int:
        return self.spec.dimensions

    @property
    def cells(self) -> tuple[int, ...]:
        return self.spec.cells

    @property
    def nu(self) -> float:
        return self.spec.nu

    @property
    def lam(self) -> float:
        return float(self.spec.lame_lambda)

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def plate_cell_area(self) -> float:
        return float(np.prod(self.h[:-1]))

    @cached_property
    def velocity_shapes(self) -> list[tuple[int, ...]]:
        return _staggered_shapes(self.cells)

    @cached_property
    def velocity_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([np.prod(s) for s in self.velocity_shapes])]).astype(int)

    @property
    def n_velocity(self) -> int:
        return int(self.velocity_offsets[-1])

    @property
    def n_pressure(self) -> int:
        return int(np.prod(self.cells))

    @cached_property
    def plate_shapes(self) -> list[tuple[int, ...]]:
        return _staggered_shapes(self.cells[:-1])

    @cached_property
    def plate_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([np.prod(s) for s in self.plate_shapes])]).astype(int)

    @property
    def n_plate(self) -> int:
        return int(self.plate_offsets[-1])

    @cached_property
    def n_faces_total(self) -> int:
        """All staggered faces, boundary faces included."""
        c = self.cells
        return int(sum((c[m] + 1) * np.prod([n for a, n in enumerate(c) if a != m]) for m in range(self.d)))

    # -- geometry -----------------------------------------------------------
    @cached_property
    def boundary(self) -> BoundaryMap:
        rows = []
        for axis in range(self.d):
            for side in (-1, 1):
                idx = [range(n) for n in self.cells]
                idx[axis] = [0] if side < 0 else [self.cells[axis] - 1]
                for cell in np.stack(np.meshgrid(*idx, indexing="ij"), -1).reshape(-1, self.d):
                    rows.append((axis, side, *cell))
        faces = np.asarray(rows, dtype=int)
        on_plate = (faces[:, 0] == self.d - 1) & (faces[:, 1] == 1)
        return BoundaryMap(self.d, faces, on_plate)

    def velocity_positions(self, m: int) -> list[np.ndarray]:
        return _positions(self.velocity_shapes[m], self.h, m)

    def plate_positions(self, m: int) -> list[np.ndarray]:
        return _positions(self.plate_shapes[m], self.h[:-1], m)

    def cell_centres(self) -> list[np.ndarray]:
        return _positions(self.cells, self.h, -1)

    def velocity_from_function(self, fn) -> np.ndarray:
        """Sample ``fn(m, *coords)`` on the interior faces of each component."""
        parts = [np.asarray(fn(m, *self.velocity_positions(m)), float) * np.ones(self.velocity_shapes[m])
                 for m in range(self.d)]
        return np.concatenate([p.ravel() for p in parts])

    def plate_from_function(self, fn) -> np.ndarray:
        """Sample ``fn(m, *coords)`` on the plate nodes of each component."""
        parts = [np.asarray(fn(m, *self.plate_positions(m)), float) * np.ones(self.plate_shapes[m])
                 for m in range(self.d - 1)]
        return np.concatenate([p.ravel() for p in parts])

    def velocity_component(self, v: np.ndarray, m: int) -> np.ndarray:
        o = self.velocity_offsets
        return v[o[m]:o[m + 1]].reshape(self.velocity_shapes[m])

    def plate_component(self, u: np.ndarray, m: int) -> np.ndarray:
        o = self.plate_offsets
        return u[o[m]:o[m + 1]].reshape(self.plate_shapes[m])

    # -- fluid operators ----------------------------------------------------
    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """Cellwise discrete divergence of interior face velocities."""
        return _divergence(self.cells, self.h)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Velocity-velocity block of the Dirichlet form (walls at zero)."""
        return _dirichlet_form(self.cells, self.h, self.cell_volume)

    @cached_property
    def top_faces(self) -> np.ndarray:
        """Velocity index of the top-layer face under each plate node."""
        nz = self.cells[-1]
        idx = []
        for m in range(self.d - 1):
            n_h = int(np.prod(self.velocity_shapes[m][:-1]))
            idx.append(self.velocity_offsets[m] + np.arange(n_h) * nz + nz - 1)
        return np.concatenate(idx).astype(int)

    @cached_property
    def second_faces(self) -> np.ndarray:
        """Velocity index one layer below :attr:`top_faces`."""
        return self.top_faces - 1

    @cached_property
    def top_weight(self) -> float:
        # half-edge weight 2|c|/h_z^2 between a top face and its wall value
        return 2.0 * self.cell_volume / self.h[-1] ** 2

    @cached_property
    def coupling(self) -> sp.csr_matrix:
        """Velocity-boundary block ``K_vb`` of the Dirichlet form."""
        n_b = self.n_plate
        return sp.csr_matrix(
            (-self.top_weight * np.ones(n_b), (self.top_faces, np.arange(n_b))),
            shape=(self.n_velocity, n_b),
        )

    @cached_property
    def boundary_stiffness(self) -> sp.csr_matrix:
        """Boundary-boundary block ``K_bb`` of the Dirichlet form."""
        return sp.identity(self.n_plate, format="csr") * self.top_weight

    # -- plate operators ----------------------------------------------------
    @cached_property
    def plate_divergence(self) -> sp.csr_matrix:
        return _divergence(self.cells[:-1], self.h[:-1])

    @cached_property
    def plate_stiffness(self) -> sp.csr_matrix:
        """Stiffness of the form ``a(u, u') = sum (grad u^i, grad u'^i) + lam (div u, div u')``."""
        area = self.plate_cell_area
        k = _dirichlet_form(self.cells[:-1], self.h[:-1], area)
        dv = self.plate_divergence
        return sp.csr_matrix(k + self.lam * area * (dv.T @ dv))

    # -- inner products -----------------------------------------------------
    def fluid_inner(self, v: np.ndarray, w: np.ndarray) -> float:
        return self.cell_volume * float(np.dot(v, w))

    def plate_inner(self, u: np.ndarray, w: np.ndarray) -> float:
        return self.plate_cell_area * float(np.dot(u, w))

    def _gradient_form(self, v, w, bv, bw) -> float:
        out = float(v @ (self.stiffness @ w))
        if bv is not None or bw is not None:
            bv = np.zeros(self.n_plate) if bv is None else bv
            bw = np.zeros(self.n_plate) if bw is None else bw
            kb = self.coupling
            out += float(v @ (kb @ bw) + bv @ (kb.T @ w) + self.top_weight * bv @ bw)
        return out

    # the bilinear forms are evaluated in both orders and averaged, so swapping
    # the arguments gives a bitwise identical result
    def gradient_form(self, v, w, bv=None, bw=None) -> float:
        """Discrete ``(grad v, grad w)_O`` including the top wall values ``bv``, ``bw``."""
        return 0.5 * (self._gradient_form(v, w, bv, bw) + self._gradient_form(w, v, bw, bv))

    def plate_form(self, u: np.ndarray, w: np.ndarray) -> float:
        k = self.plate_stiffness
        return 0.5 * (float(u @ (k @ w)) + float(w @ (k @ u)))


@lru_cache(maxsize=64)
def build_grid(spec: GridSpec) -> Grid:
    """Build the staggered layout, plate layout and operators for ``spec``.

    Cached: equal specs share one :class:`Grid` instance.
    """
    return Grid(spec)


def phase_inner_product(U, V) -> float:
    """Energy inner product ``(v, v*)_O + a(u, u*) + (u_t, u_t*)_Omega``.

    Both states must carry the same :class:`Grid` instance.
    """
    if U.grid is not V.grid:
        raise GridError("states live on different grids")
    g = U.grid
    return g.fluid_inner(U.v, V.v) + g.plate_form(U.u, V.u) + g.plate_inner(U.w, V.w)
