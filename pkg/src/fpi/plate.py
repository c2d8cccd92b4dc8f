"""In-plane plate: elasticity operator, its form, feedback potential and energies."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import numpy.polynomial.polynomial as npoly
import scipy.linalg as sla
import scipy.sparse as sp

from .grid import Grid

KINDS = ("zero", "quartic", "isotropic", "separable")


@dataclass(frozen=True)
class PotentialSpec:
    """Feedback potential ``Phi(u^1, u^2)``.

    kind
        ``"zero"``: ``Phi = 0``.
        ``"quartic"``: ``Phi = kappa |u|^4``.
        ``"isotropic"``: ``Phi = psi0(|u|^2)`` with ``psi0`` given by ``coeffs``.
        ``"separable"``: ``Phi = psi(u^1) + psi(u^2)`` with ``psi`` given by ``coeffs``.
    coeffs
        Polynomial coefficients, lowest degree first.
    """

    kind: str = "quartic"
    kappa: float = 1.0
    coeffs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"potential kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.kind in ("isotropic", "separable") and not self.coeffs:
            raise ValueError(f"{self.kind} potential needs coeffs")

    @property
    def psi(self) -> np.ndarray:
        """Coefficients of the scalar profile (``psi0`` or ``psi``)."""
        if self.kind == "quartic":
            return np.array([0.0, 0.0, self.kappa])
        if self.kind == "zero":
            return np.array([0.0])
        return npoly.polytrim(np.array(self.coeffs), 0.0)

    @property
    def isotropic(self) -> bool:
        return self.kind in ("quartic", "isotropic")

    @property
    def degree(self) -> int:
        """Homogeneity degree of the leading term of ``Phi`` in ``u``."""
        n = len(self.psi) - 1
        return 2 * n if self.isotropic else n

    @property
    def growth_exponent(self) -> int:
        """``p`` in ``|Phi''(u)| <= C (1 + |u|^p)``."""
        return max(self.degree - 2, 0)

    def validate(self) -> None:
        """Reject potentials that are negative somewhere or grow the wrong way."""
        c = self.psi
        if self.kind == "zero":
            return
        if c[-1] <= 0:
            raise ValueError("potential leading coefficient must be positive")
        if not self.isotropic and (len(c) - 1) % 2:
            raise ValueError("separable potential must have even degree")
        crit = npoly.polyroots(npoly.polyder(c)) if len(c) > 2 else np.array([])
        pts = [0.0] + [r.real for r in np.atleast_1d(crit) if abs(r.imag) < 1e-12]
        if self.isotropic:
            pts = [s for s in pts if s >= 0]
        if min(npoly.polyval(np.array(pts), c)) < -1e-14:
            raise ValueError("potential must be nonnegative")

    # pointwise ---------------------------------------------------------------
    def phi(self, u1, u2=0.0):
        u1, u2 = np.asarray(u1, float), np.asarray(u2, float)
        c = self.psi
        if self.isotropic:
            return npoly.polyval(u1 * u1 + u2 * u2, c)
        return npoly.polyval(u1, c) + npoly.polyval(u2, c)

    def grad(self, u1, u2=0.0):
        """``(dPhi/du^1, dPhi/du^2)``."""
        u1, u2 = np.asarray(u1, float), np.asarray(u2, float)
        dc = npoly.polyder(self.psi) if len(self.psi) > 1 else np.array([0.0])
        if self.isotropic:
            ds = npoly.polyval(u1 * u1 + u2 * u2, dc)
            return 2.0 * u1 * ds, 2.0 * u2 * ds
        return npoly.polyval(u1, dc), npoly.polyval(u2, dc)


# -- discrete operators ----------------------------------------------------------

def apply_plate_operator(grid: Grid, u: np.ndarray) -> np.ndarray:
    """``A u`` for the clamped plate (second-order staggered differences)."""
    return grid.plate_stiffness @ u / grid.plate_cell_area


def plate_operator_matrix(grid: Grid) -> np.ndarray:
    return grid.plate_stiffness.toarray() / grid.plate_cell_area


def plate_form_a(grid: Grid, u: np.ndarray, uh: np.ndarray) -> float:
    """``a(u, uh) = sum_i (grad u^i, grad uh^i) + lam (div u, div uh)``."""
    return grid.plate_form(u, uh)


@lru_cache(maxsize=32)
def _quadrature(grid: Grid, isotropic: bool):
    """Maps from plate unknowns to the points where ``Phi`` is sampled.

    Returns ``(I1, I2)``; ``I2`` is None when the second component is absent.
    Isotropic potentials on a 2D plate are sampled at cell centres (both
    components averaged there); otherwise each component is used at its own
    nodes.
    """
    n = grid.n_plate
    if grid.d == 2:
        return sp.identity(n, format="csr"), None
    o = grid.plate_offsets
    nx, ny = grid.cells[:-1]
    if isotropic:
        def avg(k):
            rows = np.concatenate([np.arange(k - 1), np.arange(1, k)])
            cols = np.concatenate([np.arange(k - 1), np.arange(k - 1)])
            return sp.csr_matrix((0.5 * np.ones(2 * (k - 1)), (rows, cols)), shape=(k, k - 1))
        i1 = sp.kron(avg(nx), sp.identity(ny), format="csr")
        i2 = sp.kron(sp.identity(nx), avg(ny), format="csr")
        z1 = sp.csr_matrix((nx * ny, o[2] - o[1]))
        z2 = sp.csr_matrix((nx * ny, o[1]))
        return sp.hstack([i1, z1], format="csr"), sp.hstack([z2, i2], format="csr")
    sel1 = sp.identity(n, format="csr")[: o[1]]
    sel2 = sp.identity(n, format="csr")[o[1]:]
    return sel1, sel2


def potential_energy(grid: Grid, u: np.ndarray, spec: PotentialSpec) -> float:
    """Quadrature of ``Phi(u)`` over Omega."""
    if spec.kind == "zero":
        return 0.0
    i1, i2 = _quadrature(grid, spec.isotropic)
    w = grid.plate_cell_area
    if i2 is None:
        return w * float(np.sum(spec.phi(i1 @ u)))
    if spec.isotropic:
        return w * float(np.sum(spec.phi(i1 @ u, i2 @ u)))
    c = spec.psi
    return w * float(np.sum(npoly.polyval(i1 @ u, c)) + np.sum(npoly.polyval(i2 @ u, c)))


def nonlinear_force(grid: Grid, u: np.ndarray, spec: PotentialSpec) -> np.ndarray:
    """Plate field ``f(u)``: the exact gradient of :func:`potential_energy` in ``(.,.)_Omega``."""
    if spec.kind == "zero":
        return np.zeros_like(u)
    i1, i2 = _quadrature(grid, spec.isotropic)
    if i2 is None:
        return i1.T @ spec.grad(i1 @ u)[0]
    if spec.isotropic:
        g1, g2 = spec.grad(i1 @ u, i2 @ u)
        return i1.T @ g1 + i2.T @ g2
    dc = npoly.polyder(spec.psi)
    return i1.T @ npoly.polyval(i1 @ u, dc) + i2.T @ npoly.polyval(i2 @ u, dc)


def plate_energy(grid: Grid, u: np.ndarray, w: np.ndarray, spec: PotentialSpec) -> float:
    """``1/2 (||u_t||^2 + a(u, u)) + int Phi(u)``."""
    return 0.5 * (grid.plate_inner(w, w) + grid.plate_form(u, u)) + potential_energy(grid, u, spec)


@dataclass
class DissipativityReport:
    delta: float
    c1: float
    c2: float
    holds: bool
    witness: tuple[float, float] | None
    profile_c0: float
    profile_c1: float


def check_dissipativity(spec: PotentialSpec, delta: float, sample_box: tuple[float, float] = (-3.0, 3.0),
                        c1: float | None = None, c2: float | None = None, n: int = 241) -> DissipativityReport:
    """Sample ``sum_i u^i f^i(u) - c1 Phi(u) + delta |u|^2 >= -c2`` on a square box.

    Without a candidate ``c2`` the smallest feasible value on the samples is
    reported.  With a candidate, ``holds`` is False and ``witness`` is the
    worst sample point when the candidate fails.  The profile entries check the
    one-dimensional condition ``s psi'(s) - c0 psi(s) >= -c1`` with
    ``c0`` matched to ``c1`` and report the smallest feasible ``c1`` there.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if c1 is None:
        c1 = float(max(spec.degree, 1))
    s = np.linspace(*sample_box, n)
    u1, u2 = np.meshgrid(s, s, indexing="ij")
    f1, f2 = spec.grad(u1, u2)
    val = u1 * f1 + u2 * f2 - c1 * spec.phi(u1, u2) + delta * (u1**2 + u2**2)
    k = np.unravel_index(np.argmin(val), val.shape)
    need = max(0.0, -float(val[k]))
    holds = True
    witness = None
    if c2 is None:
        c2 = need
    elif need > c2 + 1e-12 * max(1.0, abs(c2)):
        holds = False
        witness = (float(u1[k]), float(u2[k]))

    c = spec.psi
    ss = s**2 if spec.isotropic else s
    dc = npoly.polyder(c) if len(c) > 1 else np.array([0.0])
    # sum u^i f^i = 2 s psi0'(s) for isotropic potentials, hence the halved c0
    c0 = 0.5 * c1 if spec.isotropic else c1
    prof = ss * npoly.polyval(ss, dc) - c0 * npoly.polyval(ss, c)
    return DissipativityReport(delta, c1, float(c2), holds, witness, c0, max(0.0, -float(prof.min())))


@lru_cache(maxsize=32)
def plate_eigensystem(grid: Grid):
    """Generalized eigenpairs of ``(K_p, M_p)``; eigenvectors are M-orthonormal."""
    k = grid.plate_stiffness.toarray()
    m = grid.plate_cell_area * np.eye(grid.n_plate)
    lam, vec = sla.eigh(k, m)
    lam.setflags(write=False)
    vec.setflags(write=False)
    return lam, vec


def fractional_norm(grid: Grid, u: np.ndarray, s: float) -> float:
    """``||A^{s/2} u||_Omega``: discrete ``H^s`` norm by spectral interpolation."""
    lam, vec = plate_eigensystem(grid)
    coef = vec.T @ (grid.plate_cell_area * u)
    return float(np.sqrt(np.sum(lam**s * coef**2)))


def lipschitz_probe(grid: Grid, u: np.ndarray, uh: np.ndarray, spec: PotentialSpec, sigma: float = 0.5) -> float:
    """``||f(u) - f(uh)||_Y / (||u - uh||_sigma (1 + ||u||^p + ||uh||^p))``.

    The growth norms use the order ``1 - sigma/p``.  Returns 0 when ``u == uh``.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    z = u - uh
    den = fractional_norm(grid, z, sigma)
    if den == 0.0:
        return 0.0
    p = spec.growth_exponent
    if p > 0:
        order = 1.0 - sigma / p
        den *= 1.0 + fractional_norm(grid, u, order) ** p + fractional_norm(grid, uh, order) ** p
    else:
        den *= 3.0
    df = nonlinear_force(grid, u, spec) - nonlinear_force(grid, uh, spec)
    return float(np.sqrt(grid.plate_inner(df, df)) / den)
