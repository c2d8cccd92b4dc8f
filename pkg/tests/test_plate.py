import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpi.grid import GridSpec, build_grid
from fpi.plate import (
    PotentialSpec, apply_plate_operator, check_dissipativity, fractional_norm, lipschitz_probe,
    nonlinear_force, plate_eigensystem, plate_energy, plate_form_a, plate_operator_matrix, potential_energy,
)

QUARTIC = PotentialSpec("quartic", 1.0)
DOUBLE_WELL = PotentialSpec("separable", coeffs=(0.25, 0.0, -1.0, 0.0, 1.0))
ISO = PotentialSpec("isotropic", coeffs=(0.0, 1.0, 0.5))


def test_operator_of_zero(g2, g3):
    for g in (g2, g3):
        assert not np.any(apply_plate_operator(g, np.zeros(g.n_plate)))


@pytest.mark.parametrize("n", [8, 13])
def test_one_dimensional_spectrum_closed_form(n):
    lam = 0.0
    g = build_grid(GridSpec(2, (n, 4), lame_lambda=lam))
    h = 1.0 / n
    k = np.arange(1, n)
    ref = (1 + lam) * 4 / h**2 * np.sin(k * np.pi * h / 2) ** 2
    assert np.allclose(np.sort(np.linalg.eigvals(plate_operator_matrix(g)).real), ref, rtol=1e-12)


def test_one_dimensional_operator_scales_with_one_plus_lambda():
    h = 1 / 8
    g = build_grid(GridSpec(2, (8, 4), lame_lambda=2.5))
    k = np.arange(1, 8)
    ref = 3.5 * 4 / h**2 * np.sin(k * np.pi * h / 2) ** 2
    assert np.allclose(plate_eigensystem(g)[0], ref, rtol=1e-12)


def test_two_dimensional_plate_lambda_zero_is_componentwise_laplacian():
    n = 5
    g = build_grid(GridSpec(3, (n, n, 3), lame_lambda=0.0))
    h = 1.0 / n
    node = 4 / h**2 * np.sin(np.arange(1, n) * np.pi * h / 2) ** 2
    # cell-centred direction: Dirichlet by reflection, eigenvalues of the ghost-cell matrix
    T = (np.diag(np.r_[3, 2 * np.ones(n - 2), 3]) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h**2
    cell = np.linalg.eigvalsh(T)
    ref = np.sort(np.concatenate([np.add.outer(node, cell).ravel()] * 2))
    assert np.allclose(plate_eigensystem(g)[0], ref, rtol=1e-10)


@pytest.mark.parametrize("spec", [GridSpec(2, (8, 4), lame_lambda=1.0), GridSpec(3, (4, 5, 3), lame_lambda=2.0)])
def test_operator_symmetric_positive_and_matches_form(spec, rng):
    g = build_grid(spec)
    A = plate_operator_matrix(g)
    assert np.abs(A - A.T).max() <= 1e-10 * np.abs(A).max()
    u, w = rng.standard_normal(g.n_plate), rng.standard_normal(g.n_plate)
    assert g.plate_inner(apply_plate_operator(g, u), w) == pytest.approx(plate_form_a(g, u, w), rel=1e-12)
    assert plate_form_a(g, u, w) == plate_form_a(g, w, u)
    lam1 = plate_eigensystem(g)[0][0]
    assert lam1 > 0
    assert plate_form_a(g, u, u) >= lam1 * g.plate_inner(u, u) * (1 - 1e-12)


def test_form_single_bump_matches_direct_summation():
    n = 10
    g = build_grid(GridSpec(2, (n, 4), lame_lambda=1.0))
    u = g.plate_from_function(lambda m, x: np.exp(-30 * (x - 0.4) ** 2) * x * (1 - x))
    du = np.diff(np.r_[0.0, u, 0.0]) * n
    assert plate_form_a(g, u, u) == pytest.approx(2.0 * np.sum(du**2) / n, rel=1e-12)


def test_form_two_dimensional_direct_summation(rng):
    nx, ny = 4, 5
    g = build_grid(GridSpec(3, (nx, ny, 3), lame_lambda=1.0))
    hx, hy = 1 / nx, 1 / ny
    u = rng.standard_normal(g.n_plate)
    u1, u2 = g.plate_component(u, 0), g.plate_component(u, 1)  # (nx-1, ny), (nx, ny-1)

    def grad_sq(a, axis_node, h_node, h_cell):
        # node direction: zero padding; cell direction: ghost reflection (half-cell distance)
        pad = np.zeros_like(np.take(a, [0], axis=axis_node))
        dn = np.diff(np.concatenate([pad, a, pad], axis=axis_node), axis=axis_node) / h_node
        other = 1 - axis_node
        dc = np.diff(a, axis=other) / h_cell
        edge = np.take(a, [0, -1], axis=other) * 2 / h_cell
        return np.sum(dn**2) + np.sum(dc**2) + 0.5 * np.sum(edge**2)

    area = hx * hy
    grad = grad_sq(u1, 0, hx, hy) + grad_sq(u2, 1, hy, hx)
    p1 = np.concatenate([np.zeros((1, ny)), u1, np.zeros((1, ny))])
    p2 = np.concatenate([np.zeros((nx, 1)), u2, np.zeros((nx, 1))], axis=1)
    div = np.diff(p1, axis=0) / hx + np.diff(p2, axis=1) / hy
    assert plate_form_a(g, u, u) == pytest.approx(area * (grad + np.sum(div**2)), rel=1e-12)


def test_quartic_force_closed_form(g3, rng):
    # kappa = 1: f^1 = 4 u^1 (|u^1|^2 + |u^2|^2) pointwise
    u1, u2 = rng.standard_normal(20), rng.standard_normal(20)
    f1, f2 = QUARTIC.grad(u1, u2)
    assert np.allclose(f1, 4 * u1 * (u1**2 + u2**2), rtol=1e-14)
    assert np.allclose(f2, 4 * u2 * (u1**2 + u2**2), rtol=1e-14)
    assert not np.any(nonlinear_force(g3, np.zeros(g3.n_plate), QUARTIC))


def test_quartic_euler_identity(rng):
    u1, u2 = rng.standard_normal(100), rng.standard_normal(100)
    f1, f2 = QUARTIC.grad(u1, u2)
    assert np.allclose(u1 * f1 + u2 * f2, 4 * QUARTIC.phi(u1, u2), rtol=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), which=st.sampled_from([QUARTIC, DOUBLE_WELL, ISO]),
       three_d=st.booleans())
def test_force_is_gradient_of_energy(seed, which, three_d):
    g = build_grid(GridSpec(3, (4, 4, 3)) if three_d else GridSpec(2, (8, 4)))
    r = np.random.default_rng(seed)
    u, h = r.standard_normal(g.n_plate), r.standard_normal(g.n_plate)
    eps = 1e-5
    fd = (potential_energy(g, u + eps * h, which) - potential_energy(g, u - eps * h, which)) / (2 * eps)
    an = g.plate_inner(nonlinear_force(g, u, which), h)
    assert abs(fd - an) <= 1e-6 * (1 + abs(an))


def test_potential_energy_trivial_and_constant(g2):
    assert potential_energy(g2, np.zeros(g2.n_plate), QUARTIC) == 0.0
    u = 0.3 * np.ones(g2.n_plate)
    assert potential_energy(g2, u, QUARTIC) == pytest.approx(g2.n_plate * g2.plate_cell_area * 0.3**4, rel=1e-14)


def test_potential_energy_converges_to_integral():
    # int_0^1 (x(1-x))^4 dx = 1/630
    errs = []
    for n in (8, 16, 32):
        g = build_grid(GridSpec(2, (n, 4)))
        u = g.plate_from_function(lambda m, x: x * (1 - x))
        errs.append(abs(potential_energy(g, u, QUARTIC) - 1 / 630))
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) > 1.9)


def test_plate_energy_parts(g3, rng):
    u, w = rng.standard_normal(g3.n_plate), rng.standard_normal(g3.n_plate)
    z = np.zeros(g3.n_plate)
    assert plate_energy(g3, z, z, QUARTIC) == 0.0
    assert plate_energy(g3, z, w, QUARTIC) == pytest.approx(0.5 * g3.plate_inner(w, w))
    ref = 0.5 * g3.plate_inner(w, w) + 0.5 * plate_form_a(g3, u, u) + potential_energy(g3, u, QUARTIC)
    assert plate_energy(g3, u, w, QUARTIC) == pytest.approx(ref, rel=1e-14)


def test_potential_validation():
    QUARTIC.validate()
    DOUBLE_WELL.validate()
    with pytest.raises(ValueError):
        PotentialSpec("separable", coeffs=(0.0, 0.0, -1.0, 0.0, 1.0)).validate()  # negative near 0
    with pytest.raises(ValueError):
        PotentialSpec("separable", coeffs=(0.0, 0.0, 0.0, 1.0)).validate()  # odd degree
    with pytest.raises(ValueError):
        PotentialSpec("cubic")
    with pytest.raises(ValueError):
        PotentialSpec("isotropic")


def test_dissipativity_quartic_needs_no_constant():
    rep = check_dissipativity(QUARTIC, delta=0.3, c1=4.0, c2=0.0)
    assert rep.holds and rep.c2 == 0.0 and rep.profile_c1 == 0.0


def test_dissipativity_zero_potential():
    rep = check_dissipativity(PotentialSpec("zero"), delta=0.1, c1=7.0, c2=0.0)
    assert rep.holds


def test_dissipativity_double_well_minimal_constant():
    spec = PotentialSpec("separable", coeffs=(0.0, 0.0, -1.0, 0.0, 1.0))  # s^4 - s^2
    box = (-3.0, 3.0)
    rep = check_dissipativity(spec, delta=0.5, sample_box=box, c1=4.0)
    # dense oracle: per component s f - 4 psi + delta s^2 = 2 s^2 + 0.5 s^2 >= 0, so c2 = 0
    s = np.linspace(*box, 2001)
    per = s * (4 * s**3 - 2 * s) - 4 * (s**4 - s**2) + 0.5 * s**2
    assert rep.c2 == pytest.approx(max(0.0, -2 * per.min()), abs=1e-12)
    # with c1 = 5 the quartic part dominates negatively: a positive constant is needed
    rep5 = check_dissipativity(spec, delta=0.5, sample_box=box, c1=5.0)
    per5 = s * (4 * s**3 - 2 * s) - 5 * (s**4 - s**2) + 0.5 * s**2
    assert rep5.c2 == pytest.approx(-2 * per5.min(), rel=1e-3)
    bad = check_dissipativity(spec, delta=0.5, sample_box=box, c1=5.0, c2=0.0)
    assert not bad.holds and bad.witness is not None


def test_dissipativity_delta_must_be_positive():
    with pytest.raises(ValueError):
        check_dissipativity(QUARTIC, delta=0.0)


def test_fractional_norm_endpoints(g2, rng):
    u = rng.standard_normal(g2.n_plate)
    assert fractional_norm(g2, u, 0.0) == pytest.approx(np.sqrt(g2.plate_inner(u, u)), rel=1e-12)
    assert fractional_norm(g2, u, 1.0) == pytest.approx(np.sqrt(plate_form_a(g2, u, u)), rel=1e-12)


def test_lipschitz_probe(g3, rng):
    u = rng.standard_normal(g3.n_plate)
    assert lipschitz_probe(g3, u, u, QUARTIC) == 0.0
    quad = PotentialSpec("separable", coeffs=(0.0, 0.0, 1.0))  # f linear
    z = rng.standard_normal(g3.n_plate)
    r1 = lipschitz_probe(g3, u, u + 1e-3 * z, quad)
    r2 = lipschitz_probe(g3, u, u + 0.5 * z, quad)
    assert r1 == pytest.approx(r2, rel=1e-10)
    ratios = [lipschitz_probe(g3, rng.standard_normal(g3.n_plate), rng.standard_normal(g3.n_plate), QUARTIC)
              for _ in range(100)]
    assert np.isfinite(ratios).all() and max(ratios) < 50 * np.median(ratios)
    with pytest.raises(ValueError):
        lipschitz_probe(g3, u, z, QUARTIC, sigma=1.0)
