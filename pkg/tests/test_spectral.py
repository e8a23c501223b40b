import numpy as np
import pytest

import aggstab as ag
from aggstab import spectral
from aggstab.spectral import (
    Classification,
    NotAnEigenvalueError,
    SingularResolventError,
)

from conftest import random_coefficient_set

# 100-digit bisection root of 2(1 - e^{-lam}) = lam (frozen from mpmath,
# dps=110; reproduced live in test_spectral_bound_matches_high_precision_root)
ROOT_C2 = 1.5936242600400401


def closed_form_xi(lam, c=2.0):
    lam = np.asarray(lam, dtype=float)
    out = np.where(lam == 0.0, c, c * -np.expm1(-lam) / np.where(lam == 0, 1, lam))
    return out - 1.0


def test_xi_closed_form_agreement(const12, const12_mesh):
    lams = np.linspace(-3.0, 12.0, 50)
    ours = np.array([ag.xi(const12, const12_mesh, lam) for lam in lams])
    assert np.max(np.abs(ours - closed_form_xi(lams))) < 1e-10
    # xi(0) = c - 1 = 1 in the removable limit
    assert ag.xi(const12, const12_mesh, 0.0) == pytest.approx(1.0, abs=1e-12)
    # the spot value xi(ln 4) = 1.5/ln(4) - 1
    assert ag.xi(const12, const12_mesh, np.log(4.0)) == pytest.approx(
        1.5 / np.log(4.0) - 1.0, abs=1e-12)


def test_xi_grid_matches_scalar(const12, const12_mesh):
    lams = np.linspace(-2.0, 8.0, 23)
    grid = ag.xi_grid(const12, const12_mesh, lams)
    scal = np.array([ag.xi(const12, const12_mesh, lam) for lam in lams])
    assert np.array_equal(grid, scal)


def test_xi_is_minus_one_when_q_vanishes():
    cs = ag.coefficients(1.0, 2.0, g="1 + x", w="x", q="0")
    mesh = ag.build_mesh(cs, 200)
    for lam in (-5.0, 0.0, 3.0, 100.0):
        assert ag.xi(cs, mesh, lam) == -1.0


def test_spectral_bound_matches_high_precision_root(const12, const12_mesh):
    import mpmath as mp
    mp.mp.dps = 110
    f = lambda lam: 2 * (1 - mp.e ** (-lam)) - lam
    a, b = mp.mpf(1), mp.mpf(2)
    for _ in range(400):
        m = (a + b) / 2
        if f(m) > 0:
            a = m
        else:
            b = m
    oracle = float((a + b) / 2)
    assert oracle == ROOT_C2
    lam0 = ag.find_spectral_bound(const12, const12_mesh, tol=1e-10)
    assert abs(lam0 - oracle) < 1e-9


def test_marginal_root_at_zero():
    cs = ag.coefficients(1.0, 2.0, g="1", w="0", q="1")
    mesh = ag.build_mesh(cs, 500)
    report = ag.classify(cs, mesh)
    assert report.classification is Classification.MARGINAL
    assert abs(report.lambda0) < 1e-9


def test_no_root_when_q_zero():
    cs = ag.coefficients(1.0, 2.0, g="1", w="0", q="0")
    mesh = ag.build_mesh(cs, 100)
    assert ag.find_spectral_bound(cs, mesh) is None
    report = ag.classify(cs, mesh)
    assert report.classification is Classification.NO_ROOT
    assert report.lambda0 is None
    assert report.xi_at_zero == -1.0
    assert "stable" in report.note


def test_section4_xi0_vs_adaptive_quadrature_oracle(s4, s4_mesh_uniform):
    # nested adaptive quadrature of the defining integral (independent path)
    oracle = -0.349893184348  # scipy.integrate.quad, epsrel=1e-12, frozen
    assert ag.xi(s4, s4_mesh_uniform, 0.0) == pytest.approx(oracle, abs=1e-5)


def test_section4_classification(s4, s4_mesh):
    report = ag.classify(s4, s4_mesh)
    assert report.classification is Classification.STABLE
    assert report.xi_at_zero < 0
    assert report.lambda0 < 0
    assert report.compactness_time == 2.0 * report.gamma_x1


def test_section4_variants_destabilize(s4):
    for scales in (dict(g_scale=0.5), dict(q_scale=2.0)):
        cs = s4.with_scales(**scales)
        mesh = ag.build_mesh(cs, 2000, "geometric")
        report = ag.classify(cs, mesh)
        assert report.classification is Classification.UNSTABLE
        assert report.lambda0 > 0


def test_monotonicity_on_grid(s4, s4_mesh):
    lam0 = ag.find_spectral_bound(s4, s4_mesh)
    scale = 1.0 / ag.classify(s4, s4_mesh).gamma_x1
    lams = np.linspace(lam0 - 10 * scale, lam0 + 10 * scale, 50)
    vals = ag.xi_grid(s4, s4_mesh, lams)
    assert np.all(np.diff(vals) < 0.0)


def probe_limit_band(cs, mesh, band=1e-6, start_scale=1.0):
    """Double lambda until computed xi lands inside (-1, -1 + band)."""
    lam = start_scale
    prev = ag.xi(cs, mesh, 0.0)
    for _ in range(200):
        v = ag.xi(cs, mesh, lam)
        assert v < prev  # strictly decreasing along the doubling sequence
        if v + 1.0 < band:
            return lam, v
        prev, lam = v, lam * 2.0
    raise AssertionError("xi did not approach -1 under doubling")


def test_limits(s4, s4_mesh):
    gamma_x1 = ag.classify(s4, s4_mesh).gamma_x1
    scale = 1.0 / gamma_x1
    lam_big, v = probe_limit_band(s4, s4_mesh, start_scale=scale)
    assert -1.0 < v < -1.0 + 1e-6
    assert ag.xi(s4, s4_mesh, -10.0 * scale) > ag.xi(s4, s4_mesh, 0.0)


def test_root_uniqueness_sign_scan(s4, s4_mesh):
    lam0 = ag.find_spectral_bound(s4, s4_mesh)
    scale = 1.0 / ag.classify(s4, s4_mesh).gamma_x1
    lams = np.linspace(lam0 - 10 * scale, lam0 + 10 * scale, 1000)
    vals = ag.xi_grid(s4, s4_mesh, lams)
    assert int(np.sum(np.sign(vals[:-1]) != np.sign(vals[1:]))) == 1


def test_random_sets_sign_consistency():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        cs = random_coefficient_set(rng)
        mesh = ag.build_mesh(cs, 600)
        xi0 = ag.xi(cs, mesh, 0.0)
        lam0 = ag.find_spectral_bound(cs, mesh)
        assert lam0 is not None
        assert np.sign(lam0) == np.sign(xi0)


def test_eigenfunction_constant_case():
    cs = ag.coefficients(1.0, 2.0, g="1", w="0", q="1")
    mesh = ag.build_mesh(cs, 400)
    phi = ag.eigenfunction(cs, mesh, 0.0)
    assert np.allclose(phi.values, 1.0, rtol=1e-12)
    norm = ag.integrate(phi.density, mesh)
    assert norm == pytest.approx(1.0, abs=1e-10)


def test_eigenfunction_boundary_identity(const12, const12_mesh):
    lam0 = ag.find_spectral_bound(const12, const12_mesh, tol=1e-12)
    phi = ag.eigenfunction(const12, const12_mesh, lam0)
    k_phi = ag.integrate(lambda x: const12.q_at(x) * phi.density(x), const12_mesh)
    lhs = const12.g_at(const12.x0) * float(phi.density(const12.x0))
    assert abs(lhs - k_phi) < 1e-8


def test_eigenfunction_positive_for_section4(s4, s4_mesh):
    lam0 = ag.find_spectral_bound(s4, s4_mesh)
    phi = ag.eigenfunction(s4, s4_mesh, lam0)
    assert np.min(phi.values) > 0.0
    assert ag.integrate(phi.density, s4_mesh) == pytest.approx(1.0, abs=1e-10)


def test_eigenfunction_rejects_non_root(const12, const12_mesh):
    with pytest.raises(NotAnEigenvalueError):
        ag.eigenfunction(const12, const12_mesh, 12.34)


@pytest.fixture(scope="module")
def moderate():
    # O(1)-scale coefficients: lambda above ||g||+||q|| stays resolvable
    return ag.coefficients(1.0, 2.0, g="1 + (x - 1)/2", w="(x - 1)/2", q="x/2")


def _smooth_states(mesh, count, seed):
    rng = np.random.default_rng(seed)
    xs = mesh.centers
    span = mesh.x1 - mesh.x0
    states = []
    for _ in range(count):
        coef = rng.normal(size=3)
        vals = coef[0] + coef[1] * np.sin(np.pi * (xs - mesh.x0) / span) \
            + coef[2] * np.cos(2 * np.pi * (xs - mesh.x0) / span)
        states.append(vals)
    return states


def test_resolvent_of_zero_is_zero(moderate):
    mesh = ag.build_mesh(moderate, 200)
    zero = ag.StateVector.zeros(mesh)
    u = ag.resolvent_apply(moderate, mesh, 3.5, zero)
    assert np.all(u.values == 0.0)


def test_resolvent_defect_shrinks_under_refinement(moderate):
    # lambda = ||g|| + ||q|| + 1 for this set
    lam = 1.5 + 1.0 + 1.0
    defects = []
    for n in (200, 400, 800):
        mesh = ag.build_mesh(moderate, n)
        errs = []
        for vals in _smooth_states(mesh, 5, seed=7):
            phi = ag.StateVector(mesh, vals, physical=False)
            u = ag.resolvent_apply(moderate, mesh, lam, phi)
            defect = lam * u.values - ag.linear_apply(moderate, u).values - phi.values
            errs.append(np.sum(np.abs(defect) * mesh.widths) / phi.l1_norm())
        defects.append(np.mean(errs))
    assert defects[1] < 0.75 * defects[0]
    assert defects[2] < 0.75 * defects[1]


def test_resolvent_blowup_near_eigenvalue(moderate):
    mesh = ag.build_mesh(moderate, 400)
    lam0 = ag.find_spectral_bound(moderate, mesh, tol=1e-12)
    phi = ag.StateVector(mesh, np.ones(mesh.n))
    deltas = np.array([10.0 ** -k for k in range(1, 7)])
    norms = []
    for d in deltas:
        u = ag.resolvent_apply(moderate, mesh, lam0 + d, phi)
        norms.append(u.l1_norm())
    slope = np.polyfit(np.log(deltas), np.log(norms), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)


def test_resolvent_singular_at_eigenvalue(moderate):
    mesh = ag.build_mesh(moderate, 400)
    lam0 = ag.find_spectral_bound(moderate, mesh, tol=1e-14)
    phi = ag.StateVector(mesh, np.ones(mesh.n))
    with pytest.raises(SingularResolventError):
        ag.resolvent_apply(moderate, mesh, lam0, phi)


def test_report_serialization(s4, s4_mesh):
    report = ag.classify(s4, s4_mesh)
    text = report.to_text()
    assert "classification=Stable" in text
    assert "alpha_growth_bound=-inf" in text
    fields = dict(line.split("=", 1) for line in text.splitlines())
    assert float(fields["xi_at_zero"]) == report.xi_at_zero  # 17 digits round-trip
