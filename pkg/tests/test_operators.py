import numpy as np
import pytest

import aggstab as ag
from aggstab.operators import (
    StateVector,
    boundary_inflow,
    coagulation,
    coagulation_split,
    frechet_apply,
    kernel_sup,
    linear_apply,
    moments,
)


@pytest.fixture(scope="module")
def box15():
    return ag.coefficients(1.0, 5.0, g="1", w="0", q="0", beta="1")


@pytest.fixture(scope="module")
def box15_mesh(box15):
    return ag.build_mesh(box15, 100)


def bump_state(mesh, center=None, width=None):
    c = center if center is not None else 0.5 * (mesh.x0 + mesh.x1)
    s = width if width is not None else (mesh.x1 - mesh.x0) / 8.0
    return StateVector(mesh, np.exp(-((mesh.centers - c) / s) ** 2))


def test_state_vector_validation(box15_mesh):
    with pytest.raises(ValueError):
        StateVector(box15_mesh, np.zeros(3))
    bad = np.zeros(box15_mesh.n)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        StateVector(box15_mesh, bad)


def test_boundary_inflow_zero_state(s4, s4_mesh):
    assert boundary_inflow(s4, StateVector.zeros(s4_mesh)) == 0.0


def test_boundary_inflow_unit_case():
    cs = ag.coefficients(1.0, 2.0, g="1", w="0", q="1")
    mesh = ag.build_mesh(cs, 50)
    p = StateVector(mesh, np.ones(mesh.n))
    assert boundary_inflow(cs, p) == pytest.approx(1.0, rel=1e-12)


def test_boundary_inflow_section4_closed_form(s4, s4_mesh_uniform):
    # int_1^1000 ln x dx = [x ln x - x] = 1000 ln 1000 - 999
    p = StateVector(s4_mesh_uniform, np.ones(s4_mesh_uniform.n))
    exact = 1000.0 * np.log(1000.0) - 999.0
    assert boundary_inflow(s4, p) == pytest.approx(exact, rel=1e-10)


def test_coagulation_zero_state(box15, box15_mesh):
    out = coagulation(box15, StateVector.zeros(box15_mesh))
    assert np.all(out.values == 0.0)


def test_coagulation_zero_kernel(s4_mesh):
    cs = ag.coefficients(1.0, 1000.0, g="1", w="0", q="0", beta="0")
    mesh = ag.build_mesh(cs, 100)
    p = bump_state(mesh)
    assert np.all(coagulation(cs, p).values == 0.0)


def test_coagulation_hand_enumerated_n4(box15):
    # 4 cells on [1,5], beta = 1 truncated at 5, p = {1,1,0,0}
    mesh = ag.build_mesh(box15, 4)
    p = StateVector(mesh, np.array([1.0, 1.0, 0.0, 0.0]))
    out = coagulation(box15, p).values

    # independent exhaustive enumeration over the 4x4 ordered pair table
    n = mesh.n
    gain_counts = np.zeros(n)
    loss = np.zeros(n)
    for i in range(n):
        for j in range(n):
            b = box15.beta_eval(float(mesh.centers[i]), float(mesh.centers[j]))
            mi = p.values[i] * mesh.widths[i]
            mj = p.values[j] * mesh.widths[j]
            loss[i] += b * p.values[i] * mj
            s = mesh.centers[i] + mesh.centers[j]
            if b != 0.0:
                k = min(np.searchsorted(mesh.nodes, s, side="right") - 1, n - 1)
                gain_counts[k] += 0.5 * b * mi * mj
    expected = gain_counts / mesh.widths - loss
    assert np.allclose(out, expected, rtol=0, atol=1e-14)
    # frozen values of the enumeration above
    assert np.allclose(expected, [-2.0, -2.0, 0.5, 1.5], atol=1e-14)


def test_number_identity(box15):
    mesh = ag.build_mesh(box15, 200)
    p = bump_state(mesh)
    out = coagulation(box15, p)
    number_change = float(np.sum(out.values * mesh.widths))
    m = p.values * mesh.widths
    b = np.array([[box15.beta_eval(xi, xj) for xj in mesh.centers]
                  for xi in mesh.centers])
    pair_sum = -0.5 * float(m @ (b @ m))
    assert number_change == pytest.approx(pair_sum, rel=1e-12)


def test_mass_residual_first_order(box15):
    errs = []
    for n in (100, 200, 400):
        mesh = ag.build_mesh(box15, n)
        p = bump_state(mesh)
        out = coagulation(box15, p)
        mass_rate = abs(float(np.sum(mesh.centers * out.values * mesh.widths)))
        errs.append(mass_rate)
        assert mass_rate <= 2.0 * (mesh.x1 - mesh.x0) / n * p.l1_norm() ** 2
    assert errs[1] < 0.75 * errs[0]
    assert errs[2] < 0.75 * errs[1]


def test_gain_loss_split_nonnegative(box15, box15_mesh):
    p = bump_state(box15_mesh)
    gain, loss = coagulation_split(box15, p)
    assert np.all(gain >= 0.0)
    assert np.all(loss >= 0.0)


def test_quadratic_scaling(box15, box15_mesh):
    p = bump_state(box15_mesh)
    n1 = coagulation(box15, p).values
    for alpha in (0.0, 1.0, 2.0):
        scaled = StateVector(box15_mesh, alpha * p.values)
        na = coagulation(box15, scaled).values
        assert np.array_equal(na, alpha ** 2 * n1)


def test_negative_state_warns(box15, box15_mesh):
    vals = np.ones(box15_mesh.n)
    vals[3] = -0.5
    with pytest.warns(RuntimeWarning):
        coagulation(box15, StateVector(box15_mesh, vals, physical=True))


def test_frechet_at_zero_is_zero_bitwise(box15, box15_mesh):
    zero = StateVector.zeros(box15_mesh)
    h = bump_state(box15_mesh)
    out = frechet_apply(box15, zero, h)
    assert np.all(out.values == 0.0)


def test_frechet_bilinearity_identity(box15, box15_mesh):
    rng = np.random.default_rng(5)
    for _ in range(5):
        u = StateVector(box15_mesh, rng.uniform(0.0, 2.0, box15_mesh.n))
        dn = frechet_apply(box15, u, u).values
        n2 = 2.0 * coagulation(box15, u).values
        assert np.array_equal(dn, n2)


def test_frechet_finite_difference_order(box15, box15_mesh):
    rng = np.random.default_rng(11)
    u = StateVector(box15_mesh, rng.uniform(0.0, 1.0, box15_mesh.n))
    h = StateVector(box15_mesh, rng.uniform(0.0, 1.0, box15_mesh.n))
    eps = np.array([1e-2, 1e-3, 1e-4])
    errs = []
    for e in eps:
        pert = StateVector(box15_mesh, u.values + e * h.values)
        resid = coagulation(box15, pert).values - coagulation(box15, u).values \
            - e * frechet_apply(box15, u, h).values
        errs.append(np.sum(np.abs(resid) * box15_mesh.widths))
    slope = np.polyfit(np.log(eps), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_frechet_lipschitz_bound():
    cs = ag.coefficients(1.0, 5.0, g="1", w="0", q="0", beta="1 + x*y/25")
    mesh = ag.build_mesh(cs, 60)
    bsup = kernel_sup(cs, mesh)
    const = (cs.x1 - cs.x0 + 2.0) * bsup
    rng = np.random.default_rng(17)
    for _ in range(100):
        u1 = StateVector(mesh, rng.uniform(0.0, 3.0, mesh.n))
        u2 = StateVector(mesh, rng.uniform(0.0, 3.0, mesh.n))
        h = StateVector(mesh, rng.uniform(0.0, 1.0, mesh.n))
        lhs_vals = frechet_apply(cs, u1, h).values - frechet_apply(cs, u2, h).values
        lhs = float(np.sum(np.abs(lhs_vals) * mesh.widths))
        du = float(np.sum(np.abs(u1.values - u2.values) * mesh.widths))
        hn = float(np.sum(np.abs(h.values) * mesh.widths))
        assert lhs <= const * du * hn * (1.0 + 1e-12)


def test_linear_apply_zero(s4, s4_mesh):
    out = linear_apply(s4, StateVector.zeros(s4_mesh))
    assert np.all(out.values == 0.0)


def test_linear_apply_telescoping():
    # pure transport: total number changes only through the x1 outflow
    cs = ag.coefficients(1.0, 3.0, g="1", w="0", q="0")
    mesh = ag.build_mesh(cs, 8)
    vals = np.zeros(8)
    vals[:4] = 1.0  # left-half indicator
    out = linear_apply(cs, StateVector(mesh, vals)).values
    total = float(np.sum(out * mesh.widths))
    outflow = float(cs.g_at(mesh.x1)) * vals[-1]
    assert total == -outflow == 0.0
    # interior flux differences are exact
    dx = mesh.widths[0]
    assert out[0] == (0.0 - 1.0) / dx       # inflow face carries K[p] = 0
    assert out[4] == (1.0 - 0.0) / dx
    assert np.all(out[[1, 2, 3, 5, 6, 7]] == 0.0)


def test_eigen_residual_refinement(s4):
    resids = []
    for n in (1000, 2000):
        mesh = ag.build_mesh(s4, n, "uniform")
        lam0 = ag.find_spectral_bound(s4, mesh)
        phi = ag.eigenfunction(s4, mesh, lam0).state_vector()
        resid = linear_apply(s4, phi).values - lam0 * phi.values
        resids.append(np.sum(np.abs(resid) * mesh.widths) / phi.l1_norm())
    assert resids[1] == pytest.approx(0.5 * resids[0], rel=0.25)


def test_moments_examples(s4, s4_mesh, s4_mesh_uniform):
    cs = ag.coefficients(1.0, 2.0, g="1", w="0", q="0")
    mesh = ag.build_mesh(cs, 40)
    number, mass = moments(StateVector(mesh, np.ones(mesh.n)))
    assert number == pytest.approx(1.0, rel=1e-12)
    assert mass == pytest.approx(1.5, rel=1e-12)
    number, mass = moments(StateVector.zeros(mesh))
    assert number == 0.0 and mass == 0.0
    for m in (s4_mesh, s4_mesh_uniform):
        number, mass = moments(StateVector(m, np.ones(m.n)))
        assert number == pytest.approx(999.0, rel=1e-12)
        assert mass == pytest.approx((1000.0 ** 2 - 1.0) / 2.0, rel=1e-12)
