import numpy as np
import pytest

import aggstab as ag

# the concluding example's coefficient set: x0=1, x1=1000, q=ln x,
# g=x(1001-x)/10, w=(x-1)^1.17/1000; beta is free (constant kernel here)
SECTION4 = dict(x0=1.0, x1=1000.0, g="x*(1001 - x)/10",
                w="(x - 1)^1.17/1000", q="ln(x)", beta="1")


@pytest.fixture(scope="session")
def s4():
    return ag.coefficients(**SECTION4)


@pytest.fixture(scope="session")
def s4_mesh(s4):
    return ag.build_mesh(s4, 2000, "geometric")


@pytest.fixture(scope="session")
def s4_mesh_uniform(s4):
    return ag.build_mesh(s4, 2000, "uniform")


@pytest.fixture(scope="session")
def const12():
    # g=1, w=0, q=2 on [1,2]: xi(lam) = 2(1-exp(-lam))/lam - 1 in closed form
    return ag.coefficients(1.0, 2.0, g="1", w="0", q="2", beta="0")


@pytest.fixture(scope="session")
def const12_mesh(const12):
    return ag.build_mesh(const12, 1000, "uniform")


def random_coefficient_set(rng):
    """Random valid coefficient set with q not identically zero.

    Positive affine growth, power-law removal, positive affine fecundity on
    a random interval spanning up to ~1.5 decades.
    """
    x0 = float(10.0 ** rng.uniform(-0.5, 0.5))
    x1 = float(x0 * 10.0 ** rng.uniform(0.4, 1.5))
    a, b = rng.uniform(0.2, 5.0), rng.uniform(0.0, 3.0)
    c, e = rng.uniform(0.0, 2.0), rng.uniform(0.5, 2.0)
    d, f = rng.uniform(0.0, 3.0), rng.uniform(0.05, 2.0)
    return ag.coefficients(
        x0, x1,
        g=f"{a!r} + {b!r}*(x - {x0!r})",
        w=f"{c!r}*(x - {x0!r})^{e!r}",
        q=f"{d!r}*(x - {x0!r}) + {f!r}",
        beta="0",
    )


def trapezoid_refined(f, a, b, panels=10**6):
    """Brute-force refinement oracle: trapezoid at ``panels`` and
    ``2*panels`` combined by Richardson extrapolation (removes the h^2
    bias, which for near-pole integrands exceeds 1e-8 relative)."""
    t1 = np.trapezoid(f(np.linspace(a, b, panels + 1)), dx=(b - a) / panels)
    t2 = np.trapezoid(f(np.linspace(a, b, 2 * panels + 1)), dx=(b - a) / (2 * panels))
    return (4.0 * t2 - t1) / 3.0
