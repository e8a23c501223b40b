"""Characteristic function, spectral bound, and stability classification.

The linearization of the model at the zero state is the transport operator
``L p = -(g p)' - w p`` with the nonlocal boundary condition
``g(x0) p(x0) = int q p``. Its spectrum consists of eigenvalues only, and
``lambda`` is an eigenvalue exactly when the characteristic function

    xi(lambda) = int_{x0}^{x1} q(x)/g(x) * exp(-lambda*Gamma(x) - W(x)) dx - 1

vanishes, where ``Gamma(x) = int_{x0}^x 1/g`` is the transit time and
``W(x) = int_{x0}^x w/g`` the accumulated removal exponent. Restricted to
the reals, ``xi`` is strictly decreasing from ``+inf`` to ``-1``, so it has
a unique real root ``lambda0``, and that root is the spectral bound and the
growth rate of the linear semigroup. Hence the classification:

* ``xi(0) < 0``  =>  ``lambda0 < 0``  =>  zero solution locally stable,
* ``xi(0) > 0``  =>  ``lambda0 > 0``  =>  zero solution unstable.

If ``q`` vanishes identically, ``xi == -1`` has no root; this is reported
as ``NoRoot`` (with a stable note: there is no renewal inflow at all).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import quad
from .model import CoefficientSet
from .operators import StateVector
from .quad import Mesh

__all__ = [
    "Classification",
    "SpectralReport",
    "Eigenfunction",
    "BracketExpansionError",
    "SingularResolventError",
    "NotAnEigenvalueError",
    "xi",
    "find_spectral_bound",
    "classify",
    "eigenfunction",
    "resolvent_apply",
]

# |xi(lambda)| below this is treated as "lambda is an eigenvalue"
_SINGULAR_XI = 1e-12
_MAX_BRACKET_DOUBLINGS = 400


class Classification(enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"
    NO_ROOT = "NoRoot"

    def __str__(self):
        return self.value


class BracketExpansionError(RuntimeError):
    """Root bracket grew past the configured bound without a sign change."""


class SingularResolventError(ValueError):
    """Resolvent requested at (numerically) an eigenvalue."""


class NotAnEigenvalueError(ValueError):
    """Eigenfunction requested at a lambda that is not a root of xi."""


@dataclass(eq=False)
class _Tables:
    """Cached quadrature data shared by all spectral evaluations."""

    gamma: quad.CumulativeTable   # transit time Gamma
    wtab: quad.CumulativeTable    # removal exponent W
    gamma_g: np.ndarray           # Gamma at Gauss points
    w_g: np.ndarray               # W at Gauss points
    g_g: np.ndarray               # g at Gauss points
    q_g: np.ndarray               # q at Gauss points
    xi_base: np.ndarray           # gauss_w * q/g * exp(-W); xi = base . exp(-l*Gamma) - 1
    q_is_zero: bool
    gamma_x1: float


@lru_cache(maxsize=32)
def _tables(cs: CoefficientSet, mesh: Mesh) -> _Tables:
    g_g = np.broadcast_to(cs.g_at(mesh.gauss_x), mesh.gauss_x.shape)
    q_g = np.broadcast_to(cs.q_at(mesh.gauss_x), mesh.gauss_x.shape)
    gamma = quad.cumulative(lambda x: 1.0 / cs.g_at(x), mesh)
    wtab = quad.cumulative(lambda x: cs.w_at(x) / cs.g_at(x), mesh)
    gamma_g = gamma(mesh.gauss_x)
    w_g = wtab(mesh.gauss_x)
    xi_base = mesh.gauss_w * (q_g / g_g) * np.exp(-w_g)
    return _Tables(
        gamma=gamma,
        wtab=wtab,
        gamma_g=gamma_g,
        w_g=w_g,
        g_g=g_g,
        q_g=q_g,
        xi_base=xi_base,
        q_is_zero=bool(np.max(np.abs(q_g)) == 0.0),
        gamma_x1=gamma.total,
    )


def xi(cs: CoefficientSet, mesh: Mesh, lam: float) -> float:
    """Characteristic function at a real ``lam``.

    For very negative ``lam`` the integrand overflows to ``+inf``; that is a
    faithful value (``xi -> +inf`` as ``lam -> -inf``) and is returned as is.
    """
    t = _tables(cs, mesh)
    with np.errstate(over="ignore"):
        return float(np.sum(t.xi_base * np.exp(-lam * t.gamma_g)) - 1.0)


def xi_grid(cs: CoefficientSet, mesh: Mesh, lams: np.ndarray) -> np.ndarray:
    """``xi`` over an array of lambdas, bit-identical to the scalar path."""
    lams = np.asarray(lams, dtype=float)
    return np.array([xi(cs, mesh, lam) for lam in lams])


def find_spectral_bound(cs: CoefficientSet, mesh: Mesh, tol: float = 1e-10):
    """Unique real root of ``xi``, or ``None`` when ``q`` vanishes.

    Starting from the sign of ``xi(0)``, a bracket is expanded geometrically
    in the indicated direction (initial half-width ``1/Gamma(x1)``, factor 2;
    monotonicity of ``xi`` guarantees correctness), then polished with Brent
    to bracket width below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t = _tables(cs, mesh)
    if t.q_is_zero:
        return None
    f = lambda lam: xi(cs, mesh, lam)
    xi0 = f(0.0)
    if xi0 == 0.0:
        return 0.0
    scale = 1.0 / t.gamma_x1

    if xi0 > 0:
        lo, lo_val = 0.0, xi0
        hi = scale
        for _ in range(_MAX_BRACKET_DOUBLINGS):
            hi_val = f(hi)
            if hi_val <= 0:
                break
            lo, lo_val = hi, hi_val
            hi *= 2.0
        else:
            raise BracketExpansionError(
                f"no sign change of xi up to lambda = {hi:.3g}")
    else:
        hi, hi_val = 0.0, xi0
        lo = -scale
        for _ in range(_MAX_BRACKET_DOUBLINGS):
            lo_val = f(lo)
            if lo_val >= 0:
                break
            hi, hi_val = lo, lo_val
            lo *= 2.0
        else:
            raise BracketExpansionError(
                f"no sign change of xi down to lambda = {lo:.3g}")
        # an overflowed (+inf) left endpoint is a valid sign but Brent needs
        # finite values; monotonicity lets us shrink the endpoint inward
        for _ in range(200):
            if np.isfinite(lo_val):
                break
            lo = 0.5 * (lo + hi)
            lo_val = f(lo)

    if lo_val == 0.0:
        return float(lo)
    if hi_val == 0.0:
        return float(hi)
    return float(brentq(f, lo, hi, xtol=tol))


@dataclass(eq=False)
class SpectralReport:
    """Outcome of the stability classification."""

    xi_at_zero: float
    lambda0: float | None
    classification: Classification
    gamma_x1: float
    compactness_time: float          # always exactly 2 * gamma_x1
    tolerance_used: float
    alpha_growth_bound: str = "-inf"  # known in closed form, never computed
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "xi_at_zero": self.xi_at_zero,
            "lambda0": self.lambda0,
            "gamma_x1": self.gamma_x1,
            "compactness_time": self.compactness_time,
            "alpha_growth_bound": self.alpha_growth_bound,
            "tolerance_used": self.tolerance_used,
            "note": self.note,
        }

    def to_text(self) -> str:
        lines = []
        for key, val in self.as_dict().items():
            if isinstance(val, float):
                lines.append(f"{key}={val:.17g}")
            elif val is None:
                lines.append(f"{key}=none")
            elif val != "" or key == "note":
                if key == "note" and not val:
                    continue
                lines.append(f"{key}={val}")
        return "\n".join(lines)


def classify(cs: CoefficientSet, mesh: Mesh, tol: float = 1e-9) -> SpectralReport:
    """Classify the zero solution from the sign of ``xi(0)``.

    ``|xi(0)| <= tol`` lands in the Marginal band; the default band only
    absorbs floating point noise of the quadrature.
    """
    t = _tables(cs, mesh)
    gamma_x1 = t.gamma_x1
    if t.q_is_zero:
        return SpectralReport(
            xi_at_zero=-1.0,
            lambda0=None,
            classification=Classification.NO_ROOT,
            gamma_x1=gamma_x1,
            compactness_time=2.0 * gamma_x1,
            tolerance_used=tol,
            note="q vanishes: xi == -1 has no root; no renewal inflow, "
                 "zero solution stable",
        )
    xi0 = xi(cs, mesh, 0.0)
    lam0 = find_spectral_bound(cs, mesh, tol=min(tol, 1e-10))
    if xi0 > tol:
        cls = Classification.UNSTABLE
    elif xi0 < -tol:
        cls = Classification.STABLE
    else:
        cls = Classification.MARGINAL
    return SpectralReport(
        xi_at_zero=xi0,
        lambda0=lam0,
        classification=cls,
        gamma_x1=gamma_x1,
        compactness_time=2.0 * gamma_x1,
        tolerance_used=tol,
    )


@dataclass(eq=False)
class Eigenfunction:
    """Eigenfunction ``phi(x) = C/g(x) * exp(-lambda*Gamma(x) - W(x))``.

    ``values`` holds samples at the mesh nodes, normalized to unit L1 norm.
    ``density(x)`` evaluates the same closed form anywhere in the domain.
    """

    mesh: Mesh
    lam: float
    values: np.ndarray          # at mesh nodes
    scale: float                # the normalization constant C
    _cs: CoefficientSet = field(repr=False, default=None)

    def density(self, x):
        t = _tables(self._cs, self.mesh)
        x = np.asarray(x, dtype=float)
        g = np.broadcast_to(self._cs.g_at(x), x.shape)
        return self.scale / g * np.exp(-self.lam * t.gamma(x) - t.wtab(x))

    def state_vector(self) -> StateVector:
        return StateVector(self.mesh, self.density(self.mesh.centers), physical=True)


def eigenfunction(cs: CoefficientSet, mesh: Mesh, lam: float) -> Eigenfunction:
    """Normalized eigenfunction for a root ``lam`` of ``xi``."""
    resid = xi(cs, mesh, lam)
    if not abs(resid) < 1e-6:
        raise NotAnEigenvalueError(
            f"xi({lam:.17g}) = {resid:.3g}; lambda is not a root of xi")
    t = _tables(cs, mesh)
    norm = float(np.sum(mesh.gauss_w / t.g_g * np.exp(-lam * t.gamma_g - t.w_g)))
    scale = 1.0 / norm
    g_nodes = np.broadcast_to(cs.g_at(mesh.nodes), mesh.nodes.shape)
    vals = scale / g_nodes * np.exp(-lam * t.gamma(mesh.nodes) - t.wtab(mesh.nodes))
    return Eigenfunction(mesh=mesh, lam=lam, values=vals, scale=scale, _cs=cs)


def resolvent_apply(cs: CoefficientSet, mesh: Mesh, lam: float,
                    phi: StateVector) -> StateVector:
    """Apply the resolvent ``(lam*I - L)^{-1}`` to a grid function.

    The variation-of-constants solution of ``(lam + w) u + (g u)' = phi`` is

        g(x) u(x) = A * exp(-Lam(x)) + int_{x0}^x phi(y) exp(Lam(y)-Lam(x)) dy

    with ``Lam = lam*Gamma + W``. The free constant ``A = g(x0) u(x0)`` is
    fixed by the boundary condition ``g(x0)u(x0) = int q u``, which is affine
    in ``A`` with coefficient ``xi(lam) + 1``; the closure solves to
    ``A = -K[P]/xi(lam)`` where ``P`` is the particular part. Singular
    exactly when ``lam`` is an eigenvalue.

    Exponentials are always evaluated as differences accumulated cell by
    cell, so large ``lam`` cannot overflow; strongly negative ``lam`` with
    ``|lam|*Gamma(x1) + W(x1) > 700`` is rejected as it would overflow.
    """
    if phi.mesh is not mesh:
        raise ValueError("state vector lives on a different mesh")
    xil = xi(cs, mesh, lam)
    if abs(xil) < _SINGULAR_XI:
        raise SingularResolventError(
            f"xi({lam:.17g}) = {xil:.3g}: lambda is an eigenvalue")
    t = _tables(cs, mesh)
    if abs(lam) * t.gamma_x1 + t.wtab.total > 700.0:
        raise ValueError("resolvent evaluation would overflow for this lambda")

    n, order = mesh.n, mesh.order
    nodes, centers, widths = mesh.nodes, mesh.centers, mesh.widths

    def lam_fun(x):
        return lam * t.gamma(x) + t.wtab(x)

    lam_nodes = lam_fun(nodes)
    lam_centers = lam_fun(centers)
    lam_gauss = lam * t.gamma_g + t.w_g
    gauss_x = mesh.gauss_x.reshape(n, order)
    gauss_w_cells = mesh.gauss_w.reshape(n, order)

    from numpy.polynomial.legendre import leggauss
    tq, wq = leggauss(order)

    def partial_integrals(z: np.ndarray, lam_z: np.ndarray) -> np.ndarray:
        """J_i(z) = int_{L_i}^{z_i} exp(Lam(y) - Lam(z_i)) dy per cell."""
        half = 0.5 * (z - nodes[:-1])
        mid = 0.5 * (z + nodes[:-1])
        ys = mid[:, None] + half[:, None] * tq[None, :]
        vals = np.exp(lam_fun(ys.reshape(-1)).reshape(n, order) - lam_z[:, None])
        return (vals * (half[:, None] * wq[None, :])).sum(axis=1)

    phi_v = phi.values
    # full-cell integrals referenced to the right node, and the decay factor
    # of the carried prefix across each cell
    j_right = partial_integrals(nodes[1:], lam_nodes[1:])
    decay = np.exp(lam_nodes[:-1] - lam_nodes[1:])
    prefix = np.empty(n + 1)
    prefix[0] = 0.0
    for i in range(n):
        prefix[i + 1] = prefix[i] * decay[i] + phi_v[i] * j_right[i]

    # particular solution at cell centers and at the Gauss points
    j_center = partial_integrals(centers, lam_centers)
    carry_c = np.exp(lam_nodes[:-1] - lam_centers)
    g_centers = np.broadcast_to(cs.g_at(centers), centers.shape)
    p_centers = (prefix[:-1] * carry_c + phi_v * j_center) / g_centers

    lam_gauss_cells = lam_gauss.reshape(n, order)
    j_gauss = np.empty((n, order))
    for m in range(order):
        j_gauss[:, m] = partial_integrals(gauss_x[:, m], lam_gauss_cells[:, m])
    carry_g = np.exp(lam_nodes[:-1, None] - lam_gauss_cells)
    p_gauss = (prefix[:-1, None] * carry_g + phi_v[:, None] * j_gauss) \
        / t.g_g.reshape(n, order)

    k_of_p = float(np.sum(gauss_w_cells * t.q_g.reshape(n, order) * p_gauss))
    boundary = -k_of_p / xil

    u = boundary * np.exp(-lam_centers) / g_centers + p_centers
    return StateVector(mesh, u, physical=False)
