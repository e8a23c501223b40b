"""Discrete operators on cell-centered grid functions.

States are piecewise-constant densities on the mesh cells. The conventions:

* transport ``-(g p)' - w p`` is first-order upwind finite volume. Growth is
  strictly positive, so every face takes its flux from the left cell; the
  inflow face at ``x0`` carries the nonlocal boundary flux ``K[p] = int q p``,
  and aggregates leaving through ``x1`` are removed from the system.
* the coagulation operator uses a midpoint pair table on the cell centers:
  a merger of cells ``i`` and ``j`` deposits into the cell containing
  ``c_i + c_j`` (nearest-cell deposition). Gain and loss share one table, so
  the discrete number identity ``int N[p] = -1/2 intint beta p p`` holds to
  rounding, while mass conservation holds to ``O(dx)`` from the deposition
  offsets.
* the same pair table realizes the derivative of the coagulation operator,
  which makes ``DN(u)[u] == 2 N[u]`` exact, not just to truncation error.

``K[p]`` uses per-cell Gauss integrals of ``q`` against the cell values, so
it is exact in ``q`` (the states are constant per cell anyway).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import CoefficientSet
from .quad import Mesh

__all__ = [
    "StateVector",
    "boundary_inflow",
    "coagulation",
    "coagulation_split",
    "frechet_apply",
    "linear_apply",
    "moments",
    "kernel_sup",
]


@dataclass(eq=False)
class StateVector:
    """Cell-centered density samples on a mesh.

    ``physical=False`` marks sign-indefinite vectors used in linear-algebra
    checks (resolvent tests, operator outputs); physical states are expected
    to be nonnegative.
    """

    mesh: Mesh
    values: np.ndarray
    physical: bool = True

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.n,):
            raise ValueError(f"expected {self.mesh.n} cell values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("state contains non-finite values")
        self.values = vals

    @classmethod
    def from_callable(cls, mesh: Mesh, fn, physical: bool = True) -> "StateVector":
        vals = np.broadcast_to(np.asarray(fn(mesh.centers), dtype=float),
                               mesh.centers.shape).copy()
        return cls(mesh, vals, physical=physical)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "StateVector":
        return cls(mesh, np.zeros(mesh.n), physical=True)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values) * self.mesh.widths))

    def copy(self) -> "StateVector":
        return StateVector(self.mesh, self.values.copy(), physical=self.physical)


@dataclass(eq=False)
class _PairTable:
    beta: np.ndarray      # (n, n) effective kernel at center pairs
    target: np.ndarray    # flattened deposition cell index for c_i + c_j
    sup: float            # max |beta| over the sampled pairs
    is_zero: bool


@lru_cache(maxsize=8)
def _pair_table(cs: CoefficientSet, mesh: Mesh) -> _PairTable:
    c = mesh.centers
    beta = cs.beta_eval(c[:, None], c[None, :])
    sums = c[:, None] + c[None, :]
    target = np.clip(np.searchsorted(mesh.nodes, sums.ravel(), side="right") - 1,
                     0, mesh.n - 1).astype(np.intp)
    sup = float(np.max(np.abs(beta))) if beta.size else 0.0
    return _PairTable(beta=beta, target=target, sup=sup, is_zero=not beta.any())


@lru_cache(maxsize=8)
def _transport(cs: CoefficientSet, mesh: Mesh):
    g_nodes = np.broadcast_to(cs.g_at(mesh.nodes), mesh.nodes.shape).copy()
    w_centers = np.broadcast_to(cs.w_at(mesh.centers), mesh.centers.shape).copy()
    # per-cell integral of q: exact-in-q weights for the boundary functional
    qg = np.broadcast_to(cs.q_at(mesh.gauss_x), mesh.gauss_x.shape)
    kq = (qg * mesh.gauss_w).reshape(mesh.n, mesh.order).sum(axis=1)
    return g_nodes, w_centers, kq


def kernel_sup(cs: CoefficientSet, mesh: Mesh) -> float:
    """Sup norm of the effective kernel sampled on the center pair grid."""
    return _pair_table(cs, mesh).sup


def boundary_inflow(cs: CoefficientSet, p: StateVector) -> float:
    """Boundary functional ``K[p] = int q p``, the flux entering at ``x0``."""
    _, _, kq = _transport(cs, p.mesh)
    return float(np.dot(kq, p.values))


def coagulation_split(cs: CoefficientSet, p: StateVector):
    """Gain and loss parts of the coagulation operator, both nonnegative
    for nonnegative states. ``coagulation = gain - loss``."""
    mesh = p.mesh
    pt = _pair_table(cs, mesh)
    if pt.is_zero:
        z = np.zeros(mesh.n)
        return z, z.copy()
    m = p.values * mesh.widths
    row = pt.beta @ m
    loss = p.values * row
    weights = (0.5 * pt.beta) * np.outer(m, m)
    gain = np.bincount(pt.target, weights=weights.ravel(), minlength=mesh.n) \
        / mesh.widths
    return gain, loss


def coagulation(cs: CoefficientSet, p: StateVector) -> StateVector:
    """Smoluchowski coagulation rate ``N[p]`` on the state's mesh."""
    if p.physical and p.values.size and np.min(p.values) < 0:
        warnings.warn("coagulation applied to a physical state with negative values",
                      RuntimeWarning, stacklevel=2)
    gain, loss = coagulation_split(cs, p)
    return StateVector(p.mesh, gain - loss, physical=False)


def frechet_apply(cs: CoefficientSet, u: StateVector, h: StateVector) -> StateVector:
    """Derivative of the coagulation operator at ``u`` applied to ``h``.

    Built from the same pair table as :func:`coagulation`, which makes the
    bilinearity identity ``DN(u)[u] = 2 N[u]`` hold exactly.
    """
    if u.mesh is not h.mesh:
        raise ValueError("states live on different meshes")
    mesh = u.mesh
    pt = _pair_table(cs, mesh)
    if pt.is_zero:
        return StateVector(mesh, np.zeros(mesh.n), physical=False)
    mu = u.values * mesh.widths
    mh = h.values * mesh.widths
    weights = (0.5 * pt.beta) * (np.outer(mu, mh) + np.outer(mh, mu))
    gain = np.bincount(pt.target, weights=weights.ravel(), minlength=mesh.n) \
        / mesh.widths
    loss = h.values * (pt.beta @ mu) + u.values * (pt.beta @ mh)
    return StateVector(mesh, gain - loss, physical=False)


def linear_apply(cs: CoefficientSet, p: StateVector) -> StateVector:
    """Upwind finite-volume discretization of ``Lp = -(g p)' - w p``.

    Face fluxes are ``g(node) * p_left`` (upwind, since ``g > 0``); the
    inflow face at ``x0`` carries ``K[p]``, realizing the nonlocal boundary
    condition, and the outflow face at ``x1`` removes ``g(x1) p_{n-1}``.
    """
    mesh = p.mesh
    g_nodes, w_centers, kq = _transport(cs, mesh)
    flux = np.empty(mesh.n + 1)
    flux[0] = np.dot(kq, p.values)
    flux[1:] = g_nodes[1:] * p.values
    out = (flux[:-1] - flux[1:]) / mesh.widths - w_centers * p.values
    return StateVector(mesh, out, physical=False)


def moments(p: StateVector):
    """Number ``int p`` and mass ``int x p`` by the cell-center rule."""
    m = p.values * p.mesh.widths
    return float(np.sum(m)), float(np.sum(p.mesh.centers * m))
