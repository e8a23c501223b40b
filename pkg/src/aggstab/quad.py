"""Meshes, composite Gauss-Legendre quadrature, and cumulative integrals.

Every integral in the analysis pipeline goes through a shared :class:`Mesh`:
a partition of ``[x0, x1]`` into cells, each carrying a fixed-order
Gauss-Legendre rule (default order 4). Fixed-order composite quadrature on
a shared mesh keeps results reproducible bit for bit and lets the spectral
and simulation code agree on one discretization of the domain.

:class:`CumulativeTable` caches running integrals ``F(x) = int_{x0}^x f``
at the mesh nodes with monotone cubic (PCHIP) interpolation in between.
This is how the transit time ``Gamma(x) = int_{x0}^x 1/g`` and the decay
exponent ``W(x) = int_{x0}^x w/g`` are evaluated everywhere. The inverse
``Gamma^{-1}`` needed by the characteristics solver is computed by bisection
on the interpolant, which PCHIP keeps strictly monotone for positive ``f``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator

from .model import CoefficientSet

__all__ = ["Mesh", "CumulativeTable", "build_mesh", "integrate", "cumulative", "inverse"]


@dataclass(eq=False)
class Mesh:
    """Partition of ``[x0, x1]`` with per-cell Gauss-Legendre points."""

    nodes: np.ndarray     # (n+1,) strictly increasing, nodes[0] = x0, nodes[-1] = x1
    centers: np.ndarray   # (n,) cell midpoints
    widths: np.ndarray    # (n,) cell widths
    gauss_x: np.ndarray   # (n*order,) quadrature abscissae, cell by cell
    gauss_w: np.ndarray   # (n*order,) quadrature weights, sum = x1 - x0
    order: int
    grading: str

    @property
    def n(self) -> int:
        return self.centers.size

    @property
    def x0(self) -> float:
        return float(self.nodes[0])

    @property
    def x1(self) -> float:
        return float(self.nodes[-1])


def _mesh_from_nodes(nodes: np.ndarray, order: int, grading: str) -> Mesh:
    widths = np.diff(nodes)
    if np.any(widths <= 0):
        raise ValueError("mesh nodes must be strictly increasing")
    centers = 0.5 * (nodes[:-1] + nodes[1:])
    t, wt = leggauss(order)
    half = 0.5 * widths
    # (n, order) panels flattened in cell order
    gx = centers[:, None] + half[:, None] * t[None, :]
    gw = half[:, None] * wt[None, :]
    return Mesh(
        nodes=nodes,
        centers=centers,
        widths=widths,
        gauss_x=gx.reshape(-1),
        gauss_w=gw.reshape(-1),
        order=order,
        grading=grading,
    )


def build_mesh(cs: CoefficientSet, n: int, grading: str = "uniform",
               order: int = 4) -> Mesh:
    """Mesh on the coefficient set's domain.

    ``grading="uniform"`` gives equal cells; ``grading="geometric"`` places
    nodes at ``x0 * r**k`` with ``r = (x1/x0)**(1/n)``, useful when the
    domain spans several decades.
    """
    if n < 2:
        raise ValueError(f"mesh needs at least 2 cells, got {n}")
    if order < 1:
        raise ValueError(f"quadrature order must be positive, got {order}")
    if grading == "uniform":
        nodes = np.linspace(cs.x0, cs.x1, n + 1)
    elif grading == "geometric":
        nodes = cs.x0 * np.exp(np.arange(n + 1) * (np.log(cs.x1 / cs.x0) / n))
        nodes[0], nodes[-1] = cs.x0, cs.x1  # pin endpoints exactly
    else:
        raise ValueError(f"unknown grading {grading!r}")
    return _mesh_from_nodes(nodes, order, grading)


def _sample(f, x: np.ndarray) -> np.ndarray:
    """Evaluate a (possibly constant-returning) callable on an array."""
    return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)


def integrate(f, mesh: Mesh) -> float:
    """Composite Gauss-Legendre approximation of ``int_{x0}^{x1} f``.

    Summation is a single numpy pairwise reduction in cell order, so repeated
    calls produce bit-identical results.
    """
    return float(np.sum(_sample(f, mesh.gauss_x) * mesh.gauss_w))


@dataclass(eq=False)
class CumulativeTable:
    """Running integral ``F(x) = int_{x0}^x f`` tabulated at mesh nodes."""

    nodes: np.ndarray
    values: np.ndarray
    rule: str = "pchip"
    _interp: PchipInterpolator = field(repr=False, default=None)

    def __post_init__(self):
        if self._interp is None:
            object.__setattr__(self, "_interp", PchipInterpolator(self.nodes, self.values))

    def __call__(self, x):
        return self._interp(x)

    @property
    def total(self) -> float:
        """F(x1), the integral over the whole domain."""
        return float(self.values[-1])

    def inverse_sampler(self, points_per_cell: int = 16):
        """Fast vectorized approximation of ``F^{-1}`` (for hot loops).

        Solves ``F(x) = tau`` once on a dense grid uniform in ``tau`` (so the
        interpolation error is uniform even where ``F`` is steep) and returns
        a linear-interpolation lookup. Use :func:`inverse` directly when
        residual-controlled accuracy is required.
        """
        n = self.nodes.size - 1
        taus = np.linspace(0.0, self.total, points_per_cell * n + 1)
        xs = inverse(self, taus)
        xs[0], xs[-1] = self.nodes[0], self.nodes[-1]

        def inv(tau):
            return np.interp(tau, taus, xs)

        return inv


def cumulative(f, mesh: Mesh) -> CumulativeTable:
    """Tabulate ``int_{x0}^x f`` at the mesh nodes (per-cell Gauss sums)."""
    cell_ints = (_sample(f, mesh.gauss_x) * mesh.gauss_w).reshape(mesh.n, mesh.order).sum(axis=1)
    values = np.concatenate(([0.0], np.cumsum(cell_ints)))
    return CumulativeTable(nodes=mesh.nodes, values=values)


def inverse(table: CumulativeTable, tau, *, rtol_range: float = 1e-9,
            atol: float = 1e-10, max_iter: int = 200):
    """Solve ``F(x) = tau`` by bisection on the interpolant.

    Requires a strictly increasing table (true for the transit time when
    ``g > 0``). The residual ``|F(x) - tau|`` is driven below ``atol``.
    Scalar in, scalar out; arrays are solved elementwise.
    """
    if np.any(np.diff(table.values) <= 0):
        raise ValueError("cumulative table is not strictly increasing; cannot invert")
    tau_arr = np.asarray(tau, dtype=float)
    total = table.total
    slack = rtol_range * max(1.0, abs(total))
    if np.any(tau_arr < -slack) or np.any(tau_arr > total + slack):
        bad = float(tau_arr.flat[int(np.argmax((tau_arr < -slack) | (tau_arr > total + slack)))])
        raise ValueError(f"tau={bad:.17g} outside [0, {total:.17g}]")
    tau_c = np.clip(tau_arr, 0.0, total)

    lo = np.full(tau_c.shape, table.nodes[0], dtype=float)
    hi = np.full(tau_c.shape, table.nodes[-1], dtype=float)
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        resid = table(mid) - tau_c
        if np.all(np.abs(resid) <= atol):
            break
        go_right = resid < 0
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        mid = 0.5 * (lo + hi)
    if tau_arr.shape == ():
        return float(mid)
    return mid
