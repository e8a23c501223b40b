"""Exact (up to quadrature) evolution of the linear problem.

The linear semigroup has a closed two-branch form along characteristics.
Writing ``Gamma(x)`` for the transit time from ``x0`` to ``x`` and ``W(x)``
for the removal exponent, the state at time ``t`` is

* ``t < Gamma(x)``: the initial profile pulled back along the characteristic,
  ``u(t,x) = p0(X) * g(X)/g(x) * exp(-(W(x)-W(X)))`` with the foot point
  ``X = Gamma^{-1}(Gamma(x) - t)``;
* ``t >= Gamma(x)``: the point has been refilled through the boundary,
  ``u(t,x) = b(t - Gamma(x)) * exp(-W(x)) / g(x)``,

where ``b(t) = g(x0) u(t, x0) = K[u(t)]`` is the boundary flux. Feeding the
second branch back through ``K`` turns ``b`` into the solution of a causal
renewal equation: the value ``b(t)`` only involves ``b`` at earlier times,
because every point of the quadrature grid has ``Gamma > 0``. The march
discretizes this with an explicit left-endpoint rule on a uniform ``dt_b``
grid (history is interpolated linearly and clamped to the last known value),
which is first order in ``dt_b``.

At the seam ``t == Gamma(x)`` the two branches agree (the foot point is
``x0`` and the boundary condition glues them); ties are resolved toward the
renewal branch, and pulled-back foot points that land below ``x0`` by
rounding are clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from .model import CoefficientSet
from .operators import StateVector
from .quad import Mesh
from .spectral import _tables

__all__ = ["BoundaryFluxHistory", "CausalityError", "evolve_linear",
           "flux_history", "decay_rate_linear"]

_DEFAULT_STEPS_PER_TRANSIT = 2000


class CausalityError(ValueError):
    """dt_b too coarse for the renewal march on this mesh."""


@dataclass(eq=False)
class BoundaryFluxHistory:
    """Boundary flux ``b(t) = K[u(t)]`` sampled on a uniform time grid."""

    dt: float
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)

    def at(self, t):
        """Linear interpolation, clamped to the sampled horizon."""
        return np.interp(t, self.times, self.values)


@dataclass(eq=False)
class _MarchContext:
    gamma_g: np.ndarray    # Gamma at Gauss points
    w_g: np.ndarray
    g_g: np.ndarray
    exp_wg: np.ndarray     # exp(-W) at Gauss points
    kq_g: np.ndarray       # gauss_w * q: K[u] = kq_g . u(gauss)
    gamma_c: np.ndarray    # same data at cell centers
    w_c: np.ndarray
    g_c: np.ndarray
    exp_wc: np.ndarray
    gamma_inv: object      # fast approximate inverse of Gamma
    wtab: object
    gamma_node1: float
    gamma_x1: float
    x0: float
    x1: float


@lru_cache(maxsize=8)
def _context(cs: CoefficientSet, mesh: Mesh) -> _MarchContext:
    t = _tables(cs, mesh)
    gamma_c = t.gamma(mesh.centers)
    w_c = t.wtab(mesh.centers)
    g_c = np.broadcast_to(cs.g_at(mesh.centers), mesh.centers.shape)
    return _MarchContext(
        gamma_g=t.gamma_g,
        w_g=t.w_g,
        g_g=t.g_g,
        exp_wg=np.exp(-t.w_g),
        kq_g=mesh.gauss_w * t.q_g,
        gamma_c=gamma_c,
        w_c=w_c,
        g_c=g_c,
        exp_wc=np.exp(-w_c),
        gamma_inv=t.gamma.inverse_sampler(),
        wtab=t.wtab,
        gamma_node1=float(t.gamma(mesh.nodes[1])),
        gamma_x1=t.gamma_x1,
        x0=mesh.x0,
        x1=mesh.x1,
    )


def _eval_state(cs, ctx, p0i, t, hist_t, hist_b, gamma_x, g_x, exp_w_x, w_x):
    """Two-branch state evaluation at points with precomputed Gamma, g, W."""
    renewal = gamma_x <= t
    out = np.empty_like(gamma_x)
    fresh = ~renewal
    if np.any(fresh):
        foot = ctx.gamma_inv(gamma_x[fresh] - t)
        foot = np.clip(foot, ctx.x0, ctx.x1)
        g_foot = np.broadcast_to(cs.g_at(foot), foot.shape)
        decay = np.exp(-(w_x[fresh] - ctx.wtab(foot)))
        out[fresh] = p0i(foot) * (g_foot / g_x[fresh]) * decay
    if np.any(renewal):
        if hist_t.size:
            b = np.interp(t - gamma_x[renewal], hist_t, hist_b)
        else:
            b = 0.0
        out[renewal] = b * exp_w_x[renewal] / g_x[renewal]
    return out


def _march(cs, ctx, p0i, horizon: float, dt_b: float):
    """March the boundary flux to ``horizon`` on the ``dt_b`` grid.

    Step ``k`` assembles ``u(t_k)`` at the Gauss points using only history
    strictly before ``t_k`` (explicit rule) and records ``b_k = K[u(t_k)]``.
    """
    n_steps = max(1, int(np.ceil(horizon / dt_b - 1e-12)))
    grid = dt_b * np.arange(n_steps + 1)
    b = np.empty(n_steps + 1)
    for k in range(n_steps + 1):
        vals = _eval_state(cs, ctx, p0i, grid[k], grid[:k], b[:k],
                           ctx.gamma_g, ctx.g_g, ctx.exp_wg, ctx.w_g)
        b[k] = float(np.dot(ctx.kq_g, vals))
    return grid, b


def _interpolant(p0: StateVector) -> PchipInterpolator:
    # extrapolate covers the half cells next to the domain endpoints
    return PchipInterpolator(p0.mesh.centers, p0.values, extrapolate=True)


def _default_dt(ctx) -> float:
    return min(ctx.gamma_x1 / _DEFAULT_STEPS_PER_TRANSIT, ctx.gamma_node1)


def _check_dt(ctx, dt_b: float):
    if dt_b <= 0:
        raise ValueError("dt_b must be positive")
    if dt_b > ctx.gamma_node1 * (1.0 + 1e-9):
        raise CausalityError(
            f"dt_b = {dt_b:.6g} exceeds the transit time of the first cell "
            f"({ctx.gamma_node1:.6g}); choose dt_b <= {ctx.gamma_node1:.6g}")


def evolve_linear(cs: CoefficientSet, mesh: Mesh, p0: StateVector, t: float,
                  dt_b: float | None = None) -> StateVector:
    """Evolve ``p0`` by the linear semigroup for time ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if p0.mesh is not mesh:
        raise ValueError("state vector lives on a different mesh")
    if t == 0.0:
        return p0.copy()
    ctx = _context(cs, mesh)
    if dt_b is None:
        dt_b = ctx.gamma_x1 / _DEFAULT_STEPS_PER_TRANSIT
    _check_dt(ctx, dt_b)
    p0i = _interpolant(p0)
    grid, b = _march(cs, ctx, p0i, t, dt_b)
    vals = _eval_state(cs, ctx, p0i, t, grid, b,
                       ctx.gamma_c, ctx.g_c, ctx.exp_wc, ctx.w_c)
    return StateVector(mesh, vals, physical=p0.physical)


def flux_history(cs: CoefficientSet, mesh: Mesh, p0: StateVector, t: float,
                 dt_b: float | None = None) -> BoundaryFluxHistory:
    """Boundary flux history driving the renewal branch up to time ``t``."""
    ctx = _context(cs, mesh)
    if dt_b is None:
        dt_b = ctx.gamma_x1 / _DEFAULT_STEPS_PER_TRANSIT
    _check_dt(ctx, dt_b)
    _, b = _march(cs, ctx, _interpolant(p0), t, dt_b)
    return BoundaryFluxHistory(dt=dt_b, values=b)


def decay_rate_linear(cs: CoefficientSet, mesh: Mesh, p0: StateVector,
                      t_window, n_samples: int = 12,
                      dt_b: float | None = None) -> float:
    """Least-squares growth rate of ``log ||u(t)||_1`` over a time window.

    The window must start at or after the compactness time ``2 Gamma(x1)``,
    past which the dynamics is spectrally dominated. Returns ``-inf`` if the
    state has decayed below representable size.
    """
    t_lo, t_hi = float(t_window[0]), float(t_window[1])
    ctx = _context(cs, mesh)
    if t_lo < 2.0 * ctx.gamma_x1 * (1.0 - 1e-12):
        raise ValueError(
            f"window must start at or after 2*Gamma(x1) = {2*ctx.gamma_x1:.6g}")
    if not t_hi > t_lo:
        raise ValueError("empty time window")
    if n_samples < 10:
        raise ValueError("need at least 10 samples for a rate fit")
    if dt_b is None:
        dt_b = ctx.gamma_x1 / _DEFAULT_STEPS_PER_TRANSIT
    _check_dt(ctx, dt_b)
    p0i = _interpolant(p0)
    grid, b = _march(cs, ctx, p0i, t_hi, dt_b)
    times = np.linspace(t_lo, t_hi, n_samples)
    norms = np.empty(n_samples)
    for j, tj in enumerate(times):
        vals = _eval_state(cs, ctx, p0i, tj, grid, b,
                           ctx.gamma_g, ctx.g_g, ctx.exp_wg, ctx.w_g)
        norms[j] = float(np.dot(mesh.gauss_w, np.abs(vals)))
    if np.any(norms < 1e-300):
        return float("-inf")
    slope = np.polyfit(times, np.log(norms), 1)[0]
    return float(slope)
