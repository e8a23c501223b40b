"""Validated coefficient sets for the aggregation-growth model.

A :class:`CoefficientSet` bundles the domain bounds ``[x0, x1]`` with the four
model coefficients: growth rate ``g`` (size/time), removal rate ``w``
(1/time), fecundity rate ``q`` (1/size), and the aggregation kernel
``beta(x, y)`` (1/(time*density)). The standing assumptions are

* ``0 < x0 < x1 < inf``,
* ``g > 0`` on ``[x0, x1]``,
* ``w >= 0`` and ``q >= 0`` on ``[x0, x1]``,
* the effective kernel is symmetric and vanishes for ``x + y > x1``.

Symmetry and truncation are enforced structurally by :meth:`CoefficientSet.
beta_eval`, which always returns ``(beta(x,y) + beta(y,x))/2`` on the
admissible triangle and exactly zero outside it. Sign conditions are checked
by dense sampling in :func:`validate`; smoothness of ``g`` is a user
obligation (there is no derivative oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .expr import EvalDomainError, Expression

__all__ = ["CoefficientSet", "Violation", "ValidationReport", "coefficients", "validate"]

# raw kernel asymmetry above this relative level is flagged in the report
_ASYMMETRY_NOTE_RTOL = 1e-12


@dataclass(eq=False)
class CoefficientSet:
    """Immutable model coefficients on a finite size interval."""

    x0: float
    x1: float
    g: Expression
    w: Expression
    q: Expression
    beta: Expression

    def __post_init__(self):
        if not (0.0 < self.x0 < self.x1 < math.inf):
            raise ValueError(
                f"domain bounds must satisfy 0 < x0 < x1 < inf, got [{self.x0}, {self.x1}]"
            )

    def g_at(self, x):
        return expr.evaluate(self.g, {"x": x})

    def w_at(self, x):
        return expr.evaluate(self.w, {"x": x})

    def q_at(self, x):
        return expr.evaluate(self.q, {"x": x})

    def beta_raw(self, x, y):
        """Kernel expression as written, without symmetrization or truncation."""
        return expr.evaluate(self.beta, {"x": x, "y": y})

    def beta_eval(self, x, y):
        """Effective kernel: symmetrized and truncated to ``x + y <= x1``.

        The average ``(beta(x,y) + beta(y,x))/2`` makes the result exactly
        symmetric under swapping the arguments (float addition commutes).
        Points with ``x + y > x1`` are never passed to the expression, so
        kernels that are only defined on the admissible triangle work too.
        """
        x_arr = np.asarray(x, dtype=float)
        y_arr = np.asarray(y, dtype=float)
        x_b, y_b = np.broadcast_arrays(x_arr, y_arr)
        keep = x_b + y_b <= self.x1
        out = np.zeros(x_b.shape, dtype=float)
        if np.any(keep):
            xs, ys = x_b[keep], y_b[keep]
            vals = 0.5 * (
                np.broadcast_to(expr.evaluate(self.beta, {"x": xs, "y": ys}), xs.shape)
                + np.broadcast_to(expr.evaluate(self.beta, {"x": ys, "y": xs}), xs.shape)
            )
            out[keep] = vals
        if x_arr.shape == () and y_arr.shape == ():
            return float(out)
        return out

    def with_scales(self, g_scale: float = 1.0, q_scale: float = 1.0,
                    w_scale: float = 1.0) -> "CoefficientSet":
        """New coefficient set with coefficients multiplied by constants."""

        def scaled(node: Expression, s: float) -> Expression:
            if s == 1.0:
                return node
            return expr.BinOp("*", expr.Num(float(s)), node)

        return CoefficientSet(
            x0=self.x0,
            x1=self.x1,
            g=scaled(self.g, g_scale),
            w=scaled(self.w, w_scale),
            q=scaled(self.q, q_scale),
            beta=self.beta,
        )


def coefficients(x0: float, x1: float, g: str, w: str, q: str,
                 beta: str = "0") -> CoefficientSet:
    """Build a :class:`CoefficientSet` from expression strings."""
    return CoefficientSet(
        x0=float(x0),
        x1=float(x1),
        g=expr.parse(g, {"x"}),
        w=expr.parse(w, {"x"}),
        q=expr.parse(q, {"x"}),
        beta=expr.parse(beta, {"x", "y"}),
    )


@dataclass(frozen=True)
class Violation:
    assumption: str  # "g", "w", "q", or "beta"
    message: str
    x: float
    y: float | None = None

    def __str__(self):
        where = f"x={self.x:.17g}" + (f", y={self.y:.17g}" if self.y is not None else "")
        return f"[{self.assumption}] {self.message} at {where}"


@dataclass
class ValidationReport:
    n_check: int
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __str__(self):
        lines = [f"validation: {'ok' if self.valid else 'FAILED'} (n_check={self.n_check})"]
        lines += [f"  violation: {v}" for v in self.violations]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def _check_sign(report, cs, which, predicate, message, grid):
    """Sample a coefficient on ``grid``; record sign violations or eval errors."""
    fn = {"g": cs.g_at, "w": cs.w_at, "q": cs.q_at}[which]
    try:
        vals = np.broadcast_to(fn(grid), grid.shape)
    except EvalDomainError as err:
        x_bad = err.point.get("x", grid[0])
        report.violations.append(Violation(which, f"evaluation failed: {err}", x_bad))
        return
    bad = predicate(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        report.violations.append(Violation(which, message.format(vals[i]), float(grid[i])))


def validate(cs: CoefficientSet, n_check: int = 1001) -> ValidationReport:
    """Check the standing assumptions by sampling on a uniform grid.

    ``g, w, q`` are sampled at ``n_check`` points, the kernel on the
    ``n_check x n_check`` grid (only where ``x + y <= x1``; the truncated
    region is zero by construction). Expression domain errors are recorded
    as violations rather than raised. Raw-kernel asymmetry beyond 1e-12
    relative is reported as a note: the effective kernel is symmetrized
    either way.
    """
    if n_check < 2:
        raise ValueError("n_check must be at least 2")
    report = ValidationReport(n_check=n_check)
    grid = np.linspace(cs.x0, cs.x1, n_check)

    _check_sign(report, cs, "g", lambda v: v <= 0.0, "g = {:.6g} <= 0", grid)
    _check_sign(report, cs, "w", lambda v: v < 0.0, "w = {:.6g} < 0", grid)
    _check_sign(report, cs, "q", lambda v: v < 0.0, "q = {:.6g} < 0", grid)

    xg, yg = np.meshgrid(grid, grid, indexing="ij")
    keep = xg + yg <= cs.x1
    xs, ys = xg[keep], yg[keep]
    if xs.size:
        try:
            b_xy = np.broadcast_to(cs.beta_raw(xs, ys), xs.shape)
            b_yx = np.broadcast_to(cs.beta_raw(ys, xs), xs.shape)
        except EvalDomainError as err:
            report.violations.append(
                Violation("beta", f"evaluation failed: {err}",
                          err.point.get("x", float(xs[0])), err.point.get("y", float(ys[0])))
            )
            return report
        scale = np.max(np.abs(b_xy)) if xs.size else 0.0
        if scale > 0:
            asym = np.max(np.abs(b_xy - b_yx)) / scale
            if asym > _ASYMMETRY_NOTE_RTOL:
                report.notes.append(
                    f"raw kernel asymmetric (relative asymmetry {asym:.3g}); "
                    "effective kernel uses the symmetrized average"
                )
    return report
