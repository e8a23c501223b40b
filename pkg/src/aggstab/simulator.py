"""Explicit time stepping of the full nonlinear model.

One step advances ``p_t = L p + N p`` with the upwind transport operator and
the pair-table coagulation operator, by forward Euler or Heun (rk2). Two
step-size restrictions are enforced: the transport CFL bound
``dt * max g / min dx <= 1`` (fixed over the run) and the loss-positivity
bound ``dt * (max w + sup beta * ||p||_1) <= 1``, which depends on the
current state and is re-checked every step. Under both bounds the Euler
update keeps nonnegative states nonnegative up to rounding; stray negative
values are clipped to zero and the clipped mass is tracked.

A run records a diagnostic trace: norms, moments, boundary fluxes, and the
number/mass balance residuals obtained by comparing centered differences of
the recorded moments against the recorded flux budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr, operators
from .model import CoefficientSet
from .operators import StateVector
from .quad import Mesh, build_mesh

__all__ = [
    "SimulationConfig",
    "SimulationTrace",
    "SimulationError",
    "CflViolationError",
    "NonFiniteStateError",
    "default_bump",
    "initial_state",
    "step",
    "run",
    "estimate_rate",
]


class SimulationError(RuntimeError):
    pass


class CflViolationError(SimulationError):
    pass


class NonFiniteStateError(SimulationError):
    pass


@dataclass
class SimulationConfig:
    """Parameters of a nonlinear run.

    Exactly one of ``dt`` (fixed step) or ``cfl`` (step from the transport
    bound) may be given; with neither, ``cfl = 0.9``. ``norm_cap`` stops the
    march cleanly once ``||p||_1`` exceeds ``norm_cap`` times its initial
    value (used to keep unstable runs inside the linear regime).
    """

    n: int
    t_end: float
    grading: str = "uniform"
    quad_order: int = 4
    dt: float | None = None
    cfl: float | None = None
    ic: expr.Expression | None = None   # None: centered Gaussian bump
    epsilon: float = 1e-3               # initial L1 norm
    stride: int | None = None           # record every this many steps
    integrator: str = "euler"           # "euler" or "rk2"
    norm_cap: float | None = None
    save_states: bool = False

    def __post_init__(self):
        if self.dt is not None and self.cfl is not None:
            raise ValueError("give either dt or cfl, not both")
        if self.dt is None and self.cfl is None:
            self.cfl = 0.9
        if self.cfl is not None and not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"cfl must be in (0, 1], got {self.cfl}")
        if self.integrator not in ("euler", "rk2"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")


@dataclass
class SimulationTrace:
    """Recorded diagnostics of a run. All arrays share one time axis."""

    t: np.ndarray
    l1_norm: np.ndarray
    number: np.ndarray
    mass: np.ndarray
    inflow: np.ndarray           # K[p]
    outflow: np.ndarray          # g(x1) p(x1)
    number_residual: np.ndarray
    mass_residual: np.ndarray
    status: str                  # completed | capped | blowup | aborted
    t_last: float
    cap_time: float | None = None
    clipped_mass: float = 0.0          # total clipped over the run
    max_preclip_negativity: float = 0.0
    snapshots: list = field(default_factory=list)  # (t, values) pairs
    mesh: Mesh | None = None

    def to_csv(self, path):
        cols = ("t", "l1_norm", "number", "mass", "inflow", "outflow",
                "number_residual", "mass_residual")
        data = [getattr(self, c) for c in cols]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*data):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def snapshots_to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,x,p\n")
            for t, vals in self.snapshots:
                for x, v in zip(self.mesh.centers, vals):
                    fh.write(f"{t:.17g},{x:.17g},{v:.17g}\n")


def default_bump(cs: CoefficientSet) -> expr.Expression:
    """Interior Gaussian profile: center of the domain, width (x1-x0)/20."""
    xc = 0.5 * (cs.x0 + cs.x1)
    sigma = (cs.x1 - cs.x0) / 20.0
    return expr.parse(f"exp(-((x - {xc!r})/{sigma!r})^2)", {"x"})


def initial_state(cs: CoefficientSet, mesh: Mesh, config: SimulationConfig) -> StateVector:
    """Initial condition scaled so its (cell-rule) L1 norm equals epsilon."""
    profile = config.ic if config.ic is not None else default_bump(cs)
    vals = np.broadcast_to(expr.evaluate(profile, {"x": mesh.centers}),
                           mesh.centers.shape).astype(float)
    if np.any(vals < 0):
        raise ValueError("initial profile must be nonnegative")
    norm = float(np.sum(vals * mesh.widths))
    if norm == 0.0:
        return StateVector(mesh, np.zeros(mesh.n))
    return StateVector(mesh, (config.epsilon / norm) * vals)


def _rhs(cs: CoefficientSet, mesh: Mesh, values: np.ndarray) -> np.ndarray:
    sv = StateVector(mesh, values, physical=False)
    out = operators.linear_apply(cs, sv).values
    coag = operators.coagulation(cs, sv)
    return out + coag.values


def _advance(cs, mesh, values, dt, integrator):
    """One explicit step. Returns (new values, pre-clip min, clipped mass)."""
    k1 = _rhs(cs, mesh, values)
    if integrator == "euler":
        cand = values + dt * k1
    else:  # Heun
        pred = values + dt * k1
        if not np.all(np.isfinite(pred)):
            raise NonFiniteStateError("predictor state is non-finite")
        k2 = _rhs(cs, mesh, pred)
        cand = values + (0.5 * dt) * (k1 + k2)
    if not np.all(np.isfinite(cand)):
        raise NonFiniteStateError("state became non-finite")
    pre_min = float(np.min(cand)) if cand.size else 0.0
    clipped = 0.0
    if pre_min < 0.0:
        neg = cand < 0.0
        clipped = float(-np.sum(cand[neg] * mesh.widths[neg]))
        cand = np.where(neg, 0.0, cand)
    return cand, pre_min, clipped


def _cfl_dt(cs, mesh, config) -> float:
    g_nodes = np.broadcast_to(cs.g_at(mesh.nodes), mesh.nodes.shape)
    max_g = float(np.max(g_nodes))
    min_dx = float(np.min(mesh.widths))
    if config.dt is not None:
        dt = config.dt
        if dt * max_g / min_dx > 1.0 + 1e-12:
            raise CflViolationError(
                f"dt = {dt:.6g} violates the transport bound; need dt <= "
                f"{min_dx / max_g:.6g}")
        return dt
    return config.cfl * min_dx / max_g


def step(cs: CoefficientSet, p: StateVector, dt: float,
         integrator: str = "euler") -> StateVector:
    """Public single step with full bound checking."""
    mesh = p.mesh
    g_nodes = np.broadcast_to(cs.g_at(mesh.nodes), mesh.nodes.shape)
    if dt * float(np.max(g_nodes)) / float(np.min(mesh.widths)) > 1.0 + 1e-12:
        raise CflViolationError("dt violates the transport CFL bound")
    w_max = float(np.max(np.broadcast_to(cs.w_at(mesh.centers), mesh.centers.shape)))
    bsup = operators.kernel_sup(cs, mesh)
    if dt * (w_max + bsup * p.l1_norm()) > 1.0 + 1e-12:
        raise CflViolationError("dt violates the loss-positivity bound")
    vals, _, _ = _advance(cs, mesh, p.values, dt, integrator)
    return StateVector(mesh, vals, physical=p.physical)


def run(cs: CoefficientSet, config: SimulationConfig) -> SimulationTrace:
    """March to ``t_end``, recording diagnostics every ``stride`` steps."""
    mesh = build_mesh(cs, config.n, config.grading, config.quad_order)
    p = initial_state(cs, mesh, config)
    dt = _cfl_dt(cs, mesh, config)

    n_steps = max(1, int(np.ceil(config.t_end / dt - 1e-12)))
    stride = config.stride or max(1, n_steps // 400)
    w_max = float(np.max(np.broadcast_to(cs.w_at(mesh.centers), mesh.centers.shape)))
    bsup = operators.kernel_sup(cs, mesh)
    g_centers = np.broadcast_to(cs.g_at(mesh.centers), mesh.centers.shape)
    g_x1 = float(cs.g_at(mesh.x1))
    w_centers = np.broadcast_to(cs.w_at(mesh.centers), mesh.centers.shape)
    pt_beta = None
    if bsup > 0.0:
        pt_beta = operators._pair_table(cs, mesh).beta

    rows = {k: [] for k in ("t", "l1", "number", "mass", "inflow", "outflow",
                            "wsink", "coag_sink", "gp", "xwsink")}
    snapshots = []

    def record(t, values):
        m = values * mesh.widths
        rows["t"].append(t)
        rows["l1"].append(float(np.sum(np.abs(m))))
        rows["number"].append(float(np.sum(m)))
        rows["mass"].append(float(np.sum(mesh.centers * m)))
        rows["inflow"].append(operators.boundary_inflow(cs, StateVector(mesh, values, physical=False)))
        rows["outflow"].append(g_x1 * float(values[-1]))
        rows["wsink"].append(float(np.sum(w_centers * m)))
        rows["coag_sink"].append(0.5 * float(m @ (pt_beta @ m)) if pt_beta is not None else 0.0)
        rows["gp"].append(float(np.sum(g_centers * m)))
        rows["xwsink"].append(float(np.sum(mesh.centers * w_centers * m)))
        if config.save_states:
            snapshots.append((t, values.copy()))

    t = 0.0
    values = p.values
    norm0 = float(np.sum(np.abs(values) * mesh.widths))
    record(t, values)
    status = "completed"
    cap_time = None
    clipped_total = 0.0
    max_neg = 0.0
    k = 0
    while t < config.t_end * (1.0 - 1e-12):
        dt_k = min(dt, config.t_end - t)
        l1 = float(np.sum(np.abs(values) * mesh.widths))
        if dt_k * (w_max + bsup * l1) > 1.0:
            status = "aborted"
            break
        try:
            values, pre_min, clipped = _advance(cs, mesh, values, dt_k, config.integrator)
        except NonFiniteStateError:
            status = "blowup"
            break
        clipped_total += clipped
        max_neg = max(max_neg, -pre_min)
        t += dt_k
        k += 1
        at_end = t >= config.t_end * (1.0 - 1e-12)
        l1 = float(np.sum(np.abs(values) * mesh.widths))
        capped = config.norm_cap is not None and norm0 > 0.0 \
            and l1 >= config.norm_cap * norm0
        if k % stride == 0 or at_end or capped:
            record(t, values)
        if capped:
            status = "capped"
            cap_time = t
            break

    arr = {key: np.asarray(val, dtype=float) for key, val in rows.items()}
    num_res, mass_res = _balance_residuals(cs, mesh, arr)
    return SimulationTrace(
        t=arr["t"],
        l1_norm=arr["l1"],
        number=arr["number"],
        mass=arr["mass"],
        inflow=arr["inflow"],
        outflow=arr["outflow"],
        number_residual=num_res,
        mass_residual=mass_res,
        status=status,
        t_last=t,
        cap_time=cap_time,
        clipped_mass=clipped_total,
        max_preclip_negativity=max_neg,
        snapshots=snapshots,
        mesh=mesh,
    )


def _balance_residuals(cs, mesh, arr):
    """Residuals of the number and mass budgets from the recorded series.

    number' = K[p] - g(x1) p(x1) - int w p - 1/2 intint beta p p
    mass'   = x0 K[p] + int g p - x1 g(x1) p(x1) - int x w p
    (coagulation conserves mass under the truncated kernel, so it appears
    only in the number budget; its discrete deposition error shows up as
    part of the mass residual).
    """
    t = arr["t"]
    if t.size < 3:
        z = np.zeros_like(t)
        return z, z.copy()

    def ddt(y):
        out = np.empty_like(y)
        out[1:-1] = (y[2:] - y[:-2]) / (t[2:] - t[:-2])
        out[0] = (y[1] - y[0]) / (t[1] - t[0])
        out[-1] = (y[-1] - y[-2]) / (t[-1] - t[-2])
        return out

    num_budget = arr["inflow"] - arr["outflow"] - arr["wsink"] - arr["coag_sink"]
    mass_budget = mesh.x0 * arr["inflow"] + arr["gp"] - mesh.x1 * arr["outflow"] \
        - arr["xwsink"]
    return ddt(arr["number"]) - num_budget, ddt(arr["mass"]) - mass_budget


def estimate_rate(trace: SimulationTrace, window) -> float:
    """Least-squares slope of ``log ||p||_1`` over samples inside ``window``."""
    t_lo, t_hi = float(window[0]), float(window[1])
    sel = (trace.t >= t_lo) & (trace.t <= t_hi)
    if int(np.sum(sel)) < 10:
        raise ValueError(
            f"need at least 10 trace samples in [{t_lo:.6g}, {t_hi:.6g}], "
            f"found {int(np.sum(sel))}")
    norms = trace.l1_norm[sel]
    if np.any(norms <= 0.0):
        raise ValueError("rate fit needs positive norms throughout the window")
    return float(np.polyfit(trace.t[sel], np.log(norms), 1)[0])
