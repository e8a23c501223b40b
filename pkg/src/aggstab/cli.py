"""Command line interface.

Commands (all take ``--config PATH``):

* ``classify``  print the stability report; exit 0 Stable, 1 Unstable,
  2 Marginal/NoRoot.
* ``spectrum``  tabulate xi(lambda) over a range into CSV, with a companion
  file marking lambda0 when it falls inside the range.
* ``simulate``  run the nonlinear march; write trace (and optional snapshot)
  CSV plus a run manifest; exit 3 on blow-up abort.
* ``validate``  end-to-end check: computed lambda0 versus the rate fitted
  from a simulation; exit 0 when consistent, 4 otherwise.
* ``sweep``     classify across scalar multipliers of one coefficient.

Error exits use code 5 (config/usage problems detected by the tool) or 64
(malformed command line). Every float is printed with 17 significant digits
and identical configs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, semigroup, simulator, spectral
from .config import Config, ConfigError, load_config
from .model import validate as validate_coefficients
from .quad import build_mesh
from .spectral import Classification

_EXIT_BY_CLASS = {
    Classification.STABLE: 0,
    Classification.UNSTABLE: 1,
    Classification.MARGINAL: 2,
    Classification.NO_ROOT: 2,
}
_EXIT_BLOWUP = 3
_EXIT_INCONSISTENT = 4
_EXIT_ERROR = 5
_EXIT_USAGE = 64


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


class _Parser(argparse.ArgumentParser):
    # argparse's default usage-error exit code (2) collides with the
    # Marginal/NoRoot classification exit; use EX_USAGE instead
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(_EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the config file")
    common.add_argument("--out", default=None, help="directory for output files")
    common.add_argument("--mesh-n", type=int, default=None, help="override [numerics] n")
    common.add_argument("--tol", type=float, default=None, help="override [numerics] tol")
    common.add_argument("--seed", type=int, default=None,
                        help="seed recorded in the manifest (for reproducible pipelines)")

    parser = _Parser(prog="aggstab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aggstab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("classify", parents=[common], help="stability classification")

    spec = sub.add_parser("spectrum", parents=[common], help="tabulate xi(lambda)")
    spec.add_argument("--lambda-min", type=float, required=True)
    spec.add_argument("--lambda-max", type=float, required=True)
    spec.add_argument("--count", type=int, required=True)

    sub.add_parser("simulate", parents=[common], help="run the nonlinear model")
    sub.add_parser("validate", parents=[common],
                   help="cross-check spectral prediction against a simulation")

    sweep = sub.add_parser("sweep", parents=[common],
                           help="classify across coefficient multipliers")
    sweep.add_argument("--parameter", required=True,
                       choices=["g_scale", "q_scale", "w_scale"])
    sweep.add_argument("--values", required=True,
                       help="comma-separated positive multipliers, e.g. 0.5,1,2")
    return parser


class _OutputSet:
    """Collects written files and renders the run manifest."""

    def __init__(self, out_dir, command, cfg: Config, args):
        self.dir = Path(out_dir) if out_dir is not None else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.seed = args.seed
        self.parameters = {}
        self.files = []

    @property
    def active(self) -> bool:
        return self.dir is not None

    def path(self, name: str) -> Path:
        return self.dir / name

    def add(self, name: str):
        p = self.path(name)
        data = p.read_bytes()
        self.files.append({
            "name": name,
            "bytes": len(data),
            "sha256": hashlib.sha256(data).hexdigest(),
        })

    def write_manifest(self):
        manifest = {
            "command": self.command,
            "config_path": self.cfg.path,
            "config_sha256": self.cfg.sha256,
            "tool_version": __version__,
            "seed": self.seed,
            "parameters": self.parameters,
            "outputs": self.files,
        }
        text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        self.path("manifest.json").write_text(text, encoding="utf-8", newline="\n")


def _setup(args):
    cfg = load_config(args.config)
    if args.mesh_n is not None:
        cfg.n = args.mesh_n
    if args.tol is not None:
        cfg.tol = args.tol
    cs = cfg.coefficient_set()
    report = validate_coefficients(cs, n_check=min(1001, max(2, cfg.n + 1)))
    if not report.valid:
        raise ConfigError(f"{cfg.path}: coefficient assumptions violated:\n{report}")
    mesh = build_mesh(cs, cfg.n, cfg.grading, cfg.quad_order)
    return cfg, cs, mesh


def _sim_config(cfg: Config, gamma_x1: float) -> simulator.SimulationConfig:
    from . import expr

    sim = cfg.sim
    t_end = sim.t_end if sim.t_end is not None else 4.0 * gamma_x1
    ic = expr.parse(sim.ic, {"x"}) if sim.ic is not None else None
    return simulator.SimulationConfig(
        n=cfg.n,
        t_end=t_end,
        grading=cfg.grading,
        quad_order=cfg.quad_order,
        dt=sim.dt,
        cfl=sim.cfl,
        ic=ic,
        epsilon=sim.epsilon,
        stride=sim.stride,
        integrator=sim.integrator,
        norm_cap=sim.norm_cap,
        save_states=sim.save_states,
    )


def cmd_classify(args) -> int:
    cfg, cs, mesh = _setup(args)
    report = spectral.classify(cs, mesh, tol=cfg.tol)
    text = report.to_text()
    print(text)
    out = _OutputSet(args.out, "classify", cfg, args)
    if out.active:
        out.parameters = {"n": cfg.n, "grading": cfg.grading, "tol": cfg.tol}
        out.path("report.txt").write_text(text + "\n", encoding="utf-8", newline="\n")
        out.add("report.txt")
        out.write_manifest()
    return _EXIT_BY_CLASS[report.classification]


def cmd_spectrum(args) -> int:
    cfg, cs, mesh = _setup(args)
    if not args.lambda_min < args.lambda_max:
        raise ConfigError("--lambda-min must be below --lambda-max")
    if args.count < 2:
        raise ConfigError("--count must be at least 2")
    lams = np.linspace(args.lambda_min, args.lambda_max, args.count)
    vals = spectral.xi_grid(cs, mesh, lams)
    lam0 = spectral.find_spectral_bound(cs, mesh, tol=min(cfg.tol, 1e-10))

    out = _OutputSet(args.out if args.out is not None else ".", "spectrum", cfg, args)
    out.parameters = {"n": cfg.n, "grading": cfg.grading,
                      "lambda_min": args.lambda_min, "lambda_max": args.lambda_max,
                      "count": args.count}
    with open(out.path("spectrum.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("lambda,xi\n")
        for lam, v in zip(lams, vals):
            fh.write(f"{lam:.17g},{v:.17g}\n")
    out.add("spectrum.csv")
    with open(out.path("lambda0.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("lambda0,inside_range\n")
        if lam0 is None:
            fh.write("none,false\n")
        else:
            inside = args.lambda_min <= lam0 <= args.lambda_max
            fh.write(f"{lam0:.17g},{'true' if inside else 'false'}\n")
    out.add("lambda0.csv")
    out.write_manifest()
    print(f"spectrum written to {out.path('spectrum.csv')}")
    if lam0 is not None:
        print(f"lambda0={_fmt(lam0)}")
    return 0


def cmd_simulate(args) -> int:
    cfg, cs, mesh = _setup(args)
    gamma_x1 = spectral.classify(cs, mesh, tol=cfg.tol).gamma_x1
    sim_cfg = _sim_config(cfg, gamma_x1)
    trace = simulator.run(cs, sim_cfg)

    out = _OutputSet(args.out if args.out is not None else ".", "simulate", cfg, args)
    out.parameters = {
        "n": cfg.n, "grading": cfg.grading, "t_end": sim_cfg.t_end,
        "epsilon": sim_cfg.epsilon, "integrator": sim_cfg.integrator,
        "status": trace.status, "t_last": trace.t_last,
        "cap_time": trace.cap_time,
    }
    trace.to_csv(out.path("trace.csv"))
    out.add("trace.csv")
    if sim_cfg.save_states:
        trace.snapshots_to_csv(out.path("snapshots.csv"))
        out.add("snapshots.csv")
    out.write_manifest()
    print(f"status={trace.status} t_last={_fmt(trace.t_last)}")
    if trace.cap_time is not None:
        print(f"cap_time={_fmt(trace.cap_time)}")
    return _EXIT_BLOWUP if trace.status in ("blowup", "aborted") else 0


def cmd_validate(args) -> int:
    cfg, cs, mesh = _setup(args)
    report = spectral.classify(cs, mesh, tol=cfg.tol)
    if report.lambda0 is None:
        raise ConfigError("validate needs a spectral bound; q vanishes (NoRoot)")
    gamma_x1 = report.gamma_x1
    sim = cfg.sim
    window = sim.window if sim.window is not None \
        else (2.0 * gamma_x1, 4.0 * gamma_x1)
    sim_cfg = _sim_config(cfg, gamma_x1)
    if sim.t_end is None:
        sim_cfg.t_end = max(sim_cfg.t_end, window[1])
    trace = simulator.run(cs, sim_cfg)
    rate = simulator.estimate_rate(trace, window)
    rel = abs(rate - report.lambda0) / abs(report.lambda0)
    ok = rel <= sim.rate_tol

    lines = [
        f"classification={report.classification}",
        f"lambda0={_fmt(report.lambda0)}",
        f"fitted_rate={_fmt(rate)}",
        f"relative_mismatch={_fmt(rel)}",
        f"tolerance={_fmt(sim.rate_tol)}",
        f"window={_fmt(window[0])},{_fmt(window[1])}",
        f"status={trace.status}",
        f"consistent={'yes' if ok else 'no'}",
    ]
    text = "\n".join(lines)
    print(text)
    out = _OutputSet(args.out, "validate", cfg, args)
    if out.active:
        out.parameters = {"n": cfg.n, "rate_tol": sim.rate_tol,
                          "window": list(window)}
        out.path("validation.txt").write_text(text + "\n", encoding="utf-8", newline="\n")
        out.add("validation.txt")
        out.write_manifest()
    return 0 if ok else _EXIT_INCONSISTENT


def cmd_sweep(args) -> int:
    cfg, cs_base, _ = _setup(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as err:
        raise ConfigError(f"--values: {err}") from err
    if not values or any(not np.isfinite(v) or v <= 0 for v in values):
        raise ConfigError("--values needs finite positive numbers")

    out = _OutputSet(args.out if args.out is not None else ".", "sweep", cfg, args)
    out.parameters = {"parameter": args.parameter, "values": values, "n": cfg.n}
    rows = []
    for v in values:
        scaled = cs_base.with_scales(**{args.parameter: v})
        mesh_v = build_mesh(scaled, cfg.n, cfg.grading, cfg.quad_order)
        rep = spectral.classify(scaled, mesh_v, tol=cfg.tol)
        rows.append((v, rep.xi_at_zero, rep.lambda0, rep.classification.value))
    with open(out.path("sweep.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("value,xi_at_zero,lambda0,classification\n")
        for v, xi0, lam0, cls in rows:
            fh.write(f"{v:.17g},{xi0:.17g},{_fmt(lam0)},{cls}\n")
    out.add("sweep.csv")
    out.write_manifest()
    for v, xi0, lam0, cls in rows:
        print(f"{args.parameter}={_fmt(v)}: {cls} (xi0={_fmt(xi0)})")
    return 0


_COMMANDS = {
    "classify": cmd_classify,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, RuntimeError) as err:
        print(f"aggstab {args.command}: error: {err}", file=sys.stderr)
        return _EXIT_ERROR


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
