"""
Command-line entry point.

Every subcommand reads an optional JSON object (``--config file.json``);
command-line flags override keys from the file.  Unknown keys are
rejected.  Logs go to stderr, data to stdout and files.

Subcommands::

    converge    manufactured-solution error table and rates (CSV)
    arterial    pulsatile channel benchmark (trace CSV + VTK snapshots)
    check-mesh  validate an ``fpsi-mesh v1`` file
    small-data  evaluate the discrete small-data condition
    solve       run a mesh file with manufactured, zero or pulse data
"""
import argparse
from dataclasses import dataclass, field, fields
from fractions import Fraction
import json
import logging
import math
import sys

import numpy as np

log = logging.getLogger("fpsi")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# value converters

def _num(v):
    if isinstance(v, bool):
        raise ValueError("expected a number, got a boolean")
    if isinstance(v, str):
        return float(Fraction(v.strip()))
    if isinstance(v, (int, float)):
        return float(v)
    raise ValueError(f"expected a number, got {type(v).__name__}")


def _positive(v):
    v = _num(v)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError(f"must be positive, got {v}")
    return v


def _nonneg(v):
    v = _num(v)
    if not (v >= 0 and math.isfinite(v)):
        raise ValueError(f"must be non-negative, got {v}")
    return v


def _count(v):
    if isinstance(v, bool) or not isinstance(v, (int, str)) or int(v) < 1 or str(int(v)) != str(v).strip():
        raise ValueError(f"expected a positive integer, got {v!r}")
    return int(v)


def _family(v):
    if v not in ("lower", "higher"):
        raise ValueError(f"family must be 'lower' or 'higher', got {v!r}")
    return v


def _text(v):
    if not isinstance(v, str) or not v:
        raise ValueError(f"expected a non-empty string, got {v!r}")
    return v


def _optional_text(v):
    return None if v is None else _text(v)


def _hs(v):
    if not isinstance(v, (list, tuple)) or not v:
        raise ValueError("expected a non-empty list of mesh sizes")
    return [_positive(x) for x in v]


def _times(v):
    if not isinstance(v, (list, tuple)):
        raise ValueError("expected a list of times")
    return [_positive(x) for x in v]


def _sources(v):
    if v not in ("mms", "zero", "pulse"):
        raise ValueError(f"sources must be 'mms', 'zero' or 'pulse', got {v!r}")
    return v


def _problem(v):
    if v not in ("mms", "arterial"):
        raise ValueError(f"problem must be 'mms' or 'arterial', got {v!r}")
    return v


def _coefficients(v):
    from .assembly import ProblemCoefficients
    if not isinstance(v, dict):
        raise ValueError("expected an object of coefficient values")
    names = {f.name for f in fields(ProblemCoefficients)}
    out = {}
    for k, x in v.items():
        if k not in names:
            raise ConfigError(f"coefficients: unknown key {k!r}")
        if k == "K":
            K = np.asarray(x, dtype=float)
            out[k] = K.tolist() if K.ndim else float(K)
        else:
            out[k] = _num(x)
    ProblemCoefficients(**out)
    return out


def _arterial_schema():
    from .benchmark import ArterialConfig
    conv = {"family": _family, "snapshot_times": _times}
    schema = {}
    for f in fields(ArterialConfig):
        if f.name in conv:
            schema[f.name] = conv[f.name]
        elif isinstance(f.default, int) and not isinstance(f.default, bool) and f.name.startswith("n"):
            schema[f.name] = _count
        else:
            schema[f.name] = _num
    schema["outdir"] = _text
    return schema


def _schemas():
    common = {"dt": _positive, "T": _nonneg}
    return {
        "converge": dict(family=_family, hmax=_positive, levels=_count, hs=_hs, output=_optional_text,
                         coefficients=_coefficients, **common),
        "arterial": _arterial_schema(),
        "check-mesh": dict(path=_text),
        "small-data": dict(problem=_problem, h=_positive, S_f=_positive, K_f=_positive,
                           beta_p=_positive, k_min=_positive, **common),
        "solve": dict(mesh=_text, family=_family, sources=_sources, coefficients=_coefficients,
                      P_max=_nonneg, T_max=_positive, outdir=_optional_text, **common),
    }


CONVERGE_DEFAULTS = {
    "lower": dict(hmax=1 / 8, levels=4, dt=2.5e-4, T=0.1),
    "higher": dict(hmax=1 / 8, levels=3, dt=1e-6, T=5e-4),
}

DEFAULTS = {
    "converge": dict(family="lower", output=None, coefficients={}),
    "arterial": dict(outdir="arterial_output"),
    "check-mesh": {},
    "small-data": dict(problem="mms", h=1 / 8, dt=2.5e-4, T=0.1, S_f=1.0, K_f=1.0, beta_p=1.0),
    "solve": dict(family="lower", sources="zero", coefficients={}, dt=1e-3, T=0.01,
                  P_max=13334.0, T_max=0.003, outdir=None),
}


@dataclass
class RunConfig:
    """A subcommand and its validated parameters in canonical form."""

    command: str
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"command": self.command, **self.params}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _load_json(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def parse_config(command, path=None, overrides=None, data=None):
    """Validated :class:`RunConfig` from a JSON file, a dict and flag overrides.

    Precedence: ``overrides`` > file or ``data`` > defaults.  A ``command``
    key in the file must match ``command``.
    """
    schemas = _schemas()
    if command not in schemas:
        raise ConfigError(f"unknown subcommand {command!r}")
    raw = dict(data or {})
    if path:
        raw.update(_load_json(path))
    if raw.pop("command", command) != command:
        raise ConfigError(f"config is for a different subcommand than {command!r}")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    schema = schemas[command]
    params = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"{command}: unknown key {key!r}")
        try:
            params[key] = schema[key](value)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{command}: invalid value for {key!r}: {exc}") from None
    params = {**DEFAULTS[command], **params}
    if command == "converge":
        base = CONVERGE_DEFAULTS[params["family"]]
        params = {**base, **params}
        if "hs" not in params:
            params["hs"] = [params["hmax"] / 2 ** k for k in range(params["levels"])]
        params.pop("hmax", None)
        params.pop("levels", None)
        n = params["T"] / params["dt"]
        if abs(n - round(n)) > 1e-8 * max(n, 1):
            raise ConfigError(f"converge: T = {params['T']} is not a multiple of dt = {params['dt']}")
    if command == "arterial":
        from .benchmark import ArterialConfig
        try:
            conf = ArterialConfig(**{k: v for k, v in params.items() if k != "outdir"})
        except ValueError as exc:
            raise ConfigError(f"arterial: {exc}") from None
        params = {**conf.to_dict(), "outdir": params["outdir"]}
    if command == "check-mesh" and "path" not in params:
        raise ConfigError("check-mesh: a mesh path is required")
    if command == "solve" and "mesh" not in params:
        raise ConfigError("solve: a mesh path is required")
    return RunConfig(command, params)


# ---------------------------------------------------------------------------
# subcommands

def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def cmd_converge(cfg, out):
    from .assembly import ProblemCoefficients
    from .verification import convergence_study
    p = cfg.params
    coeffs = ProblemCoefficients(**p["coefficients"])
    table, runs = convergence_study(p["family"], p["hs"], p["dt"], p["T"], coeffs)
    csv = table.to_csv()
    out.write(csv)
    _write(p["output"] or f"convergence_{p['family']}.csv", csv)
    for r in runs:
        cons = max((max(d.conservation.values()) for d in r.history), default=0.0)
        log.info("h=%g: %.1fs, max conservation residual %.2e", r.h, r.seconds, cons)
    return 0


def cmd_arterial(cfg, out):
    from .benchmark import ArterialConfig, TRACE_QUANTITIES, run_arterial
    p = dict(cfg.params)
    outdir = p.pop("outdir")
    conf = ArterialConfig(**p)
    res = run_arterial(conf, outdir=outdir)
    peaks = {f"{1000 * t:g}": float(x[np.argmax(v)]) for t, (x, v) in sorted(res.pressure_profiles.items())}
    summary = dict(seconds=round(res.seconds, 3), finite=res.finite, max_pressure=res.max_pressure,
                   pressure_peak_x=peaks, files=res.files)
    for t in sorted(res.snapshots):
        ratio = (np.abs(res.traces[("up_t", t)].value).max()
                 / max(np.abs(res.traces[("uf_t", t)].value).max(), 1e-300))
        summary[f"t_{1000 * t:g}ms"] = dict(
            {q: res.traces[(q, t)].peak_x() for q in TRACE_QUANTITIES}, tangential_ratio=float(ratio))
    out.write(json.dumps(summary, indent=2) + "\n")
    return 0 if res.finite else 1


def cmd_check_mesh(cfg, out):
    from .mesh import MeshError, read_mesh, validate
    path = cfg.params["path"]
    try:
        mesh = read_mesh(path)
    except MeshError as exc:
        out.write(f"{path}: {exc}\n")
        return 1
    except OSError as exc:
        out.write(f"{path}: {exc.strerror}\n")
        return 1
    problems = validate(mesh)
    for msg in problems:
        out.write(msg + "\n")
    if not problems:
        out.write(f"{path}: ok ({mesh.fluid.n_cells} fluid, {mesh.poro.n_cells} poroelastic triangles, "
                  f"{len(mesh.interface)} interface edges)\n")
    return 1 if problems else 0


def cmd_small_data(cfg, out):
    from .diagnostics import small_data_check
    from .stepper import SolverConfig
    p = cfg.params
    if p["problem"] == "mms":
        from .assembly import ProblemCoefficients
        from .stepper import CoupledProblem
        from .verification import ManufacturedSolution, mms_mesh
        c = ProblemCoefficients()
        problem = CoupledProblem(mms_mesh(p["h"]), "lower", c, ManufacturedSolution(c).sources())
    else:
        from .benchmark import ArterialConfig, arterial_problem
        problem = arterial_problem(ArterialConfig())
    n = SolverConfig(p["dt"], p["T"]).n_steps
    rep = small_data_check(problem, p["dt"], n, p["S_f"], p["K_f"], p["beta_p"], p.get("k_min"))
    out.write(json.dumps(dict(satisfied=rep.satisfied, worst_lhs=rep.worst, rhs=rep.rhs,
                              C4=rep.data.C4), indent=2) + "\n")
    return 0


def _solve_sources(p, coefficients):
    from .assembly import EssentialBC, SourceFunctions
    from .mesh import BoundaryTag as T
    if p["sources"] == "mms":
        from .verification import ManufacturedSolution
        return ManufacturedSolution(coefficients).sources()
    if p["sources"] == "pulse":
        from .benchmark import arterial_sources
        return arterial_sources(p["P_max"], p["T_max"])
    return SourceFunctions(essential=[EssentialBC("u_f", (T.GammaF,)),
                                      EssentialBC("eta", (T.GammaPD,))])


def cmd_solve(cfg, out):
    import os
    from .assembly import ProblemCoefficients
    from .benchmark import write_vtk
    from .diagnostics import data_quantities, energy_report
    from .mesh import read_mesh
    from .stepper import CoupledProblem, SolverConfig, Stepper, initial_energy
    p = cfg.params
    c = ProblemCoefficients(**p["coefficients"])
    mesh = read_mesh(p["mesh"])
    problem = CoupledProblem(mesh, p["family"], c, _solve_sources(p, c))
    sc = SolverConfig(p["dt"], p["T"])
    init = None
    if p["sources"] == "mms":
        from .verification import ManufacturedSolution, mms_initial_state
        init = mms_initial_state(problem, ManufacturedSolution(c), p["dt"])
    final, hist = Stepper(problem, sc).run(init)
    e0 = initial_energy(problem, init, p["dt"]) if init is not None else 0.0
    energy = None
    if hist and not callable(c.K):
        d = data_quantities(problem, p["dt"], len(hist))
        energy = energy_report(hist, d, c, p["dt"], initial=e0)
    if p["outdir"]:
        os.makedirs(p["outdir"], exist_ok=True)
        write_vtk(os.path.join(p["outdir"], "final.vtk"), final, problem)
    summary = dict(steps=len(hist), t=final.t, ndofs=problem.ndofs, max_abs=final.max_abs(),
                   max_conservation=max((max(h.conservation.values()) for h in hist), default=0.0),
                   energy_bound_holds=None if energy is None else energy.satisfied)
    out.write(json.dumps(summary, indent=2) + "\n")
    return 0


COMMANDS = {"converge": cmd_converge, "arterial": cmd_arterial, "check-mesh": cmd_check_mesh,
            "small-data": cmd_small_data, "solve": cmd_solve}


def build_parser():
    ap = argparse.ArgumentParser(prog="fpsi", description="Navier-Stokes / Biot FPSI solver")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with parameters; flags override its keys")
        return p

    p = add("converge", "manufactured-solution convergence table")
    p.add_argument("--family", choices=("lower", "higher"))
    p.add_argument("--hmax", help="coarsest mesh size, e.g. 1/8")
    p.add_argument("--levels", type=int)
    p.add_argument("--dt")
    p.add_argument("--T")
    p.add_argument("--output", help="CSV file (default convergence_<family>.csv)")

    p = add("arterial", "pulsatile channel benchmark")
    for name in ("T", "dt", "P_max", "T_max", "nx", "ny_f", "ny_wall", "magnify"):
        p.add_argument(f"--{name}")
    p.add_argument("--family", choices=("lower", "higher"))
    p.add_argument("--outdir")

    p = add("check-mesh", "validate a mesh file")
    p.add_argument("path", nargs="?")

    p = add("small-data", "discrete small-data condition")
    p.add_argument("--problem", choices=("mms", "arterial"))
    for name in ("h", "dt", "T", "S_f", "K_f", "beta_p", "k_min"):
        p.add_argument(f"--{name}")

    p = add("solve", "time-step a mesh file")
    p.add_argument("mesh", nargs="?")
    p.add_argument("--family", choices=("lower", "higher"))
    p.add_argument("--sources", choices=("mms", "zero", "pulse"))
    for name in ("dt", "T", "P_max", "T_max"):
        p.add_argument(f"--{name}")
    p.add_argument("--outdir")
    return ap


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = parse_config(args.command, args.config, overrides)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"fpsi {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"fpsi {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
