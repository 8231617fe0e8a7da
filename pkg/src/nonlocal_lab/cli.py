"""Command-line front end.

Every subcommand resolves its flags into an ExperimentConfig, runs, and
writes a JSON report holding the resolved config, the package version and
the results. Floats are written with 17 significant digits and keys are
sorted, so identical configs give identical bytes.

Exit codes: 0 success, 2 usage error, 3 invalid config or input,
4 file I/O failure, 5 a solver or flow did not converge (report still
written), 1 anything unexpected. Failures print a JSON error object to
stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import compensation as comp
from . import diagnostics as diag
from . import function_spaces as fs
from . import gauge
from . import halfharmonic as hh
from .spectral_core import Grid1D, quarter_laplacian, read_field, write_field

OUTPUT_DIR_ENV = "NONLOCAL_LAB_OUTPUT_DIR"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NOT_CONVERGED = 5


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    pass


# serialization

def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        items = sorted((str(k), v) for k, v in x.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {_fmt(v)}" for k, v in items) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, 17-digit floats, non-finite as null."""
    return _fmt(obj) + "\n"


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format(float(v), ".17g") if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _resolve(path) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    return p if p.is_absolute() else default_output_dir() / p


# configuration

TOLERANCE_KEYS = ("tol", "tau_min", "newton_tol", "linear_tol")


@dataclass
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    version: str = __version__

    def validate(self) -> "ExperimentConfig":
        n = self.params.get("n")
        if n is not None and (int(n) < 8 or int(n) & (int(n) - 1)):
            raise ConfigError(f"grid size n must be a power of two >= 8, got {n}")
        for key in TOLERANCE_KEYS:
            v = self.params.get(key)
            if v is not None and not float(v) > 0:
                raise ConfigError(f"tolerance {key} must be positive, got {v}")
        return self

    def to_dict(self) -> dict:
        return {"command": self.command, "params": dict(self.params), "version": self.version}

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict) or "command" not in raw or not isinstance(raw.get("params", {}), dict):
            raise ConfigError("config needs a 'command' string and a 'params' object")
        return cls(raw["command"], raw.get("params", {}), raw.get("version", __version__)).validate()


def _report(config: ExperimentConfig, result: dict) -> dict:
    return {"tool": "nonlocal_lab", "version": __version__, "config": config.to_dict(), "result": result}


def _write(path, text: str):
    path = _resolve(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _emit(args, config: ExperimentConfig, result: dict, csv_table=None):
    text = dumps(_report(config, result))
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    if getattr(args, "csv", None) and csv_table is not None:
        _write(args.csv, _csv_text(*csv_table))


def _load(path) -> "Field":
    return read_field(_resolve(path))


# subcommands

def cmd_field_info(args, config):
    f = _load(args.field)
    l21, l2inf = fs.lorentz_norms(f)
    result = {
        "grid": {"n": f.grid.n, "length": f.grid.length},
        "shape": list(f.shape),
        "L2": fs.lp_norm(f, 2.0),
        "Linf": fs.lp_norm(f, np.inf),
        "H1/2": fs.sobolev_norm(f, 0.5),
        "L21": l21,
        "L2inf": l2inf,
    }
    _emit(args, config, result)
    return EXIT_OK


def cmd_lp_decompose(args, config):
    f = _load(args.field)
    dec = fs.lp_blocks(f)
    rows = [(j, fs.lp_norm(b, 2.0), fs.lp_norm(b, np.inf)) for j, b in dec.indexed()]
    recon = dec.reconstruct() - f
    result = {
        "top_scale": fs.top_scale(f.grid),
        "lowpass_index": dec.lowpass_floor - 1,
        "columns": ["j", "L2", "Linf"],
        "blocks": [list(r) for r in rows],
        "reconstruction_error": fs.lp_norm(recon, np.inf),
        "B0inf": fs.besov_b0_inf_inf_norm(f),
        "Hardy": fs.hardy_h1_norm(f),
        "BMO": fs.bmo_norm(f),
    }
    _emit(args, config, result, (["j", "L2", "Linf"], rows))
    return EXIT_OK


def cmd_op_norms(args, config):
    p = config.params
    ens = comp.EnsembleConfig(
        seed=p["seed"], n=p["n"], length=p["length"], band=p["band"], amplitude=p["amplitude"],
        count=p["count"], m=p["m"], sweep=tuple(p["sweep"]), sweep_n=p["sweep_n"],
    )
    report = comp.estimate_constant(p["op"], p["norms"], ens)
    sweep = report.frequency_sweep
    rows = [(r["k"], r["compensated"], r["naive"]) for r in sweep]
    _emit(args, config, report.to_dict(), (["k", "compensated", "naive"], rows))
    return EXIT_OK


def cmd_gauge_solve(args, config):
    p = config.params
    if p["omega"]:
        omega = _load(p["omega"])
        if p["m"] is not None and omega.shape != (p["m"], p["m"]):
            raise ConfigError(f"omega has shape {omega.shape}, expected m = {p['m']}")
        problem = gauge.GaugeProblem(omega)
    else:
        m = p["m"] or 3
        problem = gauge.random_gauge_problem(Grid1D(p["n"]), m, p["norm"], p["seed"])
    cfg = gauge.GaugeConfig(
        newton_tol=p["newton_tol"], linear_tol=p["linear_tol"], epsilon_budget=p["epsilon_budget"]
    )
    res = gauge.construct_gauge(problem, cfg)
    bounds = gauge.verify_gauge_bounds(res, problem)
    result = {
        "m": problem.m,
        "omega_l2": problem.smallness,
        "omega_mean_norm": problem.mean_norm,
        "converged": res.converged,
        "final_residual": res.final_residual,
        "mean_residual": res.mean_residual,
        "orthogonality": res.orthogonality,
        "constant_c": res.constant_c,
        "residual_history": res.residual_history,
        "homotopy_path": res.homotopy_path,
        "bounds": bounds,
        "message": res.message,
    }
    if args.out:
        write_field(_resolve(args.out), res.p)
    text = dumps(_report(config, result))
    if args.report:
        _write(args.report, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_flow(args, config):
    p = config.params
    grid = Grid1D(p["n"])
    m = 2 if p["target"] == "s1" else 3
    u0 = hh.perturbed_map(hh.winding_map(grid, p["degree"], m), p["amplitude"], p["seed"], p["band"])
    trace = hh.run_flow(u0, hh.FlowConfig(tau=p["tau"], tau_min=p["tau_min"], max_iter=p["max_iter"], tol=p["tol"]))
    if args.field:
        write_field(_resolve(args.field), trace.u)
    steps = [None] + list(trace.steps[: len(trace.energies) - 1])
    rows = [(i, e, r, s if s is not None else "") for i, (e, r, s) in
            enumerate(zip(trace.energies, trace.residuals, steps))]
    result = {
        "summary": trace.summary(),
        "energies": trace.energies,
        "residuals": trace.residuals,
        "steps": trace.steps,
        "energy_monotone": bool(np.all(np.diff(trace.energies) < 0)),
    }
    _emit(args, config, result, (["iteration", "energy", "el_residual", "step"], rows))
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_verify_el(args, config):
    u = _load(args.field)
    hh.check_on_sphere(u)
    el = hh.el_residual(u)
    variants = {}
    for coeff in hh.SYSTEM_FORMS:
        for w3 in hh.OMEGA3_FORMS:
            a = hh.assemble_system(u, w3, coeff)
            variants[f"{coeff}/{w3}"] = {
                "relative_residual": a.relative_residual(),
                "antisymmetry_defect": a.antisymmetry_defect(),
            }
    result = {
        "energy": hh.energy(u),
        "el_residual_L2": fs.lp_norm(el, 2.0),
        "wedge_residual_L2": fs.lp_norm(hh.wedge_residual(u), 2.0),
        "el_commutator_relative": hh.el_commutator_relative_residual(u),
        "structure_relative": {form: hh.structure_relative_residual(u, form) for form in hh.STRUCTURE_FORMS},
        "system": variants,
        "constants": hh.system_constants(u),
    }
    _emit(args, config, result)
    return EXIT_OK


def cmd_morrey(args, config):
    p = config.params
    f = _load(args.field)
    if p["apply_d4"]:
        f = quarter_laplacian(f)
    L = f.grid.length
    centers = np.arange(p["centers"]) * (L / p["centers"])
    radii = (L / 4) * 2.0 ** -np.arange(p["radii"])
    prof = diag.morrey_profile(f, p["beta"], centers, radii)
    result = {"morrey": prof.to_dict()}
    if p["x0"] is not None:
        result["annular"] = [diag.annular_l2weak_profile(f, p["x0"], r).to_dict() for r in radii]
        result["decay_fit"] = diag.decay_fit(f, p["x0"], radii)
    _emit(args, config, result, (["x0", "r", "value"], prof.table))
    return EXIT_OK


COMMANDS = {
    "field-info": cmd_field_info,
    "lp-decompose": cmd_lp_decompose,
    "op-norms": cmd_op_norms,
    "gauge-solve": cmd_gauge_solve,
    "flow": cmd_flow,
    "verify-el": cmd_verify_el,
    "morrey": cmd_morrey,
}

# flags that name output locations rather than experiment parameters
OUTPUT_KEYS = ("out", "csv", "report", "config", "command")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nonlocal-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="JSON ExperimentConfig supplying parameters")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("field-info", help="grid, shape and norms of a field file")
    p.add_argument("field")
    p.add_argument("--out")

    p = sub.add_parser("lp-decompose", help="Littlewood-Paley block norms")
    p.add_argument("--field", required=True)
    p.add_argument("--out")
    p.add_argument("--csv")

    p = sub.add_parser("op-norms", help="ensemble norm ratios of a compensation operator")
    p.add_argument("--op", choices=sorted(comp.OPERATORS), default="T")
    p.add_argument("--norms", default=None, help='"OUT:IN1,IN2", e.g. "H-1/2:H1/2,BMO"')
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--length", type=float, default=2 * np.pi)
    p.add_argument("--band", type=int, default=16)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--sweep", type=int, nargs="*", default=[4, 8, 16, 32, 64, 128])
    p.add_argument("--sweep-n", type=int, default=512)
    p.add_argument("--out")
    p.add_argument("--csv")

    p = sub.add_parser("gauge-solve", help="solve Asymm(P^T D4 P) = Omega for an SO(m) field P")
    p.add_argument("--omega", help="field file with the antisymmetric potential")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--n", type=int, default=256, help="grid size for a generated potential")
    p.add_argument("--norm", type=float, default=0.1, help="L2 norm of a generated potential")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--newton-tol", type=float, default=1e-12)
    p.add_argument("--linear-tol", type=float, default=1e-10)
    p.add_argument("--epsilon-budget", type=float, default=0.5)
    p.add_argument("--out", help="field file for the gauge P")
    p.add_argument("--report")

    p = sub.add_parser("flow", help="projected gradient flow of the half-Dirichlet energy")
    p.add_argument("--target", choices=["s1", "s2"], default="s1")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--amplitude", type=float, default=0.2)
    p.add_argument("--band", type=int, default=4)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--tau-min", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--field", help="field file for the final map")

    p = sub.add_parser("verify-el", help="Euler-Lagrange, structure and system residuals of a map")
    p.add_argument("--field", required=True)
    p.add_argument("--out")

    p = sub.add_parser("morrey", help="Morrey profile, annular weak-L2 norms and decay fit")
    p.add_argument("--field", required=True)
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--centers", type=int, default=16)
    p.add_argument("--radii", type=int, default=6, help="number of dyadic radii below L/4")
    p.add_argument("--x0", type=float, default=None, help="centre for annuli and the decay fit")
    p.add_argument("--apply-d4", action="store_true", help="profile D4 f instead of f")
    p.add_argument("--out")
    p.add_argument("--csv")
    return ap


def _parse(argv):
    ap = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        cfg = ExperimentConfig.from_json(_resolve(known.config).read_text())
        if cfg.command not in COMMANDS:
            raise ConfigError(f"config names unknown command {cfg.command!r}")
        given = [a for a in rest if a in COMMANDS]
        if given and given[0] != cfg.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {given[0]!r}")
        if not given:
            rest = [cfg.command] + rest
        sub = ap._subparsers._group_actions[0].choices[cfg.command]
        known_dests = {a.dest for a in sub._actions}
        unknown = set(cfg.params) - known_dests
        if unknown:
            raise ConfigError(f"unknown parameters for {cfg.command}: {sorted(unknown)}")
        sub.set_defaults(**cfg.params)
        argv = ["--config", known.config] + rest
    args = ap.parse_args(argv)
    if args.command is None:
        raise UsageError(f"a subcommand is required: {sorted(COMMANDS)}")
    params = {k: v for k, v in vars(args).items() if k not in OUTPUT_KEYS}
    return args, ExperimentConfig(args.command, params).validate()


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(dumps({"error": {"kind": kind, "message": message, "exit_code": code}}))
    return code


def cli_main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, config = _parse(argv)
        return COMMANDS[args.command](args, config)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "io", str(exc))
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except Exception as exc:  # pragma: no cover - last resort
        return _fail(EXIT_UNEXPECTED, "unexpected", f"{type(exc).__name__}: {exc}")


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
