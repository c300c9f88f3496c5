"""Command-line runner: ``toruslab <command> [options]`` or ``toruslab --config cfg.json``."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from . import acceptance
from .algebra import TorusPoint, parse_rational
from .energy import alpha_energy, checkerboard_decompose, diagonal_mass, fit_contraction, margulis_inequality_check, max_ball_mass
from .errors import ConfigInvalid, TorusLabError
from .fp import (
    FpWalkSpec,
    build_group_table,
    fp_evolve,
    fp_orbit_census,
    gap_dichotomy_verdict,
    reduce_spec_mod_p,
    regular_rep_gap,
)
from .io import COMMANDS, csv_text, dumps, rational_str, spec_from_json, spec_to_json, validate_config, write_csv, write_json
from .orbits import LinearFormSystem, distance_to_PQ_upper, orbit_closure, orbit_height, solve_integer_linear_approx
from .spectral import decay_scan, trapping_lowerbound_check, weyl_scan
from .specs import NAMED_SPECS, named
from .walk import FiniteMeasure, WalkSpec, estimate_lyapunov, monte_carlo_measure, simulate_points

__all__ = ["build_parser", "main", "run"]

DEFAULT_SPEC = "std-sl2"

# option name -> (type, help); shared by every subcommand that lists it
PARAMS: dict[str, tuple[Callable, str]] = {
    "x": (str, 'start point, e.g. "1/3,2/3" or "0.41,0.73"'),
    "y": (str, "target point"),
    "n": (int, "number of steps"),
    "n_list": (str, 'step counts "0,5,10" or range "0:60:5"'),
    "N": (int, "Monte Carlo sample count"),
    "a": (str, 'frequency, e.g. "3,0"'),
    "q": (int, "orbit height"),
    "Q": (int, "height bound"),
    "p": (int, "prime modulus"),
    "k": (int, "convolution power"),
    "rho": (float, "ball radius"),
    "r": (float, "separation or precondition radius"),
    "alpha": (float, "energy exponent"),
    "lambda": (float, "rate constant"),
    "m": (int, "walk length for the contraction fit"),
    "A_max": (int, "frequency box half-width"),
    "eps": (float, "trapping threshold"),
    "C2": (float, "additive constant"),
    "cap": (int, "enumeration cap"),
    "n_pairs": (int, "number of point pairs"),
    "n_walk": (int, "words per pair"),
    "forms": (str, 'integer forms as JSON, e.g. "[[1,2],[3,-1]]"'),
    "point": (str, 'point in R^D, e.g. "1/2,1/3"'),
    "points": (str, 'atoms separated by ";", e.g. "0,0;1/3,1/3"'),
    "only": (str, 'criteria to run, e.g. "1,2,9"'),
}

COMMAND_PARAMS = {
    "orbit": ["x", "cap"],
    "height": ["x"],
    "pq-distance": ["x", "Q"],
    "simulate": ["x", "n", "N"],
    "decay-scan": ["x", "a", "n", "n_list", "N"],
    "weyl": ["x", "n", "N", "A_max"],
    "trap-check": ["x", "q", "a", "n_list", "N"],
    "lyapunov": ["n", "N"],
    "energy": ["points", "alpha", "rho"],
    "ch-fit": ["alpha", "m", "n_pairs", "n_walk"],
    "margulis-check": ["points", "alpha", "lambda", "n", "rho", "C2", "N"],
    "decompose": ["points", "r", "alpha"],
    "fp-census": ["p"],
    "fp-evolve": ["p", "x", "n"],
    "fp-gap": ["p", "k"],
    "fp-dichotomy": ["p", "n", "eps", "x"],
    "solzlin": ["forms", "point", "r"],
    "verify-all": ["only"],
}
assert set(COMMAND_PARAMS) == set(COMMANDS)


class Context:
    """Resolved inputs of one run."""

    def __init__(self, params: dict, spec_ref, seed: int, mode: str | None):
        self.params = params
        self.spec_ref = spec_ref
        self.seed = seed
        self.mode = mode
        self._spec = None

    def get(self, key, default=None):
        v = self.params.get(key)
        return default if v is None else v

    def spec(self):
        if self._spec is None:
            ref = self.spec_ref or DEFAULT_SPEC
            if isinstance(ref, dict):
                self._spec = (spec_from_json(ref), None)
            elif ref in NAMED_SPECS:
                self._spec = named(ref)
            else:
                path = Path(ref)
                if not path.is_file():
                    raise ConfigInvalid(f"spec {ref!r} is neither a built-in name nor a JSON file")
                self._spec = (spec_from_json(json.loads(path.read_text(encoding="utf-8"))), None)
        return self._spec

    def walk(self) -> WalkSpec:
        spec, _ = self.spec()
        if not isinstance(spec, WalkSpec):
            raise ConfigInvalid("this command needs a torus walk, not an F_p walk")
        return spec

    def point(self, key: str = "x") -> TorusPoint:
        text = self.get(key)
        if text is None:
            _, default = self.spec()
            if isinstance(default, TorusPoint):
                pt = default
            else:
                raise ConfigInvalid(f"parameter {key!r} is required")
        else:
            pt = TorusPoint.parse(text, exact=None if self.mode is None else self.mode == "exact")
        if self.mode == "float":
            pt = pt.to_approx()
        return pt

    def measure(self) -> FiniteMeasure:
        text = self.get("points")
        if text is None:
            return FiniteMeasure.dirac(self.point())
        pts = text if isinstance(text, list) else [s for s in text.split(";") if s.strip()]
        atoms = [TorusPoint.parse(s, exact=None if self.mode is None else self.mode == "exact") for s in pts]
        return FiniteMeasure.uniform(atoms)

    def fp_spec(self) -> FpWalkSpec:
        spec, _ = self.spec()
        if isinstance(spec, FpWalkSpec):
            return spec
        if isinstance(self.spec_ref, dict) and "p" in self.spec_ref:
            return reduce_spec_mod_p(spec, int(self.spec_ref["p"]))
        return reduce_spec_mod_p(spec, int(self.get("p", 5)))


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _n_list(ctx: Context, default: list[int]) -> list[int]:
    raw = ctx.get("n_list")
    if raw is None:
        return [ctx.get("n")] if ctx.get("n") is not None else default
    if isinstance(raw, list):
        return [int(v) for v in raw]
    if ":" in raw:
        parts = [int(v) for v in raw.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(start, stop + 1, step))
    return list(_ints(raw))


def _fp_point(ctx: Context, p: int, default=(1, 0)) -> tuple:
    raw = ctx.get("x")
    if raw is None:
        _, d = ctx.spec()
        return tuple(d) if isinstance(d, tuple) else default
    return tuple(int(parse_rational(v)) % p for v in str(raw).split(","))


# ------------------------------------------------------------------ commands


def cmd_orbit(ctx):
    rep = orbit_closure(ctx.walk(), ctx.point(), cap=ctx.get("cap", 100_000))
    return rep.to_dict(), {}


def cmd_height(ctx):
    return {"q": orbit_height(ctx.walk(), ctx.point())}, {}


def cmd_pq_distance(ctx):
    bound, witness = distance_to_PQ_upper(ctx.walk(), None, ctx.point(), ctx.get("Q", 8))
    return {"bound": bound, "witness": None if witness is None else witness.to_dict()}, {}


def cmd_simulate(ctx):
    x = ctx.point()
    n, N = ctx.get("n", 10), ctx.get("N", 1000)
    pts = simulate_points(ctx.walk(), x.as_array(), n, N, ctx.seed)
    rows = [(i, *map(float, row)) for i, row in enumerate(pts)]
    header = ["chain"] + [f"x{j + 1}" for j in range(pts.shape[1])]
    return {"n": n, "N": N, "mean": pts.mean(axis=0).tolist()}, {"samples.csv": (header, rows)}


def cmd_decay_scan(ctx):
    rep = decay_scan(ctx.walk(), ctx.point(), _ints(ctx.get("a", "1,0")), _n_list(ctx, list(range(0, 61, 5))),
                     ctx.get("N", 10_000), ctx.seed)
    out = {"series": rep.series, "fitted_rate": rep.fitted_rate, "metadata": rep.metadata}
    return out, {"decay.csv": (["n", "value", "stderr"], rep.series)}


def cmd_weyl(ctx):
    x = ctx.point()
    sample = monte_carlo_measure(ctx.walk(), x, ctx.get("n", 60), ctx.get("N", 100_000), ctx.seed)
    tab = weyl_scan(sample, ctx.get("A_max", 3))
    rows = [(" ".join(map(str, a)), v) for a, v in sorted(tab.table.items())]
    return {"max_modulus": tab.max_modulus, "argmax": list(tab.argmax)}, {"weyl.csv": (["a", "modulus"], rows)}


def cmd_trap_check(ctx):
    tr = trapping_lowerbound_check(ctx.walk(), ctx.point(), ctx.get("q", 3), _ints(ctx.get("a", "3,0")),
                                   _n_list(ctx, list(range(0, 101, 5))), ctx.get("N", 10_000), ctx.seed)
    out = {"status": tr.status, "c_hat": tr.c_hat, "crossover_n": tr.crossover_n, "lower_bound_holds": tr.lower_bound_holds}
    return out, {"decay.csv": (["n", "value", "stderr"], tr.report.series)}


def cmd_lyapunov(ctx):
    est = estimate_lyapunov(ctx.walk(), ctx.get("n", 10_000), ctx.get("N", 32), ctx.seed)
    return {"lambda1_hat": est.lambda1_hat, "stderr": est.standard_error, "n": est.n_steps, "N": est.n_chains}, {}


def cmd_energy(ctx):
    nu = ctx.measure()
    alpha, rho = ctx.get("alpha", 0.5), ctx.get("rho", 0.1)
    ball = max_ball_mass(nu, rho)
    out = {
        "energy": alpha_energy(nu, alpha),
        "diagonal_mass": diagonal_mass(nu),
        "max_ball_mass": ball.mass,
        "ball_upper_bound": ball.upper,
    }
    return out, {}


def cmd_ch_fit(ctx):
    fit = fit_contraction(ctx.walk(), ctx.get("alpha", 0.05), ctx.get("m", 20), ctx.get("n_pairs", 1000),
                          ctx.get("n_walk", 1000), ctx.seed)
    rows = [(i, float(d), float(e)) for i, (d, e) in enumerate(zip(fit.distances, fit.estimates))]
    out = {"a_hat": fit.a_hat, "C_hat": fit.C_hat, "contracting": fit.contracting, "linear_pairs": fit.linear_pairs}
    return out, {"ch_fit.csv": (["pair_id", "distance", "estimate"], rows)}


def cmd_margulis_check(ctx):
    rec = margulis_inequality_check(ctx.walk(), ctx.measure(), ctx.get("alpha", 0.1), ctx.get("lambda", 0.1),
                                    ctx.get("n", 5), ctx.get("rho", 0.1), ctx.get("C2", 0.0), ctx.get("N", 20_000), ctx.seed)
    return rec.to_dict(), {}


def cmd_decompose(ctx):
    nu = ctx.measure()
    prime, cert = checkerboard_decompose(nu, ctx.get("r", 0.1), lambda p: np.ones(len(p)), ctx.seed, ctx.get("alpha"))
    out = {"certificate": {**cert.__dict__, "holds": cert.holds}, "atoms": [[str(p), w] for p, w in zip(prime.points, prime.weights)]}
    return out, {}


def cmd_fp_census(ctx):
    census = fp_orbit_census(ctx.fp_spec())
    out = {"sizes": list(census.sizes), "zero_singleton": census.zero_singleton, "large_orbits_ok": census.large_orbits_ok}
    return out, {"census.csv": (["orbit_id", "size"], census.rows())}


def cmd_fp_evolve(ctx):
    spec = ctx.fp_spec()
    hist = fp_evolve(spec, _fp_point(ctx, spec.p), ctx.get("n", 50), exact=True, history=True)
    rows = []
    for n, h in enumerate(hist):
        v = h.as_float()
        rows.append((n, float(v.max()), float(np.sqrt(np.sum(v * v)))))
    return {"final_linf": rows[-1][1], "final_l2": rows[-1][2]}, {"fp_evolve.csv": (["n", "linf", "l2"], rows)}


def cmd_fp_gap(ctx):
    spec = ctx.fp_spec()
    table = build_group_table(spec.matrices, spec.p)
    k = ctx.get("k", 1)
    g = regular_rep_gap(table, spec.weights, k, seed=ctx.seed)
    return {"order": table.order, "k": k, "norm": g, "gap": g < 1}, {}


def cmd_fp_dichotomy(ctx):
    spec = ctx.fp_spec()
    x0 = _fp_point(ctx, spec.p) if ctx.get("x") is not None else None
    v = gap_dichotomy_verdict(spec, ctx.get("n", 30), ctx.get("eps", 0.1), x0)
    return v.to_dict(), {}


def cmd_solzlin(ctx):
    forms = ctx.get("forms")
    if forms is None or ctx.get("point") is None:
        raise ConfigInvalid("solzlin needs forms and point")
    forms = json.loads(forms) if isinstance(forms, str) else forms
    point = [parse_rational(v.strip()) if "." not in v else Fraction(v.strip()) for v in ctx.get("point").split(",")]
    r = ctx.get("r", 0.01)
    dec = solve_integer_linear_approx(LinearFormSystem.of(forms), point, Fraction(str(r)))
    out = {
        "q": dec.q,
        "kernel_part": [rational_str(v) for v in dec.kernel_part],
        "lattice_part": [rational_str(v) for v in dec.lattice_part],
        "remainder": [rational_str(v) for v in dec.remainder],
        "q_bound_holds": dec.q_bound_holds,
        "remainder_bound_holds": dec.remainder_bound_holds,
    }
    return out, {}


def cmd_verify_all(ctx):
    only = ctx.get("only")
    only = list(_ints(only)) if only is not None else None
    results = acceptance.run_all(only, echo=lambda line: print(line, file=sys.stderr))
    out = {"criteria": [r.to_dict() for r in results], "all_passed": all(r.passed for r in results)}
    rows = [(r.number, r.name, "pass" if r.passed else "fail", r.runtime) for r in results]
    return out, {"acceptance.csv": (["criterion", "name", "status", "runtime"], rows)}


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


# ------------------------------------------------------------------ driver


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _verdict(out: dict):
    for key in ("all_passed", "holds", "lower_bound_holds", "verdict"):
        if key in out:
            return out[key]
    return None


def run(config: dict, out_dir: str | None = None, echo: bool = True) -> dict:
    """Validate a config, dispatch it, write outputs and return the run record."""
    cfg = validate_config(config)
    seed = int(cfg.get("seed", 0))
    ctx = Context(dict(cfg.get("parameters", {})), cfg.get("spec"), seed, cfg.get("mode"))
    t0 = time.perf_counter()
    out, tables = HANDLERS[cfg["command"]](ctx)
    elapsed = time.perf_counter() - t0
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    record = {
        "command": cfg["command"],
        "config_hash": hashlib.sha256(canon.encode("utf-8")).hexdigest(),
        "version": _version(),
        "seed": seed,
        "elapsed_seconds": elapsed,
        "result": out,
        "verdict": _verdict(out),
        "outputs": [],
    }
    if ctx._spec is not None and isinstance(ctx._spec[0], WalkSpec):
        record["spec"] = spec_to_json(ctx._spec[0])
    target = out_dir or cfg.get("out")
    if target:
        base = Path(target)
        for name, (header, rows) in tables.items():
            record["outputs"].append(str(write_csv(base / name, header, rows)))
        record["outputs"].append(str(base / "result.json"))
        write_json(base / "result.json", record)
    if echo:
        sys.stdout.write(dumps(record))
        if not target:
            for name, (header, rows) in tables.items():
                if cfg["command"] in ("decay-scan", "trap-check", "fp-census"):
                    sys.stdout.write(f"# {name}\n" + csv_text(header, rows))
    return record


def _common_flags(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=default)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="RNG seed (default 0)")
    common.add_argument("--out", help="directory for CSV and JSON outputs")
    common.add_argument("--spec", help=f"built-in name ({', '.join(NAMED_SPECS)}) or JSON file")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact", help="exact rational arithmetic")
    mode.add_argument("--float", dest="mode", action="store_const", const="float", help="floating point arithmetic")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toruslab", parents=[_common_flags(None)], description="Affine random walks on tori.")
    sub = parser.add_subparsers(dest="command")
    # suppressed defaults so flags given before the subcommand survive
    common = _common_flags(argparse.SUPPRESS)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=f"run {name}")
        for key in COMMAND_PARAMS[name]:
            typ, hlp = PARAMS[key]
            sp.add_argument(f"--{key.replace('_', '-')}", dest=f"p_{key}", type=typ, help=hlp)
    return parser


def _merge(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigInvalid("config must be a JSON object")
    if args.command:
        if "command" in cfg and cfg["command"] != args.command:
            raise ConfigInvalid(f"config command {cfg['command']!r} conflicts with {args.command!r}")
        cfg["command"] = args.command
    if "command" not in cfg:
        raise ConfigInvalid("no command given")
    params = dict(cfg.get("parameters", {}))
    for key, val in vars(args).items():
        if key.startswith("p_") and val is not None:
            name = key[2:]
            if name == "forms":
                val = json.loads(val)
            elif name == "points":
                val = [s.strip() for s in val.split(";") if s.strip()]
            elif name == "only":
                val = [int(v) for v in val.split(",")]
            elif name == "n_list" and ":" not in val:
                val = [int(v) for v in val.split(",")]
            params[name] = val
    if params:
        cfg["parameters"] = params
    for key in ("seed", "spec", "mode", "out"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    return cfg


def main(argv: list[str] | None = None) -> int:
    """Entry point; exit code 0 on success, 1 on a failed check, 2 on bad input or errors."""
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = os.environ.get("TORUSLAB_THREADS")
    try:
        limit = int(threads) if threads else None
    except ValueError:
        print(f"error: TORUSLAB_THREADS={threads!r} is not an integer", file=sys.stderr)
        return 2
    try:
        cfg = _merge(args)
        with threadpool_limits(limits=limit):
            record = run(cfg)
    except ConfigInvalid as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    except (TorusLabError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    verdict = record["verdict"]
    return 1 if verdict is False or verdict == "VIOLATION_CANDIDATE" else 0


if __name__ == "__main__":
    sys.exit(main())
