"""Command-line front end: schema-checked JSON configs in, canonical CSV out.

Every output starts with ``#`` comment lines carrying the command, the seed and
a SHA-256 hash of the canonical config.  Rows are sorted before writing, so a
rerun with the same config and seed is byte-identical for any thread count.

Exit codes: 0 ok, 2 config error, 3 cost cap exceeded, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import itertools
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .extremizers import AXES, ExtremizerSpec, measure, predicted_exponents
from .lab import (CostCapExceeded, EstimateConfig, cor55_check, fit_slope, lemma51_check, lemma53_check,
                  random_cap_data, rescaling_invariance_check, sweep_and_fit, task_rng, transversal_centers)
from .lattice import Annulus, Ball, lattice_indices, make_torus
from .nls import (BlowupError, SolverOptions, phase_error_order, plane_wave, run, save_checkpoint,
                  smooth_initial)
from .weights import SpaceTimeRegion

EXIT_OK, EXIT_CONFIG, EXIT_COST, EXIT_NUMERIC = 0, 2, 3, 4

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_alphas = {"type": "array", "items": {"type": "number", "minimum": 0.5, "maximum": 1}}
_globals = {
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "threads": {"type": "integer", "minimum": 1},
    "cost_cap": _pos,
}


def _schema(props: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False,
            "properties": {**_globals, **props}, "required": list(required)}


SCHEMAS = {
    "lattice": _schema({
        "d": {"type": "integer", "minimum": 2}, "alphas": _alphas, "lam": _num,
        "region": {"type": "object", "additionalProperties": False, "required": ["kind"],
                   "properties": {"kind": {"enum": ["ball", "annulus"]}, "radius": _pos, "N": _pos,
                                  "c1": _num, "c2": _num, "center": {"type": "array", "items": _num}}},
    }, ["region"]),
    "sweep": _schema({
        "d": {"type": "integer", "minimum": 2}, "alphas": _alphas,
        "lam": {"type": "array", "items": _num, "minItems": 1},
        "N1": {"type": "array", "items": _num, "minItems": 1},
        "N2": {"type": "array", "items": _num, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1}, "optimize": {"type": "boolean"},
        "restarts": {"type": "integer", "minimum": 1}, "iterations": {"type": "integer", "minimum": 1},
        "max_atoms": {"type": "integer", "minimum": 1},
        "evaluator": {"enum": ["resonance", "grid"]}, "cutoff": {"enum": ["sharp", "bump"]},
    }, ["lam", "N1", "N2"]),
    "extremizer": _schema({
        "example": {"enum": ["ball-pair", "d2-line-pair", "d3-plate-pair"]},
        "d": {"type": "integer", "minimum": 2}, "alphas": _alphas,
        "lam": _num, "N1": _num, "N2": _num,
        "axis": {"enum": sorted(AXES)}, "values": {"type": "array", "items": _pos, "minItems": 4},
        "weight_kind": {"enum": ["decay", "indicator"]}, "tolerance": _pos,
    }, ["example", "axis", "values"]),
    "nls": _schema({
        "alpha": _num, "resolution": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "dt": _num, "T": _num, "s": {"type": "number", "minimum": 0}, "cadence": {"type": "integer", "minimum": 1},
        "nonlinear": {"type": "boolean"}, "focusing": {"type": "boolean"}, "dealias": {"type": "boolean"},
        "checkpoint_every": {"type": "integer", "minimum": 0}, "amplitude_guard": _pos,
        "initial": {"type": "object", "additionalProperties": False, "required": ["kind"],
                    "properties": {"kind": {"enum": ["plane-wave", "random"]},
                                   "k": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                                   "c": _num, "amplitude": _num, "band": {"type": "integer", "minimum": 0}}},
        "order_dts": {"type": "array", "items": _pos, "minItems": 2},
    }, ["initial"]),
    "decouple": _schema({
        "check": {"enum": ["lemma51", "lemma53", "cor55", "rescaling"]},
        "d": {"type": "integer", "minimum": 2}, "alphas": _alphas, "lam": _num,
        "v": _pos, "R": _pos, "delta": _pos, "K": _pos, "atoms": {"type": "integer", "minimum": 1},
        "seeds": {"type": "integer", "minimum": 1}, "weight_kind": {"enum": ["decay", "indicator"]},
        "N1": _pos, "N2": _pos,
    }, ["check"]),
}


class ConfigError(ValueError):
    pass


def config_hash(command: str, config: dict, seed: int) -> str:
    """SHA-256 of the canonical config; thread count is excluded on purpose."""
    body = {k: v for k, v in config.items() if k != "threads"}
    text = json.dumps({"command": command, "config": body, "seed": seed}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


class Output:
    """Header comments plus one sorted CSV table; written once."""

    def __init__(self, command: str, config: dict, seed: int):
        self.header = [f"# irrtorus {__version__} command={command} seed={seed}",
                       f"# config-sha256={config_hash(command, config, seed)}"]
        self.notes: list[str] = []
        self.columns: list[str] = []
        self.rows: list[list] = []
        self.sidecar: dict = {}

    def render(self) -> str:
        buf = io.StringIO()
        for line in self.header + [f"# {n}" for n in self.notes]:
            buf.write(line + "\n")
        buf.write(",".join(self.columns) + "\n")
        for r in sorted(self.rows, key=_sort_key):
            buf.write(",".join(fmt(v) for v in r) + "\n")
        return buf.getvalue()


def _sort_key(row):
    return tuple((0, float(v), "") if isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
                 else (1, 0.0, str(v)) for v in row)


# ------------------------------------------------------------------ commands

def cmd_lattice(cfg: dict, out: Output, args) -> int:
    d = cfg.get("d", 2)
    torus = make_torus(d, tuple(cfg.get("alphas", ())), cfg.get("lam", 1.0))
    reg = cfg["region"]
    center = tuple(reg["center"]) if "center" in reg else None
    if reg["kind"] == "ball":
        region = Ball(reg.get("radius", 1.0), center)
    else:
        region = Annulus(reg.get("N", 1.0), reg.get("c1", 0.5), reg.get("c2", 2.0), center)
    idx = lattice_indices(torus, region)
    k = torus.frequencies(idx) if len(idx) else np.zeros((0, d))
    out.columns = [f"m{i + 1}" for i in range(d)] + [f"k{i + 1}" for i in range(d)] + ["norm"]
    for m, kk in zip(idx, k):
        out.rows.append([int(v) for v in m] + [float(v) for v in kk] + [float(np.linalg.norm(kk))])
    out.notes.append(f"atoms={len(idx)}")
    return EXIT_OK


def cmd_sweep(cfg: dict, out: Output, args) -> int:
    d = cfg.get("d", 2)
    alphas = tuple(cfg.get("alphas", ()))
    configs = [EstimateConfig(d, alphas, float(lam), float(N1), float(N2),
                              evaluator=cfg.get("evaluator", "resonance"), cutoff=cfg.get("cutoff", "sharp"))
               for lam, N1, N2 in itertools.product(cfg["lam"], cfg["N1"], cfg["N2"]) if N1 >= N2]
    if not configs:
        raise ConfigError("no grid point satisfies N1 >= N2")
    res = sweep_and_fit(configs, cfg.get("trials", 1), seed=args.seed, optimize=cfg.get("optimize", False),
                        restarts=cfg.get("restarts", 2), iterations=cfg.get("iterations", 20),
                        max_atoms=cfg.get("max_atoms", 64), threads=args.threads,
                        cost_cap=cfg.get("cost_cap", 5e10), override_cost_cap=args.override_cost_cap)
    full = EstimateConfig(d, alphas).alphas
    out.columns = ["d"] + [f"alpha{i + 1}" for i in range(d - 1)] + [
        "lambda", "n1", "n2", "trial", "seed", "evaluator", "lhs", "rhs_base", "d_factor", "ratio"]
    trials = cfg.get("trials", 1)
    for j, rep in enumerate(res.reports):
        c = rep.config
        out.rows.append([d, *full, c.lam, c.N1, c.N2, j % trials, rep.seed, rep.evaluator,
                         rep.lhs, rep.rhs_base, rep.D_factor, rep.ratio])
    out.sidecar = {
        "points": [{"lambda": c.lam, "n1": c.N1, "n2": c.N2, "best_ratio": res.best[i],
                    "optimized_ratio": res.optimized.get(i)} for i, c in enumerate(configs)],
        "fits": {k: f.as_dict() for k, f in res.fits.items()},
    }
    return EXIT_OK


def cmd_extremizer(cfg: dict, out: Output, args) -> int:
    base = ExtremizerSpec(cfg["example"], cfg.get("d", 2), cfg.get("lam", 1.0), cfg.get("N1", 4.0),
                          cfg.get("N2", 1.0), tuple(cfg.get("alphas", ())), cfg.get("weight_kind", "decay"))
    axis, values = cfg["axis"], cfg["values"]
    tol = cfg.get("tolerance", 0.4)
    specs = [ExtremizerSpec(**{**base.__dict__, axis: float(v)}) for v in values]
    cap = cfg.get("cost_cap", 2e10)

    def one(spec):
        return measure(spec, cost_cap=cap, override_cost_cap=args.override_cost_cap)

    meas = _pmap(one, specs, args.threads)
    (lp, rp) = predicted_exponents(base.example, base.d)
    k = AXES[axis]
    lf = fit_slope(values, [m.lhs_sq for m in meas], axis, lp[k])
    rf = fit_slope(values, [m.rhs_sq for m in meas], axis, rp[k])
    out.columns = ["example", "d", "lambda", "n1", "n2", "atoms1", "atoms2", "lhs_sq", "rhs_sq", "lhs_over_monomial"]
    for m in meas:
        s = m.spec
        out.rows.append([s.example, s.d, s.lam, s.N1, s.N2, m.atoms[0], m.atoms[1], m.lhs_sq, m.rhs_sq,
                         m.lhs_over_monomial])
    verdict = "PASS" if lf.within(tol) else "FAIL"
    out.notes.append(f"lhs_sq slope vs {axis}: {lf.slope!r} predicted {lp[k]} tolerance {tol} verdict {verdict}")
    out.notes.append(f"rhs_sq slope vs {axis}: {rf.slope!r} predicted {rp[k]}")
    out.sidecar = {"lhs": lf.as_dict(), "rhs": rf.as_dict(), "verdict": verdict}
    print(f"{verdict} {base.example} lhs^2 slope vs {axis} = {lf.slope:.3f} (predicted {lp[k]})", file=sys.stderr)
    return EXIT_OK


def cmd_nls(cfg: dict, out: Output, args) -> int:
    alpha = cfg.get("alpha", 1.0)
    res = tuple(cfg.get("resolution", (32, 32)))
    dt, T = cfg.get("dt", 1e-3), cfg.get("T", 0.1)
    init = cfg["initial"]
    if init["kind"] == "plane-wave":
        state = plane_wave(alpha, init.get("k", (1, 0)), init.get("c", 1.0), res, dt)
    else:
        state = smooth_initial(alpha, res, init.get("amplitude", 1.0), init.get("band", 3), args.seed, dt)
    opts = SolverOptions(cfg.get("nonlinear", True), cfg.get("focusing", False), cfg.get("dealias", True),
                         cfg.get("s", 1.0), cfg.get("cadence", 1), cfg.get("amplitude_guard", 1e8))
    every = cfg.get("checkpoint_every", 0)
    stem = Path(args.out).with_suffix("") if args.out else None

    def on_step(j, s):
        if stem is not None and every and j % every == 0:
            save_checkpoint(f"{stem}.step{j:08d}.nls", s)

    report = run(state, T, opts, on_step)
    if stem is not None:
        save_checkpoint(f"{stem}.final.nls", report.state)
    out.columns = ["t", "mass", "energy", "hs", "s"]
    for dg in report.series:
        out.rows.append([dg.t, dg.mass, dg.energy, dg.hs, dg.s])
    out.notes.append(f"mass_drift={report.mass_drift!r} energy_drift={report.energy_drift!r}")
    out.sidecar = {"mass_drift": report.mass_drift, "energy_drift": report.energy_drift,
                   "aborted": report.aborted, "message": report.message}
    if init["kind"] == "plane-wave" and "order_dts" in cfg:
        slope, errs = phase_error_order(alpha, init.get("k", (1, 0)), init.get("c", 1.0), cfg["order_dts"], 1.0)
        verdict = "PASS" if abs(slope - 2.0) <= 0.2 else "FAIL"
        out.notes.append(f"plane-wave phase error order {slope!r} verdict {verdict}")
        out.sidecar["phase_order"] = {"dts": cfg["order_dts"], "errors": errs, "slope": slope, "verdict": verdict}
    if report.aborted:
        out.notes.append(f"aborted: {report.message}")
        return EXIT_NUMERIC
    return EXIT_OK


def _decouple_one(cfg: dict, seed: int, j: int) -> list:
    check = cfg["check"]
    d = cfg.get("d", 2)
    torus = make_torus(d, tuple(cfg.get("alphas", ())), cfg.get("lam", 16.0))
    rng = task_rng(seed, j)
    derived = int(np.random.SeedSequence(seed, spawn_key=(j,)).generate_state(1, np.uint64)[0])
    atoms = cfg.get("atoms", 24)
    v, R = cfg.get("v", 0.25), cfg.get("R", 32.0)
    kind = cfg.get("weight_kind", "decay")
    delta, c_fit = cfg.get("delta", v * v), 0.0
    if check == "rescaling":
        N1, N2 = cfg.get("N1", 4.0), cfg.get("N2", 1.0)
        r = N2 / N1
        h1 = random_cap_data(torus, np.zeros(d), r, atoms, rng)
        h2 = random_cap_data(torus, np.zeros(d), r, atoms, rng)
        region = SpaceTimeRegion.box((0.0, N1 ** 2), (0.0,) * d, (torus.lam * 2.0,) * d)
        rep = rescaling_invariance_check(h1, h2, r, region, kind)
        return [j, derived, check, r, 0.0, 0.0, rep.caps[0], rep.caps[1], rep.before, rep.after,
                rep.quotient, 1.0, rep.quotient, 0.0]
    K = cfg.get("K") if check == "lemma51" else None
    c1, c2 = transversal_centers(d, K)
    f1 = random_cap_data(torus, c1, v, atoms, rng)
    f2 = random_cap_data(torus, c2, v, atoms, rng)
    if check == "lemma51":
        rep = lemma51_check(f1, f2, v, R, K, kind)
    elif check == "lemma53":
        rep = lemma53_check(f1, f2, v, R, kind)
    else:
        rep = cor55_check(f1, f2, v, delta, R, kind)
        c_fit = rep.extra["C_fit"]
    return [j, derived, check, v, R, delta if check == "cor55" else (v * v if check == "lemma53" else v),
            rep.pieces[0], rep.pieces[1], rep.lhs, rep.rhs, rep.ratio, rep.bound, rep.normalized, c_fit]


def cmd_decouple(cfg: dict, out: Output, args) -> int:
    seeds = cfg.get("seeds", 1)
    rows = _pmap(lambda j: _decouple_one(cfg, args.seed, j), range(seeds), args.threads)
    out.columns = ["trial", "seed", "check", "v", "R", "delta", "pieces1", "pieces2", "lhs", "rhs",
                   "ratio", "bound", "normalized", "c_fit"]
    out.rows.extend(rows)
    out.sidecar = {"max_ratio": max(r[10] for r in rows), "max_normalized": max(r[12] for r in rows),
                   "max_c_fit": max(r[13] for r in rows)}
    return EXIT_OK


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


COMMANDS = {"lattice": cmd_lattice, "sweep": cmd_sweep, "extremizer": cmd_extremizer,
            "nls": cmd_nls, "decouple": cmd_decouple}


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irrtorus", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} command")
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (overrides config)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (overrides config)")
        sp.add_argument("--out", default=None, help="CSV output path (default stdout)")
        sp.add_argument("--override-cost-cap", action="store_true", help="run even above the cost cap")
    sc = sub.add_parser("schema", help="print the JSON schema of a command config")
    sc.add_argument("name", choices=sorted(SCHEMAS))
    return p


def sidecar_path(out) -> Path:
    """JSON summary written next to the CSV: ``run.csv`` -> ``run.summary.json``."""
    return Path(out).with_suffix(".summary.json")


def load_config(path: str, command: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "schema":
        print(json.dumps(SCHEMAS[args.name], indent=2, sort_keys=True))
        return EXIT_OK
    try:
        cfg = load_config(args.config, args.command)
        if args.out and Path(args.config).resolve() in (Path(args.out).resolve(),
                                                        sidecar_path(args.out).resolve()):
            raise ConfigError("output would overwrite the config file")
        args.seed = cfg.get("seed", 0) if args.seed is None else args.seed
        args.threads = cfg.get("threads", 1) if args.threads is None else args.threads
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("threads must be positive")
        out = Output(args.command, {**cfg, "seed": args.seed}, args.seed)
        code = COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CostCapExceeded as exc:
        print(f"error: {exc} (use --override-cost-cap)", file=sys.stderr)
        return EXIT_COST
    except BlowupError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = out.render()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
        if out.sidecar:
            side = sidecar_path(args.out)
            side.write_text(json.dumps(_jsonable(out.sidecar), indent=2, sort_keys=True) + "\n",
                            encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


if __name__ == "__main__":
    sys.exit(main())
