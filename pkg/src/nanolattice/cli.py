"""nanolattice command line: compile, simulate, verify, sweep.

Exit codes: 0 ok, 1 usage or parse error, 2 infeasible compile, 3 resource
cap, 4 tolerance failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .compiler import (InfeasibleError, SpecError, compile_drive_plan, emit_plan, parse_lattice_spec,
                       parse_plan, plan_table, validate_plan)
from .dynamics import DynamicsError, IntegrationError, integrate, pure_state
from .models import (Dissipator, EffectiveParams, LatticeGraph, MasterEquationModel, ModelError,
                     build_bose_hubbard, build_driven_qubit_model, build_effective_hop,
                     build_hop_full, build_intermediate_qubit_model, build_kerr_effective)
from .operators import CompositeSpace, ModeKind, ModeSpec, OperatorError, mode_operators
from .terms import TermSum, monomial
from .verify import (SCENARIOS, ResourceError, VerificationError, build_plan_model,
                     default_hop_params, default_kerr_params, load_tolerances, scaling_study)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_RESOURCE, EXIT_TOLERANCE = 0, 1, 2, 3, 4
SIMULATE_MAX_DIM = 1024
OUT_ENV = "NANOLATTICE_OUT"


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _read(path: str | None, what: str) -> str:
    if not path:
        raise UsageError(f"missing {what} path")
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None


def parse_dims(text: str | None) -> dict[str, int]:
    """'a1=4,b=2' -> {'a1': 4, 'b': 2}."""
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--dims entry {item!r} is not label=int")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            raise UsageError(f"--dims entry {item!r}: {val!r} is not an integer") from None
        if out[key.strip()] < 2:
            raise UsageError(f"--dims entry {item!r}: truncation must be >= 2")
    return out


def parse_grid(text: str) -> list[float]:
    try:
        pts = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"malformed grid {text!r}; expected comma-separated numbers") from None
    if len(pts) < 3:
        raise UsageError("a sweep grid needs at least 3 points")
    if any(not math.isfinite(x) or x <= 0 for x in pts):
        raise UsageError("grid points must be positive and finite")
    return pts


PARAM_FIELDS = {f.name for f in fields(EffectiveParams)}


def parse_params(items: list[str] | None, base: EffectiveParams | None = None) -> EffectiveParams | None:
    """Apply 'key=value' overrides; 'epsilon' sets delta = f / epsilon."""
    if not items:
        return base
    kw = dict(base.__dict__) if base is not None else {}
    eps = None
    for item in items:
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or (key not in PARAM_FIELDS and key != "epsilon"):
            raise UsageError(f"--param {item!r}: expected one of {sorted(PARAM_FIELDS | {'epsilon'})}"
                             "=value")
        try:
            num = float(val)
        except ValueError:
            raise UsageError(f"--param {item!r}: {val!r} is not a number") from None
        if key == "epsilon":
            eps = num
        else:
            kw[key] = num
    if eps is not None:
        if eps == 0:
            raise UsageError("--param epsilon must be non-zero")
        kw["delta"] = kw.get("f", 1.0) / eps
    return EffectiveParams(**kw)


# compile ---------------------------------------------------------------------------------------

def cmd_compile(args) -> int:
    text = _read(args.spec, "spec")
    out = _out_dir(args)
    spec = parse_lattice_spec(text)
    try:
        plan = compile_drive_plan(spec, args.guard_band)
    except InfeasibleError as exc:
        report = {"feasible": False, "error": str(exc)}
        if exc.report is not None:
            w = exc.report.worst()
            report["guard_band"] = {"threshold": exc.report.threshold,
                                    "minimum": exc.report.minimum,
                                    "worst": None if w is None else w.__dict__}
        (out / "compile_report.json").write_text(json.dumps(report, indent=2) + "\n")
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    (out / "plan.json").write_text(emit_plan(plan))
    val = validate_plan(plan, spec)
    diag = {"feasible": True, "guard_band_passed": val.guard_band.passed,
            "guard_band_minimum": val.guard_band.minimum, "rates": list(val.rates),
            "resonance_residuals": list(val.resonance_residuals)}
    (out / "compile_report.json").write_text(json.dumps(diag, indent=2, default=str) + "\n")
    print(plan_table(plan))
    for r in val.rates:
        if not r["ok"]:
            print(f"warning: {r['kind']} {r['element']} outside its regime "
                  f"(adiabaticity {r['adiabaticity']:.3g}, quality {r['quality']:.3g})",
                  file=sys.stderr)
    print(f"plan written to {out / 'plan.json'}")
    return EXIT_OK


# simulate --------------------------------------------------------------------------------------

def _oscillator(params: dict, dims: dict) -> MasterEquationModel:
    label = params.get("label", "a")
    w = float(params.get("frequency", 1.0))
    kappa = float(params.get("kappa", 0.0))
    dim = int(dims.get(label, params.get("dim", 10)))
    space = CompositeSpace((ModeSpec(label, ModeKind.MECHANICAL, w if w > 0 else 1.0, kappa, dim),))
    h = TermSum(space)
    if w:
        h = h.add_monomial(w, monomial(f"{label}+", label))
    ops = mode_operators(space)
    # kappa is the amplitude rate, as everywhere else: <n> decays at 2 kappa
    diss = (Dissipator(2 * kappa, ops[label], f"damping:{label}"),) if kappa > 0 else ()
    return MasterEquationModel(space, h, diss, {"kind": "oscillator"})


def _effective(params: dict) -> EffectiveParams:
    bad = set(params) - PARAM_FIELDS
    if bad:
        raise UsageError(f"model.params: unknown fields {sorted(bad)}")
    return EffectiveParams(**params)


def build_config_model(cfg: dict, dims: dict, args) -> MasterEquationModel:
    m = cfg.get("model")
    if not isinstance(m, dict) or "builder" not in m:
        raise UsageError("config needs a 'model' object with a 'builder' field")
    builder, params = m["builder"], m.get("params", {})
    d = {**m.get("dims", {}), **dims}
    if builder == "oscillator":
        return _oscillator(params, d)
    if builder == "hop_full":
        return build_hop_full(_effective(params), dims=d or None)
    if builder == "effective_hop":
        return build_effective_hop(_effective(params), dims=d or 3)
    if builder == "kerr_effective":
        return build_kerr_effective(_effective(params), dim=d.get("a", 4))
    if builder == "driven_qubit":
        return build_driven_qubit_model(_effective(params), dims=d or None)
    if builder == "intermediate_qubit":
        return build_intermediate_qubit_model(_effective(params), dims=d or None)
    if builder == "bose_hubbard":
        graph = LatticeGraph(tuple((n[0], n[1]) for n in params.get("nodes", [])),
                             tuple(((e[0][0], e[0][1]), e[1]) for e in params.get("edges", [])))
        return build_bose_hubbard(graph, d or 3)
    if builder == "plan":
        spec_path = args.spec or m.get("spec")
        spec = parse_lattice_spec(_read(spec_path, "spec"))
        plan_path = args.plan or m.get("plan")
        plan = parse_plan(_read(plan_path, "plan")) if plan_path else compile_drive_plan(spec)
        return build_plan_model(plan, spec, d or None)
    raise UsageError(f"unknown model builder {builder!r}; choose from oscillator, hop_full, "
                     "effective_hop, kerr_effective, driven_qubit, intermediate_qubit, "
                     "bose_hubbard, plan")


def _initial_state(cfg: dict, space: CompositeSpace) -> np.ndarray:
    init = cfg.get("initial")
    if not isinstance(init, dict) or not init:
        raise UsageError("config needs an 'initial' state: {'fock': {...}}, "
                         "{'superposition': [...]} or {'coherent': {...}}")
    psi = np.zeros(space.total_dim, complex)
    if "fock" in init:
        psi[space.basis_index(init["fock"])] = 1.0
    elif "superposition" in init:
        for part in init["superposition"]:
            amp = part.get("amplitude", 1.0)
            amp = complex(*amp) if isinstance(amp, list) else complex(amp)
            psi[space.basis_index(part["fock"])] += amp
    elif "coherent" in init:
        psi = np.ones(1, complex)
        for mode in space.modes:
            a = init["coherent"].get(mode.label, 0.0)
            a = complex(*a) if isinstance(a, list) else complex(a)
            n = np.arange(mode.truncation_dim)
            fact = np.array([math.factorial(int(k)) for k in n], float)
            v = np.exp(-abs(a) ** 2 / 2) * a ** n / np.sqrt(fact)
            psi = np.kron(psi, v)
    else:
        raise UsageError(f"unknown initial state kind {sorted(init)}")
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise UsageError("initial state is zero")
    return psi / norm


def _time_grid(cfg: dict) -> np.ndarray:
    t = cfg.get("times")
    if not isinstance(t, dict) or "t_final" not in t:
        raise UsageError("config needs 'times': {'t_final': ..., 'n_points': ...}")
    tf = float(t["t_final"])
    if tf < 0:
        raise UsageError("times.t_final must be >= 0")
    if tf == 0:
        return np.zeros(1)
    return np.linspace(float(t.get("t_start", 0.0)), tf, int(t.get("n_points", 101)))


def cmd_simulate(args) -> int:
    if not args.config:
        raise UsageError("simulate needs --config")
    try:
        cfg = json.loads(_read(args.config, "config"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    model = build_config_model(cfg, parse_dims(args.dims), args)
    n = model.space.total_dim
    if n > SIMULATE_MAX_DIM:
        print(f"resource cap: model dimension {n} exceeds {SIMULATE_MAX_DIM}", file=sys.stderr)
        return EXIT_RESOURCE
    psi = _initial_state(cfg, model.space)
    grid = _time_grid(cfg)
    stepper = args.stepper or cfg.get("stepper", "rk4")
    out = _out_dir(args)
    res = integrate(model, pure_state(psi), grid, stepper=stepper,
                    max_step=cfg.get("max_step"))
    stem = cfg.get("name", Path(args.config).stem)
    (out / f"{stem}.csv").write_text(res.to_csv())
    (out / f"{stem}.json").write_text(res.to_json())
    d = res.diagnostics
    print(f"{stem}: {len(grid)} points, dim {n}, stepper {d['stepper']}, "
          f"trace drift {d['trace_drift']:.3g}, min eigenvalue {d['min_eigenvalue']:.3g}")
    for lbl in d["truncation_flags"]:
        print(f"warning: top Fock population of {lbl} reached "
              f"{d['top_fock_population'][lbl]:.3g}", file=sys.stderr)
    return EXIT_OK


# verify ----------------------------------------------------------------------------------------

def _scenario_kwargs(name: str, args) -> dict:
    kw: dict = {"tolerances": load_tolerances(args.tol_file)}
    dims = parse_dims(args.dims)
    if dims:
        kw["dims"] = dims
    if name == "composite":
        if args.spec:
            kw["spec_text"] = _read(args.spec, "spec")
        if args.param:
            raise UsageError("--param does not apply to the composite scenario; edit the spec")
        return kw
    if name == "perturbative":
        if args.param:
            raise UsageError("--param does not apply to the perturbative scenario")
        return kw
    if args.param:
        base = {"hop": default_hop_params(), "hop_closed": default_hop_params(True),
                "kerr": default_kerr_params()}[name]
        kw["p"] = parse_params(args.param, base)
    return kw


def cmd_verify(args) -> int:
    names = list(SCENARIOS) if args.scenario == "all" else [args.scenario]
    for n in names:
        if n not in SCENARIOS:
            raise UsageError(f"unknown scenario {n!r}; available: all, {', '.join(SCENARIOS)}")
    out = _out_dir(args)
    results = []
    worst = EXIT_OK
    for n in names:
        kw = _scenario_kwargs(n, args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                rep = SCENARIOS[n].run(**kw)
            except ResourceError as exc:
                print(f"{n}: resource cap: {exc}", file=sys.stderr)
                results.append((n, "RESOURCE"))
                worst = max(worst, EXIT_RESOURCE)
                continue
        for w in caught:
            print(f"warning: {n}: {w.message}", file=sys.stderr)
        (out / f"verify_{n}.json").write_text(rep.to_json() + "\n")
        print(rep.summary())
        results.append((n, "PASS" if rep.passed else "FAIL"))
        if not rep.passed:
            worst = max(worst, EXIT_TOLERANCE) if worst != EXIT_RESOURCE else worst
    if len(names) > 1:
        print()
        print(f"{'scenario':<16}result")
        for n, r in results:
            print(f"{n:<16}{r}")
    (out / "verify_summary.json").write_text(json.dumps(dict(results), indent=2) + "\n")
    return worst


# sweep -----------------------------------------------------------------------------------------

SWEEPS = {"hop": "coupling", "kerr": "epsilon"}


def cmd_sweep(args) -> int:
    if args.scenario not in SWEEPS:
        raise UsageError(f"unknown sweep scenario {args.scenario!r}; available: {', '.join(SWEEPS)}")
    parameter = args.parameter or SWEEPS[args.scenario]
    if parameter != SWEEPS[args.scenario]:
        raise UsageError(f"scenario {args.scenario!r} sweeps {SWEEPS[args.scenario]!r} only")
    grid = parse_grid(args.grid)
    out = _out_dir(args)
    tol = load_tolerances(args.tol_file)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            table = scaling_study(args.scenario, parameter, grid, tol, mapper=pool.map)
    else:
        table = scaling_study(args.scenario, parameter, grid, tol)
    csv = table.to_csv()
    (out / f"sweep_{args.scenario}.csv").write_text(csv)
    sys.stdout.write(csv)
    print(f"# power-law exponent {table.exponent:.3f}; monotone {table.monotone}")
    return EXIT_OK if table.monotone else EXIT_TOLERANCE


# entry -----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nanolattice", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed recorded with outputs; all paths are deterministic")

    c = sub.add_parser("compile", help="compile a lattice spec into a drive plan")
    c.add_argument("--spec", required=True)
    c.add_argument("--guard-band", type=float, default=None, help="override threshold, rad/s")
    common(c)

    s = sub.add_parser("simulate", help="integrate a model described by a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--spec", help="lattice spec for the 'plan' builder")
    s.add_argument("--plan", help="compiled plan for the 'plan' builder")
    s.add_argument("--dims", help="truncation overrides, e.g. a1=4,b=2")
    s.add_argument("--stepper", choices=("rk4", "adaptive", "expm"))
    common(s)

    v = sub.add_parser("verify", help="run a verification scenario or 'all'")
    v.add_argument("scenario")
    v.add_argument("--spec", help="lattice spec for the composite scenario")
    v.add_argument("--dims", help="truncation overrides")
    v.add_argument("--tol-file", help="JSON file overriding tolerance entries")
    v.add_argument("--param", action="append", help="parameter override key=value (repeatable)")
    common(v)

    w = sub.add_parser("sweep", help="scaling study over a parameter grid")
    w.add_argument("scenario", help="hop or kerr")
    w.add_argument("--parameter", help="coupling (hop) or epsilon (kerr)")
    w.add_argument("--grid", required=True, help="comma-separated values, at least 3")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--tol-file")
    common(w)
    return p


COMMANDS = {"compile": cmd_compile, "simulate": cmd_simulate, "verify": cmd_verify,
            "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ResourceError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (VerificationError, ModelError, OperatorError, DynamicsError, KeyError,
            TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
