"""Command-line entry point.

Subcommands
-----------
synth        run the synthesis and write the controller and result documents
simulate     simulate a controller document from given or sampled initial states
roa          grid-classify the ball and compute the certified sublevel level
compare      run several modes on one system and tabulate the outcome
export-sdpa  write the compiled SDP of one step of the synthesis in SDPA format

Exit codes: 0 success, 1 some simulation did not reach its horizon,
2 invalid configuration or input, 3 no certified controller.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib.resources import as_file, files
from pathlib import Path

import numpy as np

from .polyalg import Polynomial, sum_of_squares
from .polyparse import SystemFileError, load_system
from .sdpcore import export_sdpa
from .synth import (InitialControllerError, RationalController, SynthesisConfig, SystemModel,
                    cancellation_controller, controller_from_document, controller_to_document,
                    load_document, result_to_document, run_step1, save_document, synthesize,
                    traditional_iterate)
from .synth.controller import dumps, poly_from_terms, poly_to_terms
from .verify import (ball_points, certified_roa_level, check_certificate, roa_sample,
                     settling_time, simulate_batch, total_cost)

log = logging.getLogger("ratsos")

BUILTINS = ("pendulum", "rational2d", "poly3d")
MODES = ("proposed", "traditional", "polynomial-only", "cancellation")

EXIT_OK, EXIT_SIM, EXIT_CONFIG, EXIT_UNCERTIFIED = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    """Resolved settings of one command invocation."""

    system: str
    mode: str = "proposed"
    seed: int = 0
    output_dir: Path = Path(".")
    synthesis: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    input_cap: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")


def load_builtin(name: str, radius: float | None = None) -> SystemModel:
    """One of the bundled benchmark systems."""
    if name not in BUILTINS:
        raise ConfigError(f"unknown builtin system {name!r}; expected one of {', '.join(BUILTINS)}")
    with as_file(files("ratsos") / "benchmarks" / f"{name}.yaml") as path:
        return load_system(path, radius)


def resolve_system(spec: str, radius: float | None = None) -> SystemModel:
    """Builtin name or path to a system file."""
    if spec in BUILTINS:
        return load_builtin(spec, radius)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"system {spec!r} is neither a builtin ({', '.join(BUILTINS)}) nor a file")
    return load_system(path, radius)


def _read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
    else:
        import yaml

        doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


_TOP_KEYS = {"system", "mode", "seed", "output_dir", "synthesis", "simulation", "input_cap"}


def build_run_config(args) -> RunConfig:
    """Merge system defaults, the config file and the flags (flags win)."""
    doc = _read_config_file(args.config) if getattr(args, "config", None) else {}
    syn_fields = set(SynthesisConfig.__dataclass_fields__) - {"solver"}
    # a top-level "mode" is the run mode; the synthesis mode follows from it
    flat = {k: doc[k] for k in doc if k in syn_fields and k != "mode"}
    unknown = set(doc) - _TOP_KEYS - syn_fields
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    system = args.system or doc.get("system")
    if not system:
        raise ConfigError("no system given (use --system or the 'system' config key)")
    synthesis = {**(doc.get("synthesis") or {}), **flat}
    bad = set(synthesis) - syn_fields | ({"mode"} & set(synthesis))
    if bad:
        raise ConfigError(f"unknown synthesis fields {sorted(bad)}")
    if getattr(args, "iters", None) is not None:
        synthesis["iter_max"] = args.iters
    cfg = RunConfig(
        system=str(system),
        mode=args.mode or doc.get("mode", "proposed"),
        seed=int(args.seed if args.seed is not None else doc.get("seed", 0)),
        output_dir=Path(args.out or doc.get("output_dir", ".")),
        synthesis=synthesis,
        simulation=dict(doc.get("simulation") or {}),
        input_cap=args.input_cap if args.input_cap is not None else doc.get("input_cap"),
    )
    return cfg


def synthesis_config(sys_: SystemModel, run: RunConfig) -> SynthesisConfig:
    d = {**sys_.defaults.get("synthesis", {}), **run.synthesis}
    if run.mode == "polynomial-only":
        d["mode"] = "polynomial"
    try:
        return SynthesisConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthesis settings: {exc}") from None


def _sim_settings(sys_: SystemModel, run: RunConfig) -> dict:
    d = {"dt": 1e-2, "T": 10.0, **sys_.defaults.get("simulation", {}), **run.simulation}
    return {"dt": float(d["dt"]), "T": float(d["T"])}


# ----------------------------------------------------------------------------
# synthesis

@dataclass
class Outcome:
    """What a synthesis mode produced."""

    controller: RationalController | None
    result: object | None
    document: dict
    certified: bool
    R: float | None
    V: Polynomial | None
    law: object | None = None


def _cancellation(sys_: SystemModel, cfg: SynthesisConfig) -> Outcome:
    """Certify ``V`` for the initial controller, then cancel with ``W = |x|^2``."""
    if not sys_.is_control_affine() or sys_.n_u != 1:
        raise ConfigError("cancellation mode needs single-input, input-affine dynamics")
    if sys_.vars.n_aux:
        raise ConfigError("cancellation mode needs dynamics in the states alone")
    if sys_.initial_controller is None:
        raise ConfigError("cancellation mode needs an initial controller")
    ctrl0 = RationalController(list(sys_.initial_controller),
                               [Polynomial.constant(sys_.vars, 1.0)])
    r1 = run_step1(sys_.at_radius(cfg.R0), ctrl0, cfg, cfg.R0)
    if not r1.feasible:
        raise InitialControllerError("no Lyapunov function certifies the initial controller")
    V = r1.cert.V
    D, F0, G = sys_.affine_split()
    if D.degree > 0:
        raise ConfigError("cancellation mode needs polynomial dynamics")
    c = 1.0 / D.constant_term()
    W = sum_of_squares(sys_.vars)
    law = cancellation_controller(V, [f * c for f in F0], [G[i][0] * c for i in range(sys_.n_x)],
                                  W, radius=float(np.sqrt(cfg.R0)))
    p, q = law.reduced
    ctrl = RationalController([p], [q])
    doc = {
        "kind": "cancellation_result", "method": "cancellation",
        "controller": controller_to_document(ctrl),
        "lyapunov": poly_to_terms(V), "R": cfg.R0, "flags": list(law.flags),
    }
    return Outcome(ctrl, None, doc, False, cfg.R0, V, law)


def run_mode(sys_: SystemModel, run: RunConfig, keep_problems: bool = False) -> Outcome:
    cfg = synthesis_config(sys_, run)
    if run.mode == "cancellation":
        return _cancellation(sys_, cfg)
    fn = traditional_iterate if run.mode == "traditional" else synthesize
    try:
        res = fn(sys_, None, cfg, keep_problems=keep_problems)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    meta = {"system": sys_.name, "mode": run.mode, "seed": run.seed}
    doc = result_to_document(res, meta)
    certified = res.n_feasible > 0
    R = res.cert.R if res.cert is not None else None
    V = res.cert.V if res.cert is not None else None
    return Outcome(res.controller, res, doc, certified, R, V)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _history_log(history: list[dict]) -> str:
    return "".join(json.dumps({k: v for k, v in h.items() if k != "seconds"}) + "\n"
                   for h in history)


def cmd_synth(run: RunConfig, export: bool = False) -> int:
    sys_ = resolve_system(run.system)
    try:
        out = run_mode(sys_, run, keep_problems=export)
    except InitialControllerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNCERTIFIED
    res = out.result
    if res is not None and res.cert is not None:
        chk = check_certificate(res.cert, sys_.at_radius(res.cert.R), n_samples=1000,
                                seed=run.seed)
        out.document["check"] = {"passed": chk.passed, "samples": chk.samples,
                                 "identity_residual": chk.identity_residual}
    d = run.output_dir
    ctrl_meta = {"system": sys_.name, "mode": run.mode, "R": out.R}
    save_document_to(d / "controller.json", controller_to_document(out.controller, ctrl_meta))
    save_document_to(d / "result.json", out.document)
    if res is not None:
        _write(d / "history.jsonl", _history_log(res.history))
        if export:
            for k, (h, prob) in enumerate(zip(res.history, res.problems)):
                name = f"iter{h['iteration']:03d}_step{h['step']}.dat-s"
                _write(d / "sdpa" / name, export_sdpa(prob))
        for h in res.history:
            print(f"iter {h['iteration']:3d} step {h['step']} R={h['R']:.4g} "
                  f"gamma={h['gamma']:.4g} {h['status']}")
    print(f"certified R: {out.R}" if out.certified else "no certified controller")
    if not out.certified and run.mode != "cancellation":
        return EXIT_UNCERTIFIED
    return EXIT_OK


def save_document_to(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_document(doc, path)


# ----------------------------------------------------------------------------
# simulation and regions of attraction

def _load_controller(path, sys_: SystemModel) -> tuple[RationalController, dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"controller file {path} not found")
    doc = load_document(path)
    try:
        return controller_from_document(doc, sys_.vars), doc
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed controller document ({exc})") from None


def _doc_radius(doc: dict) -> float | None:
    for getter in (lambda d: d["meta"]["R"], lambda d: d["summary"]["certified_R"],
                   lambda d: d["R"], lambda d: d["certificate"]["R"]):
        try:
            v = getter(doc)
        except (KeyError, TypeError):
            continue
        if v is not None:
            return float(v)
    return None


def _doc_lyapunov(doc: dict, sys_: SystemModel) -> Polynomial | None:
    terms = None
    if isinstance(doc.get("certificate"), dict):
        terms = doc["certificate"].get("V")
    terms = terms or doc.get("lyapunov")
    return None if terms is None else poly_from_terms(terms, sys_.vars)


def _parse_points(texts, n: int) -> np.ndarray:
    pts = []
    for t in texts:
        try:
            row = [float(v) for v in t.split(",")]
        except ValueError:
            raise ConfigError(f"initial state {t!r} is not a comma-separated list of numbers") from None
        if len(row) != n:
            raise ConfigError(f"initial state {t!r} has {len(row)} entries, expected {n}")
        pts.append(row)
    return np.array(pts, dtype=float)


def metrics_table(trajs) -> list[dict]:
    rows = []
    for k, tr in enumerate(trajs):
        st = settling_time(tr)
        rows.append({
            "index": k,
            **{f"{name}_0": float(tr.states[0, i]) for i, name in enumerate(tr.state_names)},
            "total_cost": total_cost(tr),
            "settling_time": st,
            "converged": bool(tr.flags["converged"]),
            "completed": not tr.truncated,
            "flags": ";".join(sorted(f for f in ("diverged", "denominator_violation", "input_cap_hit")
                                     if tr.flags.get(f))),
        })
    return rows


def _table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else ("" if v is None else v)
                        for k, v in r.items()})
    return buf.getvalue()


def cmd_simulate(run: RunConfig, controller: str, x0=None, points: int = 25,
                 radius: float | None = None) -> int:
    sys_ = resolve_system(run.system)
    ctrl, doc = _load_controller(controller, sys_)
    sim = _sim_settings(sys_, run)
    if x0:
        X = _parse_points(x0, sys_.n_x)
        region = None
    else:
        region = radius or _doc_radius(doc) or synthesis_config(sys_, run).R0
        X = ball_points(sys_.n_x, region, points, seed=run.seed)
    eps = synthesis_config(sys_, run).eps_eta
    trajs = simulate_batch(sys_, ctrl, X, sim["dt"], sim["T"], run.input_cap, eps)
    d = run.output_dir
    for k, tr in enumerate(trajs):
        _write(d / f"traj_{k:03d}.csv", tr.to_csv())
    rows = metrics_table(trajs)
    _write(d / "metrics.csv", _table_csv(rows))
    summary = {
        "system": sys_.name, "points": len(rows), "region_R": region, **sim,
        "input_cap": run.input_cap,
        "converged": sum(r["converged"] for r in rows),
        "all_converged": all(r["converged"] for r in rows),
        "mean_total_cost": float(np.mean([r["total_cost"] for r in rows])),
        "rows": rows,
    }
    _write(d / "metrics.json", dumps(summary))
    print(f"{summary['converged']}/{len(rows)} trajectories converged; "
          f"mean cost {summary['mean_total_cost']:.6g}")
    return EXIT_OK if all(r["completed"] for r in rows) else EXIT_SIM


def default_grid(n: int) -> int:
    return 41 if n <= 2 else 21


def cmd_roa(run: RunConfig, controller: str, grid_n: int | None = None,
            radius: float | None = None) -> int:
    sys_ = resolve_system(run.system)
    ctrl, doc = _load_controller(controller, sys_)
    R = radius or _doc_radius(doc) or synthesis_config(sys_, run).R0
    sim = _sim_settings(sys_, run)
    V = _doc_lyapunov(doc, sys_)
    rep = roa_sample(sys_, ctrl, R, grid_n or default_grid(sys_.n_x), sim["dt"], sim["T"],
                     input_cap=run.input_cap)
    if V is not None:
        rep.certified_level, rep.level_resolution = certified_roa_level(
            V, R, seed=run.seed, return_resolution=True)
    d = run.output_dir
    _write(d / "roa.json", dumps({"system": sys_.name, **rep.to_document()}))
    _write(d / "roa.csv", rep.to_csv(sys_.vars.state_names))
    print(f"{rep.fraction_converged:.3f} of {len(rep.grid)} grid points converge"
          + ("" if rep.certified_level is None else f"; certified level {rep.certified_level:.6g}"))
    return EXIT_OK


def cmd_compare(run: RunConfig, modes, points: int = 25) -> int:
    sys_ = resolve_system(run.system)
    sim = _sim_settings(sys_, run)
    rows = []
    for mode in modes:
        sub = RunConfig(run.system, mode, run.seed, run.output_dir, run.synthesis,
                        run.simulation, run.input_cap)
        try:
            out = run_mode(sys_, sub)
        except (InitialControllerError, ConfigError) as exc:
            rows.append({"mode": mode, "feasible_iterations": 0, "certified_R": None,
                         "certified_level": None, "converged": None, "mean_total_cost": None,
                         "note": str(exc)})
            continue
        R = out.R or synthesis_config(sys_, sub).R0
        X = ball_points(sys_.n_x, synthesis_config(sys_, sub).R0, points, seed=run.seed)
        trajs = simulate_batch(sys_, out.law or out.controller, X, sim["dt"], sim["T"], run.input_cap)
        level = None
        if out.V is not None:
            try:
                level = certified_roa_level(out.V, R, seed=run.seed)
            except ValueError:
                level = None
        rows.append({
            "mode": mode,
            "feasible_iterations": 0 if out.result is None else out.result.n_feasible,
            "certified_R": out.R if out.certified else None,
            "certified_level": level,
            "converged": sum(bool(t.flags["converged"]) for t in trajs),
            "mean_total_cost": float(np.mean([total_cost(t) for t in trajs])),
            "note": "",
        })
        save_document_to(run.output_dir / f"controller_{mode}.json",
                         controller_to_document(out.controller, {"mode": mode, "R": out.R}))
    _write(run.output_dir / "compare.csv", _table_csv(rows))
    _write(run.output_dir / "compare.json", dumps({"system": sys_.name, "rows": rows}))
    for r in rows:
        print(f"{r['mode']:16s} feasible={r['feasible_iterations']} R={r['certified_R']} "
              f"converged={r['converged']} cost={r['mean_total_cost']}")
    return EXIT_OK if any(r["certified_R"] is not None for r in rows) else EXIT_UNCERTIFIED


def cmd_export_sdpa(run: RunConfig, step: int, iteration: int, out: str | None = None) -> int:
    sys_ = resolve_system(run.system)
    if run.mode == "cancellation":
        raise ConfigError("export-sdpa needs a synthesis mode")
    try:
        res = run_mode(sys_, run, keep_problems=True).result
    except InitialControllerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNCERTIFIED
    if not res.history:
        raise ConfigError("the synthesis history is empty; nothing to export")
    for h, prob in zip(res.history, res.problems):
        if h["step"] == step and h["iteration"] == iteration:
            path = Path(out) if out else run.output_dir / f"iter{iteration:03d}_step{step}.dat-s"
            _write(path, export_sdpa(prob))
            print(f"wrote {path}")
            return EXIT_OK
    have = sorted({(h["iteration"], h["step"]) for h in res.history})
    raise ConfigError(f"no snapshot for iteration {iteration} step {step}; available {have}")


# ----------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", help="builtin name (pendulum, rational2d, poly3d) or system file")
    p.add_argument("--config", help="YAML or JSON run configuration; flags override it")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--iters", type=int, help="inner iteration cap (iter_max)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--input-cap", type=float, dest="input_cap",
                   help="saturate simulated inputs at this magnitude")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ratsos", description="Rational SOS controller synthesis.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", help="synthesize a controller")
    _common(p)
    p.add_argument("--export-sdpa", action="store_true", dest="export_sdpa",
                   help="also write every compiled step program in SDPA format")
    p = sub.add_parser("simulate", help="simulate a controller")
    _common(p)
    p.add_argument("--controller", required=True)
    p.add_argument("--x0", action="append", help="initial state 'a,b,...'; repeatable")
    p.add_argument("--points", type=int, default=25, help="number of sampled initial states")
    p.add_argument("--radius", type=float, help="sampling ball |x|^2 <= radius")
    p = sub.add_parser("roa", help="region-of-attraction report")
    _common(p)
    p.add_argument("--controller", required=True)
    p.add_argument("--grid-n", type=int, dest="grid_n")
    p.add_argument("--radius", type=float)
    p = sub.add_parser("compare", help="run several modes and tabulate")
    _common(p)
    p.add_argument("--modes", default="proposed,traditional",
                   help="comma-separated modes to compare")
    p.add_argument("--points", type=int, default=25)
    p = sub.add_parser("export-sdpa", help="export one compiled step program")
    _common(p)
    p.add_argument("--step", type=int, choices=(1, 2), required=True)
    p.add_argument("--iteration", type=int, default=1)
    p.add_argument("--file", help="output file (default under --out)")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = build_run_config(args)
        if args.command == "synth":
            return cmd_synth(run, export=args.export_sdpa)
        if args.command == "simulate":
            return cmd_simulate(run, args.controller, args.x0, args.points, args.radius)
        if args.command == "roa":
            return cmd_roa(run, args.controller, args.grid_n, args.radius)
        if args.command == "compare":
            modes = [m.strip() for m in args.modes.split(",") if m.strip()]
            bad = [m for m in modes if m not in MODES]
            if bad:
                raise ConfigError(f"unknown modes {bad}")
            return cmd_compare(run, modes, args.points)
        return cmd_export_sdpa(run, args.step, args.iteration, args.file)
    except (ConfigError, SystemFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
