"""Command-line runner: ``gridpin analyze|pin|simulate|replay``.

Exit codes: 0 success, 2 configuration error, 3 infeasible selection
target, 4 unstable simulation. Command-line flags override fields of the
configuration document, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import plant as pl
from .config import SELECTION_MODES, SIM_MODES, ConfigError, ResolvedConfig, dump_document, load_config, node_list, resolve
from .consensus import (
    NotSettledError,
    StabilityGuardError,
    UnstableSimulationError,
    simulate_errors,
    synthetic_initial_errors,
    trajectory_metrics,
)
from .netgraph import NetworkError, PinningConfig, deg_metric, path_metric
from .pinsel import (
    CoverageError,
    RateTarget,
    SelectionError,
    UnattainableTargetError,
    algorithm1,
    algorithm2,
    brute_force_opt,
)
from .spectral import phi, summarize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_UNSTABLE = 4


def _number(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    return _number(obj)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n")


# -- commands ----------------------------------------------------------------

def cmd_analyze(cfg: ResolvedConfig, out: Path | None) -> tuple[dict, list[Path]]:
    net = cfg.network
    cands = cfg.candidates if cfg.candidates else [[i] for i in range(net.n_nodes)]
    rows = []
    for P in cands:
        rest = [j for j in range(net.n_nodes) if j not in P]
        pin = PinningConfig.uniform(P, cfg.pin_gain, net.n_nodes)
        row = {
            "pinned": [net.node_labels[i] for i in P],
            "deg": deg_metric(net, P),
            "path": path_metric(net, P, rest),
        }
        if cfg.bounds:
            s = summarize(net, pin, cfg.upper_reading, cfg.lower_reading)
            row.update(phi=s.phi, phi_lower=s.phi_lower, phi_upper=s.phi_upper, beta=s.beta,
                       interpretation=s.interpretation_tag)
            if s.phi_lower is None or s.phi_upper is None:
                row["bounds_note"] = "NOT_APPLICABLE: " + "; ".join(s.notes)
        else:
            row["phi"] = phi(net, pin)
        rows.append(row)

    print(f"{'pinned':<16}{'deg':>5}{'path':>7}{'phi':>12}{'phi_l':>12}{'phi_u':>12}")
    for r in rows:
        lo = _cell(r.get("phi_lower"))
        hi = _cell(r.get("phi_upper"))
        print(f"{','.join(r['pinned']):<16}{r['deg']:>5}{_cell(r['path'], 0):>7}{r['phi']:>12.6f}{lo:>12}{hi:>12}")
        if "bounds_note" in r:
            print(f"    {r['bounds_note']}")
    report = {"gain": cfg.pin_gain, "candidates": rows}
    written = []
    if out is not None:
        _write_json(out / "analysis.json", report)
        written.append(out / "analysis.json")
    return report, written


def _cell(v, digits=6):
    if v is None:
        return "n/a"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:.{digits}f}" if digits else f"{v:g}"


def run_selection(cfg: ResolvedConfig):
    net = cfg.network
    mode = cfg.selection_mode
    if mode == "target-rate":
        if cfg.lambda_star is None:
            raise ConfigError("target-rate selection needs lambda_star (--lambda-star)")
        target = RateTarget.from_rate(cfg.lambda_star, cfg.gains.c_v, cfg.gains.c_omega)
        return algorithm2(net, cfg.pin_gain, target), {"lambda_star": cfg.lambda_star, "mu_star": target.mu_star}
    if cfg.m is None:
        raise ConfigError(f"{mode} selection needs m (--m)")
    if cfg.m > net.n_nodes:
        raise ConfigError(f"m = {cfg.m} exceeds the {net.n_nodes} nodes of the network")
    if mode == "fixed-m":
        return algorithm1(net, cfg.m, cfg.pin_gain), {"m": cfg.m}
    return brute_force_opt(net, cfg.m, cfg.pin_gain), {"m": cfg.m}


def cmd_pin(cfg: ResolvedConfig, out: Path | None) -> tuple[dict, list[Path]]:
    result, params = run_selection(cfg)
    report = result.to_dict(cfg.network) | {"gain": cfg.pin_gain} | params
    print(f"{result.method}: pinned {', '.join(result.labels(cfg.network))}  phi = {result.achieved_phi:.6g}")
    written = []
    if out is not None:
        _write_json(out / "selection.json", report)
        written.append(out / "selection.json")
    return report, written


def cmd_simulate(cfg: ResolvedConfig, out: Path) -> tuple[dict, list[Path], int]:
    net = cfg.network
    if cfg.pinning is None:
        result, _ = run_selection(cfg)
        cfg.pinning = list(result.pinned)
        print(f"pinning from {result.method}: {', '.join(result.labels(net))}")
    pin = PinningConfig.uniform(cfg.pinning, cfg.pin_gain, net.n_nodes)
    metrics = {"mode": cfg.sim_mode, "pinned": [net.node_labels[i] for i in cfg.pinning], "phi": phi(net, pin)}
    if cfg.sim_mode == "errors":
        return _simulate_errors(cfg, pin, out, metrics)
    return _simulate_plant(cfg, pin, out, metrics)


def _initial_errors(cfg: ResolvedConfig):
    n = cfg.network.n_nodes
    choice = cfg.initial_errors
    if isinstance(choice, dict):
        return np.array(choice["e_v"]), np.array(choice["e_omega"]), "explicit"
    if cfg.plant is not None and choice in (None, "snapshot"):
        plant = pl.Plant(cfg.plant.topology, cfg.plant.dgs, cfg.network)
        e_v, e_w = pl.islanding_snapshot(plant, cfg.gains)
        return e_v, e_w, "snapshot"
    if choice == "snapshot":
        raise ConfigError("initial_errors: snapshot needs a 'plant' section")
    e_v, e_w = synthetic_initial_errors(n, cfg.gains)
    return e_v, e_w, "synthetic"


def _simulate_errors(cfg, pin, out, metrics):
    e_v0, e_w0, origin = _initial_errors(cfg)
    metrics["initial_errors"] = origin
    path = out / "errors.csv"
    code = EXIT_OK
    try:
        traj = simulate_errors(cfg.network, pin, cfg.gains, e_v0, e_w0, cfg.dt, cfg.t_end, cfg.record_every)
        metrics["status"] = "OK"
    except UnstableSimulationError as exc:
        traj = exc.partial
        metrics["status"] = "UNSTABLE"
        metrics["error"] = str(exc)
        code = EXIT_UNSTABLE
    traj.write_csv(path)
    if code == EXIT_OK and len(traj.times) > 1:
        metrics["channels"] = trajectory_metrics(traj, cfg.band)
        metrics["predicted_rate"] = {"v": cfg.gains.c_v * metrics["phi"], "omega": cfg.gains.c_omega * metrics["phi"]}
    metrics["samples"] = len(traj.times)
    _write_json(out / "metrics.json", metrics)
    _print_metrics(metrics)
    return metrics, [path, out / "metrics.json"], code


def _simulate_plant(cfg, pin, out, metrics):
    if cfg.plant is None:
        raise ConfigError("plant mode needs a 'plant' section in the configuration")
    plant = pl.Plant(cfg.plant.topology, cfg.plant.dgs, cfg.network)
    scenario = cfg.plant.scenario
    record = pl.run_scenario(plant, scenario, cfg.gains, pin)
    paths = [out / "plant.csv", out / "violations.csv", out / "metrics.json"]
    record.write_csv(paths[0])
    record.write_violations_csv(paths[1])
    metrics["status"] = record.status
    metrics["samples"] = len(record.times)
    metrics["violations"] = record.violations
    try:
        err = pl.power_sharing_error(record)
        mean = float(np.abs(record.mp_p[-1]).mean())
        metrics["power_sharing"] = {"max_pair_mismatch": err, "relative": err / mean if mean else 0.0}
    except NotSettledError:
        metrics["power_sharing"] = "NOT_SETTLED"
    bounds = [e.time for e in scenario.events] + [scenario.t_end + scenario.dt]
    responses = []
    for ev, t0, t1 in zip(scenario.events, bounds, bounds[1:]):
        if len(record.times) == 0:
            break
        r = pl.event_response(record, t0, t1, cfg.band)
        responses.append({"time": ev.time, "action": ev.action, **r.__dict__})
    metrics["events"] = responses
    _write_json(paths[2], metrics)
    _print_metrics(metrics)
    return metrics, paths, EXIT_OK if record.status == pl.OK else EXIT_UNSTABLE


def _print_metrics(metrics: dict) -> None:
    print(json.dumps(_jsonable(metrics), indent=2))


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridpin", description="Pinning-set selection and secondary-control simulation for microgrids.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML configuration document")
        p.add_argument("--gain", type=float, help="uniform pinning gain g")
        p.add_argument("--out", help="output directory")

    a = sub.add_parser("analyze", help="path/deg metrics, phi and bounds for candidate pinning sets")
    common(a)
    a.add_argument("--pinning", action="append", help="candidate set, e.g. DG1,DG3 (repeatable)")

    p = sub.add_parser("pin", help="select a pinning set")
    common(p)
    p.add_argument("--mode", choices=SELECTION_MODES)
    p.add_argument("--m", type=int, help="number of pinned DGs")
    p.add_argument("--lambda-star", type=float, help="desired convergence rate (1/s)")

    s = sub.add_parser("simulate", help="run the error dynamics or the plant model")
    common(s)
    s.add_argument("--mode", choices=SIM_MODES)
    s.add_argument("--pinning", help="pinning set, e.g. DG1,DG3")
    s.add_argument("--pin-result", help="selection.json written by 'gridpin pin'")
    s.add_argument("--m", type=int)
    s.add_argument("--lambda-star", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--t-end", type=float)

    r = sub.add_parser("replay", help="rerun a manifest")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    return ap


def _overrides(args) -> dict:
    ov = {}
    for key in ("gain", "m", "lambda_star", "dt", "t_end"):
        ov[key] = getattr(args, key, None)
    pinning = getattr(args, "pinning", None)
    if args.command == "simulate":
        if pinning is None and getattr(args, "pin_result", None):
            try:
                pinning = json.loads(Path(args.pin_result).read_text())["pinned"]
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"--pin-result {args.pin_result}: cannot read pinned set ({exc})") from exc
        ov["pinning"] = pinning
    return ov


def _load(args) -> tuple[ResolvedConfig, str, dict]:
    if args.command == "replay":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            doc = manifest["resolved_config"]
            command = manifest["command"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot replay {args.manifest}: {exc}") from exc
        return resolve(doc, source=args.manifest), command, {"config": manifest.get("config")}
    cfg = load_config(args.config, _overrides(args))
    if cfg.extra.get("dropped_events"):
        print(f"note: {cfg.extra['dropped_events']} event(s) after t_end = {cfg.t_end:g} s dropped", file=sys.stderr)
    if args.command == "analyze" and args.pinning:
        cfg.candidates = [node_list(p, cfg.network, lambda msg: ConfigError(f"--pinning: {msg}")) for p in args.pinning]
    mode = getattr(args, "mode", None)
    if mode and args.command == "pin":
        cfg.selection_mode = mode
    if mode and args.command == "simulate":
        cfg.sim_mode = mode
    return cfg, args.command, {"config": str(Path(args.config))}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg, command, meta = _load(args)
        out = Path(args.out) if getattr(args, "out", None) else (Path("gridpin-out") if command == "simulate" else None)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        code = EXIT_OK
        if command == "analyze":
            _, written = cmd_analyze(cfg, out)
        elif command == "pin":
            _, written = cmd_pin(cfg, out)
        else:
            _, written, code = cmd_simulate(cfg, out)
        if out is not None:
            doc = cfg.to_document()
            (out / "resolved_config.yaml").write_text(dump_document(doc))
            written.append(out / "resolved_config.yaml")
            manifest = {
                "command": command,
                "config": meta["config"],
                "argv": list(sys.argv[1:] if argv is None else argv),
                "tool_version": __version__,
                "resolved_config": doc,
                "outputs": [str(p) for p in written] + [str(out / "manifest.json")],
                "status": "UNSTABLE" if code == EXIT_UNSTABLE else "OK",
                "wall_clock_s": round(time.perf_counter() - started, 3),
            }
            _write_json(out / "manifest.json", manifest)
        return code
    except (UnattainableTargetError, CoverageError) as exc:
        print(f"gridpin: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except StabilityGuardError as exc:
        print(f"gridpin: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, NetworkError, SelectionError, pl.PlantConfigError, ValueError) as exc:
        print(f"gridpin: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
