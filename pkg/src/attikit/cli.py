"""``attikit`` command line: simulate, sweep, lyapunov, plot.

Exit codes: 0 success, 1 certification failed (lyapunov only),
2 usage or configuration error, 3 numeric fault.
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
from .control import ControlLaw, Gains
from .dynamics import InertiaMatrix, IntegrationFault, Stepper
from .experiments import (
    RESULTS_HEADER,
    TRAJECTORY_HEADER,
    ResultsParseError,
    UsageError,
    _tumble_config,
    make_tumble_config,
    read_results,
    read_trajectory,
    run_sweep,
    stabilization_time,
    worker_count,
    write_results,
    write_trajectory,
)
from .lyapunov import (
    decrease_check,
    kinematic_identity_check,
    max_feasible_c,
    pq_matrices,
)
from .sim import simulate
from .svgplot import Series, line_chart

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_FAULT = 3

DEFAULT_CONFIG = {
    "inertia_diag_kgm2": [16.57e-6, 16.66e-6, 29.26e-6],
    "k_theta": 1000.0,
    "k_omega": 100.0,
    "dt_s": 1e-4,
    "t_final_s": 5.0,
    "log_every": 10,
}
_OPTIONAL_KEYS = {"inertia_full", "stepper"}


class ConfigError(ValueError):
    pass


def load_config(path: str | None) -> dict:
    """Merge a JSON config file over the defaults and build typed objects."""
    raw = dict(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(user) - set(DEFAULT_CONFIG) - _OPTIONAL_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        raw.update(user)
    try:
        if "inertia_full" in raw:
            J = InertiaMatrix(np.asarray(raw["inertia_full"], dtype=float))
        else:
            diag = [float(v) for v in raw["inertia_diag_kgm2"]]
            if len(diag) != 3:
                raise ValueError("inertia_diag_kgm2 needs three entries")
            J = InertiaMatrix.diag(*diag)
        log_every = raw["log_every"]
        if isinstance(log_every, bool) or not isinstance(log_every, int):
            raise ValueError("log_every must be an integer")
        built = dict(
            J=J,
            gains=Gains(float(raw["k_theta"]), float(raw["k_omega"])),
            dt=float(raw["dt_s"]),
            t_final=float(raw["t_final_s"]),
            log_every=log_every,
            stepper=Stepper(raw.get("stepper", "dp5")),
        )
        if not built["dt"] > 0 or not built["t_final"] >= built["dt"]:
            raise ValueError("need dt_s > 0 and t_final_s >= dt_s")
        if log_every < 1:
            raise ValueError("log_every must be >= 1")
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return {"raw": raw, **built}


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def write_manifest(command: str, inputs: dict, outputs: list[Path], seeds, t_start: float):
    man_path = _manifest_path(outputs[0])
    manifest = {
        "command": command,
        "version": __version__,
        "inputs": inputs,
        "outputs": [str(p) for p in outputs] + [str(man_path)],
        "seeds": seeds,
        "duration_s": time.perf_counter() - t_start,
    }
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return man_path


def _err(msg: str) -> None:
    print(f"attikit: {msg}", file=sys.stderr)


def _parse_law(text: str, allowed=None) -> ControlLaw:
    law = ControlLaw.parse(text)
    if allowed is not None and law not in allowed:
        raise UsageError(f"law must be one of {', '.join(l.value for l in allowed)}")
    return law


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #


def cmd_simulate(args) -> int:
    t_start = time.perf_counter()
    cfg = load_config(args.config)
    law = _parse_law(args.law)
    sim_cfg = make_tumble_config(
        args.theta0, law, args.seed, J=cfg["J"], gains=cfg["gains"], dt=cfg["dt"],
        t_final=cfg["t_final"], log_every=cfg["log_every"], stepper=cfg["stepper"],
    )
    traj = simulate(sim_cfg)
    out = Path(args.out)
    write_trajectory(traj, out)
    stab = stabilization_time(traj)
    write_manifest(
        "simulate",
        {"config": args.config, "law": law.value, "theta0_deg": args.theta0,
         "config_values": cfg["raw"]},
        [out],
        {str(args.theta0): args.seed},
        t_start,
    )
    print(f"law={law.value} theta0={args.theta0} stab_time_s="
          f"{'none' if stab is None else f'{stab:.4f}'} samples={len(traj)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    t_start = time.perf_counter()
    cfg = load_config(args.config)
    laws = [_parse_law(s) for s in args.laws.split(",") if s.strip()]
    if not laws:
        raise UsageError("--laws is empty")
    lo, hi = args.theta_min, args.theta_max
    if not (1 <= lo <= hi <= 359):
        raise UsageError("theta range must satisfy 1 <= min <= max <= 359")
    workers = worker_count(args.workers)
    kw = dict(J=cfg["J"], gains=cfg["gains"], stepper=cfg["stepper"])
    if not args.fast:
        kw["dt"] = cfg["dt"]
    rows = run_sweep(laws, range(lo, hi + 1), args.base_seed, workers, fast=args.fast,
                     t_final=cfg["t_final"], **kw)
    out = Path(args.out)
    write_results(rows, out)
    write_manifest(
        "sweep",
        {"config": args.config, "laws": [l.value for l in laws], "theta_min": lo,
         "theta_max": hi, "base_seed": args.base_seed, "fast": args.fast,
         "workers": workers, "config_values": cfg["raw"]},
        [out],
        {str(r.theta0_deg): r.seed for r in rows},
        t_start,
    )
    n_fault = sum(r.faulted for r in rows)
    n_unstab = sum(r.stabilization_time is None for r in rows)
    print(f"rows={len(rows)} faulted={n_fault} not_stabilized={n_unstab}")
    if n_fault == len(rows):
        _err("every case hit an integration fault")
        return EXIT_FAULT
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    t_start = time.perf_counter()
    cfg = load_config(args.config)
    law = _parse_law(args.law, (ControlLaw.SEA1, ControlLaw.SEA2))
    g = cfg["gains"]
    if args.c == "auto":
        c_star = max_feasible_c(g)
        c = min(c_star, 1e-3)
    else:
        try:
            c = float(args.c)
        except ValueError:
            raise UsageError(f"--c must be 'auto' or a number, got {args.c!r}") from None
        if not (c > 0 and math.isfinite(c)):
            raise UsageError("--c must be positive")
        c_star = None
    mats = pq_matrices(g, c)
    if not mats.positive_definite:
        _err(f"c = {c:g} does not make P and Q positive definite:")
        for line in mats.failing_minors():
            print(f"  {line}", file=sys.stderr)
        return EXIT_USAGE
    if not (0 <= args.theta0 <= 359):
        raise UsageError("theta0 must be in [0, 359] degrees")
    sim_cfg = _tumble_config(
        args.theta0, law, args.seed, J=cfg["J"], gains=g, dt=cfg["dt"],
        t_final=cfg["t_final"], log_every=cfg["log_every"], stepper=cfg["stepper"],
    )
    traj = simulate(sim_cfg)
    which = "V1" if law is ControlLaw.SEA1 else "V2"
    dec = decrease_check(traj, which, g, c)
    kin, _ = kinematic_identity_check(traj)
    report = {
        "law": law.value,
        "lyapunov_function": which,
        "c": c,
        "c_star": c_star,
        "theta0_deg": args.theta0,
        "seed": args.seed,
        "lambda_min_P": mats.lambda_min_P,
        "lambda_min_Q": mats.lambda_min_Q,
        "decrease": dec.to_dict(),
        "kinematic": kin.to_dict(),
        "passed": bool(dec.passed and kin.passed),
    }
    out = Path(args.out)
    out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    write_manifest(
        "lyapunov",
        {"config": args.config, "law": law.value, "c": args.c, "theta0_deg": args.theta0,
         "config_values": cfg["raw"]},
        [out],
        {str(args.theta0): args.seed},
        t_start,
    )
    print(f"{which}: violations={dec.violations} worst_margin={dec.worst_margin:.3e} "
          f"kinematic={'ok' if kin.passed else 'FAIL'}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def _load_for_plot(path: str, kind: str):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    want = RESULTS_HEADER if kind == "sweep" else TRAJECTORY_HEADER
    if first.split(",") != want:
        raise UsageError(f"{path}: header does not match the '{kind}' schema")
    if kind == "sweep":
        rows = read_results(path)
        if not rows:
            raise UsageError(f"{path}: no data rows")
        return rows
    data = read_trajectory(path)
    if data["t_s"].size == 0:
        raise UsageError(f"{path}: no data rows")
    return data


def cmd_plot(args) -> int:
    t_start = time.perf_counter()
    loaded = [(p, _load_for_plot(p, args.kind)) for p in args.inputs]
    series = []
    if args.kind == "sweep":
        for _, rows in loaded:
            for law in ControlLaw:
                sel = [r for r in rows if r.law is law]
                if not sel:
                    continue
                x = np.array([r.theta0_deg for r in sel], dtype=float)
                y = np.array([math.nan if r.stabilization_time is None else r.stabilization_time
                              for r in sel])
                series.append(Series(law.value, x, y))
        svg = line_chart(series, "initial error angle [deg]", "stabilization time [s]",
                         "Stabilization time vs initial error")
    elif args.kind == "theta":
        for path, d in loaded:
            series.append(Series(Path(path).stem, d["t_s"], np.degrees(d["theta_e_rad"])))
        svg = line_chart(series, "time [s]", "error angle [deg]", "Euler-axis error")
    else:
        for path, d in loaded:
            tag = Path(path).stem if len(loaded) > 1 else ""
            for col, name in (("n_norm", "|n_e|"), ("p1_norm", "|p_e1|"), ("p2_norm", "|p_e2|")):
                series.append(Series(f"{tag} {name}".strip(), d["t_s"], d[col]))
        svg = line_chart(series, "time [s]", "norm", "SEA vector norms")
    out = Path(args.out)
    out.write_text(svg, encoding="utf-8")
    write_manifest("plot", {"inputs": list(args.inputs), "kind": args.kind}, [out], {}, t_start)
    return EXIT_OK


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="attikit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"attikit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_config(sp):
        sp.add_argument("config", nargs="?", default=None, help="JSON config file")
        sp.add_argument("--config", dest="config_opt", default=None, help="JSON config file")

    s = sub.add_parser("simulate", help="run one tumble-recovery maneuver")
    add_config(s)
    s.add_argument("--law", required=True)
    s.add_argument("--theta0", type=int, required=True, help="initial error angle, degrees")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="stabilization time over initial angles")
    add_config(s)
    s.add_argument("--laws", default="b,sea1,sea2")
    s.add_argument("--base-seed", type=int, default=0)
    s.add_argument("--theta-min", type=int, default=1)
    s.add_argument("--theta-max", type=int, default=359)
    s.add_argument("--fast", action="store_true", help="dt = 1e-3 s")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("lyapunov", help="numerical Lyapunov certification")
    add_config(s)
    s.add_argument("--law", required=True, help="sea1 or sea2")
    s.add_argument("--c", default="auto")
    s.add_argument("--theta0", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("plot", help="SVG chart from a sweep or trajectory CSV")
    s.add_argument("--in", dest="inputs", action="append", required=True)
    s.add_argument("--kind", choices=("sweep", "theta", "seanorms"), required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config_opt", None):
        if args.config is not None:
            parser.error("give the config file once")
        args.config = args.config_opt
    try:
        return args.func(args)
    except (UsageError, ConfigError, ResultsParseError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except IntegrationFault as exc:
        _err(f"integration fault: {exc}")
        return EXIT_FAULT
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except ValueError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
