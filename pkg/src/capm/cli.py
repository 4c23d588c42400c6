"""Command-line front end: ``python -m capm <subcommand>``.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Unknown keys are an error. Every key and its default appear in ``--help``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import math
import sys
from pathlib import Path
from typing import Callable

from .errors import CapmError, ConfigError, ParseError, RangeError, UnknownKey
from .geom import Mpoi, Troi
from .planner import PLANNERS, SceneRegions, TrialScene, execute_trial
from .reach import BodyPose, classify_problem_type, compute_rm
from .sim import ExperimentConfig, MetricsTable, aggregate, format_table, run_trials, saa_stream

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

TRIAL_HEADER = [
    "trial_id", "path_length", "planner", "branch", "success", "expected_cost", "realized_cost",
    "troi_x", "troi_y", "r_w", "mpoi_x", "mpoi_y", "x1_x", "x1_y", "x3_x", "x3_y",
]
METRICS_HEADER = ["planner", "path_length", "success_rate_pct", "avg_cost"]


# ----------------------------------------------------------------------------
# config


def _floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(p == "" for p in parts):
        raise ValueError(f"expected a comma-separated list of numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return v


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    return int(text.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    return parse


# key -> (section attribute on ExperimentConfig or "" for top level, field, parser)
_KEYS: dict[str, tuple[str, str, Callable]] = {
    "n_trials": ("", "n_trials", _int),
    "workspace": ("", "workspace", float),
    "r_w_range": ("", "r_w_range", _pair),
    "path_lengths": ("", "path_lengths", _floats),
    "sigma_mode": ("", "sigma_mode", _choice("linear", "squared")),
    "truncate": ("", "truncate", _bool),
    "master_seed": ("", "master_seed", _int),
    "mc_samples": ("", "mc_samples", _int),
    "body_height": ("", "body_height", float),
    "energy.alpha": ("energy", "alpha", float),
    "energy.gamma": ("energy", "gamma", float),
    "energy.beta": ("energy", "beta", float),
    "energy.distance_exponent": ("energy", "distance_exponent", _int),
    "task.delta": ("task", "delta", float),
    "task.eps_min": ("task", "eps_min", float),
    "task.eps_max": ("task", "eps_max", float),
    "task.xi": ("task", "xi", _int),
    "task.aim_tol_deg": ("task", "aim_tol_deg", float),
    "camera.focal_u": ("camera", "focal_u", float),
    "camera.focal_v": ("camera", "focal_v", float),
    "camera.center_u": ("camera", "center_u", float),
    "camera.center_v": ("camera", "center_v", float),
    "camera.width": ("camera", "width", _int),
    "camera.height": ("camera", "height", _int),
    "arm.shoulder_x": ("arm", "shoulder_x", float),
    "arm.shoulder_y": ("arm", "shoulder_y", float),
    "arm.shoulder_z": ("arm", "shoulder_z", float),
    "arm.reach_min": ("arm", "reach_min", float),
    "arm.reach_max": ("arm", "reach_max", float),
    "grid.n_standoff": ("search", "n_standoff", _int),
    "grid.n_height": ("search", "n_height", _int),
    "grid.n_radial": ("search", "n_radial", _int),
    "grid.refine_factor": ("search", "refine_factor", _int),
    "grid.refine_levels": ("search", "refine_levels", _int),
    "grid.standoff_max": ("search", "standoff_max", float),
    "plan.n_theta": ("plan_grid", "n_theta", _int),
    "plan.n_radial": ("plan_grid", "n_radial", _int),
    "plan.refine": ("plan_grid", "refine", _int),
}

_SHOULDER = {"shoulder_x": 0, "shoulder_y": 1, "shoulder_z": 2}


def _format_default(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, tuple):
        return ", ".join(f"{v:g}" for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def config_values(cfg: ExperimentConfig) -> dict[str, str]:
    """Every config key with its value in ``cfg``, formatted as config text."""
    out = {}
    for key, (section, name, _) in _KEYS.items():
        if section == "":
            v = getattr(cfg, name)
        elif section == "arm" and name in _SHOULDER:
            v = cfg.arm.shoulder_offset[_SHOULDER[name]]
        else:
            v = getattr(getattr(cfg, section), name)
        out[key] = _format_default(v)
    return out


def parse_config(text: str) -> ExperimentConfig:
    top: dict = {}
    sections: dict[str, dict] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise UnknownKey(key, lineno)
        if key in seen:
            raise ParseError(lineno, f"duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        section, name, parse = _KEYS[key]
        try:
            v = parse(value)
        except ValueError as exc:
            raise ParseError(lineno, f"{key}: {exc}") from None
        (top if section == "" else sections.setdefault(section, {}))[name] = v
    base = ExperimentConfig()
    try:
        for section, fields in sections.items():
            current = getattr(base, section)
            if section == "arm":
                offset = list(current.shoulder_offset)
                for name in [n for n in fields if n in _SHOULDER]:
                    offset[_SHOULDER[name]] = fields.pop(name)
                fields["shoulder_offset"] = tuple(offset)
            top[section] = dataclasses.replace(current, **fields)
        return dataclasses.replace(base, **top)
    except ValueError as exc:
        raise RangeError(str(exc)) from None


def _usage_epilog() -> str:
    lines = ["config keys (key = default):"]
    lines += [f"  {k} = {v}" for k, v in config_values(ExperimentConfig()).items()]
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# CSV


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.6g}"


def _exact(v) -> str:
    # shortest text that reads back to the same float, so report reprints the table exactly
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def trials_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(TRIAL_HEADER)
    for r in records:
        x1 = r.x1 or (None, None)
        x3 = r.x3 or (None, None)
        w.writerow([
            r.trial_id, _num(r.path_length), r.planner, r.branch, int(r.success),
            _num(r.expected_cost), _num(r.realized_cost),
            _num(r.troi_x), _num(r.troi_y), _num(r.r_w), _num(r.mpoi_x), _num(r.mpoi_y),
            _num(x1[0]), _num(x1[1]), _num(x3[0]), _num(x3[1]),
        ])
    return buf.getvalue()


def metrics_csv(table: MetricsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(METRICS_HEADER)
    for p in PLANNERS:
        w.writerow([p, "all", _exact(table.pooled_success[p]), ""])
        for L in table.path_lengths:
            w.writerow([p, _num(L), _exact(table.success_rate[(p, L)]), _exact(table.avg_cost[(p, L)])])
    for L in table.path_lengths:
        w.writerow(["eta_bc", _num(L), "", _exact(table.eta_bc[L])])
    return buf.getvalue()


def read_metrics(text: str) -> MetricsTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != METRICS_HEADER:
        raise ConfigError("metrics.csv has an unexpected header")
    success, avg, eta, pooled, lengths = {}, {}, {}, {}, []
    for planner, L, s, c in rows[1:]:
        if planner == "eta_bc":
            eta[float(L)] = float(c)
        elif L == "all":
            pooled[planner] = float(s)
        else:
            Lf = float(L)
            if Lf not in lengths:
                lengths.append(Lf)
            success[(planner, Lf)] = float(s)
            avg[(planner, Lf)] = float(c) if c else math.nan
    return MetricsTable(tuple(lengths), success, avg, eta, pooled)


# ----------------------------------------------------------------------------
# commands


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _troi_arg(text: str) -> Troi:
    x, y, r = _floats(text) if text.count(",") == 2 else (None, None, None)
    if x is None:
        raise _UsageError(f"--troi expects x,y,r, got {text!r}")
    return Troi((x, y), r)


def _xy_arg(text: str, flag: str, n: int = 2) -> tuple[float, ...]:
    try:
        v = _floats(text)
    except ValueError:
        v = ()
    if len(v) != n:
        raise _UsageError(f"{flag} expects {n} comma-separated numbers, got {text!r}")
    return v


def _fmt_annulus(name, a) -> str:
    if a.empty:
        return f"{name}: empty"
    return f"{name}: {a.center[0]:.6g} {a.center[1]:.6g} {a.r_inner:.6g} {a.r_outer:.6g}"


def cmd_regions(args, out) -> int:
    cfg = _load(args.config)
    pc = cfg.planner_config()
    troi = _troi_arg(args.troi)
    regions = SceneRegions.compute(troi, pc)
    print(_fmt_annulus("R_o", regions.ro), file=out)
    print(_fmt_annulus("R_m", regions.rm_shape.at(troi.center)), file=out)
    return EXIT_OK


def cmd_classify(args, out) -> int:
    cfg = _load(args.config)
    pc = cfg.planner_config()
    troi = _troi_arg(args.troi)
    target = _xy_arg(args.mpoi, "--mpoi") if args.mpoi else troi.center
    regions = SceneRegions.compute(troi, pc)
    rm = compute_rm(target, pc.arm, pc.task, pc.search, pc.body_height)
    print(classify_problem_type(regions.ro, rm, bool(troi.contains(target))).value, file=out)
    return EXIT_OK


def cmd_plan(args, out) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    pc = cfg.planner_config()
    troi = _troi_arg(args.troi)
    sx, sy, ex, ey = _xy_arg(args.scene, "--scene", 4)
    mpoi = Mpoi(_xy_arg(args.mpoi, "--mpoi") if args.mpoi else troi.center)
    scene = TrialScene(BodyPose(sx, sy), BodyPose(ex, ey), troi, mpoi)
    plan = execute_trial(args.planner, scene, pc, saa_stream(cfg, 0, 0))
    for s in plan.states:
        b = s.body
        fields = [str(s.time_index), s.kind.value, f"{b.x:.6g}", f"{b.y:.6g}", f"{b.yaw:.6g}"]
        if s.ee is not None:
            fields += [f"{v:.6g}" for v in s.ee.pos]
        print(", ".join(fields), file=out)
    p_txt = "" if plan.p_upper is None else f" p_upper={plan.p_upper:.6g}"
    print(
        f"# branch={plan.branch.value} expected_cost={plan.expected_cost:.6g} "
        f"realized_cost={plan.realized_cost:.6g} success={int(plan.success)}{p_txt}",
        file=out,
    )
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    if args.trials is not None:
        cfg = dataclasses.replace(cfg, n_trials=args.trials)
    records = run_trials(cfg, args.workers)
    table = aggregate(records, cfg.path_lengths)
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "trials.csv").write_text(trials_csv(records), newline="")
    (dest / "metrics.csv").write_text(metrics_csv(table), newline="")
    if table.failures:
        print(f"{len(table.failures)} planner runs failed; see trials.csv rows with empty costs", file=sys.stderr)
    print(format_table(table), file=out)
    return EXIT_OK


def cmd_report(args, out) -> int:
    path = Path(args.inp) / "metrics.csv"
    try:
        text = path.read_text()
    except OSError as exc:
        raise CapmError(f"cannot read {path}: {exc}") from None
    print(format_table(read_metrics(text)), file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="capm", description="Coupled active perception and manipulation planning.",
                     epilog=_usage_epilog(), formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, fn):
        p = sub.add_parser(name, help=help_, epilog=_usage_epilog(), formatter_class=fmt)
        p.set_defaults(fn=fn)
        return p

    p = add("regions", "print the observation and manipulation annuli of a TROI", cmd_regions)
    p.add_argument("--config")
    p.add_argument("--troi", required=True, help="x,y,r")

    p = add("classify", "print the problem type of a TROI / MPOI pair", cmd_classify)
    p.add_argument("--config")
    p.add_argument("--troi", required=True, help="x,y,r")
    p.add_argument("--mpoi", help="x,y (default: TROI center)")

    p = add("plan", "plan and execute one scene, printing the key states", cmd_plan)
    p.add_argument("--config")
    p.add_argument("--planner", required=True, choices=PLANNERS)
    p.add_argument("--scene", required=True, help="start_x,start_y,end_x,end_y")
    p.add_argument("--troi", required=True, help="x,y,r")
    p.add_argument("--mpoi", help="x,y (default: TROI center)")
    p.add_argument("--seed", type=int)

    p = add("simulate", "run the Monte Carlo experiment and write trials.csv and metrics.csv", cmd_simulate)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, help="override n_trials")
    p.add_argument("--workers", type=int, default=1)

    p = add("report", "print the summary table stored in a simulate output directory", cmd_report)
    p.add_argument("--in", dest="inp", required=True)
    return parser


def run_cli(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"capm: usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args, out)
    except _UsageError as exc:
        print(f"capm: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"capm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapmError, ValueError, OSError) as exc:
        print(f"capm: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_cli())
