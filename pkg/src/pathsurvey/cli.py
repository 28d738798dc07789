"""``pathsurvey`` command-line front end.

Every subcommand prints a one-line JSON summary on stdout (``recommend-speed``
prints the bare number) and, on failure, a JSON error object on stderr with
a nonzero exit status.
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import formats as fm
from .config import ConfigError, PipelineConfig, load_config
from .fingerprint import POINT_BASED, PATH_BASED, TrainingError, TrainingSet, train_map
from .geometry import build_grid
from .localize import NoFixError, evaluate, localize
from .selection import MODES, select_bssids
from .simulate import (REFERENCE_SURVEYS, SPEEDS_MPS, EnvironmentSpec, SurveyPlan,
                       corridor_environment, corridor_paths, marker_lattice, random_test_points,
                       recommend_speed, reference_cost, simulate_queries, survey_cost)
from .steps import detect_steps
from .tagging import SPEED, STRIDE, TaggingError, TaggingReport, tag_walk
from .geometry import Location, PathSegment

EXIT_USAGE = 2
EXIT_DATA = 1

_METHOD_ALIASES = {"speed": SPEED, "stride": STRIDE, SPEED: SPEED, STRIDE: STRIDE}


class CliError(Exception):
    def __init__(self, message, code=EXIT_DATA, kind="error"):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, EXIT_USAGE, "usage")


def _out(obj):
    print(json.dumps(obj, sort_keys=True))


def _config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    over = {
        "seed": getattr(args, "seed", None),
        "variant": getattr(args, "variant", None),
        "tagging": _METHOD_ALIASES.get(getattr(args, "method", None)),
        "grid.resolution": getattr(args, "resolution", None),
        "detector.theta_time_ms": getattr(args, "theta_time", None),
        "detector.theta_mag": getattr(args, "theta_mag", None),
        "detector.cutoff_hz": getattr(args, "cutoff", None),
        "gp.restarts": getattr(args, "restarts", None),
        "gp.seed": getattr(args, "gp_seed", None),
        "selection.theta_sigma": getattr(args, "theta_sigma", None),
        "selection.theta_rss": getattr(args, "theta_rss", None),
        "selection.theta_num": getattr(args, "theta_num", None),
        "selection.mode": getattr(args, "mode", None),
    }
    return cfg.with_overrides(over)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _speed(value):
    if value in SPEEDS_MPS:
        return SPEEDS_MPS[value]
    try:
        v = float(value)
    except ValueError:
        raise CliError(f"speed must be one of {sorted(SPEEDS_MPS)} or a number in m/s", EXIT_USAGE,
                       "usage") from None
    return v


def cmd_simulate(args):
    from .pipeline import simulate_path_survey, simulate_point_survey

    cfg = _config(args)
    seed = cfg.seed
    env = corridor_environment(args.length, args.width, args.n_aps, seed=seed,
                               shadow_sigma=args.shadow_sigma)
    os.makedirs(args.out_dir, exist_ok=True)
    p = lambda name: os.path.join(args.out_dir, name)  # noqa: E731
    fm.write_json(p("environment.json"), env.to_dict())
    if args.survey == "path":
        plan = SurveyPlan(mode=PATH_BASED, speed_mps=_speed(args.speed),
                          speed_modulation=args.modulation)
        paths = corridor_paths(env, n_lanes=args.lanes)
        sims = simulate_path_survey(env, paths, plan, seed)
        fm.write_sensor_log(p("survey.jsonl"), [fm.recording_from_sim(s) for s in sims])
        rows = [(i, repr(e.t), e.feature.kind, e.feature.id, repr(xy[0]), repr(xy[1]))
                for i, s in enumerate(sims) for e, xy in zip(s.record.raw_events, s.truth.tolist())]
        fm.write_csv(p("event_truth.csv"), fm.EVENT_TRUTH_HEADER, rows)
        fm.write_steps(p("true_steps.csv"), [s.true_steps.tolist() for s in sims])
        n_rec = len(sims)
    else:
        plan = SurveyPlan(mode=POINT_BASED, scans_per_point=args.scans)
        sims = simulate_point_survey(env, marker_lattice(env, args.marker_spacing), plan, seed)
        fm.write_sensor_log(p("survey.jsonl"), [fm.recording_from_sim(s) for s in sims])
        n_rec = len(sims)
    rng = np.random.default_rng([seed, 0x7e57])
    pts = random_test_points(env, args.n_queries, rng)
    qs = simulate_queries(env, pts, SurveyPlan(), rng)
    fm.write_queries(p("queries.csv"), [q for q, _ in qs])
    fm.write_truth(p("queries_truth.csv"), pts)
    _out({"command": "simulate", "survey": args.survey, "recordings": n_rec,
          "queries": len(qs), "out_dir": args.out_dir})


def _read_log(path):
    rep = fm.LogReadReport()
    recs = fm.read_sensor_log(path, rep)
    if not recs:
        raise CliError(f"{path}: no recordings", EXIT_DATA, "format")
    return recs, rep


def cmd_detect_steps(args):
    cfg = _config(args)
    recs, _ = _read_log(args.log)
    steps = []
    for r in recs:
        if r.kind != "walk":
            steps.append([])
            continue
        t, a = r.accel_arrays()
        steps.append(list(detect_steps(t, a, cfg.detector).timestamps))
    fm.write_steps(args.out, steps)
    _out({"command": "detect-steps", "walks": sum(r.kind == "walk" for r in recs),
          "steps": [len(s) for s in steps]})


def cmd_tag(args):
    cfg = _config(args)
    recs, rep_log = _read_log(args.log)
    steps = fm.read_steps(args.steps, len(recs)) if args.steps else None
    rep = TaggingReport()
    obs = []
    n_point = 0
    for i, r in enumerate(recs):
        if r.kind == "point":
            point_obs = r.point_observations()
            n_point += len(point_obs)
            obs += point_obs
            continue
        if steps is not None:
            s = steps[i]
        else:
            t, a = r.accel_arrays()
            s = detect_steps(t, a, cfg.detector).timestamps
        obs += tag_walk(r.walk_record(s), cfg.tagging, rep)
    kinds = {r.kind for r in recs}
    if args.average or (args.average is None and kinds == {"point"}):
        obs = TrainingSet(obs).averaged().observations
    fm.write_tagged(args.out, obs)
    _out({"command": "tag", "method": cfg.tagging, "observations": len(obs),
          "rejected_rss": rep_log.rejected_rss, "accepted": rep.accepted,
          "clamped": rep.clamped, "rejected": rep.rejected, "point_readings": n_point})


def _grid(args, cfg):
    if args.env:
        env = EnvironmentSpec.from_dict(fm.read_json(args.env))
        return env.grid(cfg.grid.resolution)
    if args.bounds:
        try:
            b = [float(v) for v in args.bounds.split(",")]
        except ValueError:
            b = []
        if len(b) != 4:
            raise CliError("--bounds takes x0,y0,x1,y1", EXIT_USAGE, "usage")
        return build_grid(tuple(b), cfg.grid.resolution)
    raise CliError("train needs --env or --bounds", EXIT_USAGE, "usage")


def cmd_train(args):
    cfg = _config(args)
    obs = fm.read_tagged(args.tagged)
    if not obs:
        raise CliError(f"{args.tagged}: no observations", EXIT_DATA, "format")
    grid = _grid(args, cfg)
    fmap = train_map(TrainingSet(obs), grid, cfg.variant, cfg.gp, cfg.imputation)
    fm.write_map(args.out, fmap)
    if args.grid_dir:
        for f in fmap.features:
            mean, var = fmap.grid_predict(f)
            name = f.key.replace("/", "_").replace(":", "")
            fm.write_grid_csv(os.path.join(args.grid_dir, f"{name}.csv"), grid, mean, var)
    _out({"command": "train", "features": len(fmap.features),
          "dropped": sorted(str(f) for f, r in fmap.report.items() if r.status == "dropped"),
          "cells": int(grid.candidate_indices().size)})


def cmd_select_aps(args):
    cfg = _config(args)
    fmap = fm.read_map(args.map)
    res = select_bssids(fmap, cfg.selection)
    fm.write_selection(args.out, res)
    _out({"command": "select-aps", "retained": len(res.retained), "removed": len(res.removed)})


def _valid(args, fmap):
    return fm.read_selection(args.selection) if args.selection else fmap.wifi_features


def cmd_localize(args):
    fmap = fm.read_map(args.map)
    valid = _valid(args, fmap)
    queries = fm.read_queries(args.queries)
    rows = []
    nofix = 0
    for qid, q in queries.items():
        try:
            r = localize(fmap, valid, q, keep_surface=bool(args.loglik_dir))
        except NoFixError:
            nofix += 1
            rows.append((qid, "no-fix", "", "", "", "", 0))
            continue
        rows.append((qid, "ok", repr(r.estimate.x), repr(r.estimate.y), r.cell_index,
                     repr(r.log_likelihood), len(r.used_features)))
        if args.loglik_dir:
            c = fmap.grid.candidates()
            fm.write_csv(os.path.join(args.loglik_dir, f"query_{qid}.csv"), ["x_m", "y_m", "loglik"],
                         [(repr(x), repr(y), repr(v))
                          for (x, y), v in zip(c.tolist(), r.per_cell_loglik.tolist())])
    fm.write_csv(args.out, fm.RESULT_HEADER, rows)
    _out({"command": "localize", "queries": len(queries), "no_fix": nofix})


def cmd_evaluate(args):
    fmap = fm.read_map(args.map)
    valid = _valid(args, fmap)
    queries = fm.read_queries(args.queries)
    truth = fm.read_truth(args.truth)
    missing = sorted(set(queries) - set(truth))
    if missing:
        raise CliError(f"no ground truth for queries {missing[:5]}", EXIT_DATA, "format")
    stats = evaluate(fmap, valid, [(queries[q], truth[q]) for q in queries])
    summary = {k: (None if isinstance(v, float) and math.isnan(v) else v)
               for k, v in stats.summary().items()}
    fm.write_json(args.out, summary)
    if args.cdf:
        fm.write_csv(args.cdf, fm.CDF_HEADER, [(repr(e), repr(c)) for e, c in stats.cdf()])
    _out({"command": "evaluate", **summary})


def cmd_survey_cost(args):
    if args.reference:
        rows = REFERENCE_SURVEYS if args.reference == "all" else {args.reference: None}
        out = {}
        for name in rows:
            c = reference_cost(name)
            out[name] = {"setup_min": c.setup_min, "collection_min": round(c.collection_min, 9),
                         "total_min": round(c.total_min, 9)}
        if args.reference == "all":
            out["speedup_point30_vs_path_normal"] = round(
                out["point-30scans"]["total_min"] / out["path-normal"]["total_min"], 2)
        _out(out)
        return
    if args.setup_minutes is None:
        raise CliError("--setup-minutes is required without --reference", EXIT_USAGE, "usage")
    origin = Location(0.0, 0.0)
    if args.mode == "point":
        plan = SurveyPlan(mode=POINT_BASED, points=(origin,) * args.points,
                          scans_per_point=args.scans)
        c = survey_cost(plan, args.setup_minutes, per_point_seconds=args.per_point_seconds,
                        scan_seconds=args.scan_seconds)
    else:
        seg = PathSegment(origin, Location(max(args.path_length, 1e-9), 0.0))
        plan = SurveyPlan(mode=PATH_BASED, paths=(seg,) * args.paths,
                          speed_mps=_speed(args.speed))
        c = survey_cost(plan, args.setup_minutes, per_path_minutes=args.per_path_minutes)
    _out({"setup_min": c.setup_min, "collection_min": c.collection_min, "total_min": c.total_min})


def cmd_recommend_speed(args):
    print(f"{recommend_speed(args.scan_ms):.2f}")


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="pathsurvey", description="Path-based fingerprint survey toolkit.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp):
        sp.add_argument("--config", help="YAML/JSON pipeline config; flags override it")
        sp.add_argument("--seed", type=int)

    s = sub.add_parser("simulate", help="simulate a corridor survey plus test queries")
    common(s)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--survey", choices=("path", "point"), default="path")
    s.add_argument("--length", type=float, default=50.0)
    s.add_argument("--width", type=float, default=3.0)
    s.add_argument("--n-aps", type=int, default=12)
    s.add_argument("--shadow-sigma", type=float, default=4.0)
    s.add_argument("--speed", default="normal", help="slow|normal|fast or m/s")
    s.add_argument("--modulation", type=float, default=0.0, help="fractional speed modulation")
    s.add_argument("--lanes", type=int, default=2)
    s.add_argument("--scans", type=int, default=30)
    s.add_argument("--marker-spacing", type=float, default=1.2)
    s.add_argument("--n-queries", type=int, default=100)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("detect-steps", help="detect step events in a sensor log")
    common(s)
    s.add_argument("--log", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--theta-time", type=float, help="ms")
    s.add_argument("--theta-mag", type=float, help="m/s^2")
    s.add_argument("--cutoff", type=float, help="low-pass cutoff, Hz")
    s.set_defaults(func=cmd_detect_steps)

    s = sub.add_parser("tag", help="location-tag the events of a sensor log")
    common(s)
    s.add_argument("--log", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", help="steps CSV; detected from the log when omitted")
    s.add_argument("--method", choices=sorted(_METHOD_ALIASES))
    s.add_argument("--average", action=argparse.BooleanOptionalAction, default=None,
                   help="average repeated readings per location (default: point logs only)")
    s.add_argument("--theta-time", type=float)
    s.add_argument("--theta-mag", type=float)
    s.add_argument("--cutoff", type=float)
    s.set_defaults(func=cmd_tag)

    s = sub.add_parser("train", help="fit per-feature GPs and write a map")
    common(s)
    s.add_argument("--tagged", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--env", help="environment JSON (bounds and walkable polygon)")
    s.add_argument("--bounds", help="x0,y0,x1,y1 when no environment file is given")
    s.add_argument("--resolution", type=float)
    s.add_argument("--variant", choices=("wifi", "wifi+magnetic1", "wifi+magnetic2"))
    s.add_argument("--restarts", type=int)
    s.add_argument("--gp-seed", type=int)
    s.add_argument("--grid-dir", help="write per-feature mean/variance grid CSVs here")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("select-aps", help="screen WiFi features of a map")
    common(s)
    s.add_argument("--map", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--theta-sigma", type=float, help="noise variance threshold, dBm^2")
    s.add_argument("--theta-rss", type=float, help="dBm")
    s.add_argument("--theta-num", type=int)
    s.add_argument("--mode", choices=MODES)
    s.set_defaults(func=cmd_select_aps)

    s = sub.add_parser("localize", help="localize a batch of queries")
    common(s)
    s.add_argument("--map", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--selection", help="selection CSV; all WiFi features when omitted")
    s.add_argument("--loglik-dir", help="dump per-cell log-likelihood grids here")
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("evaluate", help="localization error statistics against ground truth")
    common(s)
    s.add_argument("--map", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--selection")
    s.add_argument("--cdf", help="error CDF CSV")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("survey-cost", help="survey time in minutes")
    s.add_argument("--reference", choices=sorted(REFERENCE_SURVEYS) + ["all"])
    s.add_argument("--mode", choices=("point", "path"), default="point")
    s.add_argument("--setup-minutes", type=float)
    s.add_argument("--points", type=int, default=0)
    s.add_argument("--scans", type=int, default=30)
    s.add_argument("--per-point-seconds", type=float)
    s.add_argument("--scan-seconds", type=float)
    s.add_argument("--paths", type=int, default=0, help="number of traversals")
    s.add_argument("--path-length", type=float, default=1.0)
    s.add_argument("--per-path-minutes", type=float)
    s.add_argument("--speed", default="normal")
    s.set_defaults(func=cmd_survey_cost)

    s = sub.add_parser("recommend-speed", help="fastest step rate for a WiFi scan time")
    s.add_argument("--scan-ms", type=float, required=True)
    s.set_defaults(func=cmd_recommend_speed)
    return p


def _error(kind, message, code, **extra):
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return code


def run_command(argv):
    """Run one subcommand; returns the process exit status."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper())
        args.func(args)
        return 0
    except CliError as e:
        return _error(e.kind, str(e), e.code)
    except fm.SchemaVersionError as e:
        return _error("schema-version", str(e), EXIT_DATA, file=e.path, line=e.line)
    except fm.FormatError as e:
        return _error("format", e.message, EXIT_DATA, file=e.path, line=e.line)
    except ConfigError as e:
        return _error("config", str(e), EXIT_USAGE)
    except TaggingError as e:
        return _error("tagging", str(e), EXIT_DATA)
    except (TrainingError, NoFixError) as e:
        return _error(type(e).__name__, str(e), EXIT_DATA)
    except FileNotFoundError as e:
        return _error("file-not-found", f"{e.filename}: {e.strerror}", EXIT_DATA)
    except ValueError as e:
        return _error("invalid-input", str(e), EXIT_DATA)


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
