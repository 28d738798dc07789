"""End-to-end helpers: simulated surveys to training sets, maps and evaluations."""

from dataclasses import dataclass, field

import numpy as np

from .fingerprint import (POINT_BASED, GPConfig, ImputationConfig, TrainingSet, train_map)
from .geometry import TaggedObservation
from .localize import evaluate
from .selection import SelectionConfig, select_bssids
from .simulate import (DEFAULT_T0_MS, SurveyPlan, random_test_points, simulate_point,
                       simulate_queries, simulate_walk, walk_rng)
from .steps import StepDetectorConfig, detect_steps
from .tagging import STRIDE, TaggingReport, tag_walk

# Gap between consecutive simulated walks/markers on the shared clock.
_GAP_MS = 60_000.0


def simulate_path_survey(env, paths, plan, seed):
    """One walk per path, each with its own RNG stream from ``(seed, index)``."""
    walks = []
    t0 = DEFAULT_T0_MS
    sid = 0
    for i, p in enumerate(paths):
        w = simulate_walk(env, p, plan, walk_rng(seed, i), t0_ms=t0, scan_id_base=sid)
        walks.append(w)
        t0 = w.record.t_end + _GAP_MS
        sid = 1 + max([e[1] for e in w.wifi], default=sid - 1)
    return walks


def simulate_point_survey(env, markers, plan, seed):
    out = []
    t0 = DEFAULT_T0_MS
    for i, loc in enumerate(markers):
        pt = simulate_point(env, loc, plan, walk_rng(seed, i), t0_ms=t0,
                            scan_id_base=i * plan.scans_per_point)
        out.append(pt)
        t0 = pt.t_end + _GAP_MS
    return out


def path_training(walks, method=STRIDE, detector=None, oracle_steps=False, report=None):
    """Detect steps (or use the simulator's), tag every event and pool the walks."""
    detector = detector or StepDetectorConfig()
    obs = []
    for w in walks:
        steps = w.true_steps if oracle_steps else detect_steps(w.accel_t, w.accel, detector)
        obs += tag_walk(w.with_steps(steps), method, report)
    return TrainingSet(obs)


def point_training(points, average=True, magnetic=True):
    """Training set from point surveys; repeated scans averaged per marker by default."""
    scans = [row for p in points for row in p.scans()]
    ts = TrainingSet.from_point_scans(scans)
    if magnetic:
        ts.observations += [TaggedObservation(f, v, p.location, -1)
                            for p in points for f, v in p.magnetic_readings()]
    return ts.averaged() if average else ts


@dataclass
class ExperimentConfig:
    variant: str = "wifi+magnetic2"
    grid_resolution: float = 0.1
    gp: GPConfig = field(default_factory=GPConfig)
    imputation: ImputationConfig = field(default_factory=ImputationConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    n_queries: int = 100


@dataclass
class ExperimentResult:
    fmap: object
    selection: object
    stats: object


def run_experiment(env, training, cfg, seed, query_plan=None):
    """Train, select and evaluate on seeded random test points."""
    grid = env.grid(cfg.grid_resolution)
    fmap = train_map(training, grid, cfg.variant, cfg.gp, cfg.imputation)
    sel = select_bssids(fmap, cfg.selection)
    rng = np.random.default_rng([int(seed), 0x7e57])
    pts = random_test_points(env, cfg.n_queries, rng)
    queries = simulate_queries(env, pts, query_plan or SurveyPlan(), rng,
                               with_magnetic=bool(fmap.magnetic_features))
    stats = evaluate(fmap, sel.retained, queries)
    return ExperimentResult(fmap, sel, stats)


def training_source(training):
    return "point" if training.source == POINT_BASED else "path"


__all__ = ["simulate_path_survey", "simulate_point_survey", "path_training", "point_training",
           "ExperimentConfig", "ExperimentResult", "run_experiment", "TaggingReport"]
