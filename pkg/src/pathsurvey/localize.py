"""Maximum-likelihood grid localization against a fingerprint map."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import RSS_MAX_DBM, RSS_MIN_DBM, Location

_LOG2PI = math.log(2.0 * math.pi)


class NoFixError(ValueError):
    """No usable feature for this query: widen the selection or reject it."""


@dataclass(frozen=True)
class QueryObservation:
    readings: tuple  # ((FeatureId, value), ...), one per feature, sorted

    def __post_init__(self):
        object.__setattr__(self, "readings",
                           tuple(sorted(((f, float(v)) for f, v in self.readings), key=lambda r: r[0])))
        feats = [f for f, _ in self.readings]
        if len(set(feats)) != len(feats):
            raise ValueError("duplicate feature in query; use QueryObservation.from_readings")
        for f, v in self.readings:
            if f.is_wifi and not RSS_MIN_DBM <= v <= RSS_MAX_DBM:
                raise ValueError(f"RSS {v} dBm outside [{RSS_MIN_DBM}, {RSS_MAX_DBM}]")

    @classmethod
    def from_readings(cls, readings):
        """Build a query, averaging repeated scans of the same feature."""
        acc = {}
        for f, v in readings:
            acc.setdefault(f, []).append(float(v))
        return cls(tuple((f, float(np.mean(v))) for f, v in sorted(acc.items())))

    def as_dict(self):
        return dict(self.readings)


@dataclass
class LocalizationResult:
    estimate: Location
    cell_index: int
    log_likelihood: float
    used_features: list
    per_cell_loglik: np.ndarray = None


def log_likelihood_at(fmap, x, feature, value):
    """``log N(value; mean(x), var(x))`` with the feature's predictive moments at ``x``."""
    if feature not in fmap.models:
        raise KeyError(f"feature {feature} is not in the map")
    mean, var = fmap.models[feature].predict_one(x)
    r = value - mean
    return -0.5 * (_LOG2PI + math.log(var)) - 0.5 * r * r / var


def usable_features(fmap, valid_features, query):
    """Valid WiFi features observed in the query, plus the map's magnetic features it carries."""
    observed = query.as_dict()
    valid = set(valid_features)
    wifi = [f for f in fmap.wifi_features if f in valid and f in observed]
    mag = [f for f in fmap.magnetic_features if f in observed]
    return wifi + mag


def _surfaces(fmap, features, grid):
    if grid is None or grid == fmap.grid:
        pairs = [fmap.grid_predict(f) for f in features]
    else:
        centers = grid.candidates()
        pairs = [fmap.models[f].predict(centers) for f in features]
    means = np.vstack([p[0] for p in pairs])
    variances = np.vstack([p[1] for p in pairs])
    return means, variances


def localize(fmap, valid_features, query, grid=None, keep_surface=False):
    """Walkable cell center maximising the summed per-feature log-likelihood.

    Ties go to the lowest row-major cell index.
    """
    grid = grid if grid is not None else fmap.grid
    used = usable_features(fmap, valid_features, query)
    if not used:
        raise NoFixError("no valid feature observed in the query")
    observed = query.as_dict()
    means, variances = _surfaces(fmap, used, grid)
    values = np.array([observed[f] for f in used])
    ll = kernels.gaussian_loglik_sum(values, means, variances)
    best = int(np.argmax(ll))
    cell = int(grid.candidate_indices()[best])
    return LocalizationResult(
        estimate=grid.cell_center(cell),
        cell_index=cell,
        log_likelihood=float(ll[best]),
        used_features=used,
        per_cell_loglik=ll if keep_surface else None,
    )


@dataclass
class EvaluationStats:
    errors: np.ndarray
    n_queries: int
    n_nofix: int

    @property
    def mean(self):
        return float(np.mean(self.errors)) if self.errors.size else math.nan

    @property
    def median(self):
        return float(np.median(self.errors)) if self.errors.size else math.nan

    def percentile(self, q):
        return float(np.percentile(self.errors, q)) if self.errors.size else math.nan

    def cdf(self):
        """Empirical CDF rows ``(error_m, cdf)`` over fixed queries."""
        e = np.sort(self.errors)
        return list(zip(e.tolist(), (np.arange(1, e.size + 1) / e.size).tolist()))

    def summary(self):
        return {
            "n_queries": self.n_queries,
            "n_fixed": int(self.errors.size),
            "n_nofix": self.n_nofix,
            "mean_m": self.mean,
            "median_m": self.median,
            "p25_m": self.percentile(25),
            "p75_m": self.percentile(75),
            "p90_m": self.percentile(90),
            "max_m": float(self.errors.max()) if self.errors.size else math.nan,
        }


def evaluate(fmap, valid_features, tests, grid=None):
    """Localize every ``(query, true_location)`` pair and collect error statistics."""
    tests = list(tests)
    if not tests:
        raise ValueError("empty test set")
    errors = []
    nofix = 0
    for query, truth in tests:
        try:
            res = localize(fmap, valid_features, query, grid)
        except NoFixError:
            nofix += 1
            continue
        errors.append(res.estimate.distance(truth))
    return EvaluationStats(np.asarray(errors, dtype=np.float64), len(tests), nofix)
