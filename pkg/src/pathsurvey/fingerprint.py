"""Per-feature GP fingerprint maps.

Tagged observations are grouped by feature; WiFi features get floor-value
pseudo-observations wherever the AP was never heard nearby, then one GP is
fitted per feature.  Predictions over the candidate grid are cached on the
map for localization.
"""

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import (MAGNITUDE_FEATURE, Z_FEATURE, FeatureId, GridSpec,
                       Location, TaggedObservation, make_feature)
from .gp import GPModel, HyperBounds, fit_hyperparameters
from .tagging import RawEvent

log = logging.getLogger(__name__)

VARIANTS = ("wifi", "wifi+magnetic1", "wifi+magnetic2")
POINT_BASED = "point-based"
PATH_BASED = "path-based"

SCHEMA_VERSION = 1


class TrainingError(ValueError):
    pass


def variant_magnetic(variant):
    """Magnetic features a pipeline variant uses."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return {"wifi": (), "wifi+magnetic1": (MAGNITUDE_FEATURE,),
            "wifi+magnetic2": (MAGNITUDE_FEATURE, Z_FEATURE)}[variant]


def extract_magnetic_features(mag):
    """Magnitude and absolute device-frame z component of (n, 3) readings in uT."""
    mag = np.asarray(mag, dtype=np.float64).reshape(-1, 3)
    return {
        MAGNITUDE_FEATURE: np.sqrt(np.sum(mag * mag, axis=1)),
        Z_FEATURE: np.abs(mag[:, 2]),
    }


def magnetic_events(t_ms, mag):
    """Raw events (two per magnetometer sample) ready for location tagging."""
    feats = extract_magnetic_features(mag)
    t_ms = np.asarray(t_ms, dtype=np.float64)
    out = []
    for i, t in enumerate(t_ms):
        for f in (MAGNITUDE_FEATURE, Z_FEATURE):
            out.append(RawEvent(float(t), f, float(feats[f][i]), -1))
    return out


@dataclass(frozen=True)
class ImputationConfig:
    enabled: bool = True
    radius_m: float = 6.0
    floor_dbm: float = -93.0
    spacing_m: float = 1.0


def imputation_lattice(grid, spacing):
    """Walkable lattice points with the given spacing, centred in each lattice cell."""
    x0, y0, x1, y1 = grid.bounds
    xs = np.arange(x0 + spacing / 2.0, x1, spacing)
    ys = np.arange(y0 + spacing / 2.0, y1, spacing)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[grid.is_walkable(pts)]


def impute_missing(feature, locations, grid, radius=6.0, floor_value=-93.0, spacing=1.0):
    """Pseudo-observation locations for a WiFi feature; each carries ``floor_value``.

    A lattice point is imputed when no real observation of the feature lies
    within ``radius`` of it.  Returns ``(points (k, 2), values (k,))``.
    """
    if not feature.is_wifi:
        raise ValueError("imputation applies to WiFi features only")
    if not np.isfinite(radius):
        return np.zeros((0, 2)), np.zeros(0)
    lattice = imputation_lattice(grid, spacing)
    real = np.asarray(locations, dtype=np.float64).reshape(-1, 2)
    d = kernels.nearest_distances(lattice, real)
    pts = lattice[d > radius]
    return pts, np.full(len(pts), float(floor_value))


@dataclass
class TrainingSet:
    """Tagged observations from one survey, either point- or path-based."""

    observations: list
    source: str = PATH_BASED

    def __post_init__(self):
        if self.source not in (POINT_BASED, PATH_BASED):
            raise ValueError(f"unknown source {self.source!r}")

    @property
    def features(self):
        return sorted({o.feature for o in self.observations})

    def per_feature(self):
        """``{feature: (X (n, 2), y (n,))}`` in observation order."""
        groups = {}
        for o in self.observations:
            groups.setdefault(o.feature, []).append((o.location.x, o.location.y, o.value))
        out = {}
        for f in sorted(groups):
            a = np.array(groups[f], dtype=np.float64)
            out[f] = (a[:, :2], a[:, 2])
        return out

    @classmethod
    def from_point_scans(cls, scans):
        """Explode per-scan fingerprint vectors into scalar observations.

        ``scans`` holds ``(location, [(feature, value), ...], scan_id)`` rows.
        """
        obs = [TaggedObservation(f, float(v), loc, int(sid))
               for loc, readings, sid in scans for f, v in readings]
        return cls(obs, POINT_BASED)

    def averaged(self):
        """Collapse repeated readings of a feature at one location to their mean."""
        acc = {}
        for o in self.observations:
            key = (o.feature, o.location.x, o.location.y)
            acc.setdefault(key, []).append(o.value)
        obs = [TaggedObservation(f, float(np.mean(v)), Location(x, y), -1)
               for (f, x, y), v in acc.items()]
        return TrainingSet(obs, self.source)

    def without(self, feature):
        return TrainingSet([o for o in self.observations if o.feature != feature], self.source)


@dataclass(frozen=True)
class GPConfig:
    bounds: HyperBounds = field(default_factory=HyperBounds)
    restarts: int = 5
    seed: int = 0
    maxiter: int = 200
    center: bool = True
    n_jobs: int = 1


@dataclass
class FeatureReport:
    feature: FeatureId
    n_real: int = 0
    n_imputed: int = 0
    n_outside: int = 0
    status: str = "trained"
    reason: str = ""
    fit: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.feature.kind, "id": self.feature.id, "n_real": self.n_real,
                "n_imputed": self.n_imputed, "n_outside": self.n_outside,
                "status": self.status, "reason": self.reason, "fit": self.fit}


def feature_rng(seed, feature):
    return np.random.default_rng([int(seed), zlib.crc32(feature.key.encode())])


class FingerprintMap:
    """Trained per-feature GP models over a candidate grid."""

    def __init__(self, models, grid, variant="wifi", report=None):
        self.models = dict(sorted(models.items()))
        self.grid = grid
        self.variant = variant
        self.report = report or {}
        self._cache = {}

    @property
    def features(self):
        return list(self.models)

    @property
    def wifi_features(self):
        return [f for f in self.models if f.is_wifi]

    @property
    def magnetic_features(self):
        return [f for f in self.models if not f.is_wifi]

    def noise_variance(self, feature):
        return self.models[feature].hyper.sigma_n2

    def _model(self, feature):
        try:
            return self.models[feature]
        except KeyError:
            raise KeyError(f"feature {feature} is not in the map") from None

    def grid_predict(self, feature):
        """Predictive (mean, variance) at every walkable cell, candidate order."""
        model = self._model(feature)
        if feature not in self._cache:
            mean, var = model.predict(self.grid.candidates())
            mean.setflags(write=False)
            var.setflags(write=False)
            self._cache[feature] = (mean, var)
        return self._cache[feature]

    def predict_cells(self, feature, cell_indices):
        """Predictions at the given linear cell indices."""
        model = self._model(feature)
        cell_indices = np.asarray(cell_indices)
        if feature in self._cache:
            pos = np.searchsorted(self.grid.candidate_indices(), cell_indices)
            mean, var = self._cache[feature]
            return mean[pos], var[pos]
        return model.predict(self.grid.cell_centers()[cell_indices])

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "variant": self.variant,
            "grid": self.grid.to_dict(),
            "features": [
                {"kind": f.kind, "id": f.id, **m.to_dict()} for f, m in self.models.items()
            ],
            "report": {f"{k.kind}/{k.id}": r.to_dict() for k, r in self.report.items()},
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"map schema_version {version!r} != {SCHEMA_VERSION}")
        grid = GridSpec.from_dict(d["grid"])
        models = {}
        for fd in d["features"]:
            f = make_feature(fd["kind"], fd["id"])
            models[f] = GPModel.from_dict(fd, name=str(f))
        report = {}
        for r in d.get("report", {}).values():
            f = make_feature(r["kind"], r["id"])
            report[f] = FeatureReport(f, r["n_real"], r["n_imputed"], r["n_outside"],
                                      r["status"], r["reason"], r.get("fit", {}))
        return cls(models, grid, d["variant"], report)


def _train_one(feature, X, y, grid, gp_cfg, imp_cfg, min_obs):
    rep = FeatureReport(feature)
    inside = grid.contains(X)
    rep.n_outside = int((~inside).sum())
    X, y = X[inside], y[inside]
    rep.n_real = int(y.size)
    if y.size < min_obs:
        rep.status, rep.reason = "dropped", f"only {y.size} observation(s)"
        return None, rep
    if feature.is_wifi and imp_cfg.enabled:
        P, v = impute_missing(feature, X, grid, imp_cfg.radius_m, imp_cfg.floor_dbm,
                              imp_cfg.spacing_m)
        rep.n_imputed = int(v.size)
        X = np.vstack([X, P])
        y = np.concatenate([y, v])
    fit = fit_hyperparameters(X, y, bounds=gp_cfg.bounds, restarts=gp_cfg.restarts,
                              maxiter=gp_cfg.maxiter, center=gp_cfg.center, name=str(feature),
                              rng=feature_rng(gp_cfg.seed, feature))
    rep.fit = fit.to_dict()
    if not fit.converged:
        log.info("%s: optimizer stopped with |grad| %.2e after %d iterations",
                 feature, fit.grad_inf_norm, fit.n_iter)
    return GPModel(X, y, fit.hyper, center=gp_cfg.center, name=str(feature)), rep


def train_map(training, grid, variant="wifi+magnetic2", gp=None, imputation=None, min_obs=2):
    """Fit one GP per retained feature and assemble the map.

    Features with fewer than ``min_obs`` real observations inside the grid are
    dropped and reported; magnetic features outside the variant are ignored.
    """
    gp = gp or GPConfig()
    imputation = imputation or ImputationConfig()
    wanted_mag = variant_magnetic(variant)
    groups = training.per_feature()
    jobs = [(f, X, y) for f, (X, y) in groups.items() if f.is_wifi or f in wanted_mag]
    report = {}
    for f in wanted_mag:
        if f not in groups:
            report[f] = FeatureReport(f, status="dropped", reason="no observations")

    def run(job):
        f, X, y = job
        return f, _train_one(f, X, y, grid, gp, imputation, min_obs)

    if gp.n_jobs > 1:
        with ThreadPoolExecutor(gp.n_jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    models = {}
    for f, (model, rep) in results:
        report[f] = rep
        if model is not None:
            models[f] = model
    if not models:
        raise TrainingError("no feature has enough observations to train a model")
    return FingerprintMap(models, grid, variant, dict(sorted(report.items())))
