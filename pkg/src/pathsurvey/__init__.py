"""Path-based WiFi/magnetic fingerprint surveys with per-feature GP maps."""

from .fingerprint import (GPConfig, FingerprintMap, ImputationConfig, TrainingSet, impute_missing,
                          train_map)
from .geometry import (FeatureId, GridSpec, Location, PathSegment, TaggedObservation, build_grid,
                       point_along)
from .gp import GPModel, HyperBounds, Hyperparams, fit_hyperparameters, log_marginal_likelihood
from .kernels import BACKEND
from .localize import LocalizationResult, NoFixError, QueryObservation, evaluate, localize
from .selection import SelectionConfig, select_bssids
from .simulate import (EnvironmentSpec, SurveyPlan, corridor_environment, recommend_speed,
                       sample_rss, simulate_walk, survey_cost)
from .steps import StepDetectorConfig, StepEvents, detect_steps
from .tagging import SPEED, STRIDE, WalkRecord, tag_constant_speed, tag_constant_stride, tag_walk

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EnvironmentSpec", "FeatureId", "FingerprintMap", "GPConfig", "GPModel", "GridSpec",
    "HyperBounds", "Hyperparams", "ImputationConfig", "LocalizationResult", "Location",
    "NoFixError", "PathSegment", "QueryObservation", "SPEED", "STRIDE", "SelectionConfig",
    "StepDetectorConfig", "StepEvents", "SurveyPlan", "TaggedObservation", "TrainingSet",
    "WalkRecord", "build_grid", "corridor_environment", "detect_steps", "evaluate",
    "fit_hyperparameters", "impute_missing", "localize", "log_marginal_likelihood",
    "point_along", "recommend_speed", "sample_rss", "select_bssids", "simulate_walk",
    "survey_cost", "tag_constant_speed", "tag_constant_stride", "tag_walk", "train_map",
]
