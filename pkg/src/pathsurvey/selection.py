"""BSSID selection: screen WiFi features by fitted noise, keep those needed for coverage."""

from dataclasses import dataclass

import numpy as np

LITERAL = "literal"
WITHOUT_CANDIDATE = "coverage-without-candidate"
MODES = (LITERAL, WITHOUT_CANDIDATE)


@dataclass(frozen=True)
class SelectionConfig:
    """Thresholds for the selection pass.

    ``theta_sigma`` is a noise variance (dBm^2), ``theta_rss`` a predicted
    mean RSS (dBm) and ``theta_num`` the number of "good" features a cell
    should see.  ``eval_stride_m`` thins the candidate grid for the coverage
    test; ``None`` evaluates every walkable cell.
    """

    theta_sigma: float = 25.0
    theta_rss: float = -75.0
    theta_num: int = 6
    mode: str = LITERAL
    eval_stride_m: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if not -100.0 <= self.theta_rss <= 0.0:
            raise ValueError("theta_rss must lie in [-100, 0] dBm")
        if self.theta_num < 0:
            raise ValueError("theta_num must be non-negative")


@dataclass(frozen=True)
class SelectionResult:
    retained: list
    removed: list
    noise_variance: dict
    reasons: dict


def select_from_surfaces(features, noise_variances, means, config):
    """Run the selection on precomputed predicted-mean surfaces.

    ``means`` is (n_features, n_cells), rows aligned with ``features``.
    Candidates are visited by descending noise variance (ties by feature);
    the retained list keeps the input order.
    """
    features = list(features)
    if not features:
        raise ValueError("no WiFi features to select from")
    sn2 = np.asarray(noise_variances, dtype=np.float64)
    good = np.asarray(means, dtype=np.float64) >= config.theta_rss
    valid = np.ones(len(features), dtype=bool)
    reasons = {}
    order = sorted(range(len(features)), key=lambda i: (-sn2[i], features[i]))
    for i in order:
        f = features[i]
        if sn2[i] <= config.theta_sigma:
            reasons[f] = "noise below threshold"
            continue
        counted = valid.copy()
        if config.mode == WITHOUT_CANDIDATE:
            counted[i] = False
        counts = good[counted].sum(axis=0)
        if np.any(counts < config.theta_num):
            reasons[f] = "needed for coverage"
        else:
            valid[i] = False
            reasons[f] = "noisy and coverage satisfied"
    retained = [f for f, v in zip(features, valid) if v]
    removed = [f for f, v in zip(features, valid) if not v]
    return SelectionResult(retained, removed, dict(zip(features, sn2.tolist())), reasons)


def select_bssids(fmap, config=None, cell_indices=None):
    """Select WiFi features of ``fmap`` worth using for localization.

    Coverage is judged on the map's walkable cells, thinned by
    ``config.eval_stride_m`` unless explicit ``cell_indices`` are given.
    """
    config = config or SelectionConfig()
    features = fmap.wifi_features
    if not features:
        raise ValueError("map has no WiFi models")
    if cell_indices is None:
        if config.eval_stride_m is None:
            cell_indices = fmap.grid.candidate_indices()
        else:
            cell_indices = fmap.grid.subsample(config.eval_stride_m)
    means = np.vstack([fmap.predict_cells(f, cell_indices)[0] for f in features])
    sn2 = [fmap.noise_variance(f) for f in features]
    return select_from_surfaces(features, sn2, means, config)
