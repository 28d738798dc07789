"""Locations, survey paths, feature identifiers and the candidate grid."""

import math
import re
from dataclasses import dataclass, field

import numpy as np

WIFI = "wifi-bssid"
MAG_MAGNITUDE = "magnetic-magnitude"
MAG_Z = "magnetic-z"
FEATURE_KINDS = (WIFI, MAG_MAGNITUDE, MAG_Z)

RSS_MIN_DBM = -100.0
RSS_MAX_DBM = 0.0

_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")


@dataclass(frozen=True)
class Location:
    """A point on the floor plan, in meters."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite location ({self.x}, {self.y})")

    def distance(self, other):
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class PathSegment:
    """A straight survey path with surveyed endpoints."""

    start: Location
    end: Location

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("path endpoints coincide")

    @property
    def length(self):
        return self.start.distance(self.end)

    def reversed(self):
        return PathSegment(self.end, self.start)


def point_along(path, fraction):
    """Location a given fraction of the way from ``path.start`` to ``path.end``.

    The endpoints are returned exactly for fractions 0 and 1.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    if fraction == 0.0:
        return path.start
    if fraction == 1.0:
        return path.end
    s, e = path.start, path.end
    return Location(s.x + fraction * (e.x - s.x), s.y + fraction * (e.y - s.y))


def points_along(path, fractions):
    """Vectorised :func:`point_along` returning an (n, 2) array."""
    f = np.asarray(fractions, dtype=np.float64)
    if f.size and (f.min() < 0.0 or f.max() > 1.0):
        raise ValueError("fractions outside [0, 1]")
    s = path.start.as_array()
    e = path.end.as_array()
    out = s[None, :] + f[:, None] * (e - s)[None, :]
    out[f == 1.0] = e
    return out


@dataclass(frozen=True, order=True)
class FeatureId:
    """One fingerprint dimension: a WiFi BSSID or one of the two magnetic features."""

    kind: str
    id: str

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == WIFI:
            mac = self.id.lower()
            if not _MAC_RE.match(mac):
                raise ValueError(f"not a 48-bit MAC address: {self.id!r}")
            object.__setattr__(self, "id", mac)

    @classmethod
    def wifi(cls, bssid):
        return cls(WIFI, bssid)

    @property
    def is_wifi(self):
        return self.kind == WIFI

    @property
    def key(self):
        return f"{self.kind}/{self.id}"

    def __str__(self):
        return self.id if self.is_wifi else self.kind


MAGNITUDE_FEATURE = FeatureId(MAG_MAGNITUDE, "magnitude")
Z_FEATURE = FeatureId(MAG_Z, "z")


def magnetic_feature(kind):
    return {MAG_MAGNITUDE: MAGNITUDE_FEATURE, MAG_Z: Z_FEATURE}[kind]


def make_feature(kind, ident):
    if kind == WIFI:
        return FeatureId(WIFI, ident)
    return magnetic_feature(kind)


@dataclass(frozen=True)
class TaggedObservation:
    """A single (feature, value, inferred location) training triple."""

    feature: FeatureId
    value: float
    location: Location
    scan_id: int = -1

    def __post_init__(self):
        if self.feature.is_wifi and not RSS_MIN_DBM <= self.value <= RSS_MAX_DBM:
            raise ValueError(f"RSS {self.value} dBm outside [{RSS_MIN_DBM}, {RSS_MAX_DBM}]")


def points_in_polygon(points, polygon):
    """Even-odd ray casting test for an (n, 2) array against a vertex list."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    poly = np.asarray(polygon, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    xj, yj = poly[-1]
    for xi, yi in poly:
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < x_at)
        xj, yj = xi, yi
    return inside


def _cells(extent, resolution):
    # tolerate 3.0 / 0.1 == 30.000000000000004
    return int(math.ceil(extent / resolution - 1e-9))


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Regular grid of square cells; walkable cell centers form the candidate set.

    Cells are addressed by (row, col) with a row-major linear index
    ``row * n_cols + col``; rows grow with y, columns with x.
    """

    origin: Location
    resolution: float
    n_cols: int
    n_rows: int
    walkable_mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("grid resolution must be positive")
        mask = np.array(self.walkable_mask, dtype=bool).reshape(self.n_rows, self.n_cols)
        mask.setflags(write=False)
        object.__setattr__(self, "walkable_mask", mask)

    @property
    def n_cells(self):
        return self.n_rows * self.n_cols

    @property
    def bounds(self):
        o = self.origin
        return (o.x, o.y, o.x + self.n_cols * self.resolution, o.y + self.n_rows * self.resolution)

    def cell_centers(self):
        """All cell centers, (n_cells, 2), in linear-index order."""
        r = self.resolution
        xs = self.origin.x + (np.arange(self.n_cols) + 0.5) * r
        ys = self.origin.y + (np.arange(self.n_rows) + 0.5) * r
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def candidate_indices(self):
        """Linear indices of walkable cells, ascending."""
        return np.flatnonzero(self.walkable_mask.ravel())

    def candidates(self):
        """Walkable cell centers in candidate order."""
        return self.cell_centers()[self.candidate_indices()]

    def cell_center(self, index):
        row, col = divmod(int(index), self.n_cols)
        r = self.resolution
        return Location(self.origin.x + (col + 0.5) * r, self.origin.y + (row + 0.5) * r)

    def cell_of(self, points):
        """Linear index of the cell containing each point, -1 outside the grid."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        col = np.floor((pts[:, 0] - self.origin.x) / self.resolution).astype(int)
        row = np.floor((pts[:, 1] - self.origin.y) / self.resolution).astype(int)
        ok = (col >= 0) & (col < self.n_cols) & (row >= 0) & (row < self.n_rows)
        return np.where(ok, row * self.n_cols + col, -1)

    def is_walkable(self, points):
        idx = self.cell_of(points)
        flat = self.walkable_mask.ravel()
        return (idx >= 0) & flat[np.maximum(idx, 0)]

    def contains(self, points, tol=1e-9):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        x0, y0, x1, y1 = self.bounds
        return ((pts[:, 0] >= x0 - tol) & (pts[:, 0] <= x1 + tol)
                & (pts[:, 1] >= y0 - tol) & (pts[:, 1] <= y1 + tol))

    def subsample(self, stride_m):
        """Walkable candidate indices restricted to every k-th row and column."""
        k = max(1, int(round(stride_m / self.resolution)))
        rows, cols = np.divmod(self.candidate_indices(), self.n_cols)
        keep = (rows % k == k // 2) & (cols % k == k // 2)
        if not keep.any():
            return self.candidate_indices()
        return self.candidate_indices()[keep]

    def to_dict(self):
        return {
            "origin": [self.origin.x, self.origin.y],
            "resolution": self.resolution,
            "n_cols": self.n_cols,
            "n_rows": self.n_rows,
            "walkable": ["".join("1" if b else "0" for b in row) for row in self.walkable_mask],
        }

    @classmethod
    def from_dict(cls, d):
        mask = np.array([[c == "1" for c in row] for row in d["walkable"]], dtype=bool)
        return cls(Location(*d["origin"]), float(d["resolution"]), int(d["n_cols"]),
                   int(d["n_rows"]), mask.reshape(int(d["n_rows"]), int(d["n_cols"])))

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (self.origin == other.origin and self.resolution == other.resolution
                and self.n_cols == other.n_cols and self.n_rows == other.n_rows
                and np.array_equal(self.walkable_mask, other.walkable_mask))

    __hash__ = None


def build_grid(bounds, resolution=0.1, mask_polygon=None):
    """Tile ``bounds = (xmin, ymin, xmax, ymax)`` with square cells.

    Cells whose centers fall outside ``mask_polygon`` are not walkable; with
    no polygon every cell is.
    """
    xmin, ymin, xmax, ymax = map(float, bounds)
    width, height = xmax - xmin, ymax - ymin
    if not (width > 0 and height > 0):
        raise ValueError(f"degenerate bounds {bounds}")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if resolution > width or resolution > height:
        raise ValueError(f"resolution {resolution} exceeds the bounds")
    n_cols, n_rows = _cells(width, resolution), _cells(height, resolution)
    mask = np.ones((n_rows, n_cols), dtype=bool)
    grid = GridSpec(Location(xmin, ymin), float(resolution), n_cols, n_rows, mask)
    if mask_polygon is not None:
        inside = points_in_polygon(grid.cell_centers(), mask_polygon)
        grid = GridSpec(grid.origin, grid.resolution, n_cols, n_rows, inside.reshape(n_rows, n_cols))
    return grid
