"""On-disk formats: JSONL sensor logs, CSV tables and map JSON.

All writers go through :func:`atomic_write` (temp file in the target
directory, then ``os.replace``), so a crash never leaves a half file.
"""

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .fingerprint import FingerprintMap, magnetic_events
from .geometry import (RSS_MAX_DBM, RSS_MIN_DBM, FeatureId, Location, PathSegment,
                       TaggedObservation, make_feature)
from .localize import QueryObservation
from .steps import StepEvents
from .tagging import RawEvent, WalkRecord

LOG_SCHEMA_VERSION = 1
TAGGED_HEADER = ["feature_kind", "feature_id", "value", "x_m", "y_m", "scan_id"]
STEPS_HEADER = ["walk", "t_ms"]
GRID_HEADER = ["x_m", "y_m", "mean", "variance"]
SELECTION_HEADER = ["feature_id", "sigma_n2", "status", "reason"]
QUERY_HEADER = ["query_id", "feature_kind", "feature_id", "value"]
TRUTH_HEADER = ["query_id", "x_m", "y_m"]
RESULT_HEADER = ["query_id", "status", "x_m", "y_m", "cell_index", "log_likelihood", "n_features"]
EVENT_TRUTH_HEADER = ["walk", "t_ms", "feature_kind", "feature_id", "x_m", "y_m"]
CDF_HEADER = ["error_m", "cdf"]


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = f"{self.path}:{line}: " if line is not None else (f"{self.path}: " if path else "")
        super().__init__(where + message)
        self.message = message


class SchemaVersionError(FormatError):
    pass


def atomic_write(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=1, sort_keys=False, allow_nan=False) + "\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path, e.lineno) from None


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_csv(path, header, rows):
    atomic_write(path, _csv_text(header, rows))


def read_csv(path, header):
    """Rows as dicts, with their 1-based line numbers; the header must match exactly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise FormatError("empty file", path, 1) from None
        if got != header:
            raise FormatError(f"expected header {','.join(header)!r}, got {','.join(got)!r}", path, 1)
        out = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, got {len(row)}", path,
                                  reader.line_num)
            out.append((reader.line_num, dict(zip(header, row))))
        return out


def _num(s, path, line, name):
    try:
        v = float(s)
    except ValueError:
        raise FormatError(f"{name}: not a number: {s!r}", path, line) from None
    if not math.isfinite(v):
        raise FormatError(f"{name}: not finite", path, line)
    return v


def _int(s, path, line, name):
    try:
        return int(s)
    except ValueError:
        raise FormatError(f"{name}: not an integer: {s!r}", path, line) from None


def _feature(kind, ident, path, line):
    try:
        return make_feature(kind, ident)
    except (KeyError, ValueError) as e:
        raise FormatError(f"bad feature {kind}/{ident}: {e}", path, line) from None


# ---------------------------------------------------------------------------
# sensor logs
# ---------------------------------------------------------------------------

@dataclass
class Recording:
    """One walk or one point dwell from a sensor log."""

    kind: str  # "walk" | "point"
    t_start: float
    t_end: float
    path: PathSegment = None
    location: Location = None
    accel_t: list = field(default_factory=list)
    accel: list = field(default_factory=list)
    mag_t: list = field(default_factory=list)
    mag: list = field(default_factory=list)
    wifi: list = field(default_factory=list)  # (t_ms, scan_id, bssid, rss)

    def accel_arrays(self):
        return (np.asarray(self.accel_t, dtype=np.float64),
                np.asarray(self.accel, dtype=np.float64).reshape(-1, 3))

    def raw_events(self):
        ev = [(t, 0, RawEvent(t, FeatureId.wifi(b), r, s)) for t, s, b, r in self.wifi]
        ev += [(e.t, 1, e) for e in magnetic_events(self.mag_t, np.reshape(self.mag, (-1, 3)))]
        ev.sort(key=lambda x: (x[0], x[1]))
        return tuple(e[2] for e in ev)

    def walk_record(self, steps=()):
        if self.kind != "walk":
            raise ValueError("not a walk recording")
        return WalkRecord(self.path, self.t_start, self.t_end, StepEvents(tuple(steps)),
                          self.raw_events())

    def point_observations(self):
        if self.kind != "point":
            raise ValueError("not a point recording")
        return [TaggedObservation(e.feature, e.value, self.location, e.scan_id)
                for e in self.raw_events()]


@dataclass
class LogReadReport:
    recordings: int = 0
    events: int = 0
    rejected_rss: int = 0


def _loc(d):
    return Location(float(d[0]), float(d[1]))


def recording_header(rec):
    h = {"type": "header", "schema_version": LOG_SCHEMA_VERSION, "kind": rec.kind,
         "t_start_ms": rec.t_start, "t_end_ms": rec.t_end}
    if rec.kind == "walk":
        h["path"] = [[rec.path.start.x, rec.path.start.y], [rec.path.end.x, rec.path.end.y]]
    else:
        h["location"] = [rec.location.x, rec.location.y]
    return h


def sensor_log_lines(rec):
    lines = [json.dumps(recording_header(rec))]
    ev = [(t, 0, {"t_ms": t, "type": "accel", "payload": {"x": a[0], "y": a[1], "z": a[2]}})
          for t, a in zip(rec.accel_t, np.asarray(rec.accel).tolist())]
    ev += [(t, 1, {"t_ms": t, "type": "mag", "payload": {"x": m[0], "y": m[1], "z": m[2]}})
           for t, m in zip(rec.mag_t, np.asarray(rec.mag).tolist())]
    ev += [(t, 2, {"t_ms": t, "type": "wifi",
                   "payload": {"scan_id": s, "bssid": b, "rss_dbm": r}})
           for t, s, b, r in rec.wifi]
    ev.sort(key=lambda e: (e[0], e[1]))
    lines += [json.dumps(e[2]) for e in ev]
    return lines


def write_sensor_log(path, recordings):
    lines = []
    for rec in recordings:
        lines += sensor_log_lines(rec)
    atomic_write(path, "\n".join(lines) + "\n")


def recording_from_sim(sim):
    """Convert a simulated walk or point dwell into a :class:`Recording`."""
    if hasattr(sim, "record"):
        r = sim.record
        return Recording("walk", r.t_start, r.t_end, path=r.path,
                         accel_t=list(map(float, sim.accel_t)), accel=sim.accel.tolist(),
                         mag_t=list(map(float, sim.mag_t)), mag=sim.mag.tolist(),
                         wifi=list(sim.wifi))
    return Recording("point", sim.t_start, sim.t_end, location=sim.location,
                     mag_t=list(map(float, sim.mag_t)), mag=sim.mag.tolist(), wifi=list(sim.wifi))


def _xyz(p, path, line):
    try:
        return [float(p["x"]), float(p["y"]), float(p["z"])]
    except (KeyError, TypeError, ValueError):
        raise FormatError("payload needs numeric x, y, z", path, line) from None


def read_sensor_log(path, report=None):
    """Parse a JSONL sensor log into recordings.

    WiFi readings outside [-100, 0] dBm are dropped and counted in
    ``report.rejected_rss``; anything structurally wrong raises
    :class:`FormatError` with the offending line.
    """
    report = report if report is not None else LogReadReport()
    recs = []
    cur = None
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise FormatError(f"invalid JSON: {e.msg}", path, ln) from None
            if not isinstance(obj, dict):
                raise FormatError("each line must be a JSON object", path, ln)
            if obj.get("type") == "header":
                v = obj.get("schema_version")
                if v != LOG_SCHEMA_VERSION:
                    raise SchemaVersionError(f"schema_version {v!r} != {LOG_SCHEMA_VERSION}", path, ln)
                try:
                    kind = obj["kind"]
                    t0, t1 = float(obj["t_start_ms"]), float(obj["t_end_ms"])
                    if kind == "walk":
                        a, b = obj["path"]
                        cur = Recording(kind, t0, t1, path=PathSegment(_loc(a), _loc(b)))
                    elif kind == "point":
                        cur = Recording(kind, t0, t1, location=_loc(obj["location"]))
                    else:
                        raise FormatError(f"unknown recording kind {kind!r}", path, ln)
                except (KeyError, TypeError, ValueError) as e:
                    if isinstance(e, FormatError):
                        raise
                    raise FormatError(f"bad header: {e}", path, ln) from None
                recs.append(cur)
                continue
            if cur is None:
                raise FormatError("event before the first header line", path, ln)
            try:
                t = float(obj["t_ms"])
                typ = obj["type"]
                p = obj["payload"]
            except (KeyError, TypeError, ValueError):
                raise FormatError("event needs t_ms, type and payload", path, ln) from None
            if not math.isfinite(t):
                raise FormatError("t_ms not finite", path, ln)
            if typ == "accel":
                cur.accel_t.append(t)
                cur.accel.append(_xyz(p, path, ln))
            elif typ == "mag":
                cur.mag_t.append(t)
                cur.mag.append(_xyz(p, path, ln))
            elif typ == "wifi":
                try:
                    sid, bssid, rss = int(p["scan_id"]), str(p["bssid"]).lower(), float(p["rss_dbm"])
                    FeatureId.wifi(bssid)
                except (KeyError, TypeError, ValueError) as e:
                    raise FormatError(f"bad wifi payload: {e}", path, ln) from None
                if not RSS_MIN_DBM <= rss <= RSS_MAX_DBM:
                    report.rejected_rss += 1
                    continue
                cur.wifi.append((t, sid, bssid, rss))
            else:
                raise FormatError(f"unknown event type {typ!r}", path, ln)
            report.events += 1
    report.recordings = len(recs)
    for r in recs:
        if any(np.diff(r.accel_t) <= 0):
            raise FormatError("accelerometer timestamps are not strictly increasing", path)
    return recs


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def write_steps(path, steps_per_walk):
    rows = [(i, t) for i, steps in enumerate(steps_per_walk) for t in steps]
    write_csv(path, STEPS_HEADER, rows)


def read_steps(path, n_walks=None):
    rows = read_csv(path, STEPS_HEADER)
    out = {}
    for ln, r in rows:
        out.setdefault(_int(r["walk"], path, ln, "walk"), []).append(_num(r["t_ms"], path, ln, "t_ms"))
    n = n_walks if n_walks is not None else (max(out) + 1 if out else 0)
    return [sorted(out.get(i, [])) for i in range(n)]


def write_tagged(path, observations):
    rows = [(o.feature.kind, o.feature.id, repr(o.value), repr(o.location.x), repr(o.location.y),
             o.scan_id) for o in observations]
    write_csv(path, TAGGED_HEADER, rows)


def read_tagged(path):
    out = []
    for ln, r in read_csv(path, TAGGED_HEADER):
        f = _feature(r["feature_kind"], r["feature_id"], path, ln)
        try:
            out.append(TaggedObservation(f, _num(r["value"], path, ln, "value"),
                                         Location(_num(r["x_m"], path, ln, "x_m"),
                                                  _num(r["y_m"], path, ln, "y_m")),
                                         _int(r["scan_id"], path, ln, "scan_id")))
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(str(e), path, ln) from None
    return out


def write_grid_csv(path, grid, mean, variance):
    c = grid.candidates()
    write_csv(path, GRID_HEADER, [(repr(x), repr(y), repr(m), repr(v))
                                  for (x, y), m, v in zip(c.tolist(), mean.tolist(), variance.tolist())])


def write_selection(path, result):
    rows = []
    for f, sn2 in result.noise_variance.items():
        status = "retained" if f in result.retained else "removed"
        rows.append((f.id, repr(sn2), status, result.reasons.get(f, "")))
    write_csv(path, SELECTION_HEADER, rows)


def read_selection(path):
    """Retained WiFi features from a selection CSV."""
    out = []
    for ln, r in read_csv(path, SELECTION_HEADER):
        if r["status"] not in ("retained", "removed"):
            raise FormatError(f"bad status {r['status']!r}", path, ln)
        if r["status"] == "retained":
            out.append(_feature("wifi-bssid", r["feature_id"], path, ln))
    return out


def write_queries(path, queries):
    rows = [(qid, f.kind, f.id, repr(v)) for qid, q in enumerate(queries) for f, v in q.readings]
    write_csv(path, QUERY_HEADER, rows)


def read_queries(path):
    """``{query_id: QueryObservation}`` in ascending id order."""
    acc = {}
    for ln, r in read_csv(path, QUERY_HEADER):
        qid = _int(r["query_id"], path, ln, "query_id")
        f = _feature(r["feature_kind"], r["feature_id"], path, ln)
        v = _num(r["value"], path, ln, "value")
        if f.is_wifi and not RSS_MIN_DBM <= v <= RSS_MAX_DBM:
            raise FormatError(f"RSS {v} outside [{RSS_MIN_DBM}, {RSS_MAX_DBM}]", path, ln)
        acc.setdefault(qid, []).append((f, v))
    return {q: QueryObservation.from_readings(acc[q]) for q in sorted(acc)}


def write_truth(path, locations):
    write_csv(path, TRUTH_HEADER, [(i, repr(l.x), repr(l.y)) for i, l in enumerate(locations)])


def read_truth(path):
    return {_int(r["query_id"], path, ln, "query_id"):
            Location(_num(r["x_m"], path, ln, "x_m"), _num(r["y_m"], path, ln, "y_m"))
            for ln, r in read_csv(path, TRUTH_HEADER)}


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

def write_map(path, fmap):
    write_json(path, fmap.to_dict())


def read_map(path):
    d = read_json(path)
    try:
        return FingerprintMap.from_dict(d)
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed map: missing or bad field {e}", path) from None
    except ValueError as e:
        if "schema_version" in str(e):
            raise SchemaVersionError(str(e), path) from None
        raise FormatError(str(e), path) from None
