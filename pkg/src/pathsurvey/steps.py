"""Step events from a 3-axis accelerometer stream."""

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class AccelSample:
    t: float  # ms since epoch
    ax: float
    ay: float
    az: float

    @property
    def magnitude(self):
        return float(accel_magnitude(self.ax, self.ay, self.az))


@dataclass(frozen=True)
class StepDetectorConfig:
    """Low-pass cutoff plus the minimum step gap and peak-valley rise."""

    cutoff_hz: float = 3.0
    theta_time_ms: float = 300.0
    theta_mag: float = 1.0

    def __post_init__(self):
        for name in ("cutoff_hz", "theta_time_ms", "theta_mag"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cutoff_hz <= 2.0:
            raise ValueError("cutoff must sit above the ~2 Hz gait frequency")


@dataclass(frozen=True)
class StepEvents:
    timestamps: tuple = ()

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("step timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return len(self.timestamps)

    @property
    def K(self):
        return len(self.timestamps)

    def as_array(self):
        return np.asarray(self.timestamps, dtype=np.float64)


def accel_magnitude(ax, ay, az):
    return np.sqrt(np.square(ax) + np.square(ay) + np.square(az))


def low_pass(t_ms, values, cutoff_hz):
    """Zero-phase second-order low-pass of a (possibly irregular) series."""
    t_ms = np.asarray(t_ms, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise ValueError("low_pass needs at least 2 samples")
    if t_ms.shape != values.shape:
        raise ValueError("timestamps and values differ in length")
    dt = np.median(np.diff(t_ms)) / 1000.0
    if dt <= 0 or 1.0 / dt <= 2.0 * cutoff_hz:
        raise ValueError(f"sampling rate too low for a {cutoff_hz} Hz cutoff")
    return kernels.lowpass_zero_phase(t_ms / 1000.0, values, cutoff_hz)


def detect_steps(t_ms, acc, config=None):
    """Detect step events in an accelerometer log.

    ``acc`` is an (n, 3) array of x/y/z readings in m/s^2 (or a sequence of
    :class:`AccelSample`, in which case ``t_ms`` is ignored and may be None).
    """
    config = config or StepDetectorConfig()
    if acc is not None and len(acc) and isinstance(acc[0], AccelSample):
        t_ms = [s.t for s in acc]
        acc = [(s.ax, s.ay, s.az) for s in acc]
    t_ms = np.asarray(t_ms, dtype=np.float64).ravel()
    acc = np.asarray(acc, dtype=np.float64).reshape(-1, 3)
    if acc.shape[0] < 3:
        return StepEvents()
    if np.any(np.diff(t_ms) <= 0):
        raise ValueError("accelerometer timestamps must be strictly increasing")
    mag = accel_magnitude(acc[:, 0], acc[:, 1], acc[:, 2])
    smooth = low_pass(t_ms, mag, config.cutoff_hz)
    keep = kernels.two_threshold_peaks(t_ms, smooth, config.theta_time_ms, config.theta_mag)
    return StepEvents(tuple(t_ms[keep]))
