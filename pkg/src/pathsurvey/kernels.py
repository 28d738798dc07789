"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba implementations are used when numba is importable and the
environment variable ``PATHSURVEY_NO_NUMBA`` is unset (or ``0``).  Setting
``PATHSURVEY_NO_NUMBA=1`` forces the numpy fallback, which is what the
benchmark in ``benchmarks/bench_kernels.py`` compares against.

Both paths are always importable when numba is installed (``*_numba`` and
``*_numpy`` names), so tests can check them against each other.  The public
names (``exp_kernel``, ``lowpass_zero_phase``, ...) are bound once at import.
"""

import math
import os

import numpy as np
from scipy.spatial.distance import cdist

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

_FLAG = "PATHSURVEY_NO_NUMBA"
USE_NUMBA = HAVE_NUMBA and os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"

_CHUNK = 4096


def _njit(fn):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True)(fn)


# ---------------------------------------------------------------------------
# pairwise distances and the exponential covariance
# ---------------------------------------------------------------------------

def pairwise_distances_numpy(A, B):
    return cdist(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64))


def _pairwise_distances_loop(A, B):
    na = A.shape[0]
    nb = B.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        ax = A[i, 0]
        ay = A[i, 1]
        for j in range(nb):
            dx = ax - B[j, 0]
            dy = ay - B[j, 1]
            out[i, j] = math.sqrt(dx * dx + dy * dy)
    return out


def exp_kernel_numpy(A, B, sigma_f2, length_scale):
    D = pairwise_distances_numpy(A, B)
    return sigma_f2 * np.exp(-D / length_scale)


def _exp_kernel_loop(A, B, sigma_f2, length_scale):
    na = A.shape[0]
    nb = B.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        ax = A[i, 0]
        ay = A[i, 1]
        for j in range(nb):
            dx = ax - B[j, 0]
            dy = ay - B[j, 1]
            out[i, j] = sigma_f2 * math.exp(-math.sqrt(dx * dx + dy * dy) / length_scale)
    return out


# ---------------------------------------------------------------------------
# second-order Butterworth low-pass on irregular timestamps
# ---------------------------------------------------------------------------

def _butter2_pass(t_s, x, omega, reverse):
    # Exact ZOH discretisation of y'' + 2*a*y' + w^2*y = w^2*u per interval.
    n = x.shape[0]
    out = np.empty(n)
    a = omega / math.sqrt(2.0)
    b = a
    w2 = omega * omega
    if reverse:
        start, stop, step = n - 1, -1, -1
    else:
        start, stop, step = 0, n, 1
    y = x[start]
    dy = 0.0
    out[start] = y
    prev = start
    for i in range(start + step, stop, step):
        dt = abs(t_s[i] - t_s[prev])
        u = x[prev]
        e = math.exp(-a * dt)
        c = math.cos(b * dt)
        sb = math.sin(b * dt) / b
        p11 = e * (c + sb * a)
        p12 = e * sb
        p21 = -w2 * e * sb
        p22 = e * (c - sb * a)
        g1 = -2.0 * a * p12 - (p22 - 1.0)
        g2 = w2 * p12
        y, dy = p11 * y + p12 * dy + g1 * u, p21 * y + p22 * dy + g2 * u
        out[i] = y
        prev = i
    return out


def _make_lowpass(one_pass):
    def lowpass(t_s, x, cutoff_hz):
        omega = 2.0 * math.pi * cutoff_hz
        fwd = one_pass(t_s, x, omega, False)
        return one_pass(t_s, fwd, omega, True)

    return lowpass


# ---------------------------------------------------------------------------
# two-threshold peak detection
# ---------------------------------------------------------------------------

def _two_threshold_peaks_loop(t_ms, f, theta_time_ms, theta_mag):
    n = f.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    if n < 3:
        return keep
    valley = f[0]
    last_t = -np.inf
    for i in range(1, n - 1):
        v = f[i]
        if v < valley:
            valley = v
        if v > f[i - 1] and v >= f[i + 1]:
            if t_ms[i] - last_t >= theta_time_ms and v - valley >= theta_mag:
                keep[i] = True
                last_t = t_ms[i]
                valley = v
    return keep


# ---------------------------------------------------------------------------
# nearest-neighbour distances (imputation coverage test)
# ---------------------------------------------------------------------------

def nearest_distances_numpy(P, Q):
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    out = np.full(P.shape[0], np.inf)
    if Q.shape[0] == 0:
        return out
    for s in range(0, P.shape[0], _CHUNK):
        out[s:s + _CHUNK] = cdist(P[s:s + _CHUNK], Q).min(axis=1)
    return out


def _nearest_distances_loop(P, Q):
    m = P.shape[0]
    out = np.full(m, np.inf)
    for i in range(m):
        best = np.inf
        for j in range(Q.shape[0]):
            dx = P[i, 0] - Q[j, 0]
            dy = P[i, 1] - Q[j, 1]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
        out[i] = math.sqrt(best)
    return out


# ---------------------------------------------------------------------------
# summed Gaussian log-likelihood surface
# ---------------------------------------------------------------------------

_LOG2PI = math.log(2.0 * math.pi)


def gaussian_loglik_sum_numpy(values, means, variances):
    values = np.asarray(values, dtype=np.float64)[:, None]
    r = values - means
    return np.sum(-0.5 * (_LOG2PI + np.log(variances)) - 0.5 * r * r / variances, axis=0)


def _gaussian_loglik_sum_loop(values, means, variances):
    F, M = means.shape
    out = np.zeros(M)
    for k in range(F):
        yk = values[k]
        for c in range(M):
            v = variances[k, c]
            r = yk - means[k, c]
            out[c] += -0.5 * (_LOG2PI + math.log(v)) - 0.5 * r * r / v
    return out


# numpy fallbacks for the recursive kernels are the same loops run by CPython
lowpass_zero_phase_numpy = _make_lowpass(_butter2_pass)
two_threshold_peaks_numpy = _two_threshold_peaks_loop

pairwise_distances_numba = _njit(_pairwise_distances_loop)
exp_kernel_numba = _njit(_exp_kernel_loop)
lowpass_zero_phase_numba = _njit(_make_lowpass(_njit(_butter2_pass))) if HAVE_NUMBA else None
two_threshold_peaks_numba = _njit(_two_threshold_peaks_loop)
nearest_distances_numba = _njit(_nearest_distances_loop)
gaussian_loglik_sum_numba = _njit(_gaussian_loglik_sum_loop)


def _pick(name):
    return globals()[f"{name}_numba" if USE_NUMBA else f"{name}_numpy"]


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


_pd = _pick("pairwise_distances")
_ek = _pick("exp_kernel")
_lp = _pick("lowpass_zero_phase")
_pk = _pick("two_threshold_peaks")
_nd = _pick("nearest_distances")
_gl = _pick("gaussian_loglik_sum")


def pairwise_distances(A, B):
    """Euclidean distance matrix between two (n, 2) coordinate arrays."""
    return _pd(_contig(A), _contig(B))


def exp_kernel(A, B, sigma_f2, length_scale):
    """``sigma_f2 * exp(-|a - b| / length_scale)`` for every row pair."""
    return _ek(_contig(A), _contig(B), float(sigma_f2), float(length_scale))


def lowpass_zero_phase(t_s, x, cutoff_hz):
    """Second-order Butterworth low-pass run forward then backward.

    Timestamps may be irregular; each interval is discretised exactly.  The
    state starts at rest on the first (last) sample, so a constant series is
    returned unchanged.
    """
    return _lp(_contig(t_s), _contig(x), float(cutoff_hz))


def two_threshold_peaks(t_ms, f, theta_time_ms, theta_mag):
    """Boolean mask of accepted step peaks in a filtered magnitude series."""
    return _pk(_contig(t_ms), _contig(f), float(theta_time_ms), float(theta_mag))


def nearest_distances(P, Q):
    """Distance from each row of ``P`` to its nearest row of ``Q``."""
    return _nd(_contig(P), _contig(Q).reshape(-1, 2))


def gaussian_loglik_sum(values, means, variances):
    """Sum over features of ``log N(values[k]; means[k, c], variances[k, c])``."""
    means = _contig(means)
    return _gl(_contig(values), means, _contig(variances).reshape(means.shape))
