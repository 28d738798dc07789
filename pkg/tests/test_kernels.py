import os
import subprocess
import sys

import numpy as np
import pytest

from pathsurvey import kernels as k

needs_numba = pytest.mark.skipif(not k.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    return rng, rng.uniform(0, 30, (57, 2)), rng.uniform(0, 30, (23, 2))


@needs_numba
def test_distance_and_kernel_backends_agree(data):
    _, A, B = data
    np.testing.assert_allclose(k.pairwise_distances_numba(A, B), k.pairwise_distances_numpy(A, B),
                               rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(k.exp_kernel_numba(A, B, 3.0, 2.5), k.exp_kernel_numpy(A, B, 3.0, 2.5),
                               rtol=1e-13)
    np.testing.assert_allclose(k.nearest_distances_numba(A, B), k.nearest_distances_numpy(A, B),
                               rtol=1e-13)
    assert np.all(np.isinf(k.nearest_distances_numba(A, np.zeros((0, 2)))))
    assert np.all(np.isinf(k.nearest_distances_numpy(A, np.zeros((0, 2)))))


@needs_numba
def test_filter_and_peaks_backends_agree(data):
    rng, _, _ = data
    t = np.cumsum(rng.uniform(0.01, 0.03, 3000))
    x = 9.81 + 3 * np.sin(2 * np.pi * 2 * t) + rng.normal(0, 0.4, t.size)
    a = k.lowpass_zero_phase_numba(t, x, 3.0)
    b = k.lowpass_zero_phase_numpy(t, x, 3.0)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    np.testing.assert_array_equal(k.two_threshold_peaks_numba(t * 1000, a, 300.0, 1.0),
                                  k.two_threshold_peaks_numpy(t * 1000, a, 300.0, 1.0))


@needs_numba
def test_loglik_backends_agree(data):
    rng, _, _ = data
    means = rng.uniform(-90, -40, (7, 500))
    var = rng.uniform(1, 30, (7, 500))
    vals = rng.uniform(-90, -40, 7)
    np.testing.assert_allclose(k.gaussian_loglik_sum_numba(vals, means, var),
                               k.gaussian_loglik_sum_numpy(vals, means, var), rtol=1e-12)


def test_loglik_matches_scalar_formula():
    means = np.array([[-50.0, -60.0], [40.0, 45.0]])
    var = np.array([[4.0, 9.0], [1.0, 0.5]])
    vals = np.array([-55.0, 44.0])
    want = [sum(-0.5 * np.log(2 * np.pi * var[f, c]) - (vals[f] - means[f, c]) ** 2 / (2 * var[f, c])
                for f in range(2)) for c in range(2)]
    np.testing.assert_allclose(k.gaussian_loglik_sum(vals, means, var), want, rtol=1e-13)


def test_peak_rule_valley_is_minimum_since_last_peak():
    t = np.arange(9) * 400.0
    f = np.array([0.0, 2.0, 1.5, 1.8, -1.0, 1.2, 0.5, 0.9, 0.0])
    # peak at 1 (rise 2 from the first sample); 3 rises only 0.3 above the
    # valley at 2; 5 rises 2.2 above the valley at 4; 7 only 0.4 above 6
    assert np.flatnonzero(k.two_threshold_peaks(t, f, 300.0, 1.0)).tolist() == [1, 5]
    assert np.flatnonzero(k.two_threshold_peaks(t, f, 900.0, 1.0)).tolist() == [1, 5]
    # with a long gap 5 is too early; 7 is then measured from the -1 valley
    assert np.flatnonzero(k.two_threshold_peaks(t, f, 2000.0, 1.0)).tolist() == [1, 7]


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, PATHSURVEY_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import pathsurvey.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
