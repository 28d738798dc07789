"""Exact Gaussian Process regression with an exponential (Ornstein-Uhlenbeck) kernel.

Hyperparameters are fitted by maximising the log marginal likelihood with
L-BFGS-B over log-transformed parameters, restarted from several initial
points.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from . import kernels

log = logging.getLogger(__name__)

_LOG2PI = math.log(2.0 * math.pi)
_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class GPFactorizationError(np.linalg.LinAlgError):
    pass


class GPFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    sigma_f2: float
    length_scale: float
    sigma_n2: float

    def __post_init__(self):
        if not self.sigma_f2 > 0:
            raise ValueError("sigma_f2 must be positive")
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.sigma_n2 >= 0:
            raise ValueError("sigma_n2 must be non-negative")

    def to_log(self):
        return np.log([self.sigma_f2, self.length_scale, self.sigma_n2])

    @classmethod
    def from_log(cls, theta):
        sf2, ell, sn2 = np.exp(np.asarray(theta, dtype=np.float64))
        return cls(float(sf2), float(ell), float(sn2))

    def to_dict(self):
        return {"sigma_f2": self.sigma_f2, "length_scale": self.length_scale,
                "sigma_n2": self.sigma_n2}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["sigma_f2"]), float(d["length_scale"]), float(d["sigma_n2"]))


@dataclass(frozen=True)
class HyperBounds:
    """Box constraints for fitting.

    ``noise`` bounds the noise *standard deviation* when ``noise_kind`` is
    ``"std"`` (so sigma_n2 lies in [1e-10, 81] by default) and the variance
    itself when it is ``"variance"``.
    """

    sigma_f2: tuple = (1e-6, 1e6)
    length_scale: tuple = (0.05, 500.0)
    noise: tuple = (1e-5, 9.0)
    noise_kind: str = "std"

    def __post_init__(self):
        if self.noise_kind not in ("std", "variance"):
            raise ValueError("noise_kind must be 'std' or 'variance'")
        for lo, hi in (self.sigma_f2, self.length_scale, self.noise):
            if not 0 < lo <= hi:
                raise ValueError(f"bad bound ({lo}, {hi})")

    @property
    def sigma_n2(self):
        lo, hi = self.noise
        return (lo * lo, hi * hi) if self.noise_kind == "std" else (lo, hi)

    def log_box(self):
        return [tuple(np.log(b)) for b in (self.sigma_f2, self.length_scale, self.sigma_n2)]

    def clip(self, hyper):
        box = np.array(self.log_box())
        return Hyperparams.from_log(np.clip(hyper.to_log(), box[:, 0], box[:, 1]))

    def clamp(self, hyper):
        """Clip in linear space, so values sit exactly inside the configured box."""
        (a, b), (c, d), (e, f) = self.sigma_f2, self.length_scale, self.sigma_n2
        return Hyperparams(min(max(hyper.sigma_f2, a), b), min(max(hyper.length_scale, c), d),
                           min(max(hyper.sigma_n2, e), f))

    def contains(self, hyper, rtol=1e-9):
        vals = (hyper.sigma_f2, hyper.length_scale, hyper.sigma_n2)
        return all(lo * (1 - rtol) <= v <= hi * (1 + rtol)
                   for v, (lo, hi) in zip(vals, (self.sigma_f2, self.length_scale, self.sigma_n2)))

    def to_dict(self):
        return {"sigma_f2": list(self.sigma_f2), "length_scale": list(self.length_scale),
                "noise": list(self.noise), "noise_kind": self.noise_kind}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d.get("sigma_f2", cls.sigma_f2)), tuple(d.get("length_scale", cls.length_scale)),
                   tuple(d.get("noise", cls.noise)), d.get("noise_kind", cls.noise_kind))


def kernel(x, x2, hyper):
    """Covariance between two locations (anything with ``.x``/``.y`` or a 2-sequence)."""
    a = np.array([[x.x, x.y]]) if hasattr(x, "x") else np.asarray(x, dtype=np.float64).reshape(1, 2)
    b = np.array([[x2.x, x2.y]]) if hasattr(x2, "x") else np.asarray(x2, dtype=np.float64).reshape(1, 2)
    return float(kernels.exp_kernel(a, b, hyper.sigma_f2, hyper.length_scale)[0, 0])


def _cholesky(A, name=None):
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    try:
        return cholesky(A, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = max(float(np.mean(np.diag(A))), 1e-300)
    n = A.shape[0]
    for jitter in _JITTERS:
        try:
            L = cholesky(A + jitter * scale * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        warnings.warn(f"added jitter {jitter:g} to factorize covariance"
                      + (f" of {name}" if name else ""), RuntimeWarning, stacklevel=3)
        return L, jitter * scale
    raise GPFactorizationError(
        "covariance matrix not positive definite after jitter escalation"
        + (f" (feature {name})" if name else ""))


def _as_xy(X):
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(-1, 2)


def log_marginal_likelihood(X, y, hyper, name=None):
    """``log p(y | X)`` under a zero-mean GP prior with Gaussian noise."""
    X = _as_xy(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if n < 1:
        raise ValueError("need at least one observation")
    K = kernels.exp_kernel(X, X, hyper.sigma_f2, hyper.length_scale)
    K[np.diag_indices(n)] += hyper.sigma_n2
    L, _ = _cholesky(K, name)
    alpha = cho_solve((L, True), y, check_finite=False)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG2PI)


def lml_and_grad(D, y, theta, name=None):
    """Log marginal likelihood and its gradient w.r.t. log (sigma_f2, l, sigma_n2).

    ``D`` is the precomputed pairwise distance matrix of the inputs.
    """
    sf2, ell, sn2 = np.exp(theta)
    n = y.size
    E = np.exp(-D / ell)
    Kf = sf2 * E
    K = Kf.copy()
    K[np.diag_indices(n)] += sn2
    L, _ = _cholesky(K, name)
    alpha = cho_solve((L, True), y, check_finite=False)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG2PI
    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    WKf = W * Kf
    grad = 0.5 * np.array([
        WKf.sum(),
        np.sum(WKf * D) / ell,
        sn2 * np.trace(W),
    ])
    return float(lml), grad


class GPModel:
    """A conditioned GP: hyperparameters, training data and its factorization.

    Targets are mean-centred when ``center`` is set; the stored offset is
    added back to predicted means.
    """

    def __init__(self, X, y, hyper, center=True, name=None):
        self.X = _as_xy(X).copy()
        self.y = np.asarray(y, dtype=np.float64).ravel().copy()
        if self.X.shape[0] != self.y.size:
            raise ValueError("X and y differ in length")
        self.X.setflags(write=False)
        self.y.setflags(write=False)
        self.hyper = hyper
        self.center = bool(center)
        self.name = name
        self.offset = float(np.mean(self.y)) if (self.center and self.y.size) else 0.0
        self.jitter = 0.0
        n = self.n
        if n:
            K = kernels.exp_kernel(self.X, self.X, hyper.sigma_f2, hyper.length_scale)
            K[np.diag_indices(n)] += hyper.sigma_n2
            self.L, self.jitter = _cholesky(K, name)
            self.alpha = cho_solve((self.L, True), self.y - self.offset, check_finite=False)
        else:
            self.L = np.zeros((0, 0))
            self.alpha = np.zeros(0)

    @property
    def n(self):
        return self.y.size

    def log_marginal_likelihood(self):
        if not self.n:
            raise ValueError("empty model")
        r = self.y - self.offset
        return float(-0.5 * r @ self.alpha - np.sum(np.log(np.diag(self.L)))
                     - 0.5 * self.n * _LOG2PI)

    def predict(self, Xq, chunk=2048):
        """Posterior predictive mean and variance (noise included) at query points."""
        Xq = _as_xy(Xq)
        h = self.hyper
        m = Xq.shape[0]
        mean = np.full(m, self.offset)
        var = np.full(m, h.sigma_f2 + h.sigma_n2)
        if not self.n:
            return mean, var
        for s in range(0, m, chunk):
            Ks = kernels.exp_kernel(Xq[s:s + chunk], self.X, h.sigma_f2, h.length_scale)
            mean[s:s + chunk] += Ks @ self.alpha
            V = solve_triangular(self.L, Ks.T, lower=True, check_finite=False)
            latent = h.sigma_f2 - np.einsum("ij,ij->j", V, V)
            var[s:s + chunk] = np.maximum(latent, 0.0) + h.sigma_n2
        floor = 1e-12 * h.sigma_f2
        return mean, np.maximum(var, floor)

    def predict_one(self, x):
        xy = [x.x, x.y] if hasattr(x, "x") else x
        mean, var = self.predict(np.asarray(xy, dtype=np.float64).reshape(1, 2))
        return float(mean[0]), float(var[0])

    def to_dict(self):
        return {"hyper": self.hyper.to_dict(), "center": self.center,
                "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d, name=None):
        X = np.asarray(d["X"], dtype=np.float64).reshape(-1, 2)
        return cls(X, d["y"], Hyperparams.from_dict(d["hyper"]), d.get("center", True), name)


@dataclass
class FitResult:
    hyper: Hyperparams
    log_likelihood: float
    init_log_likelihood: float
    grad_inf_norm: float
    converged: bool
    n_iter: int
    restarts_ok: int
    history: list = field(default_factory=list)

    def to_dict(self):
        return {"hyper": self.hyper.to_dict(), "log_likelihood": self.log_likelihood,
                "init_log_likelihood": self.init_log_likelihood,
                "grad_inf_norm": self.grad_inf_norm, "converged": self.converged,
                "n_iter": self.n_iter, "restarts_ok": self.restarts_ok}


def default_init(y):
    var = float(np.var(y)) if len(y) > 1 else 1.0
    return Hyperparams(max(var, 1e-6), 10.0, 1.0)


def _projected_inf_norm(theta, grad_neg, box):
    g = np.array(grad_neg, dtype=np.float64)
    for i, (lo, hi) in enumerate(box):
        if theta[i] <= lo + 1e-12 and g[i] > 0:
            g[i] = 0.0
        elif theta[i] >= hi - 1e-12 and g[i] < 0:
            g[i] = 0.0
    return float(np.max(np.abs(g)))


def fit_hyperparameters(X, y, init=None, bounds=None, restarts=5, seed=0, maxiter=200,
                        gtol=1e-5, ftol=1e-12, center=True, name=None, rng=None,
                        track_history=False):
    """Maximise the log marginal likelihood over (sigma_f2, l, sigma_n2).

    The first start is ``init`` (clipped into the bounds); the remaining
    ``restarts - 1`` starts perturb it log-normally.  The best finite result
    wins and is never worse than the initial point.
    """
    X = _as_xy(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size < 2:
        raise ValueError("need at least two observations to fit hyperparameters")
    bounds = bounds or HyperBounds()
    if center:
        y = y - np.mean(y)
    init = bounds.clip(init or default_init(y))
    box = bounds.log_box()
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    rng = rng if rng is not None else np.random.default_rng(seed)
    D = kernels.pairwise_distances(X, X)

    def objective(theta):
        try:
            f, g = lml_and_grad(D, y, theta, name)
        except GPFactorizationError:
            return 1e300, np.zeros(3)
        if not np.isfinite(f):
            return 1e300, np.zeros(3)
        return -f, -g

    theta0 = init.to_log()
    starts = [theta0] + [np.clip(theta0 + rng.normal(0.0, 1.0, 3), lo, hi)
                         for _ in range(max(restarts, 1) - 1)]
    f_init, _ = objective(theta0)
    best = None
    restarts_ok = 0
    for theta_s in starts:
        history = [-objective(theta_s)[0]] if track_history else []

        def callback(intermediate_result):
            history.append(-float(intermediate_result.fun))

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(objective, theta_s, jac=True, method="L-BFGS-B", bounds=box,
                           callback=callback if track_history else None,
                           options={"maxiter": maxiter, "gtol": gtol, "ftol": ftol})
        if not np.isfinite(res.fun) or res.fun >= 1e299:
            continue
        restarts_ok += 1
        if best is None or res.fun < best[0].fun:
            best = (res, history)
    if best is None:
        if f_init >= 1e299:
            raise GPFitError("no optimizer restart produced a finite likelihood"
                             + (f" for {name}" if name else "")
                             + f" (n={y.size}, init={init})")
        theta_best, n_iter, history = theta0, 0, []
    else:
        res, history = best
        theta_best, n_iter = res.x, int(res.nit)
        if res.fun > f_init:
            theta_best = theta0
    theta_best = np.clip(theta_best, lo, hi)
    f_best, g_best = objective(theta_best)
    if f_best >= 1e299:
        raise GPFitError(f"fitted hyperparameters give a non-finite likelihood ({name})")
    pg = _projected_inf_norm(theta_best, g_best, box)
    return FitResult(
        hyper=bounds.clamp(Hyperparams.from_log(theta_best)),
        log_likelihood=-f_best,
        init_log_likelihood=-f_init,
        grad_inf_norm=pg,
        converged=pg <= gtol,
        n_iter=n_iter,
        restarts_ok=restarts_ok,
        history=history,
    )


def fit_model(X, y, init=None, bounds=None, restarts=5, seed=0, center=True, name=None,
              rng=None, **kw):
    """Fit hyperparameters and return ``(GPModel, FitResult)``."""
    fit = fit_hyperparameters(X, y, init=init, bounds=bounds, restarts=restarts, seed=seed,
                              center=center, name=name, rng=rng, **kw)
    return GPModel(X, y, fit.hyper, center=center, name=name), fit
