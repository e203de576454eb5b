"""Regression of reduced eigenvector coordinates on the parameter.

Both predictors fit every target column against the same training inputs, so
targets of all (neighborhood, eigen-index, POD-mode) triples are stacked into
one matrix and fitted in a single pass. ``layout`` records which columns belong
to which ``(i, k)`` pair.
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg as la

from .errors import FitError

log = logging.getLogger(__name__)


def multi_indices(M, p):
    """All ``alpha`` with ``|alpha| <= p``, graded then reverse-lexicographic by component."""
    out = []
    for deg in range(p + 1):
        level = []
        for combo in combinations_with_replacement(range(M), deg):
            a = [0] * M
            for m in combo:
                a[m] += 1
            level.append(tuple(a))
        out.extend(sorted(set(level), reverse=True))
    return out


@dataclass(frozen=True)
class HermiteBasis:
    M: int
    p: int

    @property
    def indices(self):
        return multi_indices(self.M, self.p)

    @property
    def size(self):
        return math.comb(self.M + self.p, self.p)

    def eval(self, mu):
        """``eta_alpha(mu)`` for a single point (1-D result) or rows of points (2-D)."""
        mu = np.asarray(mu, dtype=np.float64)
        single = mu.ndim <= 1
        X = np.atleast_2d(mu.reshape(1, -1) if single else mu)
        if X.shape[1] != self.M:
            raise ValueError(f"expected parameter dimension {self.M}, got {X.shape[1]}")
        H = hermite_1d(X, self.p)  # (n, M, p+1)
        idx = np.array(self.indices)  # (nb, M)
        cols = np.ones((X.shape[0], len(idx)))
        for m in range(self.M):
            cols *= H[:, m, idx[:, m]]
        return cols[0] if single else cols


def hermite_1d(x, p):
    """Orthonormal probabilists' Hermite polynomials ``He_n(x)/sqrt(n!)`` for ``n <= p``."""
    x = np.asarray(x, dtype=np.float64)
    H = np.empty(x.shape + (p + 1,))
    H[..., 0] = 1.0
    if p >= 1:
        H[..., 1] = x
    for n in range(1, p):
        # normalized three-term recurrence
        H[..., n + 1] = (x * H[..., n] - np.sqrt(n) * H[..., n - 1]) / np.sqrt(n + 1)
    return H


@dataclass
class GpcPredictor:
    basis: HermiteBasis
    coef: np.ndarray = field(repr=False)  # (n_targets, basis size)
    residuals: np.ndarray = field(repr=False)  # per target column
    layout: list = field(default_factory=list)
    kind: str = "gpc"

    def __post_init__(self):
        # C order so a reloaded predictor sums in the same order, bit for bit
        self.coef = np.ascontiguousarray(self.coef, dtype=np.float64)

    def predict(self, mu):
        return self.coef @ self.basis.eval(mu)


def fit_gpc(mus, targets, p=3, layout=None):
    mus = as_inputs(mus)
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    n_s, M = mus.shape
    basis = HermiteBasis(M, p)
    if n_s < basis.size:
        log.warning("gPC fit with %d samples for %d basis functions is underdetermined",
                    n_s, basis.size)
    G = basis.eval(mus)
    if n_s < basis.size:
        # minimum-norm interpolant; residuals are zero up to roundoff
        C = np.linalg.lstsq(G, Y, rcond=None)[0]
    else:
        Qm, Rm = la.qr(G, mode="economic")
        d = np.abs(np.diag(Rm))
        weak = np.flatnonzero(d <= 1e-12 * d.max())
        if weak.size:
            names = [basis.indices[j] for j in weak]
            raise FitError(f"gPC design matrix is rank deficient; weak modes {names}")
        C = la.solve_triangular(Rm, Qm.T @ Y)
    res = np.linalg.norm(G @ C - Y, axis=0)
    return GpcPredictor(basis, C.T.copy(), res, list(layout or []))


def as_inputs(mus):
    """Training inputs as an ``(n_s, M)`` array; a flat sequence means ``M = 1``."""
    X = np.asarray(mus, dtype=np.float64)
    return X.reshape(-1, 1) if X.ndim <= 1 else X


def median_length_scale(X):
    X = np.atleast_2d(X)
    d = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    iu = np.triu_indices(len(X), 1)
    ell = float(np.median(d[iu])) if len(iu[0]) else 1.0
    return ell if ell > 0 else 1.0


def se_kernel(X, Z, ell):
    d2 = ((np.atleast_2d(X)[:, None, :] - np.atleast_2d(Z)[None, :, :]) ** 2).sum(-1)
    return np.exp(-0.5 * d2 / ell**2)


@dataclass
class GprPredictor:
    X: np.ndarray = field(repr=False)
    ell: float
    jitter: float
    mean: np.ndarray = field(repr=False)
    signal_var: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)  # (n_s, n_targets)
    layout: list = field(default_factory=list)
    kind: str = "gpr"

    def __post_init__(self):
        for name in ("X", "mean", "signal_var", "chol", "weights"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))

    def predict(self, mu):
        k = se_kernel(self.X, np.atleast_2d(mu), self.ell)[:, 0]
        return self.mean + k @ self.weights

    def variance(self, mu):
        k = se_kernel(self.X, np.atleast_2d(mu), self.ell)[:, 0]
        v = la.solve_triangular(self.chol, k, lower=True)
        return self.signal_var * max(1.0 - v @ v, 0.0)


def fit_gpr(mus, targets, jitter=1e-8, max_jitter=1e-4, layout=None):
    """Squared-exponential GP posterior mean with median-heuristic length scale.

    A constant mean (the target average) is removed first; the kernel is unit
    variance so all target columns share one factorization.
    """
    X = as_inputs(mus)
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) < 2:
        raise FitError("GPR needs at least two training samples")
    ell = median_length_scale(X)
    K = se_kernel(X, X, ell)
    j = jitter
    while True:
        try:
            L = la.cholesky(K + j * np.eye(len(X)), lower=True)
            break
        except la.LinAlgError:
            j *= 10
            if j > max_jitter:
                raise FitError("GP kernel matrix not positive definite after jitter escalation")
    mean = Y.mean(axis=0)
    var = Y.var(axis=0)
    var[var == 0] = 1.0
    W = la.cho_solve((L, True), Y - mean)
    return GprPredictor(X, ell, j, mean, var, L, W, list(layout or []))
