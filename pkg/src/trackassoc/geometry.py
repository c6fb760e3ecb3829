"""Linear track-regression geometry.

A constant-velocity target observed at equally spaced epochs tau = 0, dt, ...,
n_scans*dt gives the batch regression z = X b + noise with state
b = (x1, y1, vx, vy). All association statistics in this package reduce to
quadratic forms in the residual projector M = I - X (X'X)^-1 X' and in
Phi = M S M', where S is the noise covariance with the contaminated 2x2 blocks
zeroed. Because the x and y coordinates decouple, every 2x2 block of M and Phi
is a scalar multiple of I2, and the scalars have closed forms in the per-epoch
leverage

    h_l = 2 (2N + 1 - 6l + 6 l^2 / N) / ((N + 1)(N + 2)),   N = n_scans,

namely M_ll = (1 - h_l) I2 and, with a single contaminated epoch,
Phi_ll = h_l (1 - h_l) I2. Both are cross-checked against the dense matrices in
the test suite. A historical cubic-polynomial expansion of the Phi coefficient
is kept in ``variance_polynomials`` for diagnostics; it does not agree with the
dense-matrix oracle (see FINDINGS.md) and nothing downstream uses it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ScanConfig:
    """Scenario geometry.

    n_scans is the N of the closed forms; the batch holds n_scans + 1
    measurement epochs at times 0, dt, ..., n_scans*dt. ``lam`` is the
    contamination offset expressed as a ratio to the measurement noise
    standard deviation, so the noise is always unit-variance here.
    """

    n_scans: int
    dt: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if int(self.n_scans) != self.n_scans or self.n_scans < 5:
            raise GeometryError("n_scans must be an integer >= 5")
        if not self.dt > 0:
            raise GeometryError("dt must be positive")
        if self.lam < 0:
            raise GeometryError("lam must be nonnegative")

    @property
    def epochs(self) -> int:
        return self.n_scans + 1


@dataclass(frozen=True)
class RegressionGeometry:
    design: np.ndarray    # 2*epochs x 4
    hat: np.ndarray       # 2*epochs x 2*epochs
    projector: np.ndarray  # I - hat


@dataclass(frozen=True)
class DiagBlockCoeffs:
    """Coefficients of the single-contamination quadratic forms at scan l.

    alpha scales the cost-difference mean (alpha = h_l - 1, in (-1, 0));
    beta scales its variance (beta = h_l (1 - h_l)). q1, q2, q3 are the
    tabulated polynomial terms kept for diagnostics only.
    """

    alpha: float
    beta: float
    q1: float
    q2: float
    q3: float


@dataclass(frozen=True)
class CrossCoeffs:
    alpha_cross: float
    theta_cross: float


def _check_scan(l, config):
    if int(l) != l or not 1 <= l <= config.n_scans:
        raise GeometryError(f"scan index {l} outside 1..{config.n_scans}")


def build_design(config: ScanConfig) -> np.ndarray:
    """2*epochs x 4 design matrix; epoch j contributes the row pair [I2 | j*dt*I2]."""
    taus = np.arange(config.epochs) * config.dt
    X = np.zeros((2 * config.epochs, 4))
    X[0::2, 0] = 1.0
    X[1::2, 1] = 1.0
    X[0::2, 2] = taus
    X[1::2, 3] = taus
    return X


@lru_cache(maxsize=64)
def _cached_geometry(n_scans: int, dt: float) -> RegressionGeometry:
    config = ScanConfig(n_scans=n_scans, dt=dt)
    X = build_design(config)
    xtx = X.T @ X
    if np.linalg.cond(xtx) > 1e12:
        raise GeometryError("degenerate geometry")
    hat = X @ np.linalg.solve(xtx, X.T)
    projector = np.eye(X.shape[0]) - hat
    return RegressionGeometry(design=X, hat=hat, projector=projector)


def build_projector(config: ScanConfig) -> RegressionGeometry:
    """Dense hat matrix and residual projector for the config's epoch grid."""
    return _cached_geometry(config.n_scans, config.dt)


def leverage(l, config: ScanConfig) -> float:
    """Scalar leverage of epoch l (per coordinate), closed form."""
    _check_scan(l, config)
    N = config.n_scans
    return 2.0 * (2 * N + 1 - 6 * l + 6 * l * l / N) / ((N + 1) * (N + 2))


def variance_polynomials(l, config: ScanConfig):
    """Tabulated cubic terms (q1, q2, q3) of the variance-coefficient expansion.

    q2 carries a 1/dt factor and q3 a 1/dt^2 factor, so the combination
    q1 + 2*l*dt*q2 + l^2*dt^2*q3 is dt-free. Diagnostics only: the combination
    is biased relative to the projector oracle (FINDINGS.md).
    """
    _check_scan(l, config)
    N = float(config.n_scans)
    dt = config.dt
    q1 = 4 * N**3 - 50 * N**2 + N * (48 * l - 18) + l * (24 - 36 * l) + 4
    q2 = -(6.0 / dt) * (N**2 - 5 * N - 2 + 4 * l * (1 + 1 / N - 3 * l / N))
    q3 = (36.0 / dt**2) * (N / 3 - 1 + (2 / N) * (1.0 / 3 + 2 * l - 2 * l / N**2))
    return q1, q2, q3


def diag_coeffs(l, config: ScanConfig) -> DiagBlockCoeffs:
    """Mean and variance coefficients for a single contaminated scan."""
    h = leverage(l, config)
    q1, q2, q3 = variance_polynomials(l, config)
    return DiagBlockCoeffs(alpha=h - 1.0, beta=h * (1.0 - h), q1=q1, q2=q2, q3=q3)


def cross_alpha(lk, lk2, config: ScanConfig) -> float:
    """Scalar of the projector block M_{lk,lk2}; symmetric in its indices."""
    _check_scan(lk, config)
    _check_scan(lk2, config)
    N = config.n_scans
    ind = 1.0 if lk == lk2 else 0.0
    return ind - 2.0 * (2 * N + 1 - 3 * lk2 - 3 * lk + 6 * lk * lk2 / N) / ((N + 1) * (N + 2))


def _excluded_sums(fa_indices, config):
    """Sums of (4N+2-6m)^2, cross term, (1-2m/N)^2 over epochs m not contaminated.

    The dt factors of the q2/q3-style terms are folded in, so the returned
    triple is dt-free.
    """
    N = config.n_scans
    excluded = set(int(i) for i in fa_indices)
    m = np.array([j for j in range(N + 1) if j not in excluded], dtype=float)
    a = 4 * N + 2 - 6 * m
    b = 1 - 2 * m / N
    return float((a * a).sum()), float(-6.0 * (a * b).sum()), float(36.0 * (b * b).sum())


def cross_theta(lk, lk2, fa_indices, config: ScanConfig) -> float:
    """Scalar of the Phi block at (lk, lk2) for the contaminated-index set.

    Phi = M S M' with S the identity noise covariance zeroed on every block in
    fa_indices. Equals the excluded-epoch sum form; for a single index it
    reduces exactly to diag_coeffs(l).beta.
    """
    fa = tuple(int(i) for i in fa_indices)
    if len(set(fa)) != len(fa):
        raise GeometryError("contaminated indices must be distinct")
    for i in fa:
        _check_scan(i, config)
    if lk not in fa or lk2 not in fa:
        raise GeometryError("cross_theta indices must belong to the contaminated set")
    N = config.n_scans
    s1, s2, s3 = _excluded_sums(fa, config)
    d = float((N + 1) * (N + 2))
    return (s1 + (lk + lk2) * s2 + lk * lk2 * s3) / (d * d)


def cross_coeffs(lk, lk2, fa_indices, config: ScanConfig) -> CrossCoeffs:
    return CrossCoeffs(
        alpha_cross=cross_alpha(lk, lk2, config),
        theta_cross=cross_theta(lk, lk2, fa_indices, config),
    )
