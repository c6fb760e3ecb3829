"""Probability of correct association under several false measurements.

With K contaminated scans the conditional cost difference is still Gaussian,
but its mean and variance are themselves random through the noise at the
contaminated scans:

    m1 = sum_kk' A_kk' (<e_k, e_k'> - lam_k lam_k')      (sign: m1 = -E[diff|e])
    v1 = 4 sum_kk' Th_kk' <e_k - fa_k, e_k' - fa_k'>

with A the projector-block scalars (geometry.cross_alpha) and Th the
Phi-block scalars (geometry.cross_theta). Compounding the conditional tail
over m1 ~ N(m0, sigma0^2) and a chosen law for v1 gives

    P = integral of upper_tail(m0 / sqrt(sigma0^2 + v1)) g2(v1) dv1,

evaluated here for a chi-square, a normal, and an exponential v1 law. The
moment parameters are the exact first two moments of m1 and v1 under
e_k ~ N(0, I2); tabulated variants that disagree with the Monte Carlo moment
oracle are kept selectable and documented in FINDINGS.md.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .geometry import GeometryError, ScanConfig, cross_alpha, cross_theta
from .quadrature import adaptive_integrate, normal_upper_tail

S0_VARIANTS = ("exact", "main", "appendix")


@dataclass(frozen=True)
class FalseAssocSet:
    """Strictly increasing contaminated scan indices with per-scan offsets."""

    indices: tuple
    lambdas: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        lams = tuple(float(x) for x in self.lambdas)
        if len(idx) < 1:
            raise ValueError("need at least one contaminated scan")
        if len(idx) != len(lams):
            raise ValueError("indices and lambdas must have equal length")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")
        if any(x < 0 for x in lams):
            raise ValueError("offsets must be nonnegative")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "lambdas", lams)

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class MomentParams:
    m0: float
    sigma0_sq: float
    v0: float
    s0_sq: float


def coefficient_matrices(fa: FalseAssocSet, config: ScanConfig):
    """K x K matrices of projector-block (A) and Phi-block (Th) scalars."""
    idx = fa.indices
    if idx[-1] > config.n_scans:
        raise GeometryError("contaminated index beyond the last scan")
    A = np.array([[cross_alpha(a, b, config) for b in idx] for a in idx])
    Th = np.array([[cross_theta(a, b, idx, config) for b in idx] for a in idx])
    return A, Th


def moment_params(fa: FalseAssocSet, config: ScanConfig,
                  s0_variant: str = "exact") -> MomentParams:
    """First two moments of (m1, v1) over the contaminated-scan noise.

    m0 and v0 are the tabulated sums (they coincide with the exact means).
    sigma0_sq uses the exact second-moment algebra 4*sum(A_kk'^2); the
    tabulated 4*(sum A_kk')^2 fails the Monte Carlo moment oracle for K >= 2
    (FINDINGS.md). s0_variant selects the v1-variance formula: "exact"
    (64*[tr(Th^2) + |Th lam|^2], matches the oracle, default), "main" or
    "appendix" for the two tabulated alternatives.
    """
    if s0_variant not in S0_VARIANTS:
        raise ValueError(f"s0_variant must be one of {S0_VARIANTS}")
    A, Th = coefficient_matrices(fa, config)
    lam = np.asarray(fa.lambdas, dtype=float)
    m0 = 2.0 * float(np.trace(A)) - float(lam @ A @ lam)
    sigma0_sq = 4.0 * float((A * A).sum())
    v0 = 4.0 * float(2.0 * np.trace(Th) + lam @ Th @ lam)
    if s0_variant == "exact":
        tl = Th @ lam
        s0_sq = 64.0 * float((Th * Th).sum() + tl @ tl)
    elif s0_variant == "main":
        one = 1.0 + lam
        s0_sq = 2.0 * float(one @ Th @ one) * float(Th.sum())
    else:
        s0_sq = 64.0 * float((np.diag(Th) ** 2 * (1.0 + lam**2)).sum())
    return MomentParams(m0=m0, sigma0_sq=sigma0_sq, v0=v0, s0_sq=s0_sq)


def _chi2_pdf(v, df):
    k = df / 2.0
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = np.exp((k - 1) * np.log(v[pos]) - v[pos] / 2.0
                      - k * math.log(2.0) - math.lgamma(k))
    return out


def _chi2_upper_cutoff(df, tail=1e-10):
    hi = 2.0 * df + 10.0
    while special.gammaincc(df / 2.0, hi / 2.0) > tail:
        hi *= 1.5
    return hi


def prob_chi2(K: int, mp: MomentParams) -> float:
    """Compound tail with v1 ~ chi-square(2K), as tabulated (no rescaling)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    df = 2 * K
    hi = _chi2_upper_cutoff(df)

    def f(v):
        return normal_upper_tail(mp.m0 / np.sqrt(mp.sigma0_sq + v)) * _chi2_pdf(v, df)

    val, _ = adaptive_integrate(f, 0.0, hi, abs_tol=1e-8)
    return min(max(val, 0.0), 1.0)


class NormalCompound(NamedTuple):
    value: float
    negative_mass: float
    unreliable: bool


def prob_normal(mp: MomentParams) -> NormalCompound:
    """Compound tail with v1 ~ N(v0, s0_sq), restricted to v1 > -sigma0_sq.

    The normal law puts mass on negative variances; if the mass at v1 <= 0
    exceeds 0.05 the result is flagged unreliable (the weight below -sigma0_sq,
    where the integrand is undefined, is dropped entirely).
    """
    s0 = math.sqrt(mp.s0_sq)
    neg_mass = float(normal_upper_tail((mp.v0 - 0.0) / s0)) if s0 > 0 else float(mp.v0 <= 0)
    lo = max(-mp.sigma0_sq + 1e-12 * (1.0 + mp.sigma0_sq), mp.v0 - 12.0 * s0)
    hi = mp.v0 + 12.0 * s0
    if s0 == 0.0 or hi <= lo:
        val = float(normal_upper_tail(mp.m0 / math.sqrt(mp.sigma0_sq + mp.v0)))
        return NormalCompound(value=val, negative_mass=neg_mass, unreliable=neg_mass > 0.05)

    def f(v):
        return (normal_upper_tail(mp.m0 / np.sqrt(mp.sigma0_sq + v))
                * np.exp(-0.5 * ((v - mp.v0) / s0) ** 2) / (s0 * math.sqrt(2 * np.pi)))

    val, _ = adaptive_integrate(f, lo, hi, abs_tol=1e-8)
    return NormalCompound(value=min(max(val, 0.0), 1.0),
                          negative_mass=neg_mass, unreliable=neg_mass > 0.05)


class ExponentialCompound(NamedTuple):
    value: float
    series_value: float
    series_diagnostic: str


def prob_exponential(mp: MomentParams, rate: float, series_terms: int = 8) -> ExponentialCompound:
    """Compound tail with v1 ~ Exp(rate): quadrature value plus the tabulated series.

    The quadrature path is authoritative. The series path applies the tabulated
    odd-moment recursion seeded with a quadrature base term; it is divergent for
    most parameters (terms grow without bound), in which case the series value
    is NaN and the diagnostic says so. See FINDINGS.md.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    if series_terms < 1:
        raise ValueError("series_terms must be >= 1")
    hi = 40.0 / rate

    def f(v):
        return normal_upper_tail(mp.m0 / np.sqrt(mp.sigma0_sq + v)) * rate * np.exp(-rate * v)

    val, _ = adaptive_integrate(f, 0.0, hi, abs_tol=1e-8)
    val = min(max(val, 0.0), 1.0)

    # Base odd moment I1 by quadrature (no closed base is tabulated).
    def g(v):
        return (mp.m0 / np.sqrt(mp.sigma0_sq + v)) * rate * np.exp(-rate * v)

    i_term, _ = adaptive_integrate(g, 0.0, hi, abs_tol=1e-10)
    sigma0 = math.sqrt(mp.sigma0_sq)
    series = 1.0
    diagnostic = "converged"
    prev_mag = abs(i_term)
    growth = 0
    for n in range(series_terms):
        coeff = (2.0 / math.sqrt(np.pi)) * (-1.0) ** n / (math.factorial(n) * (2 * n + 1))
        series -= coeff * i_term
        nxt = rate * mp.m0 ** (2 * n + 3) - rate * mp.m0**2 * sigma0 ** (2 * n + 1) * i_term
        mag = abs(nxt)
        growth = growth + 1 if mag > prev_mag else 0
        if not math.isfinite(mag) or (growth >= 3 and mag > 1e6):
            series = float("nan")
            diagnostic = f"series diverged at term {n + 1} (|I| = {mag:.3g})"
            break
        prev_mag = mag
        i_term = nxt
    return ExponentialCompound(value=val, series_value=series, series_diagnostic=diagnostic)


def compound_density(mp: MomentParams, law: str = "chi2", K: int | None = None,
                     rate: float | None = None):
    """Density of the cost difference after compounding mean and variance.

    Returns a callable h(delta). The conditional mean of the cost difference is
    -m1 (m1 as defined above), so the compound normal has mean -m0 and variance
    sigma0_sq + v1, mixed over the chosen v1 law: "chi2" (needs K), "normal",
    "exponential" (needs rate), or "point" (v1 fixed at v0, giving an exact
    normal density).
    """
    if law == "point":
        s = math.sqrt(mp.sigma0_sq + mp.v0)

        def h_point(delta):
            d = np.asarray(delta, dtype=float)
            return np.exp(-0.5 * ((d + mp.m0) / s) ** 2) / (s * math.sqrt(2 * np.pi))

        return h_point

    if law == "chi2":
        if K is None:
            raise ValueError("chi2 law needs K")
        df = 2 * K
        hi = _chi2_upper_cutoff(df)
        weight = lambda v: _chi2_pdf(v, df)
        lo = 0.0
    elif law == "normal":
        s0 = math.sqrt(mp.s0_sq)
        if s0 == 0.0:
            raise ValueError("zero-variance normal law: use law='point'")
        lo = max(-mp.sigma0_sq + 1e-12 * (1.0 + mp.sigma0_sq), mp.v0 - 12.0 * s0)
        hi = mp.v0 + 12.0 * s0
        weight = lambda v: np.exp(-0.5 * ((v - mp.v0) / s0) ** 2) / (s0 * math.sqrt(2 * np.pi))
    elif law == "exponential":
        if rate is None or rate <= 0:
            raise ValueError("exponential law needs a positive rate")
        lo, hi = 0.0, 40.0 / rate
        weight = lambda v: rate * np.exp(-rate * v)
    else:
        raise ValueError(f"unknown variance law {law!r}")

    def h(delta):
        d = np.asarray(delta, dtype=float)

        def point(dd):
            def f(v):
                s2 = mp.sigma0_sq + v
                return weight(v) * np.exp(-0.5 * (dd + mp.m0) ** 2 / s2) / np.sqrt(2 * np.pi * s2)

            val, _ = adaptive_integrate(f, lo, hi, abs_tol=1e-10)
            return val

        if d.ndim == 0:
            return point(float(d))
        return np.array([point(float(x)) for x in d])

    return h
