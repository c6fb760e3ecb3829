"""Monte Carlo ground truth for the analytic machinery.

Randomness discipline: every estimate is driven by Philox counter streams.
A trial owns a fixed, precomputed window of 64-bit words (uniforms are turned
into normals by Box-Muller, which consumes exactly one word per normal), so
trial t always sees the same draws no matter the chunk size, execution order,
or thread count. Costs are evaluated through the dense residual projector --
never through the closed-form coefficients under test -- and the brute-force
least-squares route is cross-checked in the test suite.

The kinematic state (origin, velocity) is carried in the plan but provably
cancels from the cost difference (the projector annihilates the design matrix),
so the implementation computes the difference directly from the noise; this is
what makes the estimates exactly invariant to the scenario kinematics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ScanConfig, build_projector
from .multi_fa import FalseAssocSet
from .single_fa import RandomLambda

_DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class TrialPlan:
    """Reproducible simulation request; estimates depend only on (plan, seed)."""

    trials: int
    seed: int
    config: ScanConfig
    scan: int | None = None
    fa: FalseAssocSet | None = None
    random_lambda: RandomLambda | None = None
    velocity: tuple = (0.0, 0.0)
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class McEstimate:
    p_hat: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class MomentSample:
    """Empirical first/second moments of the conditional mean and variance."""

    m1_mean: float
    m1_mean_se: float
    m1_var: float
    m1_var_se: float
    v1_mean: float
    v1_mean_se: float
    v1_var: float
    v1_var_se: float


def _philox_words(seed, tag, word_offset, n_words):
    if word_offset % 4:
        raise ValueError("word offsets must be multiples of 4")
    gen = np.random.Philox(key=[np.uint64(seed), np.uint64(tag)],
                           counter=[word_offset // 4, 0, 0, 0])
    return gen.random_raw(n_words)


def _words_to_normals(words):
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(words.shape[0], dtype=np.float64)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z


def _trial_words(config, with_lambda):
    raw = 2 * config.epochs + (2 if with_lambda else 0)
    return ((raw + 3) // 4) * 4


def _noise_chunks(plan, with_lambda, chunk_size):
    """Yield (noise matrix, lambda draws) per chunk, trial-indexed streams."""
    width = _trial_words(plan.config, with_lambda)
    dim = 2 * plan.config.epochs
    done = 0
    while done < plan.trials:
        count = min(chunk_size, plan.trials - done)
        words = _philox_words(plan.seed, 0, done * width, count * width)
        block = words.reshape(count, width)
        noise = _words_to_normals(block[:, :dim].ravel()).reshape(count, dim)
        lam_draws = None
        if with_lambda:
            z = _words_to_normals(block[:, dim:dim + 2].ravel()).reshape(count, 2)[:, 0]
            rl = plan.random_lambda
            lam_draws = rl.lambda0 + rl.sigma0 * z
        yield noise, lam_draws
        done += count


def _estimate(successes, trials):
    p = successes / trials
    return McEstimate(p_hat=p, stderr=math.sqrt(p * (1.0 - p) / trials), trials=trials)


def _delta_for_chunk(noise, indices, lam_per_scan, projector):
    """Cost difference per trial: q'Mq + 2 q'M eps with q = decoy - noise, sparse."""
    rows_x = [projector[2 * l] for l in indices]
    rows_y = [projector[2 * l + 1] for l in indices]
    ex = np.stack([noise[:, 2 * l] for l in indices], axis=1)
    ey = np.stack([noise[:, 2 * l + 1] for l in indices], axis=1)
    qx = -ex
    qy = -(lam_per_scan + ey)
    a = np.array([[projector[2 * la, 2 * lb] for lb in indices] for la in indices])
    qmq = (np.einsum("ti,ij,tj->t", qx, a, qx)
           + np.einsum("ti,ij,tj->t", qy, a, qy))
    qme = np.zeros(noise.shape[0])
    for i in range(len(indices)):
        qme += qx[:, i] * (noise @ rows_x[i]) + qy[:, i] * (noise @ rows_y[i])
    return qmq + 2.0 * qme


def simulate_single_fa(plan: TrialPlan, chunk_size: int = _DEFAULT_CHUNK) -> McEstimate:
    """Estimate P(cost difference >= 0) for one contaminated scan.

    The decoy sits at (x_l, y_l - lam); lam is plan.config.lam, or drawn per
    trial when plan.random_lambda is set.
    """
    l = plan.scan if plan.scan is not None else plan.config.n_scans
    if not 1 <= l <= plan.config.n_scans:
        raise ValueError("scan index outside 1..n_scans")
    projector = build_projector(plan.config).projector
    with_lambda = plan.random_lambda is not None
    hits = 0
    for noise, lam_draws in _noise_chunks(plan, with_lambda, chunk_size):
        if lam_draws is None:
            lam_col = np.full((noise.shape[0], 1), plan.config.lam)
        else:
            lam_col = lam_draws[:, None]
        delta = _delta_for_chunk(noise, [l], lam_col, projector)
        hits += int((delta >= 0.0).sum())
    return _estimate(hits, plan.trials)


def simulate_multi_fa(plan: TrialPlan, chunk_size: int = _DEFAULT_CHUNK):
    """Estimate the multi-contamination probability plus (m1, v1) moment samples.

    Returns (McEstimate, MomentSample). m1 and v1 are evaluated from the dense
    projector blocks, keeping the oracle independent of the closed-form sums it
    validates. A single contaminated scan reduces exactly to simulate_single_fa
    (same stream, same counts).
    """
    if plan.fa is None:
        raise ValueError("multi-contamination plan needs plan.fa")
    fa = plan.fa
    if fa.indices[-1] > plan.config.n_scans:
        raise ValueError("contaminated index beyond the last scan")
    geom = build_projector(plan.config)
    projector = geom.projector
    epochs = plan.config.epochs
    idx = fa.indices
    lam = np.asarray(fa.lambdas)

    sel = np.eye(2 * epochs)
    for l in idx:
        sel[2 * l, 2 * l] = 0.0
        sel[2 * l + 1, 2 * l + 1] = 0.0
    phi = projector @ sel @ projector
    a_blocks = np.array([[projector[2 * la, 2 * lb] for lb in idx] for la in idx])
    th_blocks = np.array([[phi[2 * la, 2 * lb] for lb in idx] for la in idx])

    hits = 0
    m1_parts = []
    v1_parts = []
    for noise, _ in _noise_chunks(plan, False, chunk_size):
        delta = _delta_for_chunk(noise, list(idx), lam[None, :], projector)
        hits += int((delta >= 0.0).sum())
        ex = np.stack([noise[:, 2 * l] for l in idx], axis=1)
        ey = np.stack([noise[:, 2 * l + 1] for l in idx], axis=1)
        m1 = (np.einsum("ti,ij,tj->t", ex, a_blocks, ex)
              + np.einsum("ti,ij,tj->t", ey, a_blocks, ey) - lam @ a_blocks @ lam)
        u = ey + lam[None, :]
        v1 = 4.0 * (np.einsum("ti,ij,tj->t", ex, th_blocks, ex)
                    + np.einsum("ti,ij,tj->t", u, th_blocks, u))
        m1_parts.append(m1)
        v1_parts.append(v1)
    m1 = np.concatenate(m1_parts)
    v1 = np.concatenate(v1_parts)

    def stats(x):
        n = x.shape[0]
        mean = float(x.mean())
        centered = x - mean
        var = float((centered**2).mean())
        m4 = float((centered**4).mean())
        return mean, math.sqrt(var / n), var, math.sqrt(max(m4 - var * var, 0.0) / n)

    m1_mean, m1_mean_se, m1_var, m1_var_se = stats(m1)
    v1_mean, v1_mean_se, v1_var, v1_var_se = stats(v1)
    return _estimate(hits, plan.trials), MomentSample(
        m1_mean=m1_mean, m1_mean_se=m1_mean_se, m1_var=m1_var, m1_var_se=m1_var_se,
        v1_mean=v1_mean, v1_mean_se=v1_mean_se, v1_var=v1_var, v1_var_se=v1_var_se)


def simulate_conditional(e_l, l, config: ScanConfig, trials: int, seed: int,
                         chunk_size: int = _DEFAULT_CHUNK) -> np.ndarray:
    """Samples of the cost difference with the scan-l noise pinned to e_l."""
    plan = TrialPlan(trials=trials, seed=seed, config=config, scan=l)
    projector = build_projector(config).projector
    out = []
    for noise, _ in _noise_chunks(plan, False, chunk_size):
        noise[:, 2 * l] = e_l[0]
        noise[:, 2 * l + 1] = e_l[1]
        lam_col = np.full((noise.shape[0], 1), config.lam)
        out.append(_delta_for_chunk(noise, [l], lam_col, projector))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# decision-chain simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DtmcSimStats:
    occupancy: np.ndarray        # empirical law of the 4 pair states
    occupancy_steps: int
    mean_return_state4: float    # mean gap between state-4 visits
    return_count: int
    mean_absorption_steps: float  # mean decisions until two consecutive fa
    absorption_se: float
    runs: int


def _decision_bits(seed, tag, offset, count, p):
    words = _philox_words(seed, tag, offset, ((count + 3) // 4) * 4)[:count]
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return u < p


def simulate_dtmc(p_fa: float, steps: int, runs: int, seed: int) -> DtmcSimStats:
    """Empirical pair-state occupancy, state-4 return gaps, and absorption times.

    One long decision sequence provides occupancy and return statistics; the
    absorption statistic restarts ``runs`` independent sequences from [ca, ca]
    and counts decisions until the first fa-fa pair. Group-indexed streams make
    every statistic a pure function of (p_fa, steps, runs, seed).
    """
    if not 0.0 <= p_fa <= 1.0:
        raise ValueError("p_fa must lie in [0, 1]")
    if steps < 2 or runs < 1:
        raise ValueError("need steps >= 2 and runs >= 1")

    bits = _decision_bits(seed, 1, 0, steps, p_fa).astype(np.int8)
    states = 2 * bits[:-1] + bits[1:]
    occupancy = np.bincount(states, minlength=4).astype(float) / states.shape[0]
    visits = np.flatnonzero(states == 3)
    if visits.shape[0] >= 2:
        mean_return = float(np.diff(visits).mean())
        return_count = visits.shape[0] - 1
    else:
        mean_return = math.inf
        return_count = 0

    if p_fa == 0.0:
        return DtmcSimStats(occupancy=occupancy, occupancy_steps=steps,
                            mean_return_state4=mean_return, return_count=return_count,
                            mean_absorption_steps=math.inf, absorption_se=math.inf,
                            runs=runs)

    block = 256
    group_size = 4096
    times = np.empty(runs)
    for g0 in range(0, runs, group_size):
        g = min(group_size, runs - g0)
        tag = 1000 + g0 // group_size
        alive = np.arange(g)
        t_abs = np.zeros(g, dtype=np.int64)
        carry = np.zeros(g, dtype=np.int8)   # last decision of the previous block
        base = 0
        offset = 0
        while alive.size:
            need = alive.size * block
            flat = _decision_bits(seed, tag, offset, need, p_fa).astype(np.int8)
            offset += ((need + 3) // 4) * 4
            chunk = flat.reshape(alive.size, block)
            paired = np.concatenate([carry[alive, None], chunk], axis=1)
            hit = (paired[:, :-1] & paired[:, 1:]).astype(bool)
            found = hit.any(axis=1)
            first = hit.argmax(axis=1)
            t_abs[alive[found]] = base + first[found] + 1
            carry[alive] = chunk[:, -1]
            alive = alive[~found]
            base += block
        times[g0:g0 + g] = t_abs
    se = float(times.std(ddof=1) / math.sqrt(runs)) if runs > 1 else math.inf
    return DtmcSimStats(occupancy=occupancy, occupancy_steps=steps,
                        mean_return_state4=mean_return, return_count=return_count,
                        mean_absorption_steps=float(times.mean()),
                        absorption_se=se, runs=runs)
