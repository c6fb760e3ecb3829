"""Markov-chain analysis of consecutive false associations.

Each time period the association decision is false with probability p_fa,
independently of the past; the pair of the last two decisions is then a
4-state chain over (1)=[ca,ca], (2)=[ca,fa], (3)=[fa,ca], (4)=[fa,fa]. The
chain forgets its start after two steps (P^n = P^2 for n >= 2), the stationary
law is the product form ((1-p)^2, p(1-p), p(1-p), p^2), and making state 4
absorbing turns "two consecutive false associations within n steps" into an
absorbing-chain reach probability with a two-eigenvalue closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np


class DegenerateChainError(ValueError):
    pass


@dataclass(frozen=True)
class AssocDTMC:
    p_fa: float

    def __post_init__(self):
        if not 0.0 <= self.p_fa <= 1.0:
            raise ValueError("p_fa must lie in [0, 1]")

    @property
    def p_ca(self) -> float:
        return 1.0 - self.p_fa


@dataclass(frozen=True)
class ChainMatrices:
    p2: np.ndarray
    p2_absorbing: np.ndarray


def build_chains(dtmc: AssocDTMC) -> ChainMatrices:
    p = dtmc.p_fa
    q = 1.0 - p
    p2 = np.array([
        [q, p, 0.0, 0.0],
        [0.0, 0.0, q, p],
        [q, p, 0.0, 0.0],
        [0.0, 0.0, q, p],
    ])
    p2_abs = p2.copy()
    p2_abs[3] = [0.0, 0.0, 0.0, 1.0]
    return ChainMatrices(p2=p2, p2_absorbing=p2_abs)


def stationary(dtmc: AssocDTMC) -> np.ndarray:
    """Product-form stationary law, cross-checked against the balance equation."""
    p = dtmc.p_fa
    if not 0.0 < p < 1.0:
        raise DegenerateChainError("stationary law needs 0 < p_fa < 1")
    q = 1.0 - p
    pi = np.array([q * q, p * q, p * q, p * p])
    p2 = build_chains(dtmc).p2
    a = np.vstack([p2.T - np.eye(4), np.ones(4)])
    solved, *_ = np.linalg.lstsq(a, np.concatenate([np.zeros(4), [1.0]]), rcond=None)
    if np.abs(solved - pi).max() > 1e-12:
        raise RuntimeError("product-form stationary law failed the balance equation")
    return pi


def chain_power(dtmc: AssocDTMC, n: int) -> np.ndarray:
    """P2^n; collapses to P2^2 for every n >= 2."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    p2 = build_chains(dtmc).p2
    if n == 0:
        return np.eye(4)
    if n == 1:
        return p2
    return p2 @ p2


def mean_intervisit(dtmc: AssocDTMC, state: int) -> float:
    """Mean recurrence time of a state (1-based), 1 / pi_state."""
    if not 1 <= state <= 4:
        raise ValueError("state must be 1..4")
    return 1.0 / stationary(dtmc)[state - 1]


@dataclass(frozen=True)
class ReachProbability:
    """P(state 4 reached within [0, n]) from [ca,ca], three ways.

    ``value`` is the matrix-power oracle, ``spectral`` the two-eigenvalue
    closed form (the two are required to agree to 1e-10), ``expansion`` the
    tabulated small-p quadratic (n+1)p^2 + p/3, whose error is O(p) -- kept
    for diagnostics, see FINDINGS.md.
    """

    value: float
    spectral: float
    expansion: float


def _spectral_reach(p: float, n: int) -> float:
    if p == 0.0:
        return 0.0
    disc = math.sqrt(1.0 + 2.0 * p - 3.0 * p * p)
    out = 1.0
    for lam in ((1.0 - p - disc) / 2.0, (1.0 - p + disc) / 2.0):
        out -= lam ** (n + 1) * (lam + p) / ((1.0 - p) * (lam + 2.0 * p))
    return out


def reach_probability(dtmc: AssocDTMC, n: int) -> ReachProbability:
    if n < 0:
        raise ValueError("n must be nonnegative")
    p = dtmc.p_fa
    if not 0.0 <= p < 1.0:
        raise DegenerateChainError("reach probability needs 0 <= p_fa < 1")
    power = float(np.linalg.matrix_power(build_chains(dtmc).p2_absorbing, n)[0, 3])
    spectral = _spectral_reach(p, n)
    if abs(power - spectral) > 1e-10:
        raise RuntimeError("spectral reach probability disagrees with matrix powers")
    return ReachProbability(value=power, spectral=spectral,
                            expansion=(n + 1) * p * p + p / 3.0)


def reach_probability_alt_form(dtmc: AssocDTMC, n: int) -> float:
    """Alternative tabulated closed form for the reach probability.

    Retained only for cross-checking: it disagrees grossly with the
    matrix-power oracle (values outside [0, 1]); see FINDINGS.md.
    """
    p = dtmc.p_fa
    disc = math.sqrt(1.0 + 2.0 * p - 3.0 * p * p)
    l2 = (1.0 - p - disc) / 2.0
    l3 = (1.0 - p + disc) / 2.0
    q = 1.0 - p
    return (1.0
            - l2 ** (n + 1) * (2 * l2 + q) / (2 * l2 * l2 + q * q)
            + l3 ** (n + 1) * (2 * l3 + q) / (2 * l3 * l3 + q * q))


def _transient_q(p: float) -> np.ndarray:
    q = 1.0 - p
    return np.array([[q, p, 0.0], [0.0, 0.0, q], [q, p, 0.0]])


def expected_transient_visits(dtmc: AssocDTMC, start) -> float:
    """Expected steps before absorption, start a law over transient states (1,2,3).

    Closed form start . ((1+p)/p^2, 1/p^2, (1+p)/p^2), cross-checked against
    the fundamental-matrix solve. Infinite for p_fa = 0.
    """
    p = dtmc.p_fa
    start = np.asarray(start, dtype=float)
    if start.shape != (3,) or start.min() < 0 or abs(start.sum() - 1.0) > 1e-12:
        raise ValueError("start must be a probability vector over the 3 transient states")
    if p == 0.0:
        raise DegenerateChainError("expected absorption time is infinite for p_fa = 0")
    closed = np.array([(1.0 + p) / p**2, 1.0 / p**2, (1.0 + p) / p**2])
    solved = np.linalg.solve(np.eye(3) - _transient_q(p), np.ones(3))
    if np.abs(closed - solved).max() > 1e-8 * max(1.0, np.abs(closed).max()):
        raise RuntimeError("closed-form expected visits disagree with the linear solve")
    return float(start @ closed)


def absorption_time_pmf(dtmc: AssocDTMC, start, n: int) -> float:
    """P(absorbed exactly at step n) = start . Q^{n-1} (I - Q) 1, n >= 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = dtmc.p_fa
    start = np.asarray(start, dtype=float)
    q = _transient_q(p)
    vec = (np.eye(3) - q) @ np.ones(3)
    return float(start @ np.linalg.matrix_power(q, n - 1) @ vec)


def consecutive_fa_chain(k: int, p_fa: float):
    """Transition matrices for the window of the last k decisions.

    States are the 2^k bit tuples (1 = false association), indexed by their
    binary value; the all-ones state means k consecutive false associations.
    Returns (full, absorbing) where the absorbing variant traps the all-ones
    state. No closed form is matched here; validation is by simulation.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= p_fa <= 1.0:
        raise ValueError("p_fa must lie in [0, 1]")
    states = list(product((0, 1), repeat=k))
    index = {s: i for i, s in enumerate(states)}
    m = len(states)
    full = np.zeros((m, m))
    for s in states:
        i = index[s]
        for bit, prob in ((0, 1.0 - p_fa), (1, p_fa)):
            full[i, index[s[1:] + (bit,)]] += prob
    absorbing = full.copy()
    trap = index[(1,) * k]
    absorbing[trap] = 0.0
    absorbing[trap, trap] = 1.0
    return full, absorbing
