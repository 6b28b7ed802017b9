"""Exact small-instance chain analysis: dense transition matrix, stationary
vector, total-variation mixing, conditional influence, identifiability margins.

State indexing convention: state index s encodes the vector with node j's bit
at ``(s >> j) & 1``.  Everything here is dense over the full 2^p state space,
so node counts are capped at `MAX_EXACT_NODES`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import BarModel, GraphTruth

MAX_EXACT_NODES = 20
STATIONARY_TOL = 1e-12
MAX_POWER_ITERS = 10**6


class TooLarge(ValueError):
    pass


class DegenerateConditioning(ValueError):
    pass


class SingularSystem(ValueError):
    pass


def all_states(p: int) -> np.ndarray:
    """(2^p, p) array of every binary state, row s = bits of s."""
    idx = np.arange(2**p, dtype=np.int64)
    return ((idx[:, None] >> np.arange(p)) & 1).astype(np.uint8)


def index_to_state(idx: int, p: int) -> np.ndarray:
    return ((idx >> np.arange(p)) & 1).astype(np.uint8)


def state_to_index(x: Sequence[int]) -> int:
    return int(np.asarray(x, dtype=np.int64) @ (1 << np.arange(len(x))))


@dataclass(frozen=True)
class ExactChain:
    """Dense chain representation; immutable once built.

    ``transition[s, t]`` is the one-step probability, ``stationary`` the
    invariant row vector, and ``next_marginals[s, i]`` the probability that
    node i is 1 at the next step from state s (noise already marginalized).
    """

    model: BarModel
    transition: np.ndarray
    stationary: np.ndarray
    next_marginals: np.ndarray

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def states(self) -> np.ndarray:
        return all_states(self.p)


def _stationary_from_transition(transition: np.ndarray) -> np.ndarray:
    size = transition.shape[0]
    pi = np.full(size, 1.0 / size)
    for _ in range(MAX_POWER_ITERS):
        nxt = pi @ transition
        if np.abs(nxt - pi).sum() <= STATIONARY_TOL:
            return nxt / nxt.sum()
        pi = nxt
    # Conditioning got in the way; fall back to the dense balance equations.
    a = np.vstack([transition.T - np.eye(size), np.ones((1, size))])
    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return pi / pi.sum()


def build_transition(model: BarModel) -> ExactChain:
    """Enumerate the full transition matrix and solve for the stationary law."""
    if model.p > MAX_EXACT_NODES:
        raise TooLarge(f"p={model.p} exceeds the exact cap {MAX_EXACT_NODES}")
    states = all_states(model.p).astype(float)
    q = states @ model.signed_matrix.T + model.negative_offset
    q += model.rho_w * model.b_vector
    size = 2**model.p
    transition = np.ones((size, size))
    bits = all_states(model.p)
    for i in range(model.p):
        qi = q[:, i][:, None]
        transition *= np.where(bits[:, i][None, :] == 1, qi, 1.0 - qi)
    stationary = _stationary_from_transition(transition)
    return ExactChain(model, transition, stationary, q)


def tv_distance(mu: np.ndarray, nu: np.ndarray) -> float:
    return 0.5 * float(np.abs(mu - nu).sum())


def _max_tv(powered: np.ndarray, stationary: np.ndarray) -> float:
    return 0.5 * float(np.abs(powered - stationary).sum(axis=1).max())


def tv_to_stationarity(chain: ExactChain, n: int) -> float:
    """Worst-case total-variation distance to stationarity after n steps."""
    if n < 0:
        raise ValueError("n >= 0 required")
    powered = np.linalg.matrix_power(chain.transition, n)
    return _max_tv(powered, chain.stationary)


def tv_curve(chain: ExactChain, n_max: int) -> np.ndarray:
    """Array of the worst-case TV distance at n = 0..n_max."""
    out = np.empty(n_max + 1)
    powered = np.eye(chain.transition.shape[0])
    out[0] = _max_tv(powered, chain.stationary)
    for n in range(1, n_max + 1):
        powered = powered @ chain.transition
        out[n] = _max_tv(powered, chain.stationary)
    return out


def exact_mixing_time(chain: ExactChain, theta: float) -> int:
    """Smallest n with worst-case TV distance at most theta."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta in (0,1) required")
    powered = np.eye(chain.transition.shape[0])
    n = 0
    while _max_tv(powered, chain.stationary) > theta:
        powered = powered @ chain.transition
        n += 1
        if n > 10**6:
            raise RuntimeError("mixing time search did not terminate")
    return n


def nu_matrix(chain: ExactChain) -> np.ndarray:
    """All conditional influences; entry [m, l] is
    P(X_m^{+1}=1 | X_l=1) - P(X_m^{+1}=1 | X_l=0) under stationarity."""
    bits = chain.states
    pi = chain.stationary
    q = chain.next_marginals
    out = np.empty((chain.p, chain.p))
    for l in range(chain.p):
        on = bits[:, l] == 1
        mass_on = pi[on].sum()
        mass_off = pi[~on].sum()
        if mass_on <= 0 or mass_off <= 0:
            raise DegenerateConditioning(f"node {l} is constant under stationarity")
        out[:, l] = pi[on] @ q[on] / mass_on - pi[~on] @ q[~on] / mass_off
    return out


def exact_nu(chain: ExactChain, m: int, l: int) -> float:
    """Conditional influence of node l on node m one step later."""
    bits = chain.states
    pi = chain.stationary
    q = chain.next_marginals[:, m]
    on = bits[:, l] == 1
    mass_on = pi[on].sum()
    mass_off = pi[~on].sum()
    if mass_on <= 0 or mass_off <= 0:
        raise DegenerateConditioning(f"node {l} is constant under stationarity")
    return float(pi[on] @ q[on] / mass_on - pi[~on] @ q[~on] / mass_off)


def _subset_mask(chain: ExactChain, subset: Sequence[int], values: Sequence[int]) -> np.ndarray:
    bits = chain.states
    mask = np.ones(bits.shape[0], dtype=bool)
    for node, val in zip(subset, values, strict=True):
        mask &= bits[:, node] == val
    return mask


def subset_probability(chain: ExactChain, subset: Sequence[int], values: Sequence[int]) -> float:
    """Stationary probability of a joint bit pattern on a node subset."""
    return float(chain.stationary[_subset_mask(chain, subset, values)].sum())


def joint_with_next(
    chain: ExactChain, m: int, subset: Sequence[int], values: Sequence[int]
) -> float:
    """Stationary probability of X_m^{+1}=1 together with a subset pattern."""
    mask = _subset_mask(chain, subset, values)
    return float(chain.stationary[mask] @ chain.next_marginals[mask, m])


def exact_conditional(
    chain: ExactChain, i: int, subset: Sequence[int], values: Sequence[int]
) -> float:
    """Stationary conditional P(X_i^{+1}=1 | X_subset = values).

    With an empty subset this is the stationary marginal of node i.
    """
    mask = _subset_mask(chain, subset, values)
    mass = chain.stationary[mask].sum()
    if mass <= 0:
        raise DegenerateConditioning(f"pattern {list(values)} on {list(subset)} has no mass")
    return float(chain.stationary[mask] @ chain.next_marginals[mask, i] / mass)


def exact_conditional_table(chain: ExactChain, i: int, subset: Sequence[int]) -> np.ndarray:
    """Conditional of node i given each of the 2^d patterns of the subset.

    Pattern index c has bit t equal to the value of ``subset[t]``.
    """
    d = len(subset)
    out = np.empty(2**d)
    for c in range(2**d):
        vals = [(c >> t) & 1 for t in range(d)]
        out[c] = exact_conditional(chain, i, subset, vals)
    return out


def stationary_marginals(model: BarModel) -> np.ndarray:
    """Per-node stationary one-probabilities from the linear fixed point.

    Solves ``m = A_signed m + offset + rho_w b``; the system is regular for
    every valid model because the signed matrix has spectral radius < 1.
    """
    rhs = model.negative_offset + model.rho_w * model.b_vector
    try:
        sol = np.linalg.solve(np.eye(model.p) - model.signed_matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"fixed-point system singular: {exc}") from exc
    return sol


def estimate_spectral_radius(mat: np.ndarray, iters: int = 200, seed: int = 0) -> float:
    """Power-iteration growth-rate estimate of the spectral radius."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    rate = 0.0
    for _ in range(iters):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        rate = norm
        v = w / norm
    return float(rate)


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Per-node margins between weakest-parent and strongest-non-parent
    influence magnitudes, plus sign-consistency flags."""

    margins: np.ndarray
    sign_consistent: np.ndarray
    nu: np.ndarray

    @property
    def identifiable(self) -> bool:
        return bool(np.all(self.margins > 0) and np.all(self.sign_consistent))


def identifiability_margin(chain: ExactChain, truth: GraphTruth) -> IdentifiabilityReport:
    """Measure how separable true parents are from non-parents at each node."""
    nu = nu_matrix(chain)
    p = chain.p
    margins = np.empty(p)
    signs_ok = np.empty(p, dtype=bool)
    for m in range(p):
        parents = sorted(truth.parents[m])
        others = [l for l in range(p) if l not in truth.parents[m]]
        weakest = np.abs(nu[m, parents]).min()
        strongest = np.abs(nu[m, others]).max() if others else 0.0
        margins[m] = weakest - strongest
        signs_ok[m] = all(nu[m, l] > 0 for l in truth.positive[m]) and all(
            nu[m, l] < 0 for l in truth.negative[m]
        )
    return IdentifiabilityReport(margins, signs_ok, nu)


def save_stationary_csv(chain: ExactChain, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "probability"])
        for s, prob in enumerate(chain.stationary):
            writer.writerow([s, repr(float(prob))])


def save_tv_curve_csv(chain: ExactChain, n_max: int, path: str) -> None:
    curve = tv_curve(chain, n_max)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "d_n"])
        for n, val in enumerate(curve):
            writer.writerow([n, repr(float(val))])
