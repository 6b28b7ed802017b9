"""Two-stage structure observer for binary autoregressive network data.

Stage one ranks, for every target node, all candidate sources by the
magnitude of the empirical conditional influence

    nu_hat[m, l] = P_hat(X_m^{+1}=1 | X_l=1) - P_hat(X_m^{+1}=1 | X_l=0)

and keeps the top d per node (a supergraph of the true parent sets when the
instance has positive identifiability margins and the estimates are within
half the margin).  Stage two trims each candidate set by locating the
configurations that nearly maximize the empirical conditional of the target
given the whole candidate set: candidates whose bit is constant across all
near-maximizers are kept, with the constant bit giving the sign.

Counts are accumulated over the n-1 observed transitions, so all empirical
conditionals are proper probabilities over a common window.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cache, cached_property
from typing import Mapping, Sequence

import numpy as np

from .model import GraphTruth
from .simulate import Trajectory

logger = logging.getLogger(__name__)

MAX_SUBSET_SIZE = 25  # 2^d table cap


class AllCellsEmpty(RuntimeError):
    """No candidate-set configuration was ever observed (sample too small)."""


@cache
def _int_mm():
    """Optional int8 GEMM kernel; 0/1 count matrices are integer products,
    and the int8 path runs several times faster than single-precision BLAS."""
    try:
        import torch

        torch.set_num_threads(1)
        return torch
    except ImportError:
        return None


def _pair_product(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact y^T @ x for 0/1 uint8 matrices, as int64 counts."""
    window = x.shape[0]
    torch = _int_mm()
    if torch is not None and window < 2**31:
        yt = torch.from_numpy(np.ascontiguousarray(y.T).view(np.int8))
        xt = torch.from_numpy(np.ascontiguousarray(x).view(np.int8))
        return torch._int_mm(yt, xt).numpy().astype(np.int64)
    ftype = np.float32 if window < 2**24 else np.float64
    return np.rint(y.astype(ftype).T @ x.astype(ftype)).astype(np.int64)


@dataclass(frozen=True)
class SubsetStats:
    """Configuration counts for one node's candidate set.

    Configuration code c has bit t equal to the observed value of
    ``candidates[t]``; ``joint[c]`` counts the co-occurrences with the target
    being 1 one step later.
    """

    candidates: tuple[int, ...]
    counts: np.ndarray
    joint: np.ndarray


@dataclass(frozen=True)
class EmpiricalStats:
    """Marginal, lagged-pair and subset counts from one or more trajectories.

    ``marginal[l, b]`` counts steps with node l equal to b; ``pair_ones[m, l]``
    counts transitions with node m equal to 1 after a step where node l was 1,
    and ``next_ones[m]`` those with node m equal to 1 regardless of l.  All
    counts run over the same window of ``window`` transitions.
    """

    p: int
    window: int
    marginal: np.ndarray | None = None
    pair_ones: np.ndarray | None = None
    next_ones: np.ndarray | None = None
    subsets: Mapping[int, SubsetStats] = field(default_factory=dict)

    @cached_property
    def pair(self) -> np.ndarray:
        """(p, p, 2) view of the lagged-pair counts: entry [m, l, b] counts
        transitions with node m equal to 1 after a step where node l was b."""
        if self.pair_ones is None or self.next_ones is None:
            raise ValueError("stats lack pairwise counts; run accumulate() first")
        return np.stack([self.next_ones[:, None] - self.pair_ones, self.pair_ones], axis=2)

    def merge(self, other: "EmpiricalStats") -> "EmpiricalStats":
        """Sum counts accumulated over disjoint transition windows."""
        if self.p != other.p:
            raise ValueError("node counts differ")

        def add(a, b):
            if a is None or b is None:
                return a if b is None else b
            return a + b

        subsets = dict(self.subsets)
        for m, st in other.subsets.items():
            if m in subsets:
                if subsets[m].candidates != st.candidates:
                    raise ValueError(f"node {m}: candidate sets differ")
                subsets[m] = SubsetStats(
                    st.candidates, subsets[m].counts + st.counts, subsets[m].joint + st.joint
                )
            else:
                subsets[m] = st
        return EmpiricalStats(
            p=self.p,
            window=self.window + other.window,
            marginal=add(self.marginal, other.marginal),
            pair_ones=add(self.pair_ones, other.pair_ones),
            next_ones=add(self.next_ones, other.next_ones),
            subsets=subsets,
        )


def accumulate(trajectory: Trajectory) -> EmpiricalStats:
    """Single pass over the transitions, collecting marginal and pair counts."""
    states = trajectory.states
    n, p = states.shape
    if n < 2:
        raise ValueError("need at least 2 states to form a transition")
    window = n - 1
    x = states[:-1]
    y = states[1:]
    ones = x.sum(axis=0, dtype=np.int64)
    marginal = np.stack([window - ones, ones], axis=1)
    return EmpiricalStats(
        p=p,
        window=window,
        marginal=marginal,
        pair_ones=_pair_product(y, x),
        next_ones=y.sum(axis=0, dtype=np.int64),
    )


def accumulate_subsets(
    trajectory: Trajectory, candidate_sets: Sequence[Sequence[int]]
) -> EmpiricalStats:
    """Single pass collecting per-node candidate-set configuration counts."""
    states = trajectory.states
    n, p = states.shape
    if n < 2:
        raise ValueError("need at least 2 states to form a transition")
    if len(candidate_sets) != p:
        raise ValueError(f"need one candidate set per node, got {len(candidate_sets)}")
    x = states[:-1]
    y = states[1:]
    subsets = {}
    for m, cand in enumerate(candidate_sets):
        cand = tuple(sorted(int(c) for c in cand))
        if len(cand) > MAX_SUBSET_SIZE:
            raise ValueError(f"node {m}: candidate set of size {len(cand)} too large")
        codes = x[:, cand].astype(np.int64) @ (1 << np.arange(len(cand), dtype=np.int64))
        counts = np.bincount(codes, minlength=2 ** len(cand))
        joint = np.bincount(codes, weights=y[:, m].astype(float), minlength=2 ** len(cand))
        subsets[m] = SubsetStats(cand, counts, np.rint(joint).astype(np.int64))
    return EmpiricalStats(p=p, window=n - 1, subsets=subsets)


def influence_matrix(stats: EmpiricalStats) -> tuple[np.ndarray, np.ndarray]:
    """All pairwise influence estimates plus a validity mask.

    Entry [m, l] is nu_hat; a column is invalid when node l never took one of
    its two values in the window (the estimate has an empty conditioning
    cell), in which case the entry is zeroed.
    """
    if stats.marginal is None or stats.pair_ones is None:
        raise ValueError("stats lack pairwise counts; run accumulate() first")
    m0 = stats.marginal[:, 0]
    m1 = stats.marginal[:, 1]
    valid_col = (m0 > 0) & (m1 > 0)
    inv0 = np.where(m0 > 0, 1.0 / np.maximum(m0, 1), 0.0)
    inv1 = np.where(m1 > 0, 1.0 / np.maximum(m1, 1), 0.0)
    # nu = pair1/m1 - (next - pair1)/m0, fused into two broadcast passes.
    nu = stats.pair_ones * (inv1 + inv0)[None, :]
    nu -= np.outer(stats.next_ones.astype(float), inv0)
    nu[:, ~valid_col] = 0.0
    return nu, np.broadcast_to(valid_col[None, :], nu.shape)


def nu_hat(stats: EmpiricalStats, m: int, l: int) -> float | None:
    """Influence estimate for one pair; None marks an empty conditioning cell."""
    if stats.marginal is None or stats.pair_ones is None:
        raise ValueError("stats lack pairwise counts; run accumulate() first")
    if stats.marginal[l, 0] == 0 or stats.marginal[l, 1] == 0:
        return None
    ones = stats.pair_ones[m, l]
    p1 = ones / stats.marginal[l, 1]
    p0 = (stats.next_ones[m] - ones) / stats.marginal[l, 0]
    return float(p1 - p0)


@dataclass(frozen=True)
class GraphEstimate:
    """Estimated per-node parent sets, optionally signed.

    ``parents[m]`` is sorted ascending; ``positive``/``negative`` partition it
    once signs are assigned.  ``empty_nodes`` lists nodes whose trimming
    found no coordinate constant across the near-maximizers.
    """

    p: int
    stage: str  # selection_only | selection_signed | full
    parents: tuple[tuple[int, ...], ...]
    positive: tuple[frozenset[int], ...]
    negative: tuple[frozenset[int], ...]
    empty_nodes: tuple[int, ...] = ()

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.parents)

    def to_dict(self) -> dict:
        nodes = []
        for m in range(self.p):
            parents = []
            for l in self.parents[m]:
                sign = "?"
                if l in self.positive[m]:
                    sign = "+"
                elif l in self.negative[m]:
                    sign = "-"
                parents.append({"j": l + 1, "sign": sign})
            nodes.append({"id": m + 1, "parents": parents})
        return {"p": self.p, "stage": self.stage, "nodes": nodes}


def estimate_from_dict(doc: dict) -> GraphEstimate:
    p = int(doc["p"])
    parents = [()] * p
    pos = [frozenset()] * p
    neg = [frozenset()] * p
    for nd in doc["nodes"]:
        m = nd["id"] - 1
        parents[m] = tuple(sorted(par["j"] - 1 for par in nd["parents"]))
        pos[m] = frozenset(par["j"] - 1 for par in nd["parents"] if par["sign"] == "+")
        neg[m] = frozenset(par["j"] - 1 for par in nd["parents"] if par["sign"] == "-")
    return GraphEstimate(p, doc["stage"], tuple(parents), tuple(pos), tuple(neg))


def save_estimate(estimate: GraphEstimate, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(estimate.to_dict(), fh, indent=1)
        fh.write("\n")


def load_estimate(path: str) -> GraphEstimate:
    with open(path) as fh:
        return estimate_from_dict(json.load(fh))


def _top_d_mask(scores: np.ndarray, d: int) -> np.ndarray:
    """Row-wise membership mask of the d largest entries, ties resolved
    toward the smaller column index (the stable-sort rule, without a sort)."""
    p = scores.shape[1]
    if d >= p:
        return np.ones_like(scores, dtype=bool)
    kth = np.partition(scores, p - d, axis=1)[:, p - d]
    greater = scores > kth[:, None]
    tied = scores == kth[:, None]
    room = d - greater.sum(axis=1)
    fill = tied & (np.cumsum(tied, axis=1) <= room[:, None])
    return greater | fill


def select_from_scores(nu: np.ndarray, d: int, valid: np.ndarray | None = None) -> GraphEstimate:
    """Keep the d largest influence magnitudes per target node.

    Ties break toward the smaller source index; invalid entries count as
    zero influence, so unseen relationships are never promoted.
    """
    if d < 1:
        raise ValueError("d >= 1 required")
    p = nu.shape[0]
    scores = np.abs(nu)
    if valid is not None:
        if not valid.all():
            logger.warning("selection saw %d empty conditioning cells", (~valid).sum())
        scores = np.where(valid, scores, 0.0)
    mask = _top_d_mask(scores, d)
    parents = tuple(tuple(int(l) for l in np.flatnonzero(row)) for row in mask)
    empty = (frozenset(),) * p
    return GraphEstimate(p, "selection_only", parents, empty, empty)


def supergraph_select(stats: EmpiricalStats, d: int) -> GraphEstimate:
    """Stage one: per-node top-d candidate sources by influence magnitude."""
    nu, valid = influence_matrix(stats)
    return select_from_scores(nu, d, valid)


def sign_from_selection(
    stats: EmpiricalStats,
    estimate: GraphEstimate,
    degrees: Sequence[int] | None = None,
) -> GraphEstimate:
    """Label selected edges by the sign of their influence estimate.

    With known per-node degrees, each candidate set is first shrunk to its
    top entries, turning the selection stage into a complete signed estimate.
    """
    nu, valid = influence_matrix(stats)
    parents = []
    pos = []
    neg = []
    for m in range(estimate.p):
        kept = list(estimate.parents[m])
        if degrees is not None:
            kept.sort(key=lambda l: (-abs(nu[m, l]), l))
            kept = kept[: degrees[m]]
        kept = sorted(kept)
        p_m, n_m = set(), set()
        for l in kept:
            score = nu[m, l] if valid[m, l] else 0.0
            if score > 0:
                p_m.add(l)
            elif score < 0:
                n_m.add(l)
            else:
                logger.warning("node %d: zero influence for parent %d, labeling +", m, l)
                p_m.add(l)
        parents.append(tuple(kept))
        pos.append(frozenset(p_m))
        neg.append(frozenset(n_m))
    return GraphEstimate(
        estimate.p, "selection_signed", tuple(parents), tuple(pos), tuple(neg)
    )


def trim_node(
    values: np.ndarray,
    observed: np.ndarray,
    candidates: Sequence[int],
    tau: float,
    two_sided: bool = False,
) -> tuple[list[int], set[int], set[int], bool]:
    """Trim one candidate set given its conditional table.

    ``values[c]`` is the empirical conditional for configuration code c and
    ``observed`` masks codes that occurred.  Returns (kept, positive,
    negative, empty) where empty flags that no coordinate was constant across
    the near-maximizers.  The two-sided variant also scans the mirror-image
    near-minimizers, which identifies rule families whose maximum is not
    attained at a unique parent polarity; on exact tables of the affine model
    both scans agree.
    """
    if not observed.any():
        raise AllCellsEmpty("no candidate-set configuration was observed")
    codes = np.flatnonzero(observed)
    kept: dict[int, bool] = {}

    def scan(selected: np.ndarray, one_means_positive: bool) -> None:
        for t, node in enumerate(candidates):
            bits = (selected >> t) & 1
            if np.all(bits == 1):
                kept.setdefault(node, one_means_positive)
            elif np.all(bits == 0):
                kept.setdefault(node, not one_means_positive)

    v_max = values[codes].max()
    scan(codes[values[codes] > v_max - 2.0 * tau], one_means_positive=True)
    if two_sided:
        v_min = values[codes].min()
        scan(codes[values[codes] < v_min + 2.0 * tau], one_means_positive=False)
    if not kept:
        return [], set(), set(), True
    kept_nodes = sorted(kept)
    pos = {node for node in kept_nodes if kept[node]}
    return kept_nodes, pos, set(kept_nodes) - pos, False


def trim(
    stats: EmpiricalStats,
    estimate: GraphEstimate,
    tau: float,
    two_sided: bool = False,
) -> GraphEstimate:
    """Stage two: drop candidates with no causal influence, assign signs.

    ``tau`` must not exceed a quarter of the smallest distinct gap between
    exact conditional values (a_min/4 for the affine model).  Configurations
    never observed are excluded from the near-maximizer search.
    """
    if tau <= 0:
        raise ValueError("tau > 0 required")
    parents = []
    pos = []
    neg = []
    empty_nodes = []
    for m in range(estimate.p):
        st = stats.subsets.get(m)
        if st is None or tuple(sorted(estimate.parents[m])) != st.candidates:
            raise ValueError(f"node {m}: subset stats do not match the candidate set")
        observed = st.counts > 0
        if (~observed).any():
            logger.debug(
                "node %d: %d configurations never observed", m, int((~observed).sum())
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.where(observed, st.joint / np.maximum(st.counts, 1), np.nan)
        kept, p_m, n_m, empty = trim_node(values, observed, st.candidates, tau, two_sided)
        if empty:
            empty_nodes.append(m)
            logger.warning("node %d: no coordinate constant across maximizers", m)
        parents.append(tuple(kept))
        pos.append(frozenset(p_m))
        neg.append(frozenset(n_m))
    return GraphEstimate(
        estimate.p,
        "full",
        tuple(parents),
        tuple(pos),
        tuple(neg),
        tuple(empty_nodes),
    )


def metrics(estimate: GraphEstimate, truth: GraphTruth) -> dict:
    """Recovery scores against the true signed graph.

    ``exact_unsigned`` and ``exact_signed`` are all-or-nothing over the whole
    graph; ``edge_recall`` is the fraction of true edges found and
    ``edge_accuracy`` the fraction of correctly classified ordered pairs.
    """
    p = estimate.p
    true_edges = {(m, l) for m in range(p) for l in truth.parents[m]}
    est_edges = {(m, l) for m in range(p) for l in estimate.parents[m]}
    tp = len(true_edges & est_edges)
    exact_unsigned = int(
        all(set(estimate.parents[m]) == truth.parents[m] for m in range(p))
    )
    exact_signed = int(
        exact_unsigned
        and all(estimate.positive[m] == truth.positive[m] for m in range(p))
        and all(estimate.negative[m] == truth.negative[m] for m in range(p))
    )
    recall = tp / len(true_edges) if true_edges else 1.0
    accuracy = (tp + p * p - len(true_edges) - len(est_edges) + tp) / (p * p)
    return {
        "exact_unsigned": exact_unsigned,
        "exact_signed": exact_signed,
        "edge_recall": recall,
        "edge_accuracy": accuracy,
    }
