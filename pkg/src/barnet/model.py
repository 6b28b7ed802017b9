"""Signed sparse binary-network dynamics: model containers, validation, generation.

A model over ``p`` nodes updates each node's bit by a Bernoulli draw whose
parameter is an affine function of the (possibly inverted) current bits of its
parents plus exogenous Bernoulli noise.  Row ``i`` holds weights ``a_ij`` on
the parent set ``S(i)``, split into positively influencing parents ``S+(i)``
(enter as ``x_j``) and negatively influencing parents ``S-(i)`` (enter as
``1 - x_j``), plus a noise gain ``b_i`` multiplying a fresh Bernoulli(rho_w)
bit.  Validity requires ``sum_j a_ij + b_i = 1`` for every node, ``a_ij >=
a_min`` and ``b_i >= b_min``.

Nodes are indexed 0-based everywhere in memory; the JSON file format uses
1-based ids (see `save_model` / `load_model`).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


class ModelError(ValueError):
    """Base class for model construction/validation failures."""


class RowSumViolation(ModelError):
    pass


class WeightBelowFloor(ModelError):
    pass


class NoiseBelowFloor(ModelError):
    pass


class EmptyParentSet(ModelError):
    pass


class DuplicateEdge(ModelError):
    pass


class Infeasible(ModelError):
    pass


class DegreeTooLarge(ModelError):
    pass


@dataclass(frozen=True)
class SignedParent:
    """One weighted, signed edge ``source -> target``."""

    target: int
    source: int
    weight: float
    positive: bool


@dataclass(frozen=True)
class BarModel:
    """Immutable signed sparse dynamics over ``p`` nodes.

    ``rows[i]`` is the tuple of `SignedParent` entries of node ``i`` (its
    in-edges), ``b[i]`` the noise gain, ``rho_w`` the noise rate and
    ``a_min``/``b_min`` the validity floors.  Instances are safe to share
    across threads; construction helpers below are pure functions of their
    inputs.
    """

    p: int
    rows: tuple[tuple[SignedParent, ...], ...]
    b: tuple[float, ...]
    rho_w: float
    a_min: float
    b_min: float

    @cached_property
    def signed_matrix(self) -> np.ndarray:
        """Dense p x p matrix with +a_ij on positive edges, -a_ij on negative."""
        a = np.zeros((self.p, self.p))
        for row in self.rows:
            for e in row:
                a[e.target, e.source] = e.weight if e.positive else -e.weight
        return a

    @cached_property
    def negative_offset(self) -> np.ndarray:
        """Per-node constant sum of weights on inverting edges.

        The affine update for node i is ``offset_i + sum_j A_signed[i,j] x_j``
        plus noise, since ``a*(1-x) = a - a*x``.
        """
        off = np.zeros(self.p)
        for i, row in enumerate(self.rows):
            off[i] = sum(e.weight for e in row if not e.positive)
        return off

    @cached_property
    def b_vector(self) -> np.ndarray:
        return np.asarray(self.b, dtype=float)

    @cached_property
    def row_sums(self) -> np.ndarray:
        return np.array([sum(e.weight for e in row) for row in self.rows])

    @cached_property
    def column_sums(self) -> np.ndarray:
        return np.abs(self.signed_matrix).sum(axis=0)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(row) for row in self.rows)

    @property
    def sign_free(self) -> bool:
        """True if no edge inverts its source bit."""
        return all(e.positive for row in self.rows for e in row)

    def parent_sets(self) -> "GraphTruth":
        return GraphTruth.from_model(self)

    def canonical_dict(self) -> dict:
        """JSON-ready dict, 1-based ids, matching the model file schema."""
        return {
            "p": self.p,
            "rho_w": self.rho_w,
            "a_min": self.a_min,
            "b_min": self.b_min,
            "nodes": [
                {
                    "id": i + 1,
                    "b": self.b[i],
                    "parents": [
                        {"j": e.source + 1, "a": e.weight, "sign": "+" if e.positive else "-"}
                        for e in self.rows[i]
                    ],
                }
                for i in range(self.p)
            ],
        }

    def digest(self) -> str:
        """Stable content hash, used to stamp trajectories."""
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GraphTruth:
    """Per-node true parental sets with signs, plus degrees and the global cap."""

    positive: tuple[frozenset[int], ...]
    negative: tuple[frozenset[int], ...]

    @property
    def p(self) -> int:
        return len(self.positive)

    @property
    def parents(self) -> tuple[frozenset[int], ...]:
        return tuple(sp | sn for sp, sn in zip(self.positive, self.negative))

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.parents)

    @property
    def d(self) -> int:
        return max(self.degrees)

    @classmethod
    def from_model(cls, model: BarModel) -> "GraphTruth":
        pos = tuple(frozenset(e.source for e in row if e.positive) for row in model.rows)
        neg = tuple(frozenset(e.source for e in row if not e.positive) for row in model.rows)
        return cls(pos, neg)


def build_model(
    p: int,
    rows: Iterable[Iterable[SignedParent]],
    b: Sequence[float],
    rho_w: float,
    a_min: float,
    b_min: float,
) -> BarModel:
    """Construct a model, renormalizing each row sum to 1 when within tolerance.

    Row sums off by more than `ROW_SUM_TOL` are rejected; smaller deviations
    are removed by rescaling the weight row (the noise gain is kept as given).
    The result always passes `validate`.
    """
    fixed_rows = []
    for i, row in enumerate(rows):
        row = tuple(row)
        total = math.fsum(e.weight for e in row) + b[i]
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise RowSumViolation(f"node {i}: weights + noise gain sum to {total!r}, not 1")
        if abs(total - 1.0) > 0.0 and row:
            scale = (1.0 - b[i]) / math.fsum(e.weight for e in row)
            row = tuple(
                SignedParent(e.target, e.source, e.weight * scale, e.positive) for e in row
            )
        fixed_rows.append(row)
    model = BarModel(p, tuple(fixed_rows), tuple(float(x) for x in b), rho_w, a_min, b_min)
    validate(model)
    return model


def validate(model: BarModel) -> None:
    """Check every model invariant, raising on the first violated constraint.

    Raises `DuplicateEdge`, `EmptyParentSet`, `WeightBelowFloor`,
    `NoiseBelowFloor` or `RowSumViolation`, each naming the offending node.
    A row-sum identity together with the floors already caps every in-degree
    at `d_star`, so no separate degree check is needed.
    """
    if not 0.0 < model.rho_w < 1.0:
        raise ModelError(f"rho_w={model.rho_w!r} outside (0,1)")
    if not 0.0 < model.a_min < 1.0 or not 0.0 < model.b_min < 1.0:
        raise ModelError("a_min and b_min must lie in (0,1)")
    if len(model.rows) != model.p or len(model.b) != model.p:
        raise ModelError("rows/b length disagrees with p")
    for i, row in enumerate(model.rows):
        sources = [e.source for e in row]
        if len(set(sources)) != len(sources):
            raise DuplicateEdge(f"node {i}: duplicate parent in {sorted(sources)}")
        if not row:
            raise EmptyParentSet(f"node {i}: empty parent set")
        for e in row:
            if e.target != i:
                raise ModelError(f"node {i}: edge targets {e.target}")
            if not 0 <= e.source < model.p:
                raise ModelError(f"node {i}: parent {e.source} out of range")
            if e.weight < model.a_min - ROW_SUM_TOL:
                raise WeightBelowFloor(
                    f"node {i}: weight {e.weight!r} on parent {e.source} below {model.a_min}"
                )
        if model.b[i] < model.b_min - ROW_SUM_TOL:
            raise NoiseBelowFloor(f"node {i}: noise gain {model.b[i]!r} below {model.b_min}")
        total = math.fsum(e.weight for e in row) + model.b[i]
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise RowSumViolation(f"node {i}: row sum {total!r} differs from 1")


def d_star(a_min: float, b_min: float) -> int:
    """Largest in-degree d with ``a_min*d + b_min <= 1``.

    Raises `Infeasible` when even a single minimal edge cannot fit.
    """
    if not (0.0 < a_min < 1.0 and 0.0 < b_min < 1.0):
        raise Infeasible("a_min and b_min must lie in (0,1)")
    if a_min + b_min > 1.0 + ROW_SUM_TOL:
        raise Infeasible(f"a_min + b_min = {a_min + b_min!r} > 1: no valid degree exists")
    d = int(math.floor((1.0 - b_min) / a_min))
    # Guard against float rounding on either side of the boundary.
    while a_min * (d + 1) + b_min <= 1.0 + ROW_SUM_TOL:
        d += 1
    while d > 1 and a_min * d + b_min > 1.0 + ROW_SUM_TOL:
        d -= 1
    return d


def random_model(
    p: int,
    degrees: int | Sequence[int],
    a_min: float,
    b_min: float,
    b_max: float,
    rho_w: float,
    sign_prob: float = 1.0,
    seed: int | Sequence[int] = 0,
) -> tuple[BarModel, GraphTruth]:
    """Draw a valid random model; a pure function of its arguments.

    The support of each row is a uniformly random ``d_i``-subset of the nodes
    (self-loops allowed).  The noise gain is uniform on
    ``[b_min, min(b_max, 1 - d_i*a_min)]``, and the remaining row mass
    ``1 - b_i - d_i*a_min`` is spread over the parents by a uniform point of
    the simplex, on top of the ``a_min`` floor each parent gets.  Each parent
    is positive with probability ``sign_prob``, independently.
    """
    if isinstance(degrees, int):
        degrees = [degrees] * p
    if len(degrees) != p:
        raise ModelError(f"need {p} degrees, got {len(degrees)}")
    if b_max < b_min:
        raise ModelError(f"b_max={b_max} below b_min={b_min}")
    cap = d_star(a_min, b_min)
    rng = np.random.default_rng(seed)
    rows = []
    bs = []
    for i in range(p):
        d_i = int(degrees[i])
        if not 1 <= d_i <= cap:
            raise DegreeTooLarge(f"node {i}: degree {d_i} outside [1, {cap}]")
        support = np.sort(rng.choice(p, size=d_i, replace=False))
        b_hi = min(b_max, 1.0 - d_i * a_min)
        b_i = float(rng.uniform(b_min, b_hi))
        slack = 1.0 - b_i - d_i * a_min
        simplex = rng.dirichlet(np.ones(d_i))
        weights = a_min + slack * simplex
        positive = rng.random(d_i) < sign_prob
        rows.append(
            tuple(
                SignedParent(i, int(j), float(w), bool(s))
                for j, w, s in zip(support, weights, positive)
            )
        )
        bs.append(b_i)
    model = build_model(p, rows, bs, rho_w, a_min, b_min)
    return model, GraphTruth.from_model(model)


def save_model(model: BarModel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(model.canonical_dict(), fh, indent=1)
        fh.write("\n")


def model_from_dict(doc: dict) -> BarModel:
    """Ingest the JSON schema (1-based ids) into a validated model."""
    p = int(doc["p"])
    nodes = sorted(doc["nodes"], key=lambda nd: nd["id"])
    if [nd["id"] for nd in nodes] != list(range(1, p + 1)):
        raise ModelError("node ids must be exactly 1..p")
    rows = []
    bs = []
    for nd in nodes:
        i = nd["id"] - 1
        rows.append(
            tuple(
                SignedParent(i, int(par["j"]) - 1, float(par["a"]), par["sign"] == "+")
                for par in nd["parents"]
            )
        )
        bs.append(float(nd["b"]))
    return build_model(p, rows, bs, float(doc["rho_w"]), float(doc["a_min"]), float(doc["b_min"]))


def load_model(path: str) -> BarModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
