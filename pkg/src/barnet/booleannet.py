"""Noisy boolean networks: rule parsing, simulation, random AND/OR instances.

Rule files use one line per node, ``<id> = <OP>(<lit>, ...)`` with 1-based
ids, ``<lit> ::= <id> | !<id>`` and ``<OP>`` one of AND, OR, ID (ID takes a
single literal).  Each step evaluates every rule on the current state and
flips each output independently with the configured noise probability.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .model import GraphTruth
from .simulate import Trajectory, stream


class ParseError(ValueError):
    pass


class UnknownNode(ParseError):
    pass


_RULE = re.compile(r"^\s*(\d+)\s*=\s*([A-Za-z]+)\s*\(([^)]*)\)\s*$")
_LIT = re.compile(r"^(!?)(\d+)$")

_OP_CODES = {"AND": 0, "OR": 1, "ID": 2}


@dataclass(frozen=True)
class BooleanNetwork:
    """Per-node boolean rules plus an output flip probability."""

    p: int
    ops: tuple[str, ...]
    literals: tuple[tuple[tuple[int, bool], ...], ...]  # (source, negated)
    noise: float = 0.0

    @cached_property
    def _tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        fan = max(len(lits) for lits in self.literals)
        idx = np.zeros((self.p, fan), dtype=np.int64)
        neg = np.zeros((self.p, fan), dtype=bool)
        real = np.zeros((self.p, fan), dtype=bool)
        for i, lits in enumerate(self.literals):
            for t, (src, negated) in enumerate(lits):
                idx[i, t] = src
                neg[i, t] = negated
                real[i, t] = True
        codes = np.array([_OP_CODES[op] for op in self.ops], dtype=np.int64)
        return idx, neg, real, codes

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Noise-free rule outputs on state x."""
        idx, neg, real, codes = self._tables
        vals = x[idx].astype(bool) ^ neg
        as_and = np.where(real, vals, True).all(axis=1)
        as_or = np.where(real, vals, False).any(axis=1)
        out = np.choose(codes, [as_and, as_or, vals[:, 0]])
        return out.astype(np.uint8)

    def truth(self) -> GraphTruth:
        pos = tuple(
            frozenset(src for src, negated in lits if not negated) for lits in self.literals
        )
        neg = tuple(
            frozenset(src for src, negated in lits if negated) for lits in self.literals
        )
        return GraphTruth(pos, neg)

    def rules_text(self) -> str:
        lines = []
        for i in range(self.p):
            lits = ", ".join(
                ("!" if negated else "") + str(src + 1) for src, negated in self.literals[i]
            )
            lines.append(f"{i + 1} = {self.ops[i]}({lits})")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        blob = f"{self.rules_text()}noise={self.noise!r}".encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_rules(text: str, noise: float = 0.0) -> BooleanNetwork:
    """Parse a rules file; syntax errors report their line number."""
    entries: dict[int, tuple[str, list[tuple[int, bool]]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = _RULE.match(line)
        if not match:
            raise ParseError(f"line {lineno}: cannot parse {line!r}")
        node_id = int(match.group(1))
        op = match.group(2).upper()
        if op not in _OP_CODES:
            raise ParseError(f"line {lineno}: unsupported operator {op!r}")
        if node_id in entries:
            raise ParseError(f"line {lineno}: duplicate rule for node {node_id}")
        lits = []
        body = match.group(3).strip()
        if not body:
            raise ParseError(f"line {lineno}: empty literal list")
        for token in body.split(","):
            lit = _LIT.match(token.strip())
            if not lit:
                raise ParseError(f"line {lineno}: bad literal {token.strip()!r}")
            lits.append((int(lit.group(2)), lit.group(1) == "!"))
        if op == "ID" and len(lits) != 1:
            raise ParseError(f"line {lineno}: ID takes exactly one literal")
        entries[node_id] = (op, lits)
    if not entries:
        raise ParseError("no rules found")
    p = len(entries)
    if sorted(entries) != list(range(1, p + 1)):
        raise ParseError(f"node ids must be exactly 1..{p}, got {sorted(entries)}")
    for node_id, (_, lits) in entries.items():
        for src, _ in lits:
            if not 1 <= src <= p:
                raise UnknownNode(f"rule for node {node_id} references unknown node {src}")
    if not 0.0 <= noise < 0.5:
        raise ParseError(f"noise {noise} outside [0, 0.5)")
    ops = tuple(entries[i][0] for i in range(1, p + 1))
    literals = tuple(
        tuple((src - 1, negated) for src, negated in entries[i][1]) for i in range(1, p + 1)
    )
    return BooleanNetwork(p=p, ops=ops, literals=literals, noise=noise)


def boolean_step(net: BooleanNetwork, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Evaluate every rule, then flip each output with the noise probability."""
    out = net.evaluate(np.asarray(x, dtype=np.uint8))
    if net.noise > 0:
        out = out ^ (rng.random(net.p) < net.noise)
    return out.astype(np.uint8)


def random_andor_network(
    p: int, fan_in: int, noise: float, seed: int | Sequence[int] = 0
) -> BooleanNetwork:
    """Uniform random AND/OR rules: fan_in parents per node, each literal
    negated with probability 1/2; a pure function of the seed."""
    if fan_in < 1 or fan_in > p:
        raise ValueError(f"fan_in {fan_in} outside [1, {p}]")
    if not 0.0 <= noise < 0.5:
        raise ValueError(f"noise {noise} outside [0, 0.5)")
    rng = np.random.default_rng(seed)
    ops = []
    literals = []
    for _ in range(p):
        parents = np.sort(rng.choice(p, size=fan_in, replace=False))
        negated = rng.random(fan_in) < 0.5
        ops.append("AND" if rng.random() < 0.5 else "OR")
        literals.append(tuple((int(j), bool(s)) for j, s in zip(parents, negated)))
    return BooleanNetwork(p=p, ops=tuple(ops), literals=tuple(literals), noise=noise)


def sample_boolean_trajectory(
    net: BooleanNetwork,
    n: int,
    seed: int = 0,
    burn_in: int = 100,
    stream_path: Sequence[int] = (),
) -> Trajectory:
    """Record n states of the noisy dynamics from a uniform random start."""
    if n < 1:
        raise ValueError("n >= 1 required")
    rng = stream(seed, *stream_path)
    x = rng.integers(0, 2, size=net.p).astype(np.uint8)
    for _ in range(burn_in):
        x = boolean_step(net, x, rng)
    states = np.empty((n, net.p), dtype=np.uint8)
    states[0] = x
    for k in range(1, n):
        x = boolean_step(net, x, rng)
        states[k] = x
    return Trajectory(states=states, seed=seed, model_id=net.digest(), kind="boolean_net")
