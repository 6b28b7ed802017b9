"""Trajectory generation: plain chains, grand-coupled pairs, hypercube walks.

All randomness flows through counter-based Philox streams keyed by
``(seed, *path)`` so replicas reproduce bit-exactly regardless of scheduling
or batching.  Step functions come in two layers: a deterministic core taking
explicit noise/uniform draws (used by couplings and tests that force draws)
and a thin wrapper that consumes a generator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import bounds as _bounds
from .model import BarModel

TrajectoryKind = Literal["bar", "rw", "lazy_rw", "boolean_net"]

_CHUNK = 4096  # steps of pre-drawn randomness per block


class ParameterOutOfRange(RuntimeError):
    """A Bernoulli parameter left [0,1]; signals a corrupted model."""


class ExactTooLarge(ValueError):
    """Stationary initialization requested beyond the exact-analysis cap."""


def stream(seed, *path: int) -> np.random.Generator:
    """Independent deterministic substream for (seed, *path)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(x) for x in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Trajectory:
    """A seeded sequence of binary state vectors, shape (n, p) uint8."""

    states: np.ndarray
    seed: int
    model_id: str
    kind: TrajectoryKind = "bar"

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def p(self) -> int:
        return self.states.shape[1]


def _check_dynamics_range(model: BarModel) -> None:
    """Cheap one-shot range check covering every reachable update parameter.

    The extreme parameters over all states and noise bits are
    ``offset + sum(min(A, 0))`` and ``offset + sum(max(A, 0)) + b``; for a
    valid model these are exactly 0 and 1.
    """
    a = model.signed_matrix
    lo = model.negative_offset + np.minimum(a, 0.0).sum(axis=1)
    hi = model.negative_offset + np.maximum(a, 0.0).sum(axis=1) + model.b_vector
    if lo.min() < -1e-9 or hi.max() > 1 + 1e-9:
        raise ParameterOutOfRange(
            f"update parameters span [{lo.min()}, {hi.max()}], outside [0,1]"
        )


def bernoulli_params(model: BarModel, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-node success probabilities for the next step, given noise bits w."""
    q = model.signed_matrix @ np.asarray(x, dtype=float) + model.negative_offset
    q = q + model.b_vector * w
    if q.min() < -1e-9 or q.max() > 1 + 1e-9:
        raise ParameterOutOfRange(f"update parameter outside [0,1]: {q.min()}..{q.max()}")
    return q


def bar_step_given(model: BarModel, x: np.ndarray, w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One synchronous update with explicit noise bits w and uniforms u."""
    return (u <= bernoulli_params(model, x, w)).astype(np.uint8)


def bar_step(model: BarModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One synchronous update of all nodes; draws noise bits, then uniforms."""
    w = (rng.random(model.p) < model.rho_w).astype(float)
    u = rng.random(model.p)
    return bar_step_given(model, x, w, u)


def coupled_step_given(model, x, y, w, u) -> tuple[np.ndarray, np.ndarray]:
    q_x = bernoulli_params(model, x, w)
    q_y = bernoulli_params(model, y, w)
    return (u <= q_x).astype(np.uint8), (u <= q_y).astype(np.uint8)


def coupled_step(model, x, y, rng) -> tuple[np.ndarray, np.ndarray]:
    """Synchronized update of two copies sharing noise and uniform draws.

    Marginally each copy follows `bar_step`; once the copies agree they agree
    forever.
    """
    w = (rng.random(model.p) < model.rho_w).astype(float)
    u = rng.random(model.p)
    return coupled_step_given(model, x, y, w, u)


def rw_step(
    model: BarModel,
    x: np.ndarray,
    rng: np.random.Generator,
    lazy_prob: float = 0.0,
) -> np.ndarray:
    """Single-site walk update: stay put with probability lazy_prob, else
    refresh one uniformly chosen coordinate by its usual Bernoulli rule."""
    if lazy_prob > 0 and rng.random() < lazy_prob:
        return x.copy()
    i = int(rng.integers(model.p))
    w_i = float(rng.random() < model.rho_w)
    u = rng.random()
    q_i = model.signed_matrix[i] @ np.asarray(x, dtype=float)
    q_i += model.negative_offset[i] + model.b[i] * w_i
    if not -1e-9 <= q_i <= 1 + 1e-9:
        raise ParameterOutOfRange(f"update parameter {q_i} outside [0,1]")
    out = x.copy()
    out[i] = 1 if u <= q_i else 0
    return out


def _stationary_draw(model: BarModel, rng: np.random.Generator) -> np.ndarray:
    from . import exactchain

    if model.p > exactchain.MAX_EXACT_NODES:
        raise ExactTooLarge(f"exact stationary init needs p <= {exactchain.MAX_EXACT_NODES}")
    chain = exactchain.build_transition(model)
    idx = int(np.searchsorted(np.cumsum(chain.stationary), rng.random()))
    return exactchain.index_to_state(min(idx, 2**model.p - 1), model.p)


def sample_trajectory(
    model: BarModel,
    n: int,
    init: np.ndarray | Literal["burn_in", "exact_stationary"] = "burn_in",
    seed: int = 0,
    kind: TrajectoryKind = "bar",
    lazy_prob: float = 0.0,
    stream_path: Sequence[int] = (),
) -> Trajectory:
    """Record n states X^0..X^{n-1}, deterministically per (seed, stream_path).

    ``init`` is an explicit first state, ``"burn_in"`` (advance the chain by
    the theoretical mixing bound at theta=1/8 from a uniform random state
    before recording X^0), or ``"exact_stationary"`` (draw X^0 from the
    exactly computed stationary vector; small p only).
    """
    if n < 1:
        raise ValueError("n >= 1 required")
    _check_dynamics_range(model)
    rng = stream(seed, *stream_path)
    burn = 0
    if isinstance(init, str):
        if init == "burn_in":
            x = rng.integers(0, 2, size=model.p).astype(float)
            burn, _ = _bounds.mixing_bound(model, 1.0 / 8.0)
        elif init == "exact_stationary":
            x = _stationary_draw(model, rng).astype(float)
        else:
            raise ValueError(f"unknown init {init!r}")
    else:
        x = np.asarray(init, dtype=float).copy()
        if x.shape != (model.p,):
            raise ValueError("explicit init has wrong length")

    p = model.p
    states = np.empty((n, p), dtype=np.uint8)
    if kind == "bar":
        a_mat = model.signed_matrix
        off = model.negative_offset
        b = model.b_vector
        rho_w = model.rho_w

        def advance(x, steps, record_from):
            done = 0
            while done < steps:
                # Full-size blocks keep step k's draws independent of n.
                m = min(_CHUNK, steps - done)
                w_blk = (rng.random((_CHUNK, p)) < rho_w).astype(float)
                u_blk = rng.random((_CHUNK, p))
                for k in range(m):
                    x = (u_blk[k] <= a_mat @ x + off + b * w_blk[k]).astype(float)
                    if record_from is not None:
                        states[record_from + done] = x
                    done += 1
            return x

        x = advance(x, burn, None)
        states[0] = x
        advance(x, n - 1, 1)
    elif kind in ("rw", "lazy_rw"):
        phi = lazy_prob if kind == "lazy_rw" else 0.0
        xi = x.astype(np.uint8)
        for _ in range(burn):
            xi = rw_step(model, xi, rng, lazy_prob=phi)
        states[0] = xi
        for k in range(1, n):
            xi = rw_step(model, xi, rng, lazy_prob=phi)
            states[k] = xi
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return Trajectory(states=states, seed=seed, model_id=model.digest(), kind=kind)


def coupling_time(
    model: BarModel,
    x0: np.ndarray,
    y0: np.ndarray,
    max_steps: int,
    seed: int = 0,
    replicas: int = 1,
    kind: Literal["bar", "rw"] = "bar",
    lazy_prob: float = 0.0,
    batch: int = 2048,
) -> np.ndarray:
    """Sample the meeting time T = min{n >= 0: X^n = Y^n} of coupled copies.

    Returns a float array of length ``replicas``; censored samples are
    ``np.inf`` (meaning T > max_steps).  Replica r consumes its own
    (seed, r) substream, so results do not depend on batching.
    """
    if max_steps < 1:
        raise ValueError("max_steps >= 1 required")
    _check_dynamics_range(model)
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if np.array_equal(x0, y0):
        return np.zeros(replicas)
    out = np.full(replicas, np.inf)
    p = model.p
    a_mat = model.signed_matrix
    a_t = a_mat.T.copy()
    off = model.negative_offset
    b = model.b_vector
    for lo in range(0, replicas, batch):
        m = min(lo + batch, replicas) - lo
        if kind == "bar":
            w_blk = np.empty((max_steps, m, p))
            u_blk = np.empty((max_steps, m, p))
            for r in range(m):
                g = stream(seed, lo + r)
                w_blk[:, r] = g.random((max_steps, p)) < model.rho_w
                u_blk[:, r] = g.random((max_steps, p))
        else:
            lazy_blk = np.empty((max_steps, m))
            node_blk = np.empty((max_steps, m), dtype=np.int64)
            w_blk = np.empty((max_steps, m))
            u_blk = np.empty((max_steps, m))
            for r in range(m):
                g = stream(seed, lo + r)
                lazy_blk[:, r] = g.random(max_steps)
                node_blk[:, r] = g.integers(0, p, size=max_steps)
                w_blk[:, r] = g.random(max_steps) < model.rho_w
                u_blk[:, r] = g.random(max_steps)
        xs = np.tile(x0, (m, 1))
        ys = np.tile(y0, (m, 1))
        alive = np.arange(m)
        for step in range(max_steps):
            if kind == "bar":
                w = w_blk[step, alive]
                u = u_blk[step, alive]
                xs = (u <= xs @ a_t + off + b * w).astype(float)
                ys = (u <= ys @ a_t + off + b * w).astype(float)
            else:
                act = lazy_blk[step, alive] >= lazy_prob
                nodes = node_blk[step, alive]
                qx = (xs * a_mat[nodes]).sum(axis=1) + off[nodes] + b[nodes] * w_blk[step, alive]
                qy = (ys * a_mat[nodes]).sum(axis=1) + off[nodes] + b[nodes] * w_blk[step, alive]
                bit_x = (u_blk[step, alive] <= qx).astype(float)
                bit_y = (u_blk[step, alive] <= qy).astype(float)
                rows = np.flatnonzero(act)
                xs[rows, nodes[rows]] = bit_x[rows]
                ys[rows, nodes[rows]] = bit_y[rows]
            met = np.all(xs == ys, axis=1)
            if met.any():
                out[lo + alive[met]] = step + 1
                keep = ~met
                xs, ys, alive = xs[keep], ys[keep], alive[keep]
                if alive.size == 0:
                    break
    return out


def save_trajectory_csv(traj: Trajectory, path: str) -> None:
    """One row per step, one column per node; metadata in a leading comment."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# model={traj.model_id} seed={traj.seed} kind={traj.kind}\n")
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(traj.p)])
        for row in traj.states:
            writer.writerow([int(v) for v in row])


def load_trajectory_csv(path: str) -> Trajectory:
    with open(path) as fh:
        meta = fh.readline().strip()
        fields = dict(part.split("=", 1) for part in meta.lstrip("# ").split())
        reader = csv.reader(fh)
        next(reader)  # header row
        states = np.array([[int(v) for v in row] for row in reader], dtype=np.uint8)
    return Trajectory(
        states=states,
        seed=int(fields["seed"]),
        model_id=fields["model"],
        kind=fields["kind"],  # type: ignore[arg-type]
    )
