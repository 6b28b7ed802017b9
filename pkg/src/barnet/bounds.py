"""Closed-form bounds: mixing times, stationary-probability floors, sample
complexities, the information-theoretic lower bound, and the hypercube-walk
contraction analysis.

All logarithms are natural, and binomial coefficients go through log-gamma so
the sample-complexity formulas stay finite at p in the thousands.  The
concentration constant inherited from the literature is unknown; every sample
complexity takes it as the explicit input ``C`` (default 1), so outputs are
"up to the unknown constant C".  Under stationary initialization C equals
that constant itself, since the relevant chi-square-norm factors are 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

from .model import BarModel


class NotColumnSubstochastic(ValueError):
    """Raised on demand when walk bounds need max column sum < 1."""


def log_choose(n: int, k: int) -> float:
    if not 0 <= k <= n:
        raise ValueError(f"choose({n},{k}) undefined")
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def mixing_bound(model: BarModel, theta: float) -> tuple[int, int]:
    """Theoretical step counts guaranteeing worst-case TV distance <= theta.

    Returns ``(primary, loose)`` where primary is
    ``ceil(log(theta*(1-r)/p) / log r)`` with r the maximum row sum, and
    loose is the weaker ``ceil((log p - log(theta*(1-r))) / (1-r))``.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta in (0,1) required")
    r = float(model.row_sums.max())
    if not 0.0 < r < 1.0:
        raise ValueError(f"max row sum {r} outside (0,1)")
    primary = math.ceil(math.log(theta * (1.0 - r) / model.p) / math.log(r))
    loose = math.ceil((math.log(model.p) - math.log(theta * (1.0 - r))) / (1.0 - r))
    return int(primary), int(loose)


@dataclass(frozen=True)
class BoundsReport:
    """All analytic quantities for one model, ready to serialize."""

    p: int
    d: int
    theta: float
    max_row_sum: float
    max_col_sum: float
    beta: float
    beta_branch: str
    beta_tilde: float
    beta_check: float
    beta_bar: float
    c_bar: float
    mixing_bound_primary: int
    mixing_bound_loose: int

    def to_dict(self) -> dict:
        return asdict(self)


def stationary_floors(model: BarModel, d: int, theta: float = 0.125) -> BoundsReport:
    """Uniform lower bounds on the stationary probabilities the observer uses.

    beta floors single-node marginals, beta_check lagged pair probabilities,
    and beta_bar joint patterns on d-node subsets (with or without the next
    step of one node).  beta takes the best of the p-independent floor, the
    sign-free simplification, and the fixed-point refinement; the winning
    branch is recorded.
    """
    if d < max(model.degrees):
        raise ValueError(f"d={d} below the maximum in-degree {max(model.degrees)}")
    r = float(model.row_sums.max())
    b = model.b_vector
    rho = model.rho_w
    ceiling = float((model.row_sums + rho * b).max())

    candidates = {"uniform": min(rho * (1.0 - r), 1.0 - ceiling)}
    if model.sign_free:
        candidates["sign_free"] = min(rho, 1.0 - rho)
    from .exactchain import stationary_marginals

    marg = stationary_marginals(model)
    candidates["fixed_point"] = float(min(marg.min(), 1.0 - marg.max()))
    branch = max(candidates, key=candidates.get)
    beta = candidates[branch]

    one_step = min((1.0 - r) * rho, 1.0 - ceiling)
    beta_tilde = beta * (1.0 - r) * rho
    beta_check = beta * one_step
    c_bar = 1.0 / one_step
    beta_bar = one_step**d * (1.0 - r) * rho
    primary, loose = mixing_bound(model, theta)
    return BoundsReport(
        p=model.p,
        d=d,
        theta=theta,
        max_row_sum=r,
        max_col_sum=float(model.column_sums.max()),
        beta=beta,
        beta_branch=branch,
        beta_tilde=beta_tilde,
        beta_check=beta_check,
        beta_bar=beta_bar,
        c_bar=c_bar,
        mixing_bound_primary=primary,
        mixing_bound_loose=loose,
    )


def _check_complexity_args(gamma: float, eps: float, t_mix: int, C: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma in (0,1) required")
    if eps <= 0.0:
        raise ValueError("accuracy must be positive")
    if t_mix < 1 or C <= 0.0:
        raise ValueError("t_mix >= 1 and C > 0 required")


def sample_complexity_selection(
    p: int,
    gamma: float,
    theta: float,
    eps: float,
    beta_tilde: float,
    t_mix: int,
    C: float = 1.0,
) -> int:
    """Samples sufficient for all pairwise influence estimates to be
    eps-accurate with probability 1-gamma, up to the unknown constant C."""
    _check_complexity_args(gamma, eps, t_mix, C)
    if not 0.0 < theta <= 0.125:
        raise ValueError("theta in (0, 1/8] required")
    val = 1.0 + 1152.0 * math.log(4.0 * p * p * C / gamma) * t_mix / (eps**2 * beta_tilde**3)
    return math.ceil(val)


def sample_complexity_trimming(
    p: int,
    d: int,
    gamma: float,
    eps_tilde: float,
    beta_bar: float,
    t_mix: int,
    C: float = 1.0,
) -> int:
    """Samples sufficient for all d-subset conditional estimates to be
    eps_tilde-accurate with probability 1-gamma, up to the constant C."""
    _check_complexity_args(gamma, eps_tilde, t_mix, C)
    if d < 1:
        raise ValueError("d >= 1 required")
    log_term = (d + 1) * math.log(2.0) + math.log(C * p / gamma) + log_choose(p, d)
    val = 1.0 + 288.0 * log_term * t_mix / (eps_tilde**2 * beta_bar**3)
    return math.ceil(val)


def fano_lower_bound(p: int, degrees: Sequence[int], eps: float) -> int:
    """Information-theoretic minimum sample count for worst-case error eps."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps in (0,1) required")
    if len(degrees) != p or any(not 1 <= d_i <= p for d_i in degrees):
        raise ValueError("need p degrees, each in [1, p]")
    total = sum(log_choose(p, d_i) for d_i in degrees)
    return math.ceil((1.0 - eps) / p * total)


@dataclass(frozen=True)
class RwReport:
    """Hypercube-walk contraction summary; bounds are None when the column
    sums do not contract."""

    col_substochastic: bool
    max_col_sum: float
    contraction: tuple[float, ...]
    bound_rw: int | None
    bound_lazy: int | None
    weight_ceiling: float

    def to_dict(self) -> dict:
        return asdict(self)


def rw_analysis(
    model: BarModel,
    theta: float,
    lazy_prob: float = 0.0,
    c: float = 1.0,
) -> RwReport:
    """Contraction factors and mixing bounds for the single-site walks.

    The per-column expected-Hamming factor is ``(colsum_j + p - 1)/p``; with
    max column sum below 1 the walk mixes in
    ``ceil(p/(1-maxcol) * (log p + log(1/theta)))`` steps, the lazy variant
    with an extra ``1/(1-lazy_prob)``.  Also reports the admissible weight
    ceiling under which random supports are column-substochastic with high
    probability, for the given concentration constant c.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta in (0,1) required")
    if not 0.0 <= lazy_prob < 1.0:
        raise ValueError("lazy_prob in [0,1) required")
    p = model.p
    col = model.column_sums
    factors = tuple(float(v) for v in (col + p - 1.0) / p)
    max_col = float(col.max())
    substochastic = max_col < 1.0
    if substochastic:
        base = p / (1.0 - max_col) * (math.log(p) + math.log(1.0 / theta))
        bound_rw = math.ceil(base)
        bound_lazy = math.ceil(base / (1.0 - lazy_prob))
    else:
        bound_rw = bound_lazy = None
    mean_degree = sum(model.degrees) / p
    weight_ceiling = 1.0 / (mean_degree + math.sqrt(c * p * math.log(p)))
    return RwReport(
        col_substochastic=substochastic,
        max_col_sum=max_col,
        contraction=factors,
        bound_rw=bound_rw,
        bound_lazy=bound_lazy,
        weight_ceiling=weight_ceiling,
    )
