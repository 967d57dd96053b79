"""Clairvoyant lower bound on the achievable privacy-cost trade-off.

A user who knows every future recharge instant can run the optimal
fixed-horizon battery-only policy inside each recharge interval.  Interval
lengths are geometric, so averaging the per-interval optima under the interval
pmf bounds what any causal policy can achieve; the infinite series is
truncated once the worst-case tail falls below a requested epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError, DegenerateProcess, DomainError
from .model import SystemConfig, demand_entropy_bits, demand_mean
from .solver_finite import DepthTable


def interval_pmf(t_k: int, p_e: float, mode: str = "normalized") -> float:
    """Probability that the battery is recharged after exactly t_k slots.

    The normalized mode is the geometric law on lengths >= 1 and sums to one;
    the literal mode keeps an extra (1 - p_e) factor for comparison and sums
    to 1 - p_e.
    """
    if t_k < 1:
        raise DomainError(f"interval length must be >= 1, got {t_k}")
    if not 0.0 < p_e <= 1.0:
        raise DomainError(f"p_e must lie in (0, 1], got {p_e}")
    if mode == "normalized":
        return p_e * (1.0 - p_e) ** (t_k - 1)
    if mode == "paper":
        return p_e * (1.0 - p_e) ** t_k
    raise ConfigError(f"unknown pmf mode {mode!r}")


def worst_case_objective(cfg: SystemConfig) -> float:
    """Weighted objective of full revelation: buy exactly the demand forever."""
    return cfg.gamma * demand_entropy_bits(cfg) + (1.0 - cfg.gamma) * demand_mean(cfg)


def truncation_depth(cfg: SystemConfig, epsilon: float) -> int:
    """Smallest K with geometric tail mass times the worst case below epsilon."""
    if epsilon <= 0.0:
        raise DomainError("epsilon must be positive")
    if cfg.p_e <= 0.0:
        raise DegenerateProcess("the renewable never fires; no finite truncation exists")
    worst = worst_case_objective(cfg)
    if cfg.p_e >= 1.0 or worst <= 0.0:
        return 1
    k = 1
    while (1.0 - cfg.p_e) ** k * worst >= epsilon:
        k += 1
    return k


@dataclass
class BoundResult:
    """Truncated series value with its audit trail."""

    value: float
    k_used: int
    tail_bound: float
    terms: list  # (t_k, pmf weight, per-slot optimum)
    renewal_value: float
    pmf_mode: str
    epsilon: float
    extras: dict = field(default_factory=dict)


def lower_bound(
    cfg: SystemConfig,
    epsilon: float = 1e-4,
    depth_table: DepthTable | None = None,
    pmf_mode: str = "normalized",
) -> BoundResult:
    """Pmf-weighted average of per-interval optima, truncated at epsilon.

    The headline value weights per-slot optima directly by the interval pmf.
    Because a slot-weighted (renewal) average is the other defensible reading,
    it is computed alongside and reported, never silently substituted.
    """
    k_max = truncation_depth(cfg, epsilon)
    if depth_table is None:
        depth_table = DepthTable(cfg, k_max)
    elif depth_table.max_depth < k_max:
        depth_table = depth_table.extend_to(k_max)
    terms = []
    value = 0.0
    num_slots = 0.0
    den_slots = 0.0
    for t_k in range(1, k_max + 1):
        weight = interval_pmf(t_k, cfg.p_e, pmf_mode)
        opt = depth_table.objective(t_k)
        terms.append((t_k, weight, opt))
        value += weight * opt
        num_slots += weight * t_k * opt
        den_slots += weight * t_k
    tail = (1.0 - cfg.p_e) ** k_max * worst_case_objective(cfg)
    renewal = num_slots / den_slots if den_slots > 0.0 else math.nan
    return BoundResult(
        value=value,
        k_used=k_max,
        tail_bound=tail,
        terms=terms,
        renewal_value=renewal,
        pmf_mode=pmf_mode,
        epsilon=epsilon,
        extras={"worst_case": worst_case_objective(cfg)},
    )
