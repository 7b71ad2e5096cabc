"""Problem data model and history-dependent MNL evaluation.

An instance describes N products sold over T periods to a unit mass of
MNL customers whose utility for product i in period t is

    base_utility[i] + sum_m effect[i][m-1] * offered(i, t-m),    m = 1..M,

so the attraction weight is the exponential of that affine expression.
Negative effects model satiation, positive ones addiction.  Offers before
period 1 count as "not offered"; cyclic plans wrap instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ConstraintSpec",
    "Instance",
    "Plan",
    "ChoiceOutcome",
    "RhoBounds",
    "GenConfig",
    "InstanceError",
    "attraction",
    "choice_outcome",
    "plan_revenue",
    "is_feasible",
    "rho_bounds",
    "generate_instance",
    "save_instance",
    "load_instance",
    "history_matrix",
]


class InstanceError(ValueError):
    """Raised for malformed instances, plans, or serialized files."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ConstraintSpec:
    """Cross-product and cross-period restrictions on a plan.

    cardinality_cap: at most this many products offered per period.
    offer_cap: each product offered at most this many times over the horizon.
    non_overlapping: each product at most once in any M+1 consecutive periods.
    """

    cardinality_cap: Optional[int] = None
    offer_cap: Optional[int] = None
    non_overlapping: bool = False

    def __post_init__(self):
        if self.cardinality_cap is not None and self.cardinality_cap < 1:
            raise InstanceError("cardinality_cap must be a positive integer")
        if self.offer_cap is not None and self.offer_cap < 1:
            raise InstanceError("offer_cap must be a positive integer")

    @property
    def unconstrained(self) -> bool:
        return (
            self.cardinality_cap is None
            and self.offer_cap is None
            and not self.non_overlapping
        )


@dataclass(frozen=True)
class Instance:
    """Immutable problem data: sizes, revenues, utilities, effects, constraints."""

    n_products: int
    horizon: int
    memory: int
    revenue: np.ndarray
    base_utility: np.ndarray
    effect: np.ndarray
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)

    def __post_init__(self):
        if self.n_products < 1:
            raise InstanceError("need at least one product")
        if self.horizon < 1:
            raise InstanceError("need at least one period")
        if self.memory < 0:
            raise InstanceError("memory length must be non-negative")
        rev = np.asarray(self.revenue, dtype=float)
        base = np.asarray(self.base_utility, dtype=float)
        eff = np.asarray(self.effect, dtype=float).reshape(self.n_products, -1)
        if rev.shape != (self.n_products,) or base.shape != (self.n_products,):
            raise InstanceError("revenue and base_utility must have length N")
        if self.memory == 0:
            eff = np.zeros((self.n_products, 0))
        if eff.shape != (self.n_products, self.memory):
            raise InstanceError("effect must have shape N x M")
        if np.any(rev < 0):
            raise InstanceError("revenues must be non-negative")
        if not (np.all(np.isfinite(rev)) and np.all(np.isfinite(base)) and np.all(np.isfinite(eff))):
            raise InstanceError("instance data must be finite")
        object.__setattr__(self, "revenue", _readonly(rev))
        object.__setattr__(self, "base_utility", _readonly(base))
        object.__setattr__(self, "effect", _readonly(eff))

    @property
    def base_attraction(self) -> np.ndarray:
        """exp(base_utility), the MNL weight with all-zero history."""
        return np.exp(self.base_utility)

    def positive_set(self, product: int) -> list[int]:
        """0-based memory lags with strictly positive effect for `product`."""
        return [m for m in range(self.memory) if self.effect[product, m] > 0.0]


@dataclass(frozen=True)
class Plan:
    """A binary offer matrix, periods x products.

    For cyclic plans (`is_cycle=True`) the row count is the cycle length and
    history indices wrap around; otherwise history before period 1 is empty.
    """

    offers: np.ndarray
    is_cycle: bool = False

    def __post_init__(self):
        off = np.asarray(self.offers)
        if off.ndim != 2:
            raise InstanceError("offers must be a 2-d matrix (periods x products)")
        if not np.isin(off, (0, 1)).all():
            raise InstanceError("offers entries must be 0/1")
        object.__setattr__(self, "offers", _readonly(off.astype(np.int8)))

    @property
    def n_periods(self) -> int:
        return self.offers.shape[0]

    @property
    def n_products(self) -> int:
        return self.offers.shape[1]


@dataclass(frozen=True)
class ChoiceOutcome:
    """Per-period MNL outcome: no-purchase mass, purchase probabilities, revenue."""

    no_purchase: float
    probs: np.ndarray
    revenue: float


@dataclass(frozen=True)
class RhoBounds:
    """Valid bounds on the no-purchase probability over all plans."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 < self.lower <= self.upper <= 1.0):
            raise InstanceError("need 0 < lower <= upper <= 1")


def attraction(inst: Instance, product: int, history: Sequence[int]) -> float:
    """MNL weight of `product` given its own offer history (most recent first)."""
    if not 0 <= product < inst.n_products:
        raise IndexError(f"product index {product} out of range")
    h = np.asarray(history, dtype=float)
    if h.shape != (inst.memory,):
        raise InstanceError("history must have length M")
    return float(np.exp(inst.base_utility[product] + inst.effect[product] @ h))


def history_matrix(inst: Instance, plan: Plan, t: int) -> np.ndarray:
    """N x M matrix of past offers for period t (column m-1 is lag m).

    1-based t.  Non-cyclic plans pad with zeros before period 1; cyclic plans
    wrap modulo the cycle length.
    """
    T = plan.n_periods
    if not 1 <= t <= T:
        raise IndexError(f"period {t} out of range 1..{T}")
    H = np.zeros((inst.n_products, inst.memory))
    for m in range(1, inst.memory + 1):
        k = t - m
        if plan.is_cycle:
            H[:, m - 1] = plan.offers[(k - 1) % T, :]
        elif k >= 1:
            H[:, m - 1] = plan.offers[k - 1, :]
    return H


def _check_shape(inst: Instance, plan: Plan) -> None:
    if plan.n_products != inst.n_products:
        raise InstanceError("plan has wrong number of products")
    if not plan.is_cycle and plan.n_periods != inst.horizon:
        raise InstanceError("plan has wrong number of periods")


def choice_outcome(inst: Instance, plan: Plan, t: int) -> ChoiceOutcome:
    """MNL purchase probabilities and expected revenue for period t (1-based)."""
    _check_shape(inst, plan)
    H = history_matrix(inst, plan, t)
    util = inst.base_utility + np.sum(inst.effect * H, axis=1)
    nu = np.exp(util) * plan.offers[t - 1, :]
    rho = 1.0 / (1.0 + nu.sum())
    probs = nu * rho
    return ChoiceOutcome(float(rho), probs, float(inst.revenue @ probs))


def plan_revenue(inst: Instance, plan: Plan) -> float:
    """Average per-period expected revenue of a plan (cyclic plans wrap)."""
    _check_shape(inst, plan)
    T = plan.n_periods
    return sum(choice_outcome(inst, plan, t).revenue for t in range(1, T + 1)) / T


def is_feasible(inst: Instance, plan: Plan) -> tuple[bool, list[str]]:
    """Check a plan against the instance constraints; collect violations."""
    _check_shape(inst, plan)
    spec = inst.constraints
    viol: list[str] = []
    T, off = plan.n_periods, plan.offers
    if spec.cardinality_cap is not None:
        for t in range(T):
            k = int(off[t].sum())
            if k > spec.cardinality_cap:
                viol.append(f"period {t + 1}: {k} products offered, cap {spec.cardinality_cap}")
    if spec.offer_cap is not None:
        for i in range(inst.n_products):
            k = int(off[:, i].sum())
            if k > spec.offer_cap:
                viol.append(f"product {i + 1}: offered {k} times, cap {spec.offer_cap}")
    if spec.non_overlapping:
        M = inst.memory
        if plan.is_cycle and T <= M:
            raise InstanceError("non-overlapping cycles require length > M")
        starts = range(T) if plan.is_cycle else range(max(T - M, 1))
        for s in starts:
            window = [(s + k) % T if plan.is_cycle else s + k for k in range(M + 1)]
            window = [w for w in window if w < T]
            for i in range(inst.n_products):
                k = int(sum(off[w, i] for w in window))
                if k > 1:
                    viol.append(
                        f"product {i + 1}: offered {k} times in window starting period {s + 1}"
                    )
    return (not viol, viol)


def rho_bounds(inst: Instance) -> RhoBounds:
    """Bounds on the no-purchase probability.

    The lower bound offers every product at its largest possible attraction
    (positive effects all switched on); the upper bound is the empty
    assortment, i.e. 1.
    """
    best_util = inst.base_utility + np.where(inst.effect > 0.0, inst.effect, 0.0).sum(axis=1)
    lower = 1.0 / (1.0 + np.exp(best_util).sum())
    return RhoBounds(float(lower), 1.0)


@dataclass(frozen=True)
class GenConfig:
    """Random instance recipe.

    regime 'weak' draws effects from U[-1,0], 'strong' from U[-2,-1];
    'mixed' gives each product addiction effects U[0,1] with probability
    theta and otherwise satiation effects U[-2,-1].
    """

    n_products: int
    horizon: int
    memory: int
    regime: str = "weak"
    theta: float = 0.0
    revenue_range: tuple[float, float] = (1.0, 10.0)
    utility_range: tuple[float, float] = (-1.0, 1.0)
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)

    def __post_init__(self):
        if self.regime not in ("weak", "strong", "mixed"):
            raise InstanceError(f"unknown effect regime {self.regime!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise InstanceError("theta must lie in [0, 1]")
        for lo, hi in (self.revenue_range, self.utility_range):
            if not lo <= hi:
                raise InstanceError("invalid range")


_SATIATION_RANGE = {"weak": (-1.0, 0.0), "strong": (-2.0, -1.0), "mixed": (-2.0, -1.0)}


def generate_instance(cfg: GenConfig, seed: int) -> Instance:
    """Draw a random instance, deterministically for a fixed seed.

    Uses numpy's PCG64 generator.  Draw order: revenues, base utilities,
    then per product a regime coin flip (mixed only) followed by M effect
    draws, so instances with the same seed and sizes share a prefix.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    N, M = cfg.n_products, cfg.memory
    rev = rng.uniform(*cfg.revenue_range, size=N)
    base = rng.uniform(*cfg.utility_range, size=N)
    lo, hi = _SATIATION_RANGE[cfg.regime]
    eff = np.zeros((N, M))
    for i in range(N):
        addictive = cfg.regime == "mixed" and rng.random() < cfg.theta
        if addictive:
            eff[i] = rng.uniform(0.0, 1.0, size=M)
        else:
            eff[i] = rng.uniform(lo, hi, size=M)
    return Instance(N, cfg.horizon, M, rev, base, eff, cfg.constraints)


# --- JSON serialization ----------------------------------------------------

def _instance_to_dict(inst: Instance) -> dict:
    return {
        "n_products": inst.n_products,
        "horizon": inst.horizon,
        "memory": inst.memory,
        "revenue": inst.revenue.tolist(),
        "base_utility": inst.base_utility.tolist(),
        "effect": inst.effect.tolist(),
        "constraints": {
            "cardinality_cap": inst.constraints.cardinality_cap,
            "offer_cap": inst.constraints.offer_cap,
            "non_overlapping": inst.constraints.non_overlapping,
        },
    }


def save_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(_instance_to_dict(inst), fh, indent=1)
        fh.write("\n")


def load_instance(path) -> Instance:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InstanceError("instance file must hold a JSON object")
    required = ("n_products", "horizon", "memory", "revenue", "base_utility", "effect")
    for key in required:
        if key not in raw:
            raise InstanceError(f"missing field {key!r}")
    craw = raw.get("constraints") or {}
    if not isinstance(craw, dict):
        raise InstanceError("'constraints' must be an object")
    try:
        spec = ConstraintSpec(
            cardinality_cap=craw.get("cardinality_cap"),
            offer_cap=craw.get("offer_cap"),
            non_overlapping=bool(craw.get("non_overlapping", False)),
        )
        n, t, m = int(raw["n_products"]), int(raw["horizon"]), int(raw["memory"])
        eff = raw["effect"]
        if not isinstance(eff, list) or len(eff) != n:
            raise InstanceError("'effect' must be a list with one row per product")
        for row in eff:
            if not isinstance(row, list) or len(row) != m:
                raise InstanceError("each 'effect' row must have length M")
        return Instance(n, t, m, np.asarray(raw["revenue"], dtype=float),
                        np.asarray(raw["base_utility"], dtype=float),
                        np.asarray(eff, dtype=float), spec)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError(f"malformed instance file: {exc}") from exc


def save_plan(plan: Plan, path) -> None:
    with open(path, "w") as fh:
        json.dump({"offers": plan.offers.tolist(), "is_cycle": plan.is_cycle}, fh)
        fh.write("\n")


def load_plan(path) -> Plan:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or "offers" not in raw:
        raise InstanceError("plan file must hold {'offers': [[...]]}")
    return Plan(np.asarray(raw["offers"]), bool(raw.get("is_cycle", False)))
