"""Exact brute force and the sequential revenue-ordered heuristics.

The brute force is the oracle every other solver is checked against.  For
unconstrained / per-period / window constraints it runs a dynamic program
over memory states (the per-product history bits), which is exact because
period revenue only depends on the current assortment and those bits.  A
horizon-wide offer cap breaks that decomposition, so such instances fall
back to plain enumeration of all 2^(N*T) plans.  Both paths break ties
toward the lexicographically smallest plan (row-major offer matrix).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Instance, Plan, plan_revenue

__all__ = [
    "RoResult",
    "brute_force",
    "brute_force_all_optima",
    "ro_assortment",
    "sequential_ro",
    "sequential_lospo",
    "union_is_ro",
    "mnl_revenue",
]

DP_STATE_LIMIT = 2 ** 24  # states x assortments
ENUM_LIMIT = 24  # N*T cap for plain enumeration


def mnl_revenue(revenues: np.ndarray, nu: np.ndarray, offered: np.ndarray) -> float:
    """Single-period MNL expected revenue of an offered set (0/1 vector)."""
    den = 1.0 + float(nu @ offered)
    return float((revenues * nu) @ offered) / den


def _nu_table(inst: Instance) -> np.ndarray:
    """nu[i, h]: attraction of product i when its history bits are h (bit m = lag m+1)."""
    M = inst.memory
    H = 1 << M
    hist = np.array([[(h >> m) & 1 for m in range(M)] for h in range(H)], dtype=float)
    util = inst.base_utility[:, None] + inst.effect @ hist.T if M else inst.base_utility[:, None]
    return np.exp(util)


def _plan_value(inst: Instance, offers: np.ndarray, nu_table: np.ndarray) -> float:
    T, N = offers.shape
    M = inst.memory
    total = 0.0
    for p in range(T):
        h = np.zeros(N, dtype=int)
        for m in range(M):
            q = p - m - 1
            if q >= 0:
                h |= offers[q] << m
        nu = nu_table[np.arange(N), h]
        total += mnl_revenue(inst.revenue, nu, offers[p])
    return total / T


def _enumerate_plans(inst: Instance):
    N, T = inst.n_products, inst.horizon
    for bits in itertools.product((0, 1), repeat=N * T):
        yield np.array(bits, dtype=np.int8).reshape(T, N)


def _feasible_offers(inst: Instance, offers: np.ndarray) -> bool:
    from .core import is_feasible

    return is_feasible(inst, Plan(offers))[0]


def _brute_force_enum(inst: Instance, collect_tol: Optional[float]):
    if inst.n_products * inst.horizon > ENUM_LIMIT:
        raise ValueError(f"enumeration guard: N*T must be <= {ENUM_LIMIT}")
    nu_table = _nu_table(inst)
    best_val = -math.inf
    best_offers = None
    kept: list[tuple[float, np.ndarray]] = []
    for offers in _enumerate_plans(inst):
        if not inst.constraints.unconstrained and not _feasible_offers(inst, offers):
            continue
        v = _plan_value(inst, offers, nu_table)
        if v > best_val + 1e-15:
            best_val = v
            best_offers = offers.copy()
        if collect_tol is not None:
            kept.append((v, offers.copy()))
    if best_offers is None:
        raise ValueError("no feasible plan")
    if collect_tol is None:
        return Plan(best_offers), best_val, None
    optima = [Plan(o) for v, o in kept if v >= best_val - collect_tol]
    return Plan(best_offers), best_val, optima


def _brute_force_dp(inst: Instance) -> tuple[Plan, float]:
    N, T, M = inst.n_products, inst.horizon, inst.memory
    n_states = 1 << (N * M)
    masks = np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.int64)
    if n_states * len(masks) > DP_STATE_LIMIT:
        raise ValueError("state-space guard exceeded for the history DP")
    spec = inst.constraints
    if spec.cardinality_cap is not None:
        masks = masks[masks.sum(axis=1) <= spec.cardinality_cap]
    states = np.arange(n_states, dtype=np.int64)
    hmask = (1 << M) - 1
    S = (states[:, None] >> (M * np.arange(N))) & hmask if M else np.zeros((1, N), dtype=np.int64)
    nu_table = _nu_table(inst)
    NUS = nu_table[np.arange(N)[None, :], S]  # state x product attraction
    D = NUS @ masks.T
    R = (NUS * inst.revenue[None, :]) @ masks.T
    W = R / (1.0 + D)  # state x assortment period revenue
    if spec.non_overlapping and M:
        recent = S != 0  # product offered within the last M periods
        viol = (masks[None, :, :].astype(bool) & recent[:, None, :]).any(axis=2)
        W = np.where(viol, -np.inf, W)
    if M:
        NS = ((S[:, None, :] << 1) | masks[None, :, :]) & hmask
        TR = (NS << (M * np.arange(N))).sum(axis=2)
    else:
        TR = np.zeros((1, len(masks)), dtype=np.int64)

    values = [None] * (T + 1)
    values[T] = np.zeros(n_states if M else 1)
    for t in range(T - 1, -1, -1):
        values[t] = (W + values[t + 1][TR]).max(axis=1)
    # forward pass, smallest assortment index on ties = lexicographic plan order
    offers = np.zeros((T, N), dtype=np.int8)
    s = 0
    for t in range(T):
        q = W[s] + values[t + 1][TR[s]]
        a = int(np.flatnonzero(q == q.max())[0])
        offers[t] = masks[a]
        s = int(TR[s, a])
    return Plan(offers), float(values[0][0] / T)


def brute_force(inst: Instance) -> tuple[Plan, float]:
    """Globally optimal plan and value; ties go to the lexicographically smallest plan."""
    if inst.constraints.offer_cap is not None:
        plan, val, _ = _brute_force_enum(inst, None)
        return plan, val
    return _brute_force_dp(inst)


def brute_force_all_optima(inst: Instance, tol: float = 1e-9) -> tuple[float, list[Plan]]:
    """All feasible plans within `tol` of the optimum (enumeration path)."""
    _, val, optima = _brute_force_enum(inst, tol)
    return val, optima


@dataclass(frozen=True)
class RoResult:
    """Best revenue-ordered assortment for given attraction values.

    kappa counts products kept after sorting by revenue (descending, index
    ascending); ties in value keep the larger kappa.
    """

    kappa: int
    assortment: tuple[int, ...]
    value: float
    nu: np.ndarray


def ro_assortment(revenues: Sequence[float], nu: Sequence[float]) -> RoResult:
    r = np.asarray(revenues, dtype=float)
    v = np.asarray(nu, dtype=float)
    if np.any(v < 0):
        raise ValueError("attraction values must be non-negative")
    order = np.lexsort((np.arange(len(r)), -r))
    num = np.concatenate([[0.0], np.cumsum(r[order] * v[order])])
    den = np.concatenate([[1.0], 1.0 + np.cumsum(v[order])])
    vals = num / den
    kappa = 0
    for k in range(len(r) + 1):
        if vals[k] >= vals[kappa]:
            kappa = k
    return RoResult(kappa, tuple(sorted(order[:kappa])), float(vals[kappa]), v)


def _history_nu(inst: Instance, offers: np.ndarray, t: int) -> np.ndarray:
    """Attractions in 1-based period t of a partially filled offer matrix."""
    N, M = inst.n_products, inst.memory
    util = inst.base_utility.copy()
    for m in range(1, M + 1):
        if t - m >= 1:
            util = util + inst.effect[:, m - 1] * offers[t - m - 1]
    return np.exp(util)


def sequential_ro(inst: Instance) -> Plan:
    """Pick the best revenue-ordered assortment period by period.

    Optimal when there are no constraints and all effects are non-negative;
    otherwise a heuristic (constraints are not enforced here).
    """
    T, N = inst.horizon, inst.n_products
    offers = np.zeros((T, N), dtype=np.int8)
    for t in range(1, T + 1):
        nu = _history_nu(inst, offers, t)
        res = ro_assortment(inst.revenue, nu)
        offers[t - 1, list(res.assortment)] = 1
    return Plan(offers)


def sequential_ro_cutoffs(inst: Instance) -> list[int]:
    """The kappa sequence chosen by sequential_ro (for nestedness checks)."""
    T, N = inst.horizon, inst.n_products
    offers = np.zeros((T, N), dtype=np.int8)
    cutoffs = []
    for t in range(1, T + 1):
        res = ro_assortment(inst.revenue, _history_nu(inst, offers, t))
        cutoffs.append(res.kappa)
        offers[t - 1, list(res.assortment)] = 1
    return cutoffs


def sequential_lospo(inst: Instance) -> Plan:
    """Sequential RO with a leave-one-satiation-product-out repair step.

    Each period starts from the sequential-RO assortment and considers
    dropping a single product that carries some satiation effect.  Options
    are scored by the revenue of the current period plus the next
    min(M, T-t) periods continued with sequential RO; a drop is committed
    only when it strictly beats keeping the full assortment.
    """
    T, N, M = inst.horizon, inst.n_products, inst.memory
    nu_saved = _nu_table(inst)

    def lookahead(offers: np.ndarray, t: int, assort: np.ndarray) -> float:
        sim = offers.copy()
        sim[t - 1] = assort
        nu = _history_nu(inst, sim, t)
        total = mnl_revenue(inst.revenue, nu, assort.astype(float))
        horizon = min(M, T - t)
        for k in range(1, horizon + 1):
            nu = _history_nu(inst, sim, t + k)
            res = ro_assortment(inst.revenue, nu)
            sim[t + k - 1, :] = 0
            sim[t + k - 1, list(res.assortment)] = 1
            total += res.value
        return total

    satiation = [i for i in range(N) if M and inst.effect[i].min() < 0]
    offers = np.zeros((T, N), dtype=np.int8)
    for t in range(1, T + 1):
        nu = _history_nu(inst, offers, t)
        res = ro_assortment(inst.revenue, nu)
        base = np.zeros(N, dtype=np.int8)
        base[list(res.assortment)] = 1
        best_val = lookahead(offers, t, base)
        best = base
        for j in satiation:
            if not base[j]:
                continue
            cand = base.copy()
            cand[j] = 0
            v = lookahead(offers, t, cand)
            if v > best_val + 1e-12:
                best_val, best = v, cand
        offers[t - 1] = best
    return Plan(offers)


def union_is_ro(plan: Plan, revenues: Sequence[float]) -> bool:
    """Is the ever-offered set a revenue prefix (revenue ties interchangeable)?"""
    r = np.asarray(revenues, dtype=float)
    offered = plan.offers.sum(axis=0) > 0
    if not offered.any() or offered.all():
        return True
    return float(r[offered].min()) >= float(r[~offered].max())
