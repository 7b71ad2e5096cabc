"""Solver-agnostic model representation and the formulation builders.

A Model is a bag of bounded variables, sparse linear rows, and "convex
rows": tagged nonlinear constraints that downstream solvers enforce by
outer approximation.  Two convex-row kinds exist,

* exp-perspective rows  y >= gamma * alpha(z / gamma)  carrying the ids of
  one product's lifted block plus its attraction data, and
* reciprocal rows  rho * w >= 1.

Builders produce the exact mixed-integer formulations of the planning
problem: the lifted conic one (McCormick rows for the bilinear liftings,
permutation facets of the concave envelope on top, exp-perspective rows
below), its small-memory MILP variant using closed-form convex envelopes,
a multilinear-extension MILP, the cyclic variant with wrapped history
indices, and the Charnes-Cooper based cycle models for the non-overlapping
case (Base with a reciprocal cone row, its plain McCormick part, and the
bound-free lifting with pairwise product variables).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Instance, InstanceError, rho_bounds
from .envelope import (
    LinIneq,
    ProductAttraction,
    concave_ineq,
    convex_env_ineqs_smallM,
    most_violated_permutation,
    subgradient_cut,
)

__all__ = [
    "Variable",
    "LinRow",
    "ExpPersRow",
    "ReciprocalRow",
    "Model",
    "MultilinearCoeffs",
    "CharnesCooperBlock",
    "build_conic",
    "build_env_milp",
    "build_multilinear",
    "build_cycle_conic",
    "build_mplus1_base",
    "build_mplus1_mccormick",
    "build_bound_free",
    "multilinear_coeffs",
    "separate_convex_rows",
    "export_lp",
    "read_lp",
    "model_to_json",
    "tau",
]

EAGER_PERM_LIMIT = 3  # emit all M! envelope facets up to this memory length
CUT_VIOLATION_TOL = 1e-7


def tau(m: int, t: int, L: int) -> int:
    """Cyclic history position: period t minus m, wrapped into 1..L."""
    r = (t - m) % L
    return L if r == 0 else r


@dataclass
class Variable:
    name: str
    kind: str  # binary | continuous
    lb: float
    ub: float


@dataclass
class LinRow:
    coeffs: dict[int, float]
    sense: str  # <= | >= | ==
    rhs: float
    name: str = ""

    def activity(self, x: np.ndarray) -> float:
        return float(sum(c * x[j] for j, c in self.coeffs.items()))

    def violation(self, x: np.ndarray) -> float:
        a = self.activity(x)
        if self.sense == "<=":
            return a - self.rhs
        if self.sense == ">=":
            return self.rhs - a
        return abs(a - self.rhs)


@dataclass
class ExpPersRow:
    """Convex row y >= perspective(alpha)(gamma, z) for one product/period."""

    y: int
    gamma: int
    z: tuple[int, ...]
    product: ProductAttraction
    i: int
    t: int
    concave_lazy: bool = False  # envelope facets withheld from the row list


@dataclass
class ReciprocalRow:
    """Convex row rho * w >= 1."""

    rho: int
    w: int
    t: int


@dataclass
class MultilinearCoeffs:
    """Inclusion-exclusion weights a_k with sum_{S_k subseteq S} a_k = alpha(S)."""

    masks: list[int]
    coeffs: np.ndarray


@dataclass
class CharnesCooperBlock:
    """Variable ids of a Charnes-Cooper transformed cycle model."""

    u: np.ndarray
    rho: list[int]
    gamma: list[list[int]]  # [t][i]
    w: Optional[list[int]] = None


class Model:
    def __init__(self, kind: str, periods: int, n_products: int, cyclic: bool):
        self.kind = kind
        self.periods = periods
        self.n_products = n_products
        self.cyclic = cyclic
        self.variables: list[Variable] = []
        self.rows: list[LinRow] = []
        self.convex_rows: list = []
        self.objective: dict[int, float] = {}
        self.meta: dict[tuple, int] = {}
        self.cc: Optional[CharnesCooperBlock] = None

    # -- construction -------------------------------------------------------

    def add_var(self, name: str, kind: str, lb: float, ub: float, key: Optional[tuple] = None) -> int:
        vid = len(self.variables)
        self.variables.append(Variable(name, kind, lb, ub))
        if key is not None:
            self.meta[key] = vid
        return vid

    def add_row(self, coeffs: dict[int, float], sense: str, rhs: float, name: str = "") -> None:
        self.rows.append(LinRow(dict(coeffs), sense, rhs, name))

    def var(self, *key) -> int:
        return self.meta[tuple(key)]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def binary_ids(self) -> list[int]:
        return [j for j, v in enumerate(self.variables) if v.kind == "binary"]

    # -- LP assembly ---------------------------------------------------------

    def to_arrays(self, extra_rows: Iterable[LinRow] = (), bound_overrides=None):
        n = self.n_vars
        all_rows = list(self.rows) + list(extra_rows)
        m = len(all_rows)
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] = v
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for r, row in enumerate(all_rows):
            for j, v in row.coeffs.items():
                A[r, j] += v
            b[r] = row.rhs
            senses.append(row.sense)
        lo = np.array([v.lb for v in self.variables])
        hi = np.array([v.ub for v in self.variables])
        if bound_overrides:
            for j, (l, u) in bound_overrides.items():
                lo[j], hi[j] = l, u
        return c, A, senses, b, lo, hi

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(v * x[j] for j, v in self.objective.items()))

    def decode_plan(self, x: np.ndarray):
        """Round the x block of a solution vector into a Plan."""
        from .core import Plan

        offers = np.zeros((self.periods, self.n_products), dtype=int)
        for t in range(1, self.periods + 1):
            for i in range(1, self.n_products + 1):
                offers[t - 1, i - 1] = int(round(float(x[self.meta[("x", i, t)]])))
        return Plan(offers, is_cycle=self.cyclic)


def _ineq_to_row(model: Model, ineq: LinIneq, y: int, gamma: int, z: Sequence[int], name: str) -> LinRow:
    """Translate  y sense c_g*gamma + c_z.z + const  into model-row form."""
    coeffs = {y: 1.0, gamma: -ineq.gamma_coef}
    for zid, czm in zip(z, ineq.z_coefs):
        coeffs[zid] = coeffs.get(zid, 0.0) - float(czm)
    return LinRow(coeffs, ineq.sense, ineq.constant, name)


# --- shared pieces of the lifted formulations --------------------------------


def _add_mccormick_gamma(model: Model, g: int, rho: int, x: int, rl: float, ru: float) -> None:
    """Four-row envelope of gamma = rho * x with rho in [rl, ru], x binary."""
    model.add_row({g: 1.0, x: -rl, rho: -1.0}, "<=", -rl)
    model.add_row({g: 1.0, x: -ru}, "<=", 0.0)
    model.add_row({g: 1.0, x: -rl}, ">=", 0.0)
    model.add_row({g: 1.0, x: -ru, rho: -1.0}, ">=", -ru)


def _add_mccormick_z(model: Model, z: int, gamma: int, xh: Optional[int], ru: float) -> None:
    """Envelope of z = gamma * x_hist with gamma in [0, ru]; absent history means 0."""
    model.add_row({z: 1.0, gamma: -1.0}, "<=", 0.0)
    coeffs = {z: 1.0}
    if xh is not None:
        coeffs[xh] = -ru
    model.add_row(coeffs, "<=", 0.0)
    model.add_row({z: 1.0}, ">=", 0.0)
    coeffs = {z: 1.0, gamma: -1.0}
    if xh is not None:
        coeffs[xh] = -ru
    model.add_row(coeffs, ">=", -ru)


def _add_plan_constraint_rows(model: Model, inst: Instance, periods: int, cyclic: bool) -> None:
    spec = inst.constraints
    N, M = inst.n_products, inst.memory
    if spec.cardinality_cap is not None:
        for t in range(1, periods + 1):
            model.add_row({model.var("x", i, t): 1.0 for i in range(1, N + 1)},
                          "<=", float(spec.cardinality_cap))
    if spec.offer_cap is not None:
        for i in range(1, N + 1):
            model.add_row({model.var("x", i, t): 1.0 for t in range(1, periods + 1)},
                          "<=", float(spec.offer_cap))
    if spec.non_overlapping:
        if cyclic and periods <= M:
            raise InstanceError("non-overlapping cycles require length > M")
        windows: list[frozenset[int]] = []
        if cyclic:
            for s in range(1, periods + 1):
                windows.append(frozenset(((s - 1 + k) % periods) + 1 for k in range(M + 1)))
        elif periods <= M:
            windows.append(frozenset(range(1, periods + 1)))
        else:
            for s in range(1, periods - M + 1):
                windows.append(frozenset(range(s, s + M + 1)))
        for win in sorted(set(windows), key=sorted):
            for i in range(1, N + 1):
                model.add_row({model.var("x", i, t): 1.0 for t in sorted(win)}, "<=", 1.0)


def _build_lifted(inst: Instance, periods: int, cyclic: bool, convex_side: str,
                  eager_perm_limit: int = EAGER_PERM_LIMIT) -> Model:
    """Common body of the conic / envelope / cyclic formulations.

    convex_side: 'exp' attaches exp-perspective rows, 'envelope' the
    closed-form convex envelope facets (memory <= 2 only).
    """
    N, M = inst.n_products, inst.memory
    if convex_side == "envelope" and M > 2:
        raise InstanceError("closed-form convex envelope requires M <= 2")
    kind = {"exp": "cycle_conic" if cyclic else "conic", "envelope": "env"}[convex_side]
    model = Model(kind, periods, N, cyclic)
    rb = rho_bounds(inst)
    rl, ru = rb.lower, rb.upper

    for t in range(1, periods + 1):
        model.add_var(f"rho_{t}", "continuous", rl, 1.0, ("rho", t))
    for t in range(1, periods + 1):
        for i in range(1, N + 1):
            model.add_var(f"x_{i}_{t}", "binary", 0.0, 1.0, ("x", i, t))
            model.add_var(f"y_{i}_{t}", "continuous", 0.0, 1.0, ("y", i, t))
            model.add_var(f"gamma_{i}_{t}", "continuous", 0.0, ru, ("gamma", i, t))
            for m in range(1, M + 1):
                model.add_var(f"z_{i}_{m}_{t}", "continuous", 0.0, ru, ("z", i, m, t))

    def hist_var(i: int, t: int, m: int) -> Optional[int]:
        if cyclic:
            return model.var("x", i, tau(m, t, periods))
        return model.var("x", i, t - m) if t - m >= 1 else None

    for t in range(1, periods + 1):
        coeffs = {model.var("rho", t): 1.0}
        for i in range(1, N + 1):
            coeffs[model.var("y", i, t)] = 1.0
        model.add_row(coeffs, "==", 1.0, f"balance_{t}")

    lazy = M > eager_perm_limit
    import itertools

    for t in range(1, periods + 1):
        for i in range(1, N + 1):
            p = ProductAttraction.from_instance(inst, i - 1)
            x = model.var("x", i, t)
            y = model.var("y", i, t)
            g = model.var("gamma", i, t)
            zids = tuple(model.var("z", i, m, t) for m in range(1, M + 1))
            _add_mccormick_gamma(model, g, model.var("rho", t), x, rl, ru)
            for m in range(1, M + 1):
                _add_mccormick_z(model, zids[m - 1], g, hist_var(i, t, m), ru)
            if M == 0:
                u = math.exp(inst.base_utility[i - 1])
                model.add_row({y: 1.0, g: -u}, "==", 0.0)
                continue
            if not lazy:
                for sigma in itertools.permutations(range(M)):
                    model.rows.append(_ineq_to_row(model, concave_ineq(p, sigma), y, g, zids,
                                                   f"conc_{i}_{t}"))
            if convex_side == "exp":
                model.convex_rows.append(ExpPersRow(y, g, zids, p, i, t, concave_lazy=lazy))
            else:
                for ineq in convex_env_ineqs_smallM(p):
                    model.rows.append(_ineq_to_row(model, ineq, y, g, zids, f"cvx_{i}_{t}"))

    _add_plan_constraint_rows(model, inst, periods, cyclic)
    for t in range(1, periods + 1):
        for i in range(1, N + 1):
            model.objective[model.var("y", i, t)] = float(inst.revenue[i - 1]) / periods
    return model


def build_conic(inst: Instance, eager_perm_limit: int = EAGER_PERM_LIMIT) -> Model:
    """Exact lifted formulation with exp-perspective convex rows.

    Envelope facets are emitted eagerly for small memory; above the limit
    they are left to lazy separation (the model's exp rows carry the flag).
    """
    return _build_lifted(inst, inst.horizon, False, "exp", eager_perm_limit)


def build_env_milp(inst: Instance) -> Model:
    """Pure MILP variant: convex side via closed-form envelopes (M <= 2)."""
    return _build_lifted(inst, inst.horizon, False, "envelope")


def build_cycle_conic(inst: Instance, L: int, eager_perm_limit: int = EAGER_PERM_LIMIT) -> Model:
    """Conic formulation over a cycle of length L; history wraps through tau."""
    if L < 1:
        raise InstanceError("cycle length must be positive")
    return _build_lifted(inst, L, True, "exp", eager_perm_limit)


# --- multilinear extension ---------------------------------------------------


def multilinear_coeffs(p: ProductAttraction) -> MultilinearCoeffs:
    """Inclusion-exclusion expansion of alpha over all subsets of lags."""
    M = p.memory
    masks = list(range(1 << M))
    a = np.zeros(1 << M)
    for k in masks:
        val = p.alpha([(k >> m) & 1 for m in range(M)])
        total = 0.0
        if k:
            s = (k - 1) & k  # iterate strict submasks of k, down to 0
            while True:
                total += a[s]
                if s == 0:
                    break
                s = (s - 1) & k
        a[k] = val - total
    return MultilinearCoeffs(masks, a)


def build_multilinear(inst: Instance) -> Model:
    """MILP from the multilinear expansion of the attraction values.

    Each subset product of history offers is linearized by a left-to-right
    chain of binary-product McCormick rows (ascending lag order, current
    period first); the chain prefixes are shared across subsets.  The
    products are then scaled by rho through interval McCormick rows.
    """
    N, M, T = inst.n_products, inst.memory, inst.horizon
    if M > 4:
        raise InstanceError("multilinear build capped at M <= 4")
    model = Model("ml", T, N, False)
    rb = rho_bounds(inst)
    rl, ru = rb.lower, rb.upper

    for t in range(1, T + 1):
        model.add_var(f"rho_{t}", "continuous", rl, 1.0, ("rho", t))
    for t in range(1, T + 1):
        for i in range(1, N + 1):
            model.add_var(f"x_{i}_{t}", "binary", 0.0, 1.0, ("x", i, t))
            model.add_var(f"y_{i}_{t}", "continuous", 0.0, 1.0, ("y", i, t))

    for t in range(1, T + 1):
        coeffs = {model.var("rho", t): 1.0}
        for i in range(1, N + 1):
            coeffs[model.var("y", i, t)] = 1.0
        model.add_row(coeffs, "==", 1.0, f"balance_{t}")

    prod_cache: dict[tuple, Optional[int]] = {}

    def lag_var(i: int, t: int, m: int) -> Optional[int]:
        # m = 0 is the current-period offer
        return model.var("x", i, t - m) if t - m >= 1 else None

    def product_var(i: int, t: int, lags: tuple[int, ...]) -> Optional[int]:
        """Variable equal to the product of offers at the given lags (None = 0)."""
        key = (i, t, lags)
        if key in prod_cache:
            return prod_cache[key]
        if len(lags) == 1:
            out = lag_var(i, t, lags[0])
        else:
            left = product_var(i, t, lags[:-1])
            right = lag_var(i, t, lags[-1])
            if left is None or right is None:
                out = None
            else:
                out = model.add_var(f"h_{i}_{t}_" + "_".join(map(str, lags)),
                                    "continuous", 0.0, 1.0)
                model.add_row({out: 1.0, left: -1.0}, "<=", 0.0)
                model.add_row({out: 1.0, right: -1.0}, "<=", 0.0)
                model.add_row({out: 1.0, left: -1.0, right: -1.0}, ">=", -1.0)
        prod_cache[key] = out
        return out

    for t in range(1, T + 1):
        for i in range(1, N + 1):
            p = ProductAttraction.from_instance(inst, i - 1)
            mc = multilinear_coeffs(p)
            y_coeffs = {model.var("y", i, t): 1.0}
            for k in mc.masks:
                lags = tuple([0] + [m + 1 for m in range(M) if (k >> m) & 1])
                theta = product_var(i, t, lags)
                if theta is None:
                    continue
                w = model.add_var(f"theta_{i}_{k}_{t}w", "continuous", 0.0, ru,
                                  ("w_ml", i, k, t))
                model.meta[("theta", i, k, t)] = theta
                rho = model.var("rho", t)
                model.add_row({w: 1.0, theta: -rl, rho: -1.0}, "<=", -rl)
                model.add_row({w: 1.0, theta: -ru}, "<=", 0.0)
                model.add_row({w: 1.0, theta: -rl}, ">=", 0.0)
                model.add_row({w: 1.0, theta: -ru, rho: -1.0}, ">=", -ru)
                y_coeffs[w] = -float(mc.coeffs[k])
            model.add_row(y_coeffs, "==", 0.0, f"ydef_{i}_{t}")

    _add_plan_constraint_rows(model, inst, T, False)
    for t in range(1, T + 1):
        for i in range(1, N + 1):
            model.objective[model.var("y", i, t)] = float(inst.revenue[i - 1]) / T
    return model


# --- Charnes-Cooper cycle models ----------------------------------------------


def _mplus1_skeleton(inst: Instance, kind: str) -> Model:
    N, M = inst.n_products, inst.memory
    L = M + 1
    model = Model(kind, L, N, True)
    u = inst.base_attraction
    for t in range(1, L + 1):
        model.add_var(f"rho_{t}", "continuous", 0.0, 1.0, ("rho", t))
    for t in range(1, L + 1):
        for i in range(1, N + 1):
            model.add_var(f"x_{i}_{t}", "binary", 0.0, 1.0, ("x", i, t))
            model.add_var(f"gamma_{i}_{t}", "continuous", 0.0, 1.0, ("gamma", i, t))
    for i in range(1, N + 1):
        model.add_row({model.var("x", i, t): 1.0 for t in range(1, L + 1)}, "<=", 1.0,
                      f"nonoverlap_{i}")
    for t in range(1, L + 1):
        coeffs = {model.var("rho", t): 1.0}
        for i in range(1, N + 1):
            coeffs[model.var("gamma", i, t)] = float(u[i - 1])
        model.add_row(coeffs, "==", 1.0, f"balance_{t}")
    if inst.constraints.cardinality_cap is not None:
        for t in range(1, L + 1):
            model.add_row({model.var("x", i, t): 1.0 for i in range(1, N + 1)},
                          "<=", float(inst.constraints.cardinality_cap))
    for t in range(1, L + 1):
        for i in range(1, N + 1):
            model.objective[model.var("gamma", i, t)] = float(inst.revenue[i - 1] * u[i - 1]) / L
    model.cc = CharnesCooperBlock(
        u=np.array(u),
        rho=[model.var("rho", t) for t in range(1, L + 1)],
        gamma=[[model.var("gamma", i, t) for i in range(1, N + 1)] for t in range(1, L + 1)],
    )
    return model


def build_mplus1_mccormick(inst: Instance) -> Model:
    """Charnes-Cooper cycle model with only the McCormick rows on gamma = rho*x."""
    model = _mplus1_skeleton(inst, "mccormick")
    u_sum = float(inst.base_attraction.sum())
    rl, ru = 1.0 / (1.0 + u_sum), 1.0
    L = model.periods
    for t in range(1, L + 1):
        model.variables[model.var("rho", t)].lb = rl
        for i in range(1, model.n_products + 1):
            _add_mccormick_gamma(model, model.var("gamma", i, t), model.var("rho", t),
                                 model.var("x", i, t), rl, ru)
    return model


def build_mplus1_base(inst: Instance) -> Model:
    """McCormick cycle model plus the reciprocal cone row rho * w >= 1."""
    model = build_mplus1_mccormick(inst)
    model.kind = "base"
    u = inst.base_attraction
    L = model.periods
    w_ids = []
    for t in range(1, L + 1):
        w = model.add_var(f"w_{t}", "continuous", 1.0, 1.0 + float(u.sum()), ("w", t))
        coeffs = {w: 1.0}
        for i in range(1, model.n_products + 1):
            coeffs[model.var("x", i, t)] = -float(u[i - 1])
        model.add_row(coeffs, "==", 1.0, f"wdef_{t}")
        model.convex_rows.append(ReciprocalRow(model.var("rho", t), w, t))
        w_ids.append(w)
    model.cc.w = w_ids
    return model


def build_bound_free(inst: Instance) -> Model:
    """Exact MILP for non-overlapping cycles via pairwise product variables."""
    model = _mplus1_skeleton(inst, "bound_free")
    N, L = model.n_products, model.periods
    u = inst.base_attraction
    for t in range(1, L + 1):
        for i in range(1, N + 1):
            for j in range(1, N + 1):
                model.add_var(f"Gam_{i}_{j}_{t}", "continuous", 0.0, 1.0, ("Gamma", i, j, t))
    for t in range(1, L + 1):
        rho = model.var("rho", t)
        for i in range(1, N + 1):
            gi = model.var("gamma", i, t)
            model.add_row({gi: 1.0, rho: -1.0}, "<=", 0.0)
            coeffs = {model.var("x", i, t): 1.0, gi: -1.0}
            for j in range(1, N + 1):
                coeffs[model.var("Gamma", i, j, t)] = -float(u[j - 1])
            model.add_row(coeffs, "==", 0.0, f"unpack_{i}_{t}")
            model.add_row({model.var("Gamma", i, i, t): 1.0, gi: -1.0}, "==", 0.0)
            for j in range(1, N + 1):
                if j == i:
                    continue
                G = model.var("Gamma", i, j, t)
                gj = model.var("gamma", j, t)
                model.add_row({G: 1.0, gi: -1.0}, "<=", 0.0)
                model.add_row({G: 1.0, gj: -1.0}, "<=", 0.0)
                model.add_row({G: 1.0, gi: -1.0, gj: -1.0, rho: 1.0}, ">=", 0.0)
    return model


# --- generic convex-row separation --------------------------------------------


def separate_convex_rows(model: Model, x: np.ndarray, tol: float = CUT_VIOLATION_TOL) -> list[LinRow]:
    """Outer-approximation cuts for every convex row violated at the point x.

    Exp-perspective rows get a subgradient plane at w = z/gamma (plus the
    most violated envelope facet when those were withheld from the model);
    reciprocal rows get the tangent through the geometric-mean boundary
    point.  Every returned row is violated by x by more than `tol`.
    """
    cuts: list[LinRow] = []
    for row in model.convex_rows:
        if isinstance(row, ExpPersRow):
            gam = float(x[row.gamma])
            zv = np.array([float(x[j]) for j in row.z])
            if gam <= 1e-12:
                continue
            if np.any(zv < -1e-6) or np.any(zv > gam + 1e-6):
                raise ValueError("lifted point violates 0 <= z <= gamma beyond round-off")
            zv = np.clip(zv, 0.0, gam)
            yv = float(x[row.y])
            w = zv / gam
            cut = subgradient_cut(row.product, w)
            if cut.violation(yv, gam, zv) > tol:
                cuts.append(_ineq_to_row(model, cut, row.y, row.gamma, row.z,
                                         f"oa_exp_{row.i}_{row.t}"))
            if row.concave_lazy and row.product.memory > 0:
                sigma = most_violated_permutation(row.product, gam, zv)
                facet = concave_ineq(row.product, sigma)
                if facet.violation(yv, gam, zv) > tol:
                    cuts.append(_ineq_to_row(model, facet, row.y, row.gamma, row.z,
                                             f"oa_conc_{row.i}_{row.t}"))
        elif isinstance(row, ReciprocalRow):
            rv, wv = float(x[row.rho]), float(x[row.w])
            if rv * wv >= 1.0 - tol or rv <= 0 or wv <= 0:
                continue
            s = math.sqrt(rv * wv)
            # tangent of {rho*w >= 1} at the scaled boundary point
            cuts.append(LinRow({row.rho: wv / s, row.w: rv / s}, ">=", 2.0,
                               f"oa_recip_{row.t}"))
    return cuts


def convex_row_violation(model: Model, x: np.ndarray) -> float:
    """Largest violation of any convex row at x (0 when all satisfied)."""
    from .envelope import perspective_value

    worst = 0.0
    for row in model.convex_rows:
        if isinstance(row, ExpPersRow):
            gam = max(float(x[row.gamma]), 0.0)
            zv = np.clip(np.array([float(x[j]) for j in row.z]), 0.0, max(gam, 0.0))
            worst = max(worst, perspective_value(row.product, gam, zv) - float(x[row.y]))
        elif isinstance(row, ReciprocalRow):
            worst = max(worst, 1.0 - float(x[row.rho]) * float(x[row.w]))
    return worst


# --- serialization -------------------------------------------------------------


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _fmt(v: float) -> str:
    return format(v, ".12g")


def _terms(coeffs: dict[int, float], model: Model) -> str:
    parts = []
    for j in sorted(coeffs):
        v = coeffs[j]
        if v == 0.0:
            continue
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(v))} {model.variables[j].name}")
    if not parts:
        return "0 " + model.variables[0].name
    out = " ".join(parts)
    return out[2:] if out.startswith("+ ") else out


def export_lp(model: Model, path, cuts: Optional[Sequence[LinRow]] = None) -> None:
    """Write the model in LP text format with deterministic names.

    Models carrying convex rows are refused unless linearizing cuts are
    supplied (callers obtain them from an outer-approximation pass).
    """
    if model.convex_rows and cuts is None:
        raise ValueError("model has convex rows; linearize them first (pass cuts=...)")
    rows = list(model.rows) + list(cuts or ())
    sense_txt = {"<=": "<=", ">=": ">=", "==": "="}
    with open(path, "w") as fh:
        fh.write(f"\\ histassort kind={model.kind} periods={model.periods}\n")
        fh.write("Maximize\n obj: " + _terms(model.objective, model) + "\n")
        fh.write("Subject To\n")
        for r, row in enumerate(rows):
            fh.write(f" r{r}: {_terms(row.coeffs, model)} {sense_txt[row.sense]} {_fmt(row.rhs)}\n")
        fh.write("Bounds\n")
        for v in model.variables:
            if v.kind == "binary":
                continue
            fh.write(f" {_fmt(v.lb)} <= {v.name} <= {_fmt(v.ub)}\n")
        binaries = [v.name for v in model.variables if v.kind == "binary"]
        if binaries:
            fh.write("Binaries\n")
            for k in range(0, len(binaries), 8):
                fh.write(" " + " ".join(binaries[k:k + 8]) + "\n")
        fh.write("End\n")


def read_lp(path) -> Model:
    """Parse an LP file written by export_lp back into a Model."""
    with open(path) as fh:
        text = fh.read()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("\\")]
    model = Model("imported", 0, 0, False)
    ids: dict[str, int] = {}

    def vid(name: str) -> int:
        if name not in ids:
            ids[name] = model.add_var(name, "continuous", -np.inf, np.inf)
        return ids[name]

    term_re = re.compile(rf"([-+])?\s*({_NUM})?\s*([A-Za-z_][A-Za-z0-9_]*)")

    def parse_terms(expr: str) -> dict[int, float]:
        out: dict[int, float] = {}
        for sign, num, name in term_re.findall(expr):
            v = float(num) if num else 1.0
            if sign == "-":
                v = -v
            j = vid(name)
            out[j] = out.get(j, 0.0) + v
        return out

    section = None
    for ln in lines:
        low = ln.lower()
        if low in ("maximize", "minimize", "subject to", "bounds", "binaries", "end"):
            section = low
            continue
        if section == "maximize":
            expr = ln.split(":", 1)[1] if ":" in ln else ln
            model.objective.update(parse_terms(expr))
        elif section == "subject to":
            expr = ln.split(":", 1)[1] if ":" in ln else ln
            mobj = re.search(rf"(<=|>=|=)\s*({_NUM})\s*$", expr)
            if not mobj:
                raise ValueError(f"cannot parse constraint line {ln!r}")
            sense = {"<=": "<=", ">=": ">=", "=": "=="}[mobj.group(1)]
            rhs = float(mobj.group(2))
            model.add_row(parse_terms(expr[: mobj.start()]), sense, rhs)
        elif section == "bounds":
            mobj = re.match(rf"({_NUM})\s*<=\s*([A-Za-z_][A-Za-z0-9_]*)\s*<=\s*({_NUM})", ln)
            if not mobj:
                raise ValueError(f"cannot parse bounds line {ln!r}")
            j = vid(mobj.group(2))
            model.variables[j].lb = float(mobj.group(1))
            model.variables[j].ub = float(mobj.group(3))
        elif section == "binaries":
            for name in ln.split():
                j = vid(name)
                model.variables[j].kind = "binary"
                model.variables[j].lb, model.variables[j].ub = 0.0, 1.0
    return model


def model_to_json(model: Model) -> str:
    """Debug dump of a model (variables, rows, objective) as JSON."""
    doc = {
        "kind": model.kind,
        "periods": model.periods,
        "n_products": model.n_products,
        "cyclic": model.cyclic,
        "variables": [
            {"name": v.name, "kind": v.kind, "lb": v.lb, "ub": v.ub} for v in model.variables
        ],
        "rows": [
            {"coeffs": {str(j): c for j, c in r.coeffs.items()}, "sense": r.sense,
             "rhs": r.rhs, "name": r.name}
            for r in model.rows
        ],
        "objective": {str(j): c for j, c in model.objective.items()},
        "convex_rows": [type(r).__name__ for r in model.convex_rows],
    }
    return json.dumps(doc, indent=1)
