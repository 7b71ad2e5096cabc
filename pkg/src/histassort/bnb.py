"""LP-based branch-and-bound over Model with lazy separation callbacks.

Nodes are solved by the bounded-variable simplex on the model's linear rows
plus a global cut pool.  Convex rows are enforced lazily: whenever a node
LP optimum is integer feasible, the built-in separator (subgradient planes
for exp-perspective rows, envelope facets when those are pooled lazily,
tangents for reciprocal rows) and any user separators run; violated cuts go
into the pool and the node is re-solved, mirroring lazy-constraint
callbacks in commercial solvers.  Cuts are globally valid, so the pool is
shared by all nodes and never purged.

Search order: depth-first dive until the first incumbent, then best bound.
Branching picks the most fractional binary, ties broken by lowest variable
id.  Everything is deterministic for fixed inputs.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import lp
from .modelir import LinRow, Model, separate_convex_rows

__all__ = ["SolveParams", "SolveReport", "solve_mip", "relax_value", "relax_solution"]

Separator = Callable[[Model, np.ndarray], list[LinRow]]


@dataclass
class SolveParams:
    rel_gap_tol: float = 0.5e-2
    abs_gap_tol: float = 1e-6
    time_limit: float = 3600.0
    node_limit: int = 500_000
    branching: str = "most-fractional"
    integrality_tol: float = 1e-6
    convex_tol: float = 1e-7
    root_cut_tol: float = 1e-8
    max_root_rounds: int = 200


@dataclass
class SolveReport:
    status: str  # optimal | time_limit | node_limit | infeasible
    objective: Optional[float]  # best integer value found (R_IP)
    bound: float  # dual bound (R_U)
    nodes: int
    cuts: int
    seconds: float
    plan: object = None
    x: Optional[np.ndarray] = None

    @property
    def rel_gap(self) -> float:
        if self.objective is None:
            return math.inf
        denom = max(abs(self.objective), 1e-12)
        return max(self.bound - self.objective, 0.0) / denom


class _CutPool:
    def __init__(self):
        self.rows: list[LinRow] = []
        self._keys: set = set()

    def add(self, row: LinRow) -> bool:
        key = (row.sense, int(round(row.rhs * 1e9)),
               tuple(sorted((j, int(round(c * 1e9))) for j, c in row.coeffs.items())))
        if key in self._keys:
            return False
        self._keys.add(key)
        self.rows.append(row)
        return True


def _solve_node(model: Model, pool: _CutPool, overrides) -> lp.LpSolution:
    sol = lp.solve_lp(model, cuts=pool.rows, bound_overrides=overrides, ignore_convex=True)
    if sol.status in ("unbounded", "iteration_limit"):
        raise RuntimeError(f"node LP ended with status {sol.status}")
    return sol


@dataclass
class RelaxResult:
    value: float
    x: Optional[np.ndarray]
    values: list[float] = field(default_factory=list)
    cuts: list[LinRow] = field(default_factory=list)


def relax_solution(model: Model, separators: Sequence[Separator] = (),
                   convergence_tol: float = 1e-8, max_rounds: int = 200,
                   pool: Optional[_CutPool] = None) -> RelaxResult:
    """Continuous relaxation with outer approximation of the convex rows.

    Repeatedly solves the LP relaxation, separates every violated convex
    row (and user cuts) at the fractional optimum, and stops once the value
    improves by less than `convergence_tol` or nothing is violated.  The
    value sequence is non-increasing and stays above the true relaxation.
    """
    pool = pool or _CutPool()
    values: list[float] = []
    x = None
    for _ in range(max_rounds):
        sol = lp.solve_lp(model, cuts=pool.rows, ignore_convex=True)
        if sol.status == "infeasible":
            return RelaxResult(-math.inf, None, values, pool.rows)
        if sol.status != "optimal":
            raise RuntimeError(f"relaxation LP ended with status {sol.status}")
        x = sol.x
        values.append(sol.objective)
        cuts = separate_convex_rows(model, x)
        for sep in separators:
            cuts.extend(sep(model, x))
        added = sum(pool.add(c) for c in cuts)
        if not added:
            break
        if len(values) >= 2 and values[-2] - values[-1] < convergence_tol:
            break
    return RelaxResult(values[-1], x, values, pool.rows)


def relax_value(model: Model, separators: Sequence[Separator] = (),
                convergence_tol: float = 1e-8) -> float:
    """Objective value of the (outer-approximated) continuous relaxation."""
    return relax_solution(model, separators, convergence_tol).value


def _fractional_binaries(model: Model, x: np.ndarray, tol: float) -> list[tuple[float, int]]:
    out = []
    for j in model.binary_ids:
        f = float(x[j])
        dist = abs(f - round(f))
        if dist > tol:
            out.append((min(f - math.floor(f), math.ceil(f) - f), j))
    return out


def solve_mip(model: Model, params: Optional[SolveParams] = None,
              separators: Sequence[Separator] = (),
              initial_cuts: Iterable[LinRow] = ()) -> SolveReport:
    """Branch-and-bound solve of a Model; see module docstring."""
    params = params or SolveParams()
    t0 = time.perf_counter()
    pool = _CutPool()
    for row in initial_cuts:
        pool.add(row)

    # root strengthening: outer-approximate convex rows at the fractional optimum
    if model.convex_rows:
        root = relax_solution(model, separators=(), convergence_tol=params.root_cut_tol,
                              max_rounds=params.max_root_rounds, pool=pool)
        if root.x is None:
            return SolveReport("infeasible", None, -math.inf, 0, len(pool.rows),
                               time.perf_counter() - t0)

    incumbent_val: Optional[float] = None
    incumbent_x: Optional[np.ndarray] = None
    nodes = 0
    seq = 0
    heap: list[tuple[float, int, dict]] = []  # (-parent bound, seq, bound overrides)
    stack: list[tuple[float, dict]] = []  # dive stack until first incumbent
    heapq.heappush(heap, (-math.inf, seq, {}))
    status = "optimal"

    def open_bound() -> float:
        out = -heap[0][0] if heap else -math.inf
        for est, _ in stack:
            out = max(out, est)
        return out

    while heap or stack:
        if time.perf_counter() - t0 > params.time_limit:
            status = "time_limit"
            break
        if nodes >= params.node_limit:
            status = "node_limit"
            break
        # gap check against the best open estimate
        bound_now = open_bound()
        if incumbent_val is not None:
            gap = bound_now - incumbent_val
            if gap <= params.abs_gap_tol or gap <= params.rel_gap_tol * max(abs(incumbent_val), 1e-12):
                break
        if incumbent_val is None and stack:
            est, overrides = stack.pop()
        else:
            while stack:
                est, ov = stack.pop()
                heapq.heappush(heap, (-est, (seq := seq + 1), ov))
            neg_est, _, overrides = heapq.heappop(heap)
            est = -neg_est
        if incumbent_val is not None and est <= incumbent_val + params.abs_gap_tol:
            continue
        nodes += 1
        sol = _solve_node(model, pool, overrides)
        if sol.status == "infeasible":
            continue
        bound = min(sol.objective, est)
        if incumbent_val is not None and bound <= incumbent_val + 1e-12:
            continue
        x = sol.x

        # lazy separation loop at integer-feasible points
        for _ in range(200):
            frac = _fractional_binaries(model, x, params.integrality_tol)
            if frac:
                break
            cuts = separate_convex_rows(model, x, tol=params.convex_tol)
            for sep in separators:
                cuts.extend(sep(model, x))
            if not sum(pool.add(c) for c in cuts):
                break
            sol = _solve_node(model, pool, overrides)
            if sol.status == "infeasible":
                break
            bound = min(min(sol.objective, bound), est)
            if incumbent_val is not None and bound <= incumbent_val + 1e-12:
                break
            x = sol.x
        else:
            raise RuntimeError("lazy separation failed to converge at an integer point")

        if sol.status == "infeasible" or (incumbent_val is not None and bound <= incumbent_val + 1e-12):
            continue
        frac = _fractional_binaries(model, x, params.integrality_tol)
        if not frac:
            if incumbent_val is None or sol.objective > incumbent_val + 1e-12:
                incumbent_val = sol.objective
                incumbent_x = x.copy()
            continue
        # branch on the most fractional binary, lowest id on ties
        frac.sort(key=lambda p: (-p[0], p[1]))
        j = frac[0][1]
        up = dict(overrides)
        up[j] = (1.0, 1.0)
        down = dict(overrides)
        down[j] = (0.0, 0.0)
        dive_first = float(x[j]) >= 0.5
        near, far = (up, down) if dive_first else (down, up)
        if incumbent_val is None:
            heapq.heappush(heap, (-bound, (seq := seq + 1), far))
            stack.append((bound, near))
        else:
            heapq.heappush(heap, (-bound, (seq := seq + 1), near))
            heapq.heappush(heap, (-bound, (seq := seq + 1), far))

    final_bound = open_bound() if (heap or stack) else -math.inf
    if incumbent_val is not None:
        final_bound = max(final_bound, incumbent_val)
    elif status == "optimal":
        status = "infeasible"
    plan = model.decode_plan(incumbent_x) if incumbent_x is not None else None
    return SolveReport(status, incumbent_val, final_bound, nodes, len(pool.rows),
                       time.perf_counter() - t0, plan, incumbent_x)
