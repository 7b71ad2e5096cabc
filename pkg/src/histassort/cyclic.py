"""Cyclic planning: assortment graph, Karp's maximum mean cycle, cycle solves.

The infinite-horizon problem reduces to finding the maximum mean cycle of a
graph whose nodes are the M most recent assortments and whose arcs append a
new assortment (dropping the oldest), weighted by that period's expected
revenue.  Karp's recurrence gives the exact maximum mean per strongly
connected component; the length-L cycle problem itself is solved through
the wrapped-index conic formulation, and non-overlapping instances through
the Charnes-Cooper cycle models of length M+1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np

from . import bnb
from .core import Instance, InstanceError, Plan
from .modelir import build_cycle_conic, build_mplus1_base, tau
from .policies import mnl_revenue, _nu_table

__all__ = [
    "tau",
    "AssortmentGraph",
    "CycleResult",
    "build_assortment_graph",
    "max_mean_cycle",
    "solve_l_cyclic",
    "solve_mplus1_nonoverlap",
]

NODE_BIT_LIMIT = 16  # 2^(N*M) nodes
ARC_BIT_LIMIT = 20  # 2^(N*(M+1)) arcs


@dataclass
class AssortmentGraph:
    """Directed graph over history tuples; arc weights are period revenues."""

    n_products: int
    memory: int
    nodes: list[int]  # encoded as M assortment bitmasks, latest in the low bits
    arcs: list[tuple[int, int, float]]  # (src node, dst node, weight)

    def decode(self, node: int) -> tuple[int, ...]:
        """Node code -> tuple of assortment masks, latest first."""
        N = self.n_products
        return tuple((node >> (N * k)) & ((1 << N) - 1) for k in range(self.memory))


@dataclass
class CycleResult:
    length: int
    node_sequence: list[int]
    mean: float
    plan: Plan


def _mask_to_vec(mask: int, N: int) -> np.ndarray:
    return np.array([(mask >> i) & 1 for i in range(N)], dtype=np.int8)


def build_assortment_graph(inst: Instance) -> AssortmentGraph:
    """Enumerate all memory states and one arc per feasible follow-up assortment.

    Per-period cardinality caps filter assortments, the non-overlapping
    condition filters arcs against the M stored assortments.  Horizon-wide
    offer caps have no infinite-horizon meaning and are ignored here.
    """
    N, M = inst.n_products, inst.memory
    if N * M > NODE_BIT_LIMIT or N * (M + 1) > ARC_BIT_LIMIT:
        raise ValueError("assortment graph guard: need N*M <= 16 and N*(M+1) <= 20")
    spec = inst.constraints
    masks = [m for m in range(1 << N)
             if spec.cardinality_cap is None or bin(m).count("1") <= spec.cardinality_cap]
    nu_table = _nu_table(inst)
    nodes = []
    for combo in itertools.product(masks, repeat=M):
        code = 0
        for k, mk in enumerate(combo):
            code |= mk << (N * k)
        nodes.append(code)
    nodes.sort()
    arcs = []
    for src in nodes:
        hist = [(src >> (N * k)) & ((1 << N) - 1) for k in range(M)]
        hbits = np.zeros(N, dtype=int)
        union = 0
        for k, mk in enumerate(hist):
            hbits |= _mask_to_vec(mk, N) << k
            union |= mk
        nu = nu_table[np.arange(N), hbits]
        for a in masks:
            if spec.non_overlapping and (a & union):
                continue
            vec = _mask_to_vec(a, N)
            w = mnl_revenue(inst.revenue, nu, vec.astype(float))
            dst = ((src << N) & ((1 << (N * M)) - 1)) | a if M else 0
            arcs.append((src, dst, w))
    return AssortmentGraph(N, M, nodes, arcs)


def _karp_component(comp: list[int], arcs_in: dict[int, list[tuple[int, float]]],
                    weight: dict[tuple[int, int], float]):
    """Karp's recurrence on one strongly connected component.

    Returns (max mean, best cycle as node list) or None when the component
    holds no cycle (single node without self-loop).
    """
    comp = sorted(comp)
    idx = {v: k for k, v in enumerate(comp)}
    n = len(comp)
    has_arc = any(u in idx for v in comp for (u, _) in arcs_in.get(v, ()))
    if not has_arc:
        return None
    NEG = -math.inf
    F = np.full((n + 1, n), NEG)
    parent = np.full((n + 1, n), -1, dtype=int)
    F[0][0] = 0.0  # source = smallest node id
    for k in range(1, n + 1):
        for v in comp:
            vi = idx[v]
            for (u, w) in arcs_in.get(v, ()):
                if u not in idx:
                    continue
                ui = idx[u]
                if F[k - 1][ui] == NEG:
                    continue
                cand = F[k - 1][ui] + w
                if cand > F[k][vi]:
                    F[k][vi] = cand
                    parent[k][vi] = ui
    best_mean = NEG
    best_v = -1
    for vi in range(n):
        if F[n][vi] == NEG:
            continue
        worst = math.inf
        for k in range(n):
            if F[k][vi] == NEG:
                continue
            worst = min(worst, (F[n][vi] - F[k][vi]) / (n - k))
        if worst > best_mean:
            best_mean = worst
            best_v = vi
    if best_v < 0:
        return None
    # walk parents back from (n, best_v); every repeat closes a candidate cycle
    walk = [best_v]
    k = n
    while k > 0:
        walk.append(int(parent[k][walk[-1]]))
        k -= 1
    walk.reverse()  # walk[k] = node index after k arcs
    seen: dict[int, int] = {}
    candidates = []
    for pos, vi in enumerate(walk):
        if vi in seen:
            cyc = walk[seen[vi]:pos]
            nodes = [comp[q] for q in cyc]
            total = sum(weight[(nodes[q], nodes[(q + 1) % len(nodes)])] for q in range(len(nodes)))
            candidates.append((total / len(nodes), nodes))
        seen[vi] = pos
    best = max(candidates, key=lambda c: c[0])
    return best[0], best[1]


def _normalize_cycle(nodes: list[int]) -> list[int]:
    k = nodes.index(min(nodes))
    return nodes[k:] + nodes[:k]


def max_mean_cycle(g: AssortmentGraph) -> CycleResult:
    """Exact maximum mean cycle; ties prefer shorter cycles, then node order."""
    N, M = g.n_products, g.memory
    if M == 0:
        # parallel self-loops on the single node; pick the best assortment
        best_w = max(a[2] for a in g.arcs)
        cands = sorted(a[1] for a in g.arcs if a[2] >= best_w - 1e-15)
        plan = Plan(_mask_to_vec(cands[0], N).reshape(1, N), is_cycle=True)
        return CycleResult(1, [0], best_w, plan)
    weight = {(u, v): w for (u, v, w) in g.arcs}
    arcs_in: dict[int, list[tuple[int, float]]] = {}
    for (u, v, w) in g.arcs:
        arcs_in.setdefault(v, []).append((u, w))
    dg = nx.DiGraph()
    dg.add_nodes_from(g.nodes)
    dg.add_edges_from((u, v) for (u, v, _) in g.arcs)
    best: Optional[tuple[float, list[int]]] = None
    for comp in sorted(nx.strongly_connected_components(dg), key=min):
        res = _karp_component(list(comp), arcs_in, weight)
        if res is None:
            continue
        mean, nodes = res
        nodes = _normalize_cycle(nodes)
        if best is None or mean > best[0] + 1e-12:
            best = (mean, nodes)
        elif abs(mean - best[0]) <= 1e-12:
            if (len(nodes), nodes) < (len(best[1]), best[1]):
                best = (mean, nodes)
    if best is None:
        raise ValueError("graph has no cycle")
    mean, nodes = best
    L = len(nodes)
    offers = np.zeros((L, N), dtype=np.int8)
    for t in range(L):
        nxt = nodes[(t + 1) % L]
        offers[t] = _mask_to_vec(nxt & ((1 << N) - 1), N)
    return CycleResult(L, nodes, mean, Plan(offers, is_cycle=True))


def solve_l_cyclic(inst: Instance, L: int,
                   params: Optional[bnb.SolveParams] = None) -> tuple[Plan, float]:
    """Best cyclic plan of length L via the wrapped conic formulation."""
    model = build_cycle_conic(inst, L)
    report = bnb.solve_mip(model, params or bnb.SolveParams(rel_gap_tol=0.0, abs_gap_tol=1e-9))
    if report.plan is None:
        raise RuntimeError(f"cycle solve failed with status {report.status}")
    return report.plan, report.objective


def solve_mplus1_nonoverlap(inst: Instance, use_bound_free: bool = False,
                            cut_rounds: int = 1,
                            params: Optional[bnb.SolveParams] = None) -> tuple[Plan, float]:
    """Optimal non-overlapping cycle of length M+1 (requires M < N)."""
    if inst.memory >= inst.n_products:
        raise InstanceError("the M+1 cycle model needs M < N")
    params = params or bnb.SolveParams(rel_gap_tol=0.0, abs_gap_tol=1e-9)
    if use_bound_free:
        from .cutplane import bf_k_driver

        _, _, report = bf_k_driver(inst, cut_rounds, params=params)
    else:
        report = bnb.solve_mip(build_mplus1_base(inst), params)
    if report.plan is None:
        raise RuntimeError(f"cycle solve failed with status {report.status}")
    return report.plan, report.objective
