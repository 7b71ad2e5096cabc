"""Cutting-plane oracles and drivers.

Two families of cuts:

* projected bound-free cuts: the pairwise-product model implies, for each
  product and cycle position, a lower and an upper linear bound on x in the
  (x, gamma, rho) space of the Charnes-Cooper base model.  The separation
  oracle evaluates both bounds at a fractional point (the index sets freeze
  the active min/max pieces) and emits whichever side is violated.
* lifted conic cuts: per product/period block, the most violated concave
  envelope facet found by sorting, and the subgradient plane of the
  perspective at w = z/gamma.  At most two cuts per block.

Drivers: a K-round projected-cut loop for the cycle model tracking how much
of the relaxation gap the rounds close, and a cutting-plane solve of the
lifted formulation for large memory lengths that seeds facets/planes, adds
cuts until the relaxation stalls, then branches with lazy separation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import bnb, lp
from .core import Instance, InstanceError
from .envelope import (
    ProductAttraction,
    concave_ineq,
    most_violated_permutation,
    subgradient_cut,
)
from .modelir import (
    ExpPersRow,
    LinRow,
    Model,
    build_bound_free,
    build_conic,
    build_mplus1_base,
    _ineq_to_row,
)

__all__ = [
    "Cut",
    "CutBatch",
    "LiftedPoint",
    "GClosedStats",
    "bf_separate",
    "bf_k_driver",
    "conic_separate",
    "large_m_driver",
    "default_w_seeds",
    "default_perm_seeds",
]

VIOLATION_TOL = 1e-7


@dataclass(frozen=True)
class Cut:
    """Linear cut over symbolic variable keys (mapped to a model via metadata)."""

    coeffs: dict
    sense: str
    rhs: float
    tag: str

    def to_row(self, model: Model) -> LinRow:
        return LinRow({model.meta[k]: v for k, v in self.coeffs.items()},
                      self.sense, self.rhs, self.tag)


@dataclass
class CutBatch:
    cuts: list[Cut] = field(default_factory=list)

    def __len__(self):
        return len(self.cuts)

    def __iter__(self):
        return iter(self.cuts)

    def to_rows(self, model: Model) -> list[LinRow]:
        return [c.to_row(model) for c in self.cuts]


@dataclass(frozen=True)
class LiftedPoint:
    """Values of one product/period lifted block at a relaxation solution."""

    rho: float
    y: float
    gamma: float
    z: np.ndarray


@dataclass
class GClosedStats:
    """Relaxation values across cut rounds and the share of the gap they close."""

    opts: list[float]  # Opt_0 .. Opt_K
    opt_inf: float  # full pairwise-product model relaxation
    gclosed: list[float]  # percent closed after round k = 1..K

    @classmethod
    def from_values(cls, opts: Sequence[float], opt_inf: float) -> "GClosedStats":
        denom = opts[0] - opt_inf
        closed = []
        for k in range(1, len(opts)):
            closed.append(100.0 * (opts[0] - opts[k]) / denom if denom > 1e-12 else math.nan)
        return cls(list(opts), opt_inf, closed)


# --- projected bound-free separation -----------------------------------------


def bf_separate(x_hat: np.ndarray, gamma_hat: np.ndarray, rho_hat: np.ndarray,
                u: np.ndarray, tol: float = VIOLATION_TOL) -> CutBatch:
    """Projected pairwise-product cuts at a (x, gamma, rho) point.

    Arrays are periods x products (rho per period).  For each (i, t) the
    oracle freezes the index sets A (gamma_i + gamma_j >= rho), B
    (gamma_j >= gamma_i) and C (the rest), evaluates the implied lower and
    upper bound on x_i^t, and emits the violated side, if any.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    rho_hat = np.asarray(rho_hat, dtype=float)
    L, N = x_hat.shape
    batch = CutBatch()
    for t in range(L):
        rho = float(rho_hat[t])
        for i in range(N):
            gi = float(gamma_hat[t, i])
            A = [j for j in range(N) if j != i and gamma_hat[t, j] + gi >= rho]
            B = [j for j in range(N) if gamma_hat[t, j] >= gi]
            C = [j for j in range(N) if gamma_hat[t, j] < gi]
            lower = (1.0 + u[i]) * gi + sum(u[j] * (gi + gamma_hat[t, j] - rho) for j in A)
            upper = gi + sum(u[j] * gi for j in B) + sum(u[j] * gamma_hat[t, j] for j in C)
            xi = float(x_hat[t, i])
            if lower - xi > tol:
                coeffs = {("x", i + 1, t + 1): 1.0,
                          ("gamma", i + 1, t + 1): -(1.0 + u[i]) - sum(u[j] for j in A)}
                for j in A:
                    k = ("gamma", j + 1, t + 1)
                    coeffs[k] = coeffs.get(k, 0.0) - u[j]
                if A:
                    coeffs[("rho", t + 1)] = sum(u[j] for j in A)
                batch.cuts.append(Cut(coeffs, ">=", 0.0, "bf-lower"))
            elif xi - upper > tol:
                coeffs = {("x", i + 1, t + 1): 1.0,
                          ("gamma", i + 1, t + 1): -1.0 - sum(u[j] for j in B)}
                for j in C:
                    k = ("gamma", j + 1, t + 1)
                    coeffs[k] = coeffs.get(k, 0.0) - u[j]
                batch.cuts.append(Cut(coeffs, "<=", 0.0, "bf-upper"))
    return batch


def _bf_point(model: Model, x: np.ndarray):
    L, N = model.periods, model.n_products
    xh = np.array([[x[model.var("x", i, t)] for i in range(1, N + 1)] for t in range(1, L + 1)])
    gh = np.array([[x[model.var("gamma", i, t)] for i in range(1, N + 1)] for t in range(1, L + 1)])
    rh = np.array([x[model.var("rho", t)] for t in range(1, L + 1)])
    return xh, gh, rh


def make_bf_separator(inst: Instance):
    """bf_separate as a branch-and-bound lazy-separation callback."""
    u = inst.base_attraction

    def sep(model: Model, x: np.ndarray) -> list[LinRow]:
        xh, gh, rh = _bf_point(model, x)
        return bf_separate(xh, gh, rh, u).to_rows(model)

    return sep


def bf_k_driver(inst: Instance, rounds: int,
                params: Optional[bnb.SolveParams] = None,
                ) -> tuple[Model, GClosedStats, bnb.SolveReport]:
    """K rounds of projected cuts on the base cycle model, then an integer solve.

    Opt_k is the outer-approximated continuous relaxation value after round
    k (cuts are never purged, so the sequence is non-increasing); Opt_inf
    is the plain LP relaxation of the full pairwise-product model.  The
    final solve keeps the oracle attached as a lazy separator.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if inst.memory >= inst.n_products:
        raise InstanceError("the M+1 cycle model needs M < N")
    model = build_mplus1_base(inst)
    u = inst.base_attraction
    pool = bnb._CutPool()
    res = bnb.relax_solution(model, pool=pool)
    opts = [res.value]
    point = res.x
    for _ in range(rounds):
        xh, gh, rh = _bf_point(model, point)
        added = 0
        for row in bf_separate(xh, gh, rh, u).to_rows(model):
            added += pool.add(row)
        if added:
            res = bnb.relax_solution(model, pool=pool)
            point = res.x
        opts.append(res.value)
    full = build_bound_free(inst)
    sol = lp.solve_lp(full)
    if sol.status != "optimal":
        raise RuntimeError(f"pairwise-product relaxation ended with status {sol.status}")
    stats = GClosedStats.from_values(opts, sol.objective)
    report = bnb.solve_mip(model, params or bnb.SolveParams(rel_gap_tol=0.0, abs_gap_tol=1e-9),
                           separators=[make_bf_separator(inst)], initial_cuts=pool.rows)
    return model, stats, report


# --- lifted conic separation ---------------------------------------------------


def conic_separate(inst: Instance, points: dict[tuple[int, int], LiftedPoint],
                   tol: float = VIOLATION_TOL) -> CutBatch:
    """At most two cuts per (i, t) block: an envelope facet and a subgradient plane.

    Keys are 1-based (i, t).  Blocks with gamma ~ 0 are skipped (both rows
    are vacuous at the origin); z is clamped into [0, gamma] to absorb LP
    round-off, and violations beyond round-off size are rejected as bugs.
    """
    batch = CutBatch()
    for (i, t), pt in sorted(points.items()):
        p = ProductAttraction.from_instance(inst, i - 1)
        gam = float(pt.gamma)
        if gam <= 1e-12 or p.memory == 0:
            continue
        z = np.asarray(pt.z, dtype=float)
        if np.any(z < -1e-6) or np.any(z > gam + 1e-6):
            raise ValueError(f"lifted point at {(i, t)} violates 0 <= z <= gamma")
        z = np.clip(z, 0.0, gam)
        sigma = most_violated_permutation(p, gam, z)
        facet = concave_ineq(p, sigma)
        if facet.violation(pt.y, gam, z) > tol:
            coeffs = {("y", i, t): 1.0, ("gamma", i, t): -facet.gamma_coef}
            for m in range(p.memory):
                coeffs[("z", i, m + 1, t)] = -float(facet.z_coefs[m])
            batch.cuts.append(Cut(coeffs, "<=", 0.0, "concave-perm"))
        plane = subgradient_cut(p, z / gam)
        if plane.violation(pt.y, gam, z) > tol:
            coeffs = {("y", i, t): 1.0, ("gamma", i, t): -plane.gamma_coef}
            for m in range(p.memory):
                coeffs[("z", i, m + 1, t)] = -float(plane.z_coefs[m])
            batch.cuts.append(Cut(coeffs, ">=", 0.0, "subgradient"))
    return batch


def lifted_points(model: Model, x: np.ndarray) -> dict[tuple[int, int], LiftedPoint]:
    """Extract per-block LiftedPoint values from a solution vector."""
    out = {}
    for row in model.convex_rows:
        if isinstance(row, ExpPersRow):
            out[(row.i, row.t)] = LiftedPoint(
                rho=float(x[model.var("rho", row.t)]),
                y=float(x[row.y]),
                gamma=float(x[row.gamma]),
                z=np.array([float(x[j]) for j in row.z]),
            )
    return out


def default_perm_seeds(M: int, seed: int = 0) -> list[tuple[int, ...]]:
    """Random starter permutations; count grows with the memory length."""
    count = 2 if M <= 4 else (10 if M == 5 else 20)
    count = min(count, math.factorial(M))
    rng = np.random.Generator(np.random.PCG64(seed))
    seen: set[tuple[int, ...]] = set()
    while len(seen) < count:
        seen.add(tuple(int(v) for v in rng.permutation(M)))
    return sorted(seen)


def default_w_seeds(M: int) -> list[tuple[int, ...]]:
    """Binary subgradient anchors with squared norm in {0, 1, 2, M}."""
    sizes = {0, 1, 2, M}
    out = []
    for w in itertools.product((0, 1), repeat=M):
        if sum(w) in sizes:
            out.append(w)
    return out


def large_m_driver(inst: Instance,
                   perm_seeds: Optional[Sequence[Sequence[int]]] = None,
                   w_seeds: Optional[Sequence[Sequence[float]]] = None,
                   eps: float = 1e-8,
                   max_rounds: int = 200,
                   params: Optional[bnb.SolveParams] = None,
                   seed: int = 0) -> bnb.SolveReport:
    """Cutting-plane solve of the lifted formulation for larger memory lengths.

    Builds the model with the envelope facets pooled lazily, seeds a few
    facets and subgradient planes per block, tightens the continuous
    relaxation until the improvement per round drops below eps, and then
    runs branch-and-bound with the block separation attached lazily.
    """
    if inst.memory < 1:
        raise InstanceError("cutting-plane driver needs M >= 1")
    M = inst.memory
    model = build_conic(inst)
    perm_seeds = [tuple(s) for s in (perm_seeds if perm_seeds is not None
                                     else default_perm_seeds(M, seed))]
    w_seeds = [tuple(s) for s in (w_seeds if w_seeds is not None else default_w_seeds(M))]
    if not perm_seeds or not w_seeds:
        raise ValueError("seed sets must be nonempty")
    pool = bnb._CutPool()
    for row in model.convex_rows:
        if not isinstance(row, ExpPersRow):
            continue
        p = row.product
        if row.concave_lazy:
            for sigma in perm_seeds:
                pool.add(_ineq_to_row(model, concave_ineq(p, sigma), row.y, row.gamma,
                                      row.z, f"seed_perm_{row.i}_{row.t}"))
        for w in w_seeds:
            pool.add(_ineq_to_row(model, subgradient_cut(p, np.asarray(w, dtype=float)),
                                  row.y, row.gamma, row.z, f"seed_w_{row.i}_{row.t}"))
    bnb.relax_solution(model, convergence_tol=eps, max_rounds=max_rounds, pool=pool)
    params = params or bnb.SolveParams()
    return bnb.solve_mip(model, params, initial_cuts=pool.rows)
