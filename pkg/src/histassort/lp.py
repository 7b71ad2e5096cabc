"""Dense bounded-variable primal simplex.

Solves  max c.x  s.t.  A x {<=,>=,==} b,  lo <= x <= hi  with every lower
bound finite (upper bounds may be +inf).  Rows get slacks, an initial basis
of slacks is repaired in phase 1 with one artificial per infeasible row,
and phase 2 optimizes the real objective.  The basis inverse is kept
explicitly and refreshed every few hundred pivots.

Pivot selection is Dantzig's rule; after a run of degenerate steps the
solver switches to Bland's rule until it makes progress again, which
guarantees termination.  All choices are deterministic, so re-solving the
same data reproduces the same solution bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = ["LpSolution", "solve_dense", "solve_lp"]

PIVOT_TOL = 1e-9
DJ_TOL = 1e-9
FEAS_TOL = 1e-7
BOUND_TOL = 1e-9
STALL_LIMIT = 60
REFACTOR_EVERY = 250


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int


class _Tableau:
    """Simplex working state over the full column set (structurals+slacks+artificials)."""

    def __init__(self, A: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        self.m, self.nt = A.shape
        self.vstat = np.zeros(self.nt, dtype=np.int8)  # 0 at-lower, 1 at-upper, 2 basic
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.Binv = np.eye(self.m)
        self.beta = np.zeros(self.m)
        self.iterations = 0
        self.pivots_since_refactor = 0

    def nonbasic_values(self) -> np.ndarray:
        vals = np.where(self.vstat == 1, self.hi, self.lo)
        vals[self.vstat == 2] = 0.0
        return vals

    def refactor(self) -> None:
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        xn = self.nonbasic_values()
        self.beta = self.Binv @ (self.b - self.A @ xn)
        self.pivots_since_refactor = 0

    def full_solution(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.beta
        return x

    def _entering(self, c: np.ndarray, bland: bool, movable: np.ndarray) -> int:
        y = c[self.basis] @ self.Binv
        d = c - y @ self.A
        at_lo = (self.vstat == 0) & movable & (d > DJ_TOL)
        at_hi = (self.vstat == 1) & movable & (d < -DJ_TOL)
        cand = np.flatnonzero(at_lo | at_hi)
        if cand.size == 0:
            return -1
        if bland:
            return int(cand[0])
        return int(cand[np.argmax(np.abs(d[cand]))])

    def _step(self, c: np.ndarray, bland: bool, movable: np.ndarray) -> str:
        """One simplex iteration; returns 'optimal', 'unbounded', 'flip' or 'pivot'."""
        j = self._entering(c, bland, movable)
        if j < 0:
            return "optimal"
        direction = 1.0 if self.vstat[j] == 0 else -1.0
        col = self.Binv @ self.A[:, j]
        delta = -direction * col  # d(beta)/d(t)
        t_best = self.hi[j] - self.lo[j]  # entering hits its other bound
        leave = -1
        dec = delta < -PIVOT_TOL
        inc = delta > PIVOT_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.full(self.m, np.inf)
            ratio[dec] = (self.beta[dec] - self.lo[self.basis[dec]]) / (-delta[dec])
            hi_b = self.hi[self.basis]
            inc_f = inc & np.isfinite(hi_b)
            ratio[inc_f] = (hi_b[inc_f] - self.beta[inc_f]) / delta[inc_f]
        ratio = np.maximum(ratio, 0.0)
        rmin = float(ratio.min()) if self.m else np.inf
        if rmin < t_best:
            t_star = rmin
            ties = np.flatnonzero(ratio <= rmin + 1e-12)
            if bland:
                leave = int(ties[np.argmin(self.basis[ties])])
            else:
                leave = int(ties[np.argmax(np.abs(col[ties]))])
        else:
            t_star = t_best
        if not np.isfinite(t_star):
            return "unbounded"
        self.iterations += 1
        self.beta += delta * t_star
        if leave < 0:
            # bound flip, basis unchanged
            self.vstat[j] = 1 - self.vstat[j]
            self._last_step = t_star
            return "flip"
        out = int(self.basis[leave])
        self.vstat[out] = 0 if delta[leave] < 0 else 1
        enter_val = (self.lo[j] if direction > 0 else self.hi[j]) + direction * t_star
        self.basis[leave] = j
        self.vstat[j] = 2
        piv = col[leave]
        self.Binv[leave, :] /= piv
        other = np.arange(self.m) != leave
        self.Binv[other, :] -= np.outer(col[other], self.Binv[leave, :])
        self.beta[leave] = enter_val
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= REFACTOR_EVERY:
            self.refactor()
        self._last_step = t_star
        return "pivot"

    def optimize(self, c: np.ndarray, movable: np.ndarray, max_iter: int) -> str:
        bland = False
        stall = 0
        while self.iterations < max_iter:
            out = self._step(c, bland, movable)
            if out == "optimal":
                return "optimal"
            if out == "unbounded":
                return "unbounded"
            if getattr(self, "_last_step", 0.0) <= 1e-11:
                stall += 1
                if stall >= STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                bland = False
        return "iteration_limit"


def solve_dense(
    c: Sequence[float],
    A: np.ndarray,
    senses: Sequence[str],
    b: Sequence[float],
    lo: Sequence[float],
    hi: Sequence[float],
    maximize: bool = True,
    max_iter: Optional[int] = None,
) -> LpSolution:
    """Solve the bounded LP given dense row data; see module docstring."""
    c = np.asarray(c, dtype=float).copy()
    A = np.asarray(A, dtype=float).reshape(len(senses), -1) if len(senses) else np.zeros((0, len(c)))
    b = np.asarray(b, dtype=float).copy()
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    m, n = A.shape
    if np.any(~np.isfinite(lo)):
        raise ValueError("all lower bounds must be finite")
    if np.any(lo > hi + 1e-12):
        return LpSolution("infeasible", None, None, 0)
    hi = np.maximum(hi, lo)
    if not maximize:
        c = -c

    # normalize senses: flip >= rows, slack bounds encode <= / ==
    A = A.copy()
    for r, s in enumerate(senses):
        if s in (">=", ">"):
            A[r, :] *= -1.0
            b[r] *= -1.0
        elif s not in ("<=", "<", "==", "="):
            raise ValueError(f"bad row sense {s!r}")
    eq = np.array([s in ("==", "=") for s in senses])

    if m == 0:
        x = np.where((c > 0) & np.isfinite(hi), hi, lo)
        if np.any((c > DJ_TOL) & ~np.isfinite(hi)):
            return LpSolution("unbounded", None, None, 0)
        obj = float(c @ x) * (1.0 if maximize else -1.0)
        return LpSolution("optimal", x, obj, 0)

    slack_lo = np.zeros(m)
    slack_hi = np.where(eq, 0.0, np.inf)
    Afull = np.hstack([A, np.eye(m)])
    lo_full = np.concatenate([lo, slack_lo])
    hi_full = np.concatenate([hi, slack_hi])

    tab = _Tableau(Afull, b, lo_full, hi_full)
    tab.basis = np.arange(n, n + m)
    tab.vstat[:n] = 0
    tab.vstat[n:] = 2
    xn = np.where(tab.vstat[:n] == 1, hi, lo)
    tab.beta = b - A @ xn

    # phase 1: patch rows whose slack value falls outside the slack bounds
    art_cols = []
    art_rows = []
    for r in range(m):
        if tab.beta[r] > slack_hi[r] + BOUND_TOL:
            tab.vstat[n + r] = 1  # slack pinned at its upper bound
            col = np.zeros(m)
            col[r] = 1.0
            art_cols.append(col)
            art_rows.append((r, tab.beta[r] - slack_hi[r]))
        elif tab.beta[r] < slack_lo[r] - BOUND_TOL:
            tab.vstat[n + r] = 0
            col = np.zeros(m)
            col[r] = -1.0
            art_cols.append(col)
            art_rows.append((r, slack_lo[r] - tab.beta[r]))

    n_art = len(art_cols)
    max_iter = max_iter or (5000 + 40 * (n + m))
    if n_art:
        Afull = np.hstack([Afull, np.column_stack(art_cols)])
        lo_full = np.concatenate([lo_full, np.zeros(n_art)])
        hi_full = np.concatenate([hi_full, np.full(n_art, np.inf)])
        tab.A, tab.lo, tab.hi = Afull, lo_full, hi_full
        tab.nt = Afull.shape[1]
        tab.vstat = np.concatenate([tab.vstat, np.full(n_art, 2, dtype=np.int8)])
        for k, (r, val) in enumerate(art_rows):
            tab.basis[r] = n + m + k
            tab.beta[r] = val
        tab.refactor()  # artificial columns are +-1, not the identity
        c1 = np.zeros(tab.nt)
        c1[n + m:] = -1.0  # maximize -(sum of artificials)
        movable = (tab.hi - tab.lo) > 1e-14
        status = tab.optimize(c1, movable, max_iter)
        if status == "iteration_limit":
            return LpSolution("iteration_limit", None, None, tab.iterations)
        infeas = tab.full_solution()[n + m:].sum()
        if infeas > FEAS_TOL:
            return LpSolution("infeasible", None, None, tab.iterations)
        # drive basic artificials out of the basis when a real pivot exists
        for r in range(m):
            jb = tab.basis[r]
            if jb >= n + m:
                row = tab.Binv[r, :] @ tab.A[:, : n + m]
                row[tab.vstat[: n + m] == 2] = 0.0
                k = int(np.argmax(np.abs(row)))
                if abs(row[k]) > PIVOT_TOL:
                    col = tab.Binv @ tab.A[:, k]
                    tab.vstat[jb] = 0
                    tab.basis[r] = k
                    tab.vstat[k] = 2
                    piv = col[r]
                    tab.Binv[r, :] /= piv
                    other = np.arange(m) != r
                    tab.Binv[other, :] -= np.outer(col[other], tab.Binv[r, :])
        tab.hi[n + m:] = 0.0  # artificials fixed at zero for phase 2
        tab.refactor()

    c2 = np.concatenate([c, np.zeros(tab.nt - n)])
    movable = (tab.hi - tab.lo) > 1e-14
    status = tab.optimize(c2, movable, max_iter)
    if status == "unbounded":
        return LpSolution("unbounded", None, None, tab.iterations)
    if status == "iteration_limit":
        return LpSolution("iteration_limit", None, None, tab.iterations)
    tab.refactor()
    xfull = tab.full_solution()
    x = np.clip(xfull[:n], lo, hi)
    resid = Afull[:, : n + m] @ xfull[: n + m] - b if n_art else Afull @ xfull - b
    if np.max(np.abs(resid), initial=0.0) > FEAS_TOL * (1.0 + np.abs(b).max(initial=0.0)):
        return LpSolution("iteration_limit", None, None, tab.iterations)
    obj = float(c @ x) * (1.0 if maximize else -1.0)
    return LpSolution("optimal", x, obj, tab.iterations)


def solve_lp(model, cuts=(), bound_overrides=None, ignore_convex: bool = False,
             max_iter: Optional[int] = None) -> LpSolution:
    """Solve the continuous relaxation of a model's linear part.

    Integrality is dropped.  Convex rows are not enforced here; callers must
    either pass `ignore_convex=True` (outer-approximation loops supply cuts
    through `cuts`) or hand in a model without convex rows.
    """
    if getattr(model, "convex_rows", ()) and not (ignore_convex or cuts):
        raise ValueError("model has convex rows; supply cuts or set ignore_convex")
    c, A, senses, b, lo, hi = model.to_arrays(extra_rows=cuts, bound_overrides=bound_overrides)
    return solve_dense(c, A, senses, b, lo, hi, maximize=True, max_iter=max_iter)
