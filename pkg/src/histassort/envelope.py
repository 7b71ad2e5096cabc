"""Per-product envelope math for the exponential-affine attraction function.

For one product, the attraction value over binary histories h in {0,1}^M is
alpha(h) = exp(base + effects . h).  The lifted choice constraint needs two
continuous extensions of alpha, scaled by a nonnegative multiplier gamma
(perspective scaling):

* below, the natural convex extension, whose perspective is an exponential
  cone expression; it is under-approximated by subgradient planes;
* above, the concave envelope.  Flipping the coordinates with positive
  effects makes alpha supermodular, so the envelope is a switched Lovasz
  extension: the minimum over permutations of affine interpolations along
  nested chains of histories that start at the indicator of the positive
  effects and end at its complement.

All permutations here are 0-based tuples over range(M); z plays the role of
gamma-scaled history variables, so the envelope domain is 0 <= z <= gamma.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ProductAttraction",
    "NestedChain",
    "LinIneq",
    "switched_nested",
    "concave_ineq",
    "concave_env_value",
    "most_violated_permutation",
    "convex_env_ineqs_smallM",
    "perspective_value",
    "subgradient_cut",
]

MAX_ENUM_M = 6  # factorial enumeration guard


@dataclass(frozen=True)
class ProductAttraction:
    """Attraction data of one product: base utility and M lag effects."""

    base: float
    effects: np.ndarray

    def __post_init__(self):
        eff = np.atleast_1d(np.asarray(self.effects, dtype=float))
        object.__setattr__(self, "effects", eff)

    @property
    def memory(self) -> int:
        return len(self.effects)

    @property
    def positive_set(self) -> frozenset[int]:
        """Lags with strictly positive effect; zeros count as the satiation side."""
        return frozenset(m for m in range(self.memory) if self.effects[m] > 0.0)

    def alpha(self, h: Sequence[float]) -> float:
        """Attraction at a (binary or fractional) history point."""
        return math.exp(self.base + float(self.effects @ np.asarray(h, dtype=float)))

    @classmethod
    def from_instance(cls, inst, product: int) -> "ProductAttraction":
        return cls(float(inst.base_utility[product]), np.array(inst.effect[product]))


@dataclass(frozen=True)
class NestedChain:
    """M+1 binary history points that differ by one coordinate per step."""

    permutation: tuple[int, ...]
    points: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class LinIneq:
    """Inequality  y  sense  gamma_coef * gamma + z_coefs . z + constant."""

    sense: str  # "<=" or ">="
    gamma_coef: float
    z_coefs: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"bad sense {self.sense!r}")
        z = np.atleast_1d(np.asarray(self.z_coefs, dtype=float))
        if not (np.isfinite(self.gamma_coef) and np.all(np.isfinite(z))):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "z_coefs", z)

    def rhs(self, gamma: float, z: Sequence[float]) -> float:
        return self.gamma_coef * gamma + float(self.z_coefs @ np.asarray(z, dtype=float)) + self.constant

    def violation(self, y: float, gamma: float, z: Sequence[float]) -> float:
        """Positive when the point violates the inequality."""
        r = self.rhs(gamma, z)
        return y - r if self.sense == "<=" else r - y


def _check_permutation(M: int, sigma: Sequence[int]) -> tuple[int, ...]:
    sigma = tuple(int(s) for s in sigma)
    if sorted(sigma) != list(range(M)):
        raise ValueError(f"{sigma} is not a permutation of range({M})")
    return sigma


def switched_nested(M: int, positive: Iterable[int], sigma: Sequence[int]) -> NestedChain:
    """Chain of M+1 histories from the positive-effect indicator to its complement.

    Step k toggles coordinate sigma[k-1]: it is added when outside the
    positive set and removed when inside, so every vertex along the way is
    binary and consecutive points differ in exactly one coordinate.
    """
    sigma = _check_permutation(M, sigma)
    pos = frozenset(positive)
    point = [1 if m in pos else 0 for m in range(M)]
    points = [tuple(point)]
    for m in sigma:
        point[m] = 0 if m in pos else 1
        points.append(tuple(point))
    return NestedChain(sigma, tuple(points))


def concave_ineq(p: ProductAttraction, sigma: Sequence[int]) -> LinIneq:
    """One facet of the perspectified concave envelope: y <= rhs(gamma, z).

    The facet interpolates alpha along the switched nested chain of `sigma`,
    reading chain progress through ztilde_m = z_m for satiation lags and
    gamma - z_m for addiction lags.
    """
    M = p.memory
    sigma = _check_permutation(M, sigma)
    pos = p.positive_set
    chain = switched_nested(M, pos, sigma)
    a = [p.alpha(h) for h in chain.points]
    # rhs = a0*gamma + sum_k (a_k - a_{k-1}) * ztilde_{sigma[k-1]}
    gamma_coef = a[0]
    z_coefs = np.zeros(M)
    for k in range(1, M + 1):
        step = a[k] - a[k - 1]
        m = sigma[k - 1]
        if m in pos:
            gamma_coef += step
            z_coefs[m] -= step
        else:
            z_coefs[m] += step
    return LinIneq("<=", gamma_coef, z_coefs)


def _check_domain(p: ProductAttraction, gamma: float, z: Sequence[float]) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (p.memory,):
        raise ValueError("z must have length M")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if np.any(z < -1e-9) or np.any(z > gamma + 1e-9):
        raise ValueError("need 0 <= z <= gamma")
    return np.clip(z, 0.0, max(gamma, 0.0))


def concave_env_value(p: ProductAttraction, gamma: float, z: Sequence[float]) -> float:
    """Exact perspectified concave envelope value by explicit M! enumeration."""
    if p.memory > MAX_ENUM_M:
        raise ValueError(f"enumeration capped at M <= {MAX_ENUM_M}")
    z = _check_domain(p, gamma, z)
    if gamma == 0.0:
        return 0.0
    return min(
        concave_ineq(p, sigma).rhs(gamma, z)
        for sigma in itertools.permutations(range(p.memory))
    )


def most_violated_permutation(p: ProductAttraction, gamma: float, z: Sequence[float]) -> tuple[int, ...]:
    """Permutation whose envelope facet is smallest at (gamma, z).

    Sorting the switched values g_m (= z_m, or gamma - z_m on addiction lags)
    in decreasing order yields the minimizing chain; ties keep the smaller
    lag first (stable sort), which pins the returned permutation.
    """
    z = _check_domain(p, gamma, z)
    pos = p.positive_set
    g = np.array([gamma - z[m] if m in pos else z[m] for m in range(p.memory)])
    return tuple(int(m) for m in np.argsort(-g, kind="stable"))


def convex_env_ineqs_smallM(p: ProductAttraction) -> list[LinIneq]:
    """Convex-envelope facets of the perspectified attraction, M in {1, 2}.

    M=1 needs a single plane through alpha(0) and alpha(1).  M=2 needs two
    planes whose shape depends on whether the two effects pull the same way;
    a zero effect counts as satiation and both sign patterns then coincide.
    """
    M = p.memory
    if M not in (1, 2):
        raise ValueError("closed-form convex envelope only for M in {1, 2}")
    if M == 1:
        a0, a1 = p.alpha([0]), p.alpha([1])
        return [LinIneq(">=", a0, np.array([a1 - a0]))]
    a00 = p.alpha([0, 0])
    a10 = p.alpha([1, 0])
    a01 = p.alpha([0, 1])
    a11 = p.alpha([1, 1])
    mixed = len(p.positive_set) == 1
    if not mixed:
        return [
            LinIneq(">=", a00, np.array([a10 - a00, a01 - a00])),
            LinIneq(">=", a10 + a01 - a11, np.array([a11 - a01, a11 - a10])),
        ]
    return [
        LinIneq(">=", a00, np.array([a10 - a00, a11 - a10])),
        LinIneq(">=", a00, np.array([a11 - a01, a01 - a00])),
    ]


def perspective_value(p: ProductAttraction, gamma: float, z: Sequence[float]) -> float:
    """gamma * alpha(z / gamma), extended by 0 at the origin."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if gamma == 0.0:
        if np.any(np.abs(z) > 1e-12):
            raise ValueError("perspective undefined at gamma=0 with z != 0")
        return 0.0
    return gamma * p.alpha(z / gamma)


def subgradient_cut(p: ProductAttraction, w: Sequence[float]) -> LinIneq:
    """Supporting plane of the perspective function along the ray through w.

    y >= gamma*alpha(w) + sum_m (z_m - gamma*w_m) * effects_m * alpha(w),
    valid everywhere on the perspective domain and tight at (gamma, gamma*w).
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (p.memory,):
        raise ValueError("w must have length M")
    if np.any(w < -1e-9) or np.any(w > 1 + 1e-9):
        raise ValueError("w must lie in [0, 1]^M")
    a = p.alpha(w)
    return LinIneq(">=", a * (1.0 - float(p.effects @ w)), a * p.effects)
