"""Minimax of a finite family of convex quadratics.

``y* = min_x max_s q_s(x)``.  The upper envelope is convex, so its minimizer
is located by bisection on the sign of the envelope's one-sided derivative
and then snapped to the exact kink (pairwise intersection) or stationary
point of the active members.  Support weights are nonnegative weights on the
active members whose weighted derivative vanishes at ``x*``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np
from scipy.optimize import nnls

from .moments import Quadratic

ACTIVE_RTOL = 1e-8
ACTIVE_ATOL = 1e-12


class EnvelopeError(ValueError):
    pass


@dataclass
class EnvelopeSolution:
    x_star: float
    y_star: float
    active: list
    weights: dict | None = None
    flat: bool = False
    interval: tuple[float, float] | None = None
    derivatives: dict = field(default_factory=dict)

    def is_active(self, key) -> bool:
        return key in self.active


def _as_table(quads: Mapping[Hashable, Quadratic]) -> tuple[list, np.ndarray]:
    keys = list(quads)
    if not keys:
        raise EnvelopeError("empty family of quadratics")
    coef = np.array([[q.c0, q.c1, q.c2] for q in quads.values()], dtype=float)
    if np.any(coef[:, 2] < -1e-12 * max(1.0, np.abs(coef).max())):
        raise EnvelopeError("all quadratics must be convex (nonnegative leading coefficient)")
    return keys, coef


def _values(coef: np.ndarray, x: float) -> np.ndarray:
    return coef[:, 0] + 2.0 * coef[:, 1] * x + coef[:, 2] * x * x


def _slopes(coef: np.ndarray, x: float) -> np.ndarray:
    return 2.0 * coef[:, 1] + 2.0 * coef[:, 2] * x


def _one_sided(coef: np.ndarray, x: float, side: int) -> float:
    """Right (side=+1) or left (side=-1) derivative of the envelope at x."""
    v = _values(coef, x)
    top = v.max()
    near = v >= top - 1e-13 * (1.0 + abs(top))
    d = _slopes(coef, x)[near]
    return d.max() if side > 0 else d.min()


def _bracket(coef: np.ndarray) -> tuple[float, float]:
    c0, c1, c2 = coef.T
    scale = max(np.max(np.abs(c1)) + np.max(np.abs(c0)), 1.0)
    pos = c2 > 1e-14 * scale
    if np.any(pos):
        mins = -c1[pos] / c2[pos]
        lo, hi = mins.min() - 1.0, mins.max() + 1.0
    else:
        lo, hi = -1.0, 1.0
    width = max(hi - lo, 1.0)
    for _ in range(200):
        if _one_sided(coef, lo, +1) < 0:
            break
        lo -= width
        width *= 2
    else:
        raise EnvelopeError("envelope is unbounded below")
    width = max(hi - lo, 1.0)
    for _ in range(200):
        if _one_sided(coef, hi, -1) > 0:
            break
        hi += width
        width *= 2
    else:
        raise EnvelopeError("envelope is unbounded below")
    return lo, hi


def _bisect(coef, lo, hi, pred) -> float:
    """Smallest x in [lo, hi] with pred(x) true, assuming monotone pred."""
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _envelope(coef, x):
    return _values(coef, x).max()


def _polish(coef: np.ndarray, x0: float) -> float:
    """Snap x0 to the exact minimizer among nearby kinks and stationary points."""
    v = _values(coef, x0)
    y0 = v.max()
    near = np.flatnonzero(v >= y0 - 1e-6 * (1.0 + abs(y0)))
    cands = [x0]
    for i in near:
        if coef[i, 2] > 1e-14:
            cands.append(-coef[i, 1] / coef[i, 2])
    for i, j in itertools.combinations(near, 2):
        a = coef[i, 2] - coef[j, 2]
        b = 2.0 * (coef[i, 1] - coef[j, 1])
        c = coef[i, 0] - coef[j, 0]
        if abs(a) > 1e-14:
            disc = b * b - 4 * a * c
            if disc >= 0:
                r = np.sqrt(disc)
                # numerically stable pair of roots
                qq = -0.5 * (b + np.copysign(r, b))
                if qq != 0:
                    cands.extend([qq / a, c / qq])
                else:
                    cands.append(-b / (2 * a))
        elif abs(b) > 1e-14:
            cands.append(-c / b)
    window = 1e-6 * (1.0 + abs(x0))
    best, best_val = x0, _envelope(coef, x0)
    for x in cands:
        if abs(x - x0) <= window:
            val = _envelope(coef, x)
            if val < best_val or (val == best_val and abs(x - x0) < abs(best - x0)):
                best, best_val = x, val
    return float(best)


def active_mask(coef: np.ndarray, x: float, y: float) -> np.ndarray:
    return _values(coef, x) >= y - ACTIVE_RTOL * abs(y) - ACTIVE_ATOL


def minimize_envelope(quads: Mapping[Hashable, Quadratic]) -> EnvelopeSolution:
    """Global minimizer of ``max_s q_s(x)`` with its value and active set."""
    keys, coef = _as_table(quads)
    scale = max(np.abs(coef).max(), 1e-300)
    if np.all(np.abs(coef[:, 1:]) <= 1e-15 * scale):
        y = float(coef[:, 0].max())
        act = [k for k, c in zip(keys, coef[:, 0]) if c >= y - ACTIVE_RTOL * abs(y) - ACTIVE_ATOL]
        return EnvelopeSolution(0.0, y, act, flat=True, interval=(-np.inf, np.inf),
                                derivatives={k: 0.0 for k in act})
    lo, hi = _bracket(coef)
    slope_tol = 1e-12 * max(np.abs(_slopes(coef, lo)).max(), np.abs(_slopes(coef, hi)).max(), 1e-300)
    left = _bisect(coef, lo, hi, lambda x: _one_sided(coef, x, +1) >= -slope_tol)
    right = _bisect(coef, lo, hi, lambda x: _one_sided(coef, x, -1) > slope_tol)
    flat = right - left > 1e-9 * (1.0 + abs(left) + abs(right))
    if flat:
        x = 0.5 * (left + right)
    else:
        x = _polish(coef, 0.5 * (left + right))
    y = float(_envelope(coef, x))
    mask = active_mask(coef, x, y)
    slopes = _slopes(coef, x)
    act = [k for k, m in zip(keys, mask) if m]
    return EnvelopeSolution(
        float(x), y, act, flat=bool(flat),
        interval=(float(left), float(right)) if flat else None,
        derivatives={k: float(d) for k, d, m in zip(keys, slopes, mask) if m},
    )


def _pair_weights(da: float, db: float) -> tuple[float, float]:
    wa = -db / (da - db)
    return wa, 1.0 - wa


def support_weights(solution: EnvelopeSolution, quads: Mapping[Hashable, Quadratic],
                    tol: float = 1e-9) -> dict:
    """Nonnegative weights on the active set with zero weighted derivative at x*.

    The smallest support is preferred: a single member with zero slope, else
    a pair with slopes of opposite sign.  Among several candidates the one
    with the largest weighted curvature ``sum_s w_s c2_s`` wins, then the
    widest slope gap, then the earliest keys.  Curvature matters because at
    a stationary design ``q_d(x) = y* + c2_d (x - x*)**2``, so the preferred
    design dominates the others at every other x.
    """
    act = list(solution.active)
    if not act:
        raise EnvelopeError("empty active set")
    x = solution.x_star
    d = {k: quads[k].derivative(x) for k in act}
    curv = {k: quads[k].c2 for k in act}
    dscale = max(max(abs(v) for v in d.values()), 1e-300)
    ztol = tol * max(dscale, 1.0)

    zero = [k for k in act if abs(d[k]) <= ztol]
    if zero:
        best = max(zero, key=lambda k: (curv[k], -act.index(k)))
        return {best: 1.0}

    pos = [k for k in act if d[k] > 0]
    neg = [k for k in act if d[k] < 0]
    best_key, best = None, None
    for a in pos:
        for b in neg:
            wa, wb = _pair_weights(d[a], d[b])
            c = wa * curv[a] + wb * curv[b]
            key = (round(c, 10), round(d[a] - d[b], 10), -act.index(a), -act.index(b))
            if best_key is None or key > best_key:
                best_key, best = key, {a: wa, b: wb}
    if best is not None:
        return best

    # no sign change among the active slopes: fall back to NNLS
    A = np.array([[d[k] for k in act], [1.0] * len(act)])
    w, res = nnls(A, np.array([0.0, 1.0]))
    if res > 1e-8:
        raise EnvelopeError("no stationary weights on the active set; tolerance problem upstream")
    w[w < 1e-10] = 0.0
    w /= w.sum()
    return {k: float(v) for k, v in zip(act, w) if v > 0}


def solve(quads: Mapping[Hashable, Quadratic]) -> EnvelopeSolution:
    """:func:`minimize_envelope` followed by :func:`support_weights`."""
    sol = minimize_envelope(quads)
    sol.weights = support_weights(sol, quads)
    return sol
