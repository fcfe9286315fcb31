"""Exact designs with n subjects from block weights.

Block counts come from largest-remainder apportionment.  Within a block the
orbit is walked in rotation order: each member is followed by its images
under the cyclic relabeling ``a -> a + 1 (mod t)``.  Every run of ``t``
consecutive members in that order puts each treatment once in each period,
so treatment-by-period counts stay as even as the counts allow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .design import ApproxDesign, DesignError, ExactDesign, symmetrize
from .sequences import Sequence, SymmetricBlock, format_sequence


@dataclass
class RoundedDesign:
    exact: ExactDesign
    target: dict
    achieved_weights: dict
    weight_error: float
    symmetry_diagnostic: float

    def to_json(self) -> dict:
        t = self.exact.space.t
        return {
            "n": self.exact.n,
            "space": self.exact.space.to_json(),
            "layout": self.exact.layout.tolist(),
            "columns": [format_sequence(c, t) for c in self.exact.columns],
            "achieved_weights": {b.label(t): w for b, w in sorted(self.achieved_weights.items())},
            "weight_error": self.weight_error,
            "symmetry_diagnostic": self.symmetry_diagnostic,
        }


def apportion(weights: dict, n: int) -> dict:
    """Largest-remainder counts summing to ``n``; ties go to the earlier key."""
    keys = list(weights)
    quota = np.array([weights[k] * n for k in keys])
    base = np.floor(quota + 1e-9).astype(int)
    left = n - int(base.sum())
    rem = quota - base
    order = sorted(range(len(keys)), key=lambda i: (-round(rem[i], 12), i))
    for i in order[:max(left, 0)]:
        base[i] += 1
    return {k: int(c) for k, c in zip(keys, base)}


def rotation_order(block: SymmetricBlock, t: int) -> list[Sequence]:
    """Orbit members grouped into cyclic-relabeling classes of size ``t``."""
    out, seen = [], set()
    for m in block.members(t):
        if m in seen:
            continue
        for k in range(t):
            img = tuple((a - 1 + k) % t + 1 for a in m)
            seen.add(img)
            out.append(img)
    return out


def treatment_period_counts(d: ExactDesign) -> np.ndarray:
    """(p, t) array: how often each treatment appears in each period."""
    t = d.space.t
    return np.stack([np.bincount(row - 1, minlength=t) for row in d.layout])


def round_exact(d: ApproxDesign, n: int) -> RoundedDesign:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DesignError(f"n must be a positive integer, got {n!r}")
    space = d.space
    t = space.t
    if n < len(d.weights):
        warnings.warn(
            f"n={n} is smaller than the {len(d.weights)} support blocks; some blocks get no subjects",
            stacklevel=2,
        )
    counts = apportion(d.weights, n)
    cols: list[Sequence] = []
    for b, c in counts.items():
        order = rotation_order(b, t)
        cols.extend(order[k % len(order)] for k in range(c))
    exact = ExactDesign.from_sequences(space, cols)
    achieved = symmetrize(exact).weights
    err = max(abs(achieved.get(b, 0.0) - w) for b, w in d.weights.items())
    tp = treatment_period_counts(exact)
    sym = float(np.abs(tp - n / t).max())
    return RoundedDesign(exact, dict(d.weights), dict(achieved), float(err), sym)


__all__ = ["RoundedDesign", "round_exact", "apportion", "rotation_order", "treatment_period_counts"]
