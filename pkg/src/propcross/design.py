"""Approximate and exact crossover designs, their information and criteria.

All criterion values are per subject.  For an approximate design the
information matrix of a symmetric realization has eigenvalues

    0,  q_d(x_d) / (t-1)  (once),  q_d(lambda0) / (t-1)  (t-2 times)

where ``q_d`` is the weight-averaged block quadratic and ``x_d`` its
minimizer, so every criterion is a function of ``u = q_d(x_d)`` and
``v = q_d(lambda0)`` alone.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .moments import DesignSpace, Quadratic, centering, incidence
from .sequences import (
    Sequence,
    SymmetricBlock,
    SequenceError,
    block_of,
    format_sequence,
    parse_sequence,
    validate,
)

CRITERIA = ("A", "D", "E", "T")
DEGENERATE_C22 = 1e-12
PINV_RTOL = 1e-10
MAX_EXCHANGEABLE_T = 8


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class ApproxDesign:
    """Weights over the symmetric blocks of a space (sum to one)."""

    space: DesignSpace
    weights: dict

    def __post_init__(self):
        w = {}
        for b, v in self.weights.items():
            if not isinstance(b, SymmetricBlock):
                b = block_of(validate(parse_sequence(b) if isinstance(b, str) else b,
                                      self.space.t, self.space.p))
            if b not in self.space.index:
                raise DesignError(f"block {b} not in space p={self.space.p}, t={self.space.t}")
            v = float(v)
            if v < -1e-12:
                raise DesignError(f"negative weight {v} on {b}")
            if v > 0:
                w[b] = w.get(b, 0.0) + v
        total = sum(w.values())
        if total <= 0:
            raise DesignError("design has no positive weight")
        if abs(total - 1.0) > 1e-12:
            warnings.warn(f"weights sum to {total!r}; renormalizing", stacklevel=3)
        w = {b: v / total for b, v in sorted(w.items())}
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_vector(cls, space: DesignSpace, vec, prune: float = 0.0) -> "ApproxDesign":
        return cls(space, {b: float(v) for b, v in zip(space.blocks, vec) if v > prune})

    def vector(self) -> np.ndarray:
        out = np.zeros(len(self.space.blocks))
        for b, v in self.weights.items():
            out[self.space.index[b]] = v
        return out

    @property
    def support(self) -> list[SymmetricBlock]:
        return list(self.weights)

    def labelled(self) -> dict[str, float]:
        return {b.label(self.space.t): v for b, v in self.weights.items()}


@dataclass(frozen=True)
class ExactDesign:
    """A p x n layout of treatment labels; column u is subject u's sequence."""

    space: DesignSpace
    layout: np.ndarray

    def __post_init__(self):
        lay = np.asarray(self.layout, dtype=int)
        if lay.ndim != 2 or lay.shape[0] != self.space.p:
            raise DesignError(f"layout must be p x n with p={self.space.p}, got {lay.shape}")
        for col in lay.T:
            validate(col, self.space.t, self.space.p)
        lay.setflags(write=False)
        object.__setattr__(self, "layout", lay)

    @classmethod
    def from_sequences(cls, space: DesignSpace, seqs) -> "ExactDesign":
        seqs = [parse_sequence(s) if isinstance(s, str) else tuple(s) for s in seqs]
        return cls(space, np.array(seqs, dtype=int).T)

    @property
    def n(self) -> int:
        return self.layout.shape[1]

    @property
    def columns(self) -> list[Sequence]:
        return [tuple(int(a) for a in c) for c in self.layout.T]

    def relabel(self, perm) -> "ExactDesign":
        """Apply the treatment relabeling ``a -> perm[a-1]``."""
        perm = np.asarray(perm, dtype=int)
        return ExactDesign(self.space, perm[self.layout - 1])


@dataclass(frozen=True)
class ModelContext:
    """Proportionality constant and prior on the direct effects.  ``tau0=None``
    means an exchangeable prior."""

    lambda0: float = 0.0
    tau0: tuple | None = None

    def __post_init__(self):
        if self.tau0 is not None:
            object.__setattr__(self, "tau0", tuple(center_tau(self.tau0)))


def center_tau(tau0) -> np.ndarray:
    tau = np.asarray(tau0, dtype=float)
    if tau.ndim != 1:
        raise DesignError("tau0 must be a vector")
    m = tau.mean()
    if abs(m) > 1e-12 * max(1.0, np.abs(tau).max()):
        warnings.warn("tau0 is not centered; subtracting its mean", stacklevel=3)
        tau = tau - m
    if np.linalg.norm(tau) <= 1e-12:
        raise DesignError("tau0 is zero after centering")
    return tau


# ---------------------------------------------------------------- moments

@dataclass(frozen=True)
class DesignMoments:
    c11: float
    c12: float
    c22: float
    degenerate: bool

    @property
    def q(self) -> Quadratic:
        return Quadratic(self.c11, self.c12, self.c22)

    @property
    def x_d(self) -> float:
        return 0.0 if self.degenerate else -self.c12 / self.c22

    @property
    def q_min(self) -> float:
        """``q_d(x_d)``; the limit ``c11`` for a degenerate design."""
        if self.degenerate:
            return self.c11
        return self.c11 - self.c12 * self.c12 / self.c22


def moments_from_vector(space: DesignSpace, w: np.ndarray) -> DesignMoments:
    c11, c12, c22 = w @ space.moment_table
    return DesignMoments(float(c11), float(c12), float(c22), bool(c22 <= DEGENERATE_C22))


def design_moments(d: ApproxDesign) -> DesignMoments:
    return moments_from_vector(d.space, d.vector())


def spectrum(d: ApproxDesign, lambda0: float) -> np.ndarray:
    """Eigenvalues (ascending) of the per-subject information matrix."""
    m = design_moments(d)
    t = d.space.t
    eig = [0.0, m.q_min / (t - 1)] + [m.q(lambda0) / (t - 1)] * (t - 2)
    return np.sort(np.array(eig))


def criterion_from_uv(crit: str, u: float, v: float, t: int) -> float:
    """Criterion value from ``u = q_d(x_d)`` and ``v = q_d(lambda0)``."""
    k = t - 2
    if crit == "E":
        return u / (t - 1)
    if crit == "T":
        return (u + k * v) / (t - 1) ** 2
    if crit == "A":
        if u <= 0 or (k and v <= 0):
            return 0.0
        return 1.0 / (1.0 / u + k / v) if k else u
    if crit == "D":
        if u <= 0 or (k and v <= 0):
            return 0.0
        return math.exp((math.log(u) + k * math.log(v)) / (t - 1)) / (t - 1)
    raise DesignError(f"unknown criterion {crit!r}")


def criterion_value(d: ApproxDesign, crit: str, lambda0: float = 0.0) -> float:
    m = design_moments(d)
    return criterion_from_uv(crit, m.q_min, m.q(lambda0), d.space.t)


def criterion_from_eigenvalues(eigs, crit: str) -> float:
    """Criterion of a t x t information matrix from its eigenvalues; the
    smallest (structural zero) is dropped."""
    a = np.sort(np.asarray(eigs, dtype=float))[1:]
    t1 = len(a)
    cut = 1e-12 * max(np.abs(a).max(), 1e-300)
    if crit == "E":
        return float(max(a[0], 0.0))
    if crit == "T":
        return float(a.sum() / t1)
    if a[0] <= cut:
        return 0.0
    if crit == "A":
        return float(t1 / np.sum(1.0 / a))
    if crit == "D":
        return float(np.exp(np.mean(np.log(a))))
    raise DesignError(f"unknown criterion {crit!r}")


# ------------------------------------------------- full information matrices

@dataclass(frozen=True)
class WeightedColumns:
    """Sequences with subject weights; an exact design has unit weights,
    a materialized approximate design has weights summing to one."""

    space: DesignSpace
    sequences: tuple
    weights: np.ndarray

    @property
    def n(self) -> float:
        return float(self.weights.sum())


def as_columns(d) -> WeightedColumns:
    if isinstance(d, WeightedColumns):
        return d
    if isinstance(d, ExactDesign):
        return WeightedColumns(d.space, tuple(d.columns), np.ones(d.n))
    if isinstance(d, ApproxDesign):
        return materialize(d)
    raise TypeError(f"cannot build information for {type(d).__name__}")


def materialize(d: ApproxDesign) -> WeightedColumns:
    """Spread each block weight evenly over its orbit (a symmetric design)."""
    seqs, w = [], []
    for b, v in d.weights.items():
        members = d.space.members(b)
        seqs.extend(members)
        w.extend([v / len(members)] * len(members))
    return WeightedColumns(d.space, tuple(seqs), np.array(w))


def _gram(cols: WeightedColumns, G1s, G2s) -> list[list[np.ndarray]]:
    """``G_i' (B_n (x) Bt) G_j`` with subject weights."""
    bt = cols.space.btilde
    w = cols.weights
    N = w.sum()
    S1 = sum(wi * g for wi, g in zip(w, G1s))
    S2 = sum(wi * g for wi, g in zip(w, G2s))
    G = (G1s, G2s)
    S = (S1, S2)
    out = [[None, None], [None, None]]
    for i in range(2):
        for j in range(2):
            acc = sum(wi * (gi.T @ bt @ gj) for wi, gi, gj in zip(w, G[i], G[j]))
            out[i][j] = acc - S[i].T @ bt @ S[j] / N
    return out


def _incidences(cols: WeightedColumns):
    pairs = [incidence(s, cols.space.t) for s in cols.sequences]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def tau_blocks(d) -> list[list[np.ndarray]]:
    """``C_dij`` for ``G_1 = T_d``, ``G_2 = F_d``."""
    cols = as_columns(d)
    Ts, Fs = _incidences(cols)
    return _gram(cols, Ts, Fs)


def _sym(m):
    return 0.5 * (m + m.T)


def _fisher_parts(C, lambda0):
    K = C[0][0] + lambda0 * (C[0][1] + C[1][0]) + lambda0**2 * C[1][1]
    L = C[0][1] + lambda0 * C[1][1]
    return _sym(K), L, _sym(C[1][1])


def fisher_tau(d, tau0, lambda0: float, C=None) -> np.ndarray:
    """Fisher information for the direct effects under a point prior ``tau0``.

    If ``tau0' C_d22 tau0`` vanishes the carryover direction carries no
    information beyond the nuisance effects and its projection term is
    dropped (generalized inverse of zero).
    """
    tau = center_tau(tau0)
    C = tau_blocks(d) if C is None else C
    K, L, C22 = _fisher_parts(C, lambda0)
    s = tau @ C22 @ tau
    if s <= PINV_RTOL * max(np.trace(C22), 1e-300):
        return K
    a = L @ tau
    return _sym(K - np.outer(a, a) / s)


def fisher_lambda(d, tau0, lambda0: float) -> float:
    """Information for the proportionality constant, ``tau0' A_d tau0``."""
    tau = center_tau(tau0)
    return float(tau @ lambda_information_matrix(d, lambda0) @ tau)


def pinv_sym(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(_sym(m))
    cut = PINV_RTOL * max(np.abs(vals).max(), 1e-300)
    inv = np.where(np.abs(vals) > cut, 1.0 / np.where(vals == 0, 1.0, vals), 0.0)
    return (vecs * inv) @ vecs.T


def lambda_information_matrix(d, lambda0: float) -> np.ndarray:
    """``A_d = A11 - A12 A22^- A21`` with ``G_1 = F_d``, ``G_2 = T_d + lambda0 F_d``."""
    cols = as_columns(d)
    Ts, Fs = _incidences(cols)
    A = _gram(cols, Fs, [T + lambda0 * F for T, F in zip(Ts, Fs)])
    return _sym(A[0][0] - A[0][1] @ pinv_sym(A[1][1]) @ A[1][0])


def point_prior_value(d, tau0, lambda0: float, crit: str) -> float:
    """Per-subject criterion under a single known ``tau0`` (no averaging)."""
    cols = as_columns(d)
    M = fisher_tau(cols, tau0, lambda0) / cols.n
    return criterion_from_eigenvalues(np.linalg.eigvalsh(M), crit)


def phi_exchangeable(d, tau0, lambda0: float, crit: str) -> float:
    """Per-subject criterion averaged over all relabelings of ``tau0``."""
    cols = as_columns(d)
    t = cols.space.t
    if t > MAX_EXCHANGEABLE_T:
        raise DesignError(f"exact permutation averaging supports t <= {MAX_EXCHANGEABLE_T}, got t={t}")
    tau = center_tau(tau0)
    C = tau_blocks(cols)
    K, L, C22 = _fisher_parts(C, lambda0)
    taus = np.array([tau[list(perm)] for perm in itertools.permutations(range(t))])
    s = np.einsum("ki,ij,kj->k", taus, C22, taus)
    a = taus @ L.T
    small = s <= PINV_RTOL * max(np.trace(C22), 1e-300)
    coef = np.where(small, 0.0, 1.0 / np.where(small, 1.0, s))
    Ms = K[None] - coef[:, None, None] * a[:, :, None] * a[:, None, :]
    eigs = np.linalg.eigvalsh(Ms) / cols.n
    vals = [criterion_from_eigenvalues(e, crit) for e in eigs]
    return float(np.mean(vals))


def symmetrize(d: ExactDesign) -> ApproxDesign:
    """Block proportions of an exact design (its symmetrized version)."""
    counts: dict[SymmetricBlock, int] = {}
    for col in d.columns:
        b = block_of(col)
        counts[b] = counts.get(b, 0) + 1
    return ApproxDesign(d.space, {b: c / d.n for b, c in counts.items()})


def compute_lambda_star(p: int, t: int, exact: bool = False):
    """Upper end of the proportionality range over which the totally balanced
    design is known to be A-optimal.  ``exact=True`` returns a Fraction."""
    if t <= 2:
        raise DesignError("lambda* is undefined for t = 2")
    if p < 2:
        raise DesignError("need p >= 2")
    P, T = Fraction(p), Fraction(t)
    a = P * T - T - 1
    val = 1 / (P - 1) - a / ((P - 1) * (T - 2) * (a - T / P) ** 2)
    return val if exact else float(val)


def design_to_json(d) -> dict:
    out = dict(d.space.to_json())
    if isinstance(d, ApproxDesign):
        out["type"] = "approx"
        out["weights"] = {k: v for k, v in sorted(d.labelled().items())}
    else:
        out["type"] = "exact"
        out["layout"] = d.layout.tolist()
    return out


def design_from_json(obj: dict):
    from .moments import Covariance

    # command outputs nest the space; hand-written files may put it at top level
    src = obj["space"] if isinstance(obj.get("space"), dict) else obj
    try:
        space = DesignSpace(int(src["p"]), int(src["t"]), Covariance.from_json(src.get("sigma")))
    except KeyError as exc:
        raise DesignError(f"design file missing field {exc}") from None
    kind = obj.get("type", "approx" if "weights" in obj else "exact")
    if kind == "approx":
        if "weights" not in obj:
            raise DesignError("approximate design needs 'weights'")
        return ApproxDesign(space, {parse_sequence(k): v for k, v in obj["weights"].items()})
    if kind == "exact":
        if "layout" not in obj:
            raise DesignError("exact design needs 'layout'")
        return ExactDesign(space, np.array(obj["layout"], dtype=int))
    raise DesignError(f"unknown design type {kind!r}")


__all__ = [
    "ApproxDesign", "ExactDesign", "ModelContext", "DesignMoments", "WeightedColumns",
    "design_moments", "spectrum", "criterion_value", "criterion_from_uv",
    "criterion_from_eigenvalues", "fisher_tau", "fisher_lambda", "lambda_information_matrix",
    "point_prior_value", "phi_exchangeable", "symmetrize", "materialize",
    "compute_lambda_star", "design_to_json", "design_from_json", "CRITERIA", "DesignError",
    "SequenceError", "format_sequence",
]
