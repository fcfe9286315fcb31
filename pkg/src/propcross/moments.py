"""Per-sequence information moments.

For a sequence with treatment incidence ``T`` and carryover incidence ``F``
(both p x t), the direct/carryover moment matrices are
``B_t G_i' Bt G_j B_t`` with ``G_1 = T``, ``G_2 = F`` and ``Bt`` the
within-subject projection built from the covariance.  Only their traces
``c11, c12, c22`` are needed for symmetric designs; they define the block
quadratic ``q(x) = c11 + 2 c12 x + c22 x**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .sequences import (
    Sequence,
    SymmetricBlock,
    SequenceError,
    block_of,
    enumerate_blocks,
    orbit_members,
    validate,
)

PD_RELATIVE_TOL = 1e-10


class CovarianceError(ValueError):
    pass


@dataclass(frozen=True)
class Quadratic:
    """``c0 + 2*c1*x + c2*x**2``."""

    c0: float
    c1: float
    c2: float

    def __call__(self, x):
        return self.c0 + 2.0 * self.c1 * x + self.c2 * x * x

    def derivative(self, x):
        return 2.0 * self.c1 + 2.0 * self.c2 * x

    def minimizer(self, tol: float = 1e-12) -> float | None:
        if self.c2 <= tol:
            return None
        return -self.c1 / self.c2

    def minimum(self, tol: float = 1e-12) -> float:
        """Infimum over the real line; ``c0`` when the quadratic is flat."""
        if self.c2 <= tol:
            return self.c0
        return self.c0 - self.c1 * self.c1 / self.c2

    def scaled(self, k: float) -> "Quadratic":
        return Quadratic(k * self.c0, k * self.c1, k * self.c2)

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2])


@dataclass(frozen=True)
class Covariance:
    """Within-subject covariance: identity, tridiagonal with off-diagonal
    ``rho``, or an explicit symmetric positive definite matrix."""

    kind: str = "identity"
    rho: float = 0.0
    matrix: tuple | None = field(default=None, compare=True)

    @classmethod
    def identity(cls) -> "Covariance":
        return cls("identity")

    @classmethod
    def tridiagonal(cls, rho: float) -> "Covariance":
        return cls("tridiagonal", rho=float(rho))

    @classmethod
    def custom(cls, matrix) -> "Covariance":
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise CovarianceError(f"covariance must be square, got shape {m.shape}")
        return cls("custom", matrix=tuple(map(tuple, m.tolist())))

    def sigma(self, p: int) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(p)
        if self.kind == "tridiagonal":
            bound = 1.0 / (2.0 * math.cos(math.pi / (p + 1)))
            if abs(self.rho) >= bound:
                raise CovarianceError(
                    f"tridiagonal covariance with rho={self.rho} is not positive "
                    f"definite for p={p} (need |rho| < {bound:.6g})"
                )
            return np.eye(p) + self.rho * (np.eye(p, k=1) + np.eye(p, k=-1))
        if self.kind == "custom":
            m = np.array(self.matrix, dtype=float)
            if m.shape != (p, p):
                raise CovarianceError(f"custom covariance is {m.shape}, expected {(p, p)}")
            if not np.allclose(m, m.T, atol=1e-12, rtol=0):
                raise CovarianceError("custom covariance is not symmetric")
            eig = np.linalg.eigvalsh(m)
            if eig[0] <= PD_RELATIVE_TOL * max(eig[-1], 0.0):
                raise CovarianceError(
                    f"custom covariance is not positive definite; eigenvalues {eig.tolist()}"
                )
            return m
        raise CovarianceError(f"unknown covariance kind {self.kind!r}")

    def to_json(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "tridiagonal":
            return {"kind": "tridiagonal", "rho": self.rho}
        return {"kind": "custom", "matrix": [list(r) for r in self.matrix]}

    @classmethod
    def from_json(cls, obj: dict | None) -> "Covariance":
        if not obj:
            return cls.identity()
        kind = obj.get("kind", "identity")
        if kind == "identity":
            return cls.identity()
        if kind == "tridiagonal":
            return cls.tridiagonal(obj.get("rho", 0.0))
        if kind == "custom":
            return cls.custom(obj["matrix"])
        raise CovarianceError(f"unknown covariance kind {kind!r}")


def centering(k: int) -> np.ndarray:
    """``I_k - J_k / k``."""
    return np.eye(k) - np.full((k, k), 1.0 / k)


def btilde(cov: Covariance, p: int) -> np.ndarray:
    """Projected inverse covariance ``S^-1 - S^-1 J S^-1 / (1' S^-1 1)``."""
    sigma = cov.sigma(p)
    if cov.kind == "identity":
        return centering(p)
    inv = np.linalg.inv(sigma)
    inv = 0.5 * (inv + inv.T)
    w = inv.sum(axis=1)
    out = inv - np.outer(w, w) / w.sum()
    return 0.5 * (out + out.T)


def incidence(seq, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Treatment and carryover incidence matrices (each p x t)."""
    seq = validate(seq, t)
    p = len(seq)
    T = np.zeros((p, t))
    T[np.arange(p), np.asarray(seq) - 1] = 1.0
    F = np.zeros((p, t))
    F[1:] = T[:-1]
    return T, F


def moment_matrices(G1: np.ndarray, G2: np.ndarray, bt: np.ndarray) -> list[list[np.ndarray]]:
    """The 2x2 array of ``B_t G_i' Bt G_j B_t``."""
    Bc = centering(G1.shape[1])
    G = (G1 @ Bc, G2 @ Bc)
    return [[G[i].T @ bt @ G[j] for j in range(2)] for i in range(2)]


@dataclass(frozen=True)
class BlockMoments:
    c11: float
    c12: float
    c22: float

    @property
    def q(self) -> Quadratic:
        return Quadratic(self.c11, self.c12, self.c22)

    def as_array(self) -> np.ndarray:
        return np.array([self.c11, self.c12, self.c22])


def sequence_moments(seq, t: int, bt: np.ndarray) -> BlockMoments:
    T, F = incidence(seq, t)
    C = moment_matrices(T, F, bt)
    return BlockMoments(float(np.trace(C[0][0])), float(np.trace(C[0][1])), float(np.trace(C[1][1])))


def lambda_shortcut(m: BlockMoments, lambda0: float) -> BlockMoments:
    """Moments of the carryover-proportionality problem from the direct ones:
    ``h11 = c22``, ``h12 = c12 + lambda0 c22``, ``h22 = q(lambda0)``."""
    return BlockMoments(m.c22, m.c12 + lambda0 * m.c22, m.q(lambda0))


def lambda_moments_direct(seq, t: int, bt: np.ndarray, lambda0: float) -> BlockMoments:
    """Same as :func:`lambda_shortcut` but from the matrices with
    ``G_1 = F`` and ``G_2 = T + lambda0 F``.  Kept as an independent check."""
    T, F = incidence(seq, t)
    A = moment_matrices(F, T + lambda0 * F, bt)
    return BlockMoments(float(np.trace(A[0][0])), float(np.trace(A[0][1])), float(np.trace(A[1][1])))


@dataclass(frozen=True)
class DesignSpace:
    """Periods, treatments and within-subject covariance; caches the block
    list and per-block moments."""

    p: int
    t: int
    covariance: Covariance = field(default_factory=Covariance.identity)

    def __post_init__(self):
        if self.p < 2 or self.t < 2:
            raise SequenceError(f"need p >= 2 and t >= 2, got p={self.p}, t={self.t}")

    @classmethod
    def with_rho(cls, p: int, t: int, rho: float = 0.0) -> "DesignSpace":
        cov = Covariance.identity() if rho == 0 else Covariance.tridiagonal(rho)
        return cls(p, t, cov)

    @cached_property
    def btilde(self) -> np.ndarray:
        return btilde(self.covariance, self.p)

    @cached_property
    def blocks(self) -> list[SymmetricBlock]:
        return enumerate_blocks(self.p, self.t)

    @cached_property
    def index(self) -> dict[SymmetricBlock, int]:
        return {b: i for i, b in enumerate(self.blocks)}

    @cached_property
    def moment_table(self) -> np.ndarray:
        """(m, 3) array of ``(c11, c12, c22)`` in block order."""
        bt = self.btilde
        return np.array([sequence_moments(b.canonical, self.t, bt).as_array() for b in self.blocks])

    @cached_property
    def representative_mask(self) -> np.ndarray:
        """False for blocks whose moments duplicate those of a lexicographically
        larger block.  Such blocks are interchangeable in every criterion, so
        optimizers put the weight of each class on its largest member."""
        return self.candidate_mask(None)

    @cached_property
    def moment_keys(self) -> list[tuple]:
        M = self.moment_table
        scale = max(np.abs(M).max(), 1e-300)
        return [tuple(np.round(row / scale, 10) + 0.0) for row in M]

    def candidate_mask(self, blocks=None) -> np.ndarray:
        """Mask of the given blocks (all when None) keeping one block per
        class of identical moments, the lexicographically largest."""
        if blocks is None:
            allowed = range(len(self.blocks))
        else:
            allowed = sorted(self.index[b] for b in blocks)
        last = {}
        for i in allowed:
            last[self.moment_keys[i]] = i
        mask = np.zeros(len(self.blocks), bool)
        mask[list(last.values())] = True
        return mask

    @property
    def n_sequences(self) -> int:
        return self.t**self.p

    def block_moments(self, block: SymmetricBlock) -> BlockMoments:
        return BlockMoments(*self.moment_table[self.index[block]])

    def lambda_moments(self, block: SymmetricBlock, lambda0: float) -> BlockMoments:
        return lambda_shortcut(self.block_moments(block), lambda0)

    def lambda_table(self, lambda0: float) -> np.ndarray:
        c = self.moment_table
        h22 = c[:, 0] + 2 * lambda0 * c[:, 1] + lambda0**2 * c[:, 2]
        return np.column_stack([c[:, 2], c[:, 1] + lambda0 * c[:, 2], h22])

    def members(self, block: SymmetricBlock) -> list[Sequence]:
        return orbit_members(block, self.t)

    def block(self, seq) -> SymmetricBlock:
        return block_of(validate(seq, self.t, self.p))

    def to_json(self) -> dict:
        return {"p": self.p, "t": self.t, "sigma": self.covariance.to_json()}


def block_moments(block: SymmetricBlock, space: DesignSpace) -> BlockMoments:
    return space.block_moments(block)


def lambda_moments(block: SymmetricBlock, space: DesignSpace, lambda0: float) -> BlockMoments:
    return space.lambda_moments(block, lambda0)
