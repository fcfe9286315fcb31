"""Treatment sequences and their orbits under relabeling of treatments.

A symmetric block is the set of all sequences obtained from one sequence by
permuting the treatment labels.  Each block is represented by its
restricted-growth string: the first occurrence of a new treatment always
receives the smallest unused label, which makes it the lexicographically
smallest member of the orbit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

Sequence = tuple[int, ...]


class SequenceError(ValueError):
    """Raised for sequences that do not fit their design space."""


def validate(seq, t: int, p: int | None = None) -> Sequence:
    seq = tuple(int(a) for a in seq)
    if p is not None and len(seq) != p:
        raise SequenceError(f"sequence {seq} has length {len(seq)}, expected {p}")
    if not seq:
        raise SequenceError("empty sequence")
    bad = [a for a in seq if a < 1 or a > t]
    if bad:
        raise SequenceError(f"labels {bad} out of range 1..{t} in {seq}")
    return seq


def canonicalize(seq, t: int | None = None) -> Sequence:
    """Relabel treatments in order of first appearance.

    >>> canonicalize((2, 3, 3, 1), t=3)
    (1, 2, 2, 3)
    """
    if t is not None:
        seq = validate(seq, t)
    relabel: dict[int, int] = {}
    out = []
    for a in seq:
        if a not in relabel:
            relabel[a] = len(relabel) + 1
        out.append(relabel[a])
    return tuple(out)


def orbit_size(distinct_count: int, t: int) -> int:
    """Number of injective relabelings of ``distinct_count`` symbols into ``t``."""
    if distinct_count > t:
        raise SequenceError(f"block uses {distinct_count} treatments but t={t}")
    return math.perm(t, distinct_count)


@dataclass(frozen=True, order=True)
class SymmetricBlock:
    canonical: Sequence

    def __post_init__(self):
        if canonicalize(self.canonical) != self.canonical:
            raise SequenceError(f"{self.canonical} is not in restricted-growth form")

    @property
    def p(self) -> int:
        return len(self.canonical)

    @property
    def distinct_count(self) -> int:
        return max(self.canonical)

    def orbit_size(self, t: int) -> int:
        return orbit_size(self.distinct_count, t)

    def members(self, t: int) -> list[Sequence]:
        return orbit_members(self, t)

    def label(self, t: int | None = None) -> str:
        return format_sequence(self.canonical, t)

    def __str__(self) -> str:
        return f"<{self.label()}>"


def block_of(seq, t: int | None = None) -> SymmetricBlock:
    return SymmetricBlock(canonicalize(seq, t))


@lru_cache(maxsize=None)
def _restricted_growth(p: int, t: int) -> tuple[Sequence, ...]:
    out = []

    def extend(prefix: list[int], top: int) -> None:
        if len(prefix) == p:
            out.append(tuple(prefix))
            return
        for a in range(1, min(top + 1, t) + 1):
            prefix.append(a)
            extend(prefix, max(top, a))
            prefix.pop()

    extend([], 0)
    return tuple(out)


def enumerate_blocks(p: int, t: int) -> list[SymmetricBlock]:
    """All symmetric blocks of sequences of length ``p`` on ``t`` treatments,
    in lexicographic order of their canonical representatives."""
    if p < 2 or t < 2:
        raise SequenceError(f"need p >= 2 and t >= 2, got p={p}, t={t}")
    return [SymmetricBlock(s) for s in _restricted_growth(p, t)]


def orbit_members(block: SymmetricBlock, t: int) -> list[Sequence]:
    """Every image of the canonical sequence under an injective relabeling,
    sorted lexicographically."""
    u = block.distinct_count
    if u > t:
        raise SequenceError(f"block {block} needs {u} treatments, t={t}")
    seen = set()
    for image in itertools.permutations(range(1, t + 1), u):
        seen.add(tuple(image[a - 1] for a in block.canonical))
    return sorted(seen)


def format_sequence(seq, t: int | None = None) -> str:
    if (t if t is not None else max(seq)) <= 9:
        return "".join(str(a) for a in seq)
    return ",".join(str(a) for a in seq)


def parse_sequence(text: str) -> Sequence:
    text = text.strip()
    if "," in text:
        return tuple(int(a) for a in text.split(","))
    if not text.isdigit():
        raise SequenceError(f"cannot parse sequence {text!r}")
    return tuple(int(a) for a in text)
