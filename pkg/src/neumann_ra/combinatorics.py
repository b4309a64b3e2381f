"""Discrete objects behind the design-expectation formula.

Words index the monomials produced by expanding the truncated series
``xbar' (I - U + V)^d (x_i - xbar)`` over a random sample: each series factor
contributes a symbol in {I, U, V} and the terminal factor is tagged either
``unit`` (inner product with x_i) or ``avg`` (another sample average).  The
word's position graph records which sample averages are paired by inner
products; set partitions of its vertices describe index-collision patterns,
and quotient multigraphs carry the collapsed edge multiplicities.

All base sets are ``range(size)`` (0-based).  Partition blocks are enumerated
by increasing minima, encoded as a restricted-growth string.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .errors import BaseMismatch, DegreeTooLarge, SizeTooLarge

CHI_UNIT = "unit"
CHI_AVG = "avg"

MAX_WORD_DEGREE = 4
MAX_PARTITION_BASE = 10


@dataclass(frozen=True)
class AnnotatedWord:
    """A symbol string plus terminal tag, with its sign, multiplicity and position graph.

    ``length`` counts the sample averages in the monomial (one 1/m factor
    each); ``edges`` are 0-based vertex pairs; when ``chi == CHI_UNIT`` the
    anchor vertex is ``length - 1``.
    """

    phi: tuple[str, ...]
    chi: str
    sign: int
    length: int
    edges: tuple[tuple[int, int], ...]

    @property
    def degree(self) -> int:
        return len(self.phi)

    @property
    def anchor_position(self) -> int | None:
        return self.length - 1 if self.chi == CHI_UNIT else None


def make_word(phi: tuple[str, ...], chi: str) -> AnnotatedWord:
    """Build a word with its sign, multiplicity, and cursor-constructed position graph."""
    if chi not in (CHI_UNIT, CHI_AVG):
        raise ValueError(f"unknown terminal tag {chi!r}")
    n_u = sum(1 for s in phi if s == "U")
    n_v = sum(1 for s in phi if s == "V")
    if n_u + n_v + sum(1 for s in phi if s == "I") != len(phi):
        raise ValueError(f"symbols must be in {{I,U,V}}, got {phi!r}")
    is_avg = chi == CHI_AVG
    sign = -1 if (n_u + is_avg) % 2 else 1
    length = 1 + n_u + 2 * n_v + is_avg
    edges = []
    s = 0
    for sym in phi:
        if sym == "U":
            edges.append((s, s + 1))
            s += 1
        elif sym == "V":
            edges.append((s, s + 1))
            s += 2
    if is_avg:
        edges.append((s, s + 1))
    return AnnotatedWord(tuple(phi), chi, sign, length, tuple(edges))


def enumerate_words(d: int, max_degree: int = MAX_WORD_DEGREE) -> list[AnnotatedWord]:
    """All 2 * 3^d words of degree d."""
    if d < 0:
        raise ValueError("degree must be nonnegative")
    if d > max_degree:
        raise DegreeTooLarge(f"degree {d} exceeds cap {max_degree}")
    words = []
    symbols = [()]
    for _ in range(d):
        symbols = [phi + (s,) for phi in symbols for s in ("I", "U", "V")]
    for phi in symbols:
        for chi in (CHI_UNIT, CHI_AVG):
            words.append(make_word(phi, chi))
    return words


@dataclass(frozen=True)
class SetPartition:
    """Partition of ``range(size)`` encoded as a restricted-growth string.

    ``block_of[k]`` is the block id of element k; ids appear in first-use
    order, which matches enumeration of blocks by increasing minima.
    """

    block_of: tuple[int, ...]

    def __post_init__(self):
        seen = 0
        for b in self.block_of:
            if b > seen:
                raise ValueError(f"not a restricted-growth string: {self.block_of}")
            if b == seen:
                seen += 1
        if seen == 0:
            raise ValueError("empty base set")

    @property
    def size(self) -> int:
        return len(self.block_of)

    @property
    def num_blocks(self) -> int:
        return max(self.block_of) + 1

    def blocks(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.num_blocks)]
        for k, b in enumerate(self.block_of):
            out[b].append(k)
        return tuple(tuple(block) for block in out)

    @classmethod
    def from_blocks(cls, blocks, size: int) -> "SetPartition":
        block_of = [-1] * size
        for label, block in enumerate(sorted(blocks, key=min)):
            for k in block:
                block_of[k] = label
        if any(b < 0 for b in block_of):
            raise ValueError("blocks do not cover the base set")
        return cls(tuple(block_of))


def enumerate_partitions(base_size: int, max_size: int = MAX_PARTITION_BASE) -> list[SetPartition]:
    """All partitions of ``range(base_size)`` in restricted-growth order."""
    if base_size < 1:
        raise ValueError("base size must be positive")
    if base_size > max_size:
        raise SizeTooLarge(f"base size {base_size} exceeds cap {max_size}")
    out: list[SetPartition] = []

    def extend(prefix: list[int], used: int):
        if len(prefix) == base_size:
            out.append(SetPartition(tuple(prefix)))
            return
        for b in range(used + 1):
            prefix.append(b)
            extend(prefix, max(used, b + 1))
            prefix.pop()

    extend([0], 1)
    return out


def mobius_weight(rho: SetPartition) -> int:
    """Signed factorial weight converting all-assignment sums to injective sums.

    Equals ``(-1)^(l - |rho|) * prod (|Q| - 1)!`` over blocks Q, for a
    partition of a base set of size l.
    """
    weight = 1
    for block in rho.blocks():
        for k in range(1, len(block)):
            weight *= k
    if (rho.size - rho.num_blocks) % 2:
        weight = -weight
    return weight


def coarsen(pi: SetPartition, rho: SetPartition) -> SetPartition:
    """Merge the blocks of ``pi`` according to ``rho`` over block ids.

    The output is re-enumerated by increasing block minima, so index maps
    compose: the block id of element k is ``relabel(rho.block_of[pi.block_of[k]])``.
    """
    if rho.size != pi.num_blocks:
        raise BaseMismatch(
            f"rho is over {rho.size} elements but pi has {pi.num_blocks} blocks"
        )
    raw = [rho.block_of[b] for b in pi.block_of]
    relabel: dict[int, int] = {}
    block_of = []
    for b in raw:
        if b not in relabel:
            relabel[b] = len(relabel)
        block_of.append(relabel[b])
    return SetPartition(tuple(block_of))


@dataclass(frozen=True)
class QuotientMultigraph:
    """Block-level view of a position graph under a partition.

    ``self_mult[a]`` counts edges with both ends in block a; ``cross_mult``
    maps ordered pairs (a, b), a < b, to the number of edges joining them.
    ``components`` are the connected components of the underlying simple
    graph; ``anchor_block`` is the block of the anchor position when the
    word's terminal tag is ``unit``.
    """

    num_blocks: int
    self_mult: tuple[int, ...]
    cross_mult: tuple[tuple[int, int, int], ...]  # (a, b, multiplicity)
    components: tuple[tuple[int, ...], ...]
    anchor_block: int | None

    def cross_dict(self) -> dict[tuple[int, int], int]:
        return {(a, b): c for a, b, c in self.cross_mult}

    def total_edge_count(self) -> int:
        return sum(self.self_mult) + sum(c for _, _, c in self.cross_mult)


def quotient(word: AnnotatedWord, pi: SetPartition) -> QuotientMultigraph:
    """Collapse the word's position graph by the partition, keeping multiplicities."""
    if pi.size != word.length:
        raise BaseMismatch(
            f"partition is over {pi.size} elements but the word has {word.length} positions"
        )
    ell = pi.num_blocks
    self_mult = [0] * ell
    cross: dict[tuple[int, int], int] = {}
    for s, t in word.edges:
        a, b = pi.block_of[s], pi.block_of[t]
        if a == b:
            self_mult[a] += 1
        else:
            key = (min(a, b), max(a, b))
            cross[key] = cross.get(key, 0) + 1
    # Connected components of the simple graph via union-find.
    parent = list(range(ell))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in cross:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for a in range(ell):
        groups.setdefault(find(a), []).append(a)
    components = tuple(tuple(sorted(g)) for g in sorted(groups.values(), key=min))
    anchor = pi.block_of[word.anchor_position] if word.chi == CHI_UNIT else None
    return QuotientMultigraph(
        num_blocks=ell,
        self_mult=tuple(self_mult),
        cross_mult=tuple((a, b, c) for (a, b), c in sorted(cross.items())),
        components=components,
        anchor_block=anchor,
    )


def falling_factorial(a: int, k: int) -> int:
    """``a (a-1) ... (a-k+1)``; empty product is 1."""
    out = 1
    for j in range(k):
        out *= a - j
    return out


@lru_cache(maxsize=None)
def srswor_class_weights(num_blocks: int, m: int, n: int) -> tuple[Fraction, Fraction]:
    """Joint inclusion probabilities for block labels under size-m SRSWOR from n.

    Returns (psi0, psi1): the probability that ``num_blocks`` distinct labels,
    none equal to a fixed included unit, all fall in the sample, and the same
    with one block pinned to that unit.  A zero factor in the numerator gives
    an exact 0.
    """
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if num_blocks < 1:
        raise ValueError("need at least one block")

    def ratio(k: int) -> Fraction:
        num = falling_factorial(m - 1, k)
        if num == 0:
            return Fraction(0)
        return Fraction(num, falling_factorial(n - 1, k))

    return ratio(num_blocks), ratio(num_blocks - 1)


@lru_cache(maxsize=None)
def bell_number(k: int) -> int:
    if k == 0:
        return 1
    # Bell triangle recurrence.
    row = [1]
    for _ in range(k - 1):
        new = [row[-1]]
        for v in row:
            new.append(new[-1] + v)
        row = new
    return row[-1]
