"""Gram-level evaluation of design expectations for series correction terms.

The per-unit weights ``xi[d](m; X)`` are finite sums, over words and set
partitions of their position graphs, of injective label-sum aggregates with
exact rational inclusion probabilities.  Injective sums are recovered from
unrestricted ("all-assignment") sums by Mobius inversion on the partition
lattice, and each all-assignment sum factorizes over the connected components
of the quotient multigraph into contractions that only touch the Gram matrix
``G = X X'``: unary factors ``g^m`` (diagonal powers), pairwise factors
``G^(c)`` (entrywise powers), and an anchor column ``G[:, i]``.

Component contractions are evaluated by variable elimination (leaf messages
``v -> W v``; two-neighbor nodes produce a combined pairwise factor), which
reduces to the sequential vector fold for path-shaped components and also
handles branching and cyclic quotients.  Masked sums (labels restricted to
exclude a unit i) are assembled for all i at once by inclusion-exclusion over
the subset of component nodes pinned to i, each term being one contraction
with an open external index.  Values are memoized per context under a
canonical (isomorphism-invariant) component key.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations

import numpy as np

from .combinatorics import (
    CHI_AVG,
    CHI_UNIT,
    AnnotatedWord,
    QuotientMultigraph,
    SetPartition,
    coarsen,
    enumerate_partitions,
    enumerate_words,
    mobius_weight,
    quotient,
    srswor_class_weights,
)
from .design import NormalizedDesign
from .errors import DegreeTooLarge, NeumannRAError, PopulationTooSmall

DEFAULT_DEGREE_CAP = 3

# Sentinel for "the Gram matrix itself"; lets leaf steps run matrix-free.
_GRAM = "gram"


class GramContext:
    """Read-only Gram access plus per-design memo for component contractions.

    With ``store_gram=False`` the n-by-n Gram and its entrywise powers are not
    kept; single-power cross edges are applied as ``v -> X (X' v)`` and higher
    powers are materialized transiently per use.  Safe to share across threads
    once constructed; memo insertion is idempotent (values are deterministic).
    """

    def __init__(self, design: NormalizedDesign, *, store_gram: bool = True,
                 memoize: bool = True):
        self.design = design
        self.X = design.X
        self.n = design.n
        self.p = design.p
        self.store_gram = store_gram
        self.memoize = memoize
        self.gram_diag = np.einsum("ij,ij->i", self.X, self.X)
        self._powers: dict[int, np.ndarray] = {}
        self._memo: dict[tuple, float | np.ndarray] = {}
        self._token_counter = 0

    def apply_gram(self, v: np.ndarray) -> np.ndarray:
        return self.X @ (self.X.T @ v)

    def gram_power(self, c: int) -> np.ndarray:
        """Entrywise power ``G^(c)``; cached for the session when storage is enabled."""
        cached = self._powers.get(c)
        if cached is not None:
            return cached
        base = self._powers.get(1)
        if base is None:
            base = self.X @ self.X.T
            if self.store_gram:
                self._powers[1] = base
        power = base if c == 1 else base**c
        if self.store_gram:
            self._powers[c] = power
        return power

    def gram_col(self, i: int) -> np.ndarray:
        if 1 in self._powers:
            return self._powers[1][:, i]
        return self.X @ self.X[i]

    def new_token(self) -> int:
        self._token_counter += 1
        return self._token_counter

    def memo_get(self, key):
        if not self.memoize:
            return None
        return self._memo.get(key)

    def memo_put(self, key, value):
        if self.memoize:
            self._memo[key] = value


@dataclass(frozen=True)
class AggregateRequest:
    """One all-assignment aggregate: word, partition, optional unit, mask flag."""

    word: AnnotatedWord
    partition: SetPartition
    unit: int | None = None
    mask: bool = False

    def __post_init__(self):
        if (self.mask or self.word.chi == CHI_UNIT) and self.unit is None:
            raise NeumannRAError("unit index required for masked or unit-tagged aggregates")


@dataclass(frozen=True)
class NeumannWeightVector:
    """Per-unit correction weights for a given sample size and degree."""

    degree: int
    m: int
    xi: np.ndarray


# ---------------------------------------------------------------------------
# Generic component contraction by variable elimination.
# ---------------------------------------------------------------------------


def _factor_matrix(factor, ctx: GramContext) -> np.ndarray:
    return ctx.gram_power(1) if factor is _GRAM else factor


def _factor_matvec(factor, v: np.ndarray, ctx: GramContext, transpose: bool) -> np.ndarray:
    if factor is _GRAM:
        return ctx.apply_gram(v)
    return factor.T @ v if transpose else factor @ v


def _contract(nodes: list[int], unary: dict[int, np.ndarray],
              binary: dict[tuple[int, int], object], open_id: int | None,
              ctx: GramContext):
    """Sum out all closed nodes; returns a scalar, or the open node's vector.

    ``binary[(a, b)]`` with a < b is oriented rows=a, cols=b.  Eliminating a
    node with two remaining neighbors forms their combined pairwise factor;
    nodes never have three or more neighbors at the degree caps used here.
    """
    n = ctx.n
    active = set(nodes)
    adj: dict[int, set[int]] = {a: set() for a in active}
    for a, b in binary:
        adj[a].add(b)
        adj[b].add(a)

    def get_unary(a: int) -> np.ndarray:
        u = unary.get(a)
        return np.ones(n) if u is None else u

    scalar = 1.0
    while True:
        closed = [a for a in active if a != open_id]
        if not closed:
            break
        a = min(closed, key=lambda v: (len(adj[v]), v))
        degree = len(adj[a])
        if degree == 0:
            scalar *= float(get_unary(a).sum())
        elif degree == 1:
            b = next(iter(adj[a]))
            key, transpose = ((a, b), True) if a < b else ((b, a), False)
            msg = _factor_matvec(binary.pop(key), get_unary(a), ctx, transpose)
            unary[b] = get_unary(b) * msg
            adj[b].discard(a)
        elif degree == 2:
            b, c = sorted(adj[a])
            kab = (min(a, b), max(a, b))
            kac = (min(a, c), max(a, c))
            m_ba = _factor_matrix(binary.pop(kab), ctx)
            if a < b:
                m_ba = m_ba.T  # orient rows=b, cols=a
            m_ac = _factor_matrix(binary.pop(kac), ctx)
            if c < a:
                m_ac = m_ac.T  # orient rows=a, cols=c
            combined = (m_ba * get_unary(a)[None, :]) @ m_ac
            kbc = (min(b, c), max(b, c))
            if b > c:
                combined = combined.T
            existing = binary.get(kbc)
            if existing is None:
                binary[kbc] = combined
            else:
                binary[kbc] = _factor_matrix(existing, ctx) * combined
            adj[b].discard(a)
            adj[c].discard(a)
            adj[b].add(c)
            adj[c].add(b)
        else:
            raise NeumannRAError(
                f"component node with {degree} neighbors; degree cap violated"
            )
        active.discard(a)
        adj.pop(a, None)
    if open_id is None:
        return scalar
    return scalar * get_unary(open_id)


# ---------------------------------------------------------------------------
# Component extraction and canonical keys.
# ---------------------------------------------------------------------------


def _component_parts(q: QuotientMultigraph, comp: tuple[int, ...]):
    """Local-index (multiplicities, cross edges, anchor index) for one component."""
    index = {node: k for k, node in enumerate(comp)}
    mults = tuple(q.self_mult[node] for node in comp)
    cross = tuple(
        (index[a], index[b], c)
        for a, b, c in q.cross_mult
        if a in index and b in index
    )
    anchor = index.get(q.anchor_block, -1) if q.anchor_block is not None else -1
    return mults, cross, anchor


@lru_cache(maxsize=None)
def _canonical_form(mults: tuple[int, ...], cross: tuple[tuple[int, int, int], ...],
                    anchor: int, pinned: tuple[int, ...]):
    """Isomorphism-invariant key: minimize the serialized form over relabelings."""
    k = len(mults)
    if k == 1:
        return mults, cross, anchor, pinned
    best = None
    for perm in permutations(range(k)):
        m_new = tuple(mults[perm.index(j)] for j in range(k))
        cross_new = tuple(sorted(
            (min(perm[a], perm[b]), max(perm[a], perm[b]), c) for a, b, c in cross
        ))
        anchor_new = perm[anchor] if anchor >= 0 else -1
        pinned_new = tuple(sorted(perm[a] for a in pinned))
        sig = (m_new, cross_new, anchor_new, pinned_new)
        if best is None or sig < best:
            best = sig
    return best


# ---------------------------------------------------------------------------
# Component evaluations (memoized per context).
# ---------------------------------------------------------------------------


def _power_factor(c: int, ctx: GramContext):
    return _GRAM if c == 1 else ctx.gram_power(c)


def _closed_component(ctx: GramContext, mults, cross, anchor=-1,
                      anchor_vec: np.ndarray | None = None,
                      token: int | None = None) -> float:
    """Closed contraction of one component; optional extra unary on the anchor node."""
    key = None
    if anchor_vec is None or token is not None:
        key = ("closed", _canonical_form(mults, cross, anchor if anchor_vec is not None else -1, ()), token)
        hit = ctx.memo_get(key)
        if hit is not None:
            return hit
    nodes = list(range(len(mults)))
    unary: dict[int, np.ndarray] = {}
    for a, m in enumerate(mults):
        if m:
            unary[a] = ctx.gram_diag**m
    if anchor_vec is not None:
        unary[anchor] = unary.get(anchor, 1.0) * anchor_vec  # type: ignore[assignment]
        unary[anchor] = np.asarray(unary[anchor], dtype=float)
    binary = {(a, b): _power_factor(c, ctx) for a, b, c in cross}
    value = float(_contract(nodes, unary, binary, None, ctx))
    if key is not None:
        ctx.memo_put(key, value)
    return value


def _open_component(ctx: GramContext, mults, cross, anchor: int,
                    pinned: frozenset[int]) -> np.ndarray:
    """Contraction with an open external index, nodes in ``pinned`` tied to it.

    A pinned node's self-edges become diagonal powers on the external unary;
    pinned-pinned cross edges likewise; pinned-free edges attach to the open
    node; the anchor factor is a power-1 edge to the open node (or a diagonal
    factor when the anchor itself is pinned).
    """
    key = ("open", _canonical_form(mults, cross, anchor, tuple(sorted(pinned))))
    hit = ctx.memo_get(key)
    if hit is not None:
        return hit
    n = ctx.n
    k = len(mults)
    open_id = k
    e_unary = np.ones(n)
    unary: dict[int, np.ndarray] = {}
    for a, m in enumerate(mults):
        if not m:
            continue
        if a in pinned:
            e_unary = e_unary * ctx.gram_diag**m
        else:
            unary[a] = ctx.gram_diag**m
    exp_to_open: dict[int, int] = {}
    binary: dict[tuple[int, int], object] = {}
    for a, b, c in cross:
        a_p, b_p = a in pinned, b in pinned
        if a_p and b_p:
            e_unary = e_unary * ctx.gram_diag**c
        elif a_p:
            exp_to_open[b] = exp_to_open.get(b, 0) + c
        elif b_p:
            exp_to_open[a] = exp_to_open.get(a, 0) + c
        else:
            binary[(a, b)] = _power_factor(c, ctx)
    if anchor >= 0:
        if anchor in pinned:
            e_unary = e_unary * ctx.gram_diag
        else:
            exp_to_open[anchor] = exp_to_open.get(anchor, 0) + 1
    for a, c in exp_to_open.items():
        binary[(a, open_id)] = _power_factor(c, ctx)
    unary[open_id] = e_unary
    nodes = [a for a in range(k) if a not in pinned] + [open_id]
    value = np.asarray(_contract(nodes, unary, binary, open_id, ctx), dtype=float)
    ctx.memo_put(key, value)
    return value


def _masked_component(ctx: GramContext, mults, cross, anchor: int) -> np.ndarray:
    """Vector over i of the component's aggregate with all labels != i.

    Inclusion-exclusion over the subset of nodes pinned to the excluded unit.
    """
    key = ("masked", _canonical_form(mults, cross, anchor, ()))
    hit = ctx.memo_get(key)
    if hit is not None:
        return hit
    k = len(mults)
    total = np.zeros(ctx.n)
    for bits in range(1 << k):
        pinned = frozenset(a for a in range(k) if bits >> a & 1)
        term = _open_component(ctx, mults, cross, anchor, pinned)
        if len(pinned) % 2:
            total -= term
        else:
            total += term
    ctx.memo_put(key, total)
    return total


def _masked_component_direct(ctx: GramContext, mults, cross, anchor: int, i: int) -> float:
    """Same masked aggregate at a single unit, via explicitly masked factors."""
    n = ctx.n
    mask = np.ones(n)
    mask[i] = 0.0
    unary: dict[int, np.ndarray] = {}
    for a, m in enumerate(mults):
        unary[a] = mask * (ctx.gram_diag**m if m else 1.0)
    if anchor >= 0:
        col = ctx.gram_col(i).copy()
        col[i] = 0.0
        unary[anchor] = unary[anchor] * col
    binary: dict[tuple[int, int], object] = {}
    for a, b, c in cross:
        w = ctx.gram_power(c) * mask[None, :]
        w = w * mask[:, None]
        binary[(a, b)] = w
    return float(_contract(list(range(len(mults))), unary, binary, None, ctx))


# ---------------------------------------------------------------------------
# Per-partition aggregates (vectors over the unit index).
# ---------------------------------------------------------------------------


def _sigma_unmasked_vector(word: AnnotatedWord, q: QuotientMultigraph,
                           ctx: GramContext) -> np.ndarray:
    scalar = 1.0
    anchor_vec = None
    for comp in q.components:
        mults, cross, anchor = _component_parts(q, comp)
        if anchor >= 0:
            anchor_vec = _open_component(ctx, mults, cross, anchor, frozenset())
        else:
            scalar *= _closed_component(ctx, mults, cross)
    if word.chi == CHI_AVG:
        return np.full(ctx.n, scalar)
    return scalar * anchor_vec


def _sigma_masked_vector(q: QuotientMultigraph, ctx: GramContext) -> np.ndarray:
    out = None
    for comp in q.components:
        mults, cross, anchor = _component_parts(q, comp)
        mv = _masked_component(ctx, mults, cross, anchor)
        out = mv if out is None else out * mv
    return out


@lru_cache(maxsize=None)
def _partitions(base_size: int) -> tuple[SetPartition, ...]:
    return tuple(enumerate_partitions(base_size))


@lru_cache(maxsize=None)
def _coefficient_tables(length: int, m: int, n: int) -> dict:
    """Exact rational coefficients of the unmasked/masked aggregates per partition.

    Regroups the double sum over (partition, coarsening) pairs by the coarsened
    partition sigma: the weight on the all-labels aggregate is
    ``sum lam(rho) psi1(|pi|)`` and the weight on the masked aggregate is
    ``sum lam(rho) (psi0(|pi|) - psi1(|pi|))``, both over pairs with
    ``rho o pi = sigma``.
    """
    zero = Fraction(0)
    tables: dict[tuple[int, ...], list[Fraction]] = {}
    for pi in _partitions(length):
        psi0, psi1 = srswor_class_weights(pi.num_blocks, m, n)
        for rho in _partitions(pi.num_blocks):
            lam = mobius_weight(rho)
            sig = coarsen(pi, rho).block_of
            entry = tables.setdefault(sig, [zero, zero])
            entry[0] += lam * psi1
            entry[1] += lam * (psi0 - psi1)
    return {sig: (cu, cm) for sig, (cu, cm) in tables.items()}


# ---------------------------------------------------------------------------
# Public operations.
# ---------------------------------------------------------------------------


def all_assignment_aggregate(req: AggregateRequest, ctx: GramContext) -> float:
    """Label sum over all (collision-allowing) assignments for one word-partition pair.

    With ``mask`` set, labels exclude the requested unit; the anchor column
    keeps its off-diagonal entries and only its i-th coordinate is zeroed.
    """
    q = quotient(req.word, req.partition)
    value = 1.0
    for comp in q.components:
        mults, cross, anchor = _component_parts(q, comp)
        if req.mask:
            value *= _masked_component_direct(ctx, mults, cross, anchor, req.unit)
        elif anchor >= 0:
            value *= _closed_component(
                ctx, mults, cross, anchor, anchor_vec=ctx.gram_col(req.unit)
            )
        else:
            value *= _closed_component(ctx, mults, cross)
    return value


def class_aggregate_vectors(word: AnnotatedWord, pi: SetPartition,
                            ctx: GramContext) -> tuple[np.ndarray, np.ndarray]:
    """Injective class-0/class-1 aggregates for every unit, by Mobius inversion."""
    phi0 = np.zeros(ctx.n)
    phi1 = np.zeros(ctx.n)
    for rho in _partitions(pi.num_blocks):
        lam = float(mobius_weight(rho))
        q = quotient(word, coarsen(pi, rho))
        unmasked = _sigma_unmasked_vector(word, q, ctx)
        masked = _sigma_masked_vector(q, ctx)
        phi0 += lam * masked
        phi1 += lam * (unmasked - masked)
    return phi0, phi1


def class_aggregates(word: AnnotatedWord, pi: SetPartition, unit: int,
                     ctx: GramContext) -> tuple[float, float]:
    phi0, phi1 = class_aggregate_vectors(word, pi, ctx)
    return float(phi0[unit]), float(phi1[unit])


def neumann_weights(d: int, m: int, ctx: GramContext,
                    max_degree: int = DEFAULT_DEGREE_CAP) -> NeumannWeightVector:
    """Per-unit weight vector of degree d for samples of size m.

    Accumulates one partial sum per word and combines them last; the
    word-level prefactor and all inclusion probabilities are exact rationals
    converted to float once.
    """
    n = ctx.n
    if not (1 <= m <= n):
        raise NeumannRAError(f"need 1 <= m <= n, got m={m}, n={n}")
    if d > max_degree:
        raise DegreeTooLarge(f"degree {d} exceeds cap {max_degree}")
    if d > DEFAULT_DEGREE_CAP:
        warnings.warn(
            f"degree {d}: cost grows like 3^d * Bell(2d+2); expect long runtimes",
            RuntimeWarning,
            stacklevel=2,
        )
    if m == n:
        # The sample average over the whole population is exactly 0 by centering.
        return NeumannWeightVector(d, m, np.zeros(n))
    per_word = []
    for word in enumerate_words(d, max_degree=max(d, 4)):
        tables = _coefficient_tables(word.length, m, n)
        acc = np.zeros(n)
        for sigma in _partitions(word.length):
            c_unmasked, c_masked = tables[sigma.block_of]
            if not c_unmasked and not c_masked:
                continue
            q = quotient(word, sigma)
            if c_masked:
                acc = acc + float(c_masked) * _sigma_masked_vector(q, ctx)
            if c_unmasked:
                acc = acc + float(c_unmasked) * _sigma_unmasked_vector(word, q, ctx)
        per_word.append(float(Fraction(word.sign, m**word.length)) * acc)
    xi = np.sum(np.stack(per_word), axis=0)
    return NeumannWeightVector(d, m, xi)


def closed_form_weights_d0(m: int, ctx: GramContext) -> NeumannWeightVector:
    """Degree-0 weights in closed form: a scalar multiple of ``|x_i|^2 - p``."""
    n = ctx.n
    if n < 3:
        raise PopulationTooSmall("closed form requires n >= 3")
    if not (1 <= m <= n):
        raise NeumannRAError(f"need 1 <= m <= n, got m={m}, n={n}")
    coef = (m - 1) * (n - m) * n / (m**2 * (n - 1) * (n - 2))
    return NeumannWeightVector(0, m, coef * (ctx.gram_diag - ctx.p))


def scalar_expectation(d: int, m: int, ctx: GramContext, r: np.ndarray,
                       max_degree: int = DEFAULT_DEGREE_CAP) -> float:
    """Design expectation ``(1/n) <xi[d](m), r>`` without materializing the weights.

    The all-labels part of an avg-tagged word is constant in the unit index,
    so it enters only through the residual total (zero for population OLS
    residuals); unit-tagged words push the residual through the Gram product
    ``X (X' r)`` into a single anchor contraction.
    """
    n = ctx.n
    r = np.asarray(r, dtype=float)
    if r.shape != (n,):
        raise NeumannRAError(f"residual vector must have length {n}")
    if not (1 <= m <= n):
        raise NeumannRAError(f"need 1 <= m <= n, got m={m}, n={n}")
    if d > max_degree:
        raise DegreeTooLarge(f"degree {d} exceeds cap {max_degree}")
    if m == n:
        return 0.0
    r_total = float(r.sum())
    gram_r = ctx.apply_gram(r)
    token = ctx.new_token()
    word_terms = []
    for word in enumerate_words(d, max_degree=max(d, 4)):
        tables = _coefficient_tables(word.length, m, n)
        acc = 0.0
        for sigma in _partitions(word.length):
            c_unmasked, c_masked = tables[sigma.block_of]
            if not c_unmasked and not c_masked:
                continue
            q = quotient(word, sigma)
            if c_masked:
                masked = _sigma_masked_vector(q, ctx)
                acc += float(c_masked) * float(masked @ r)
            if c_unmasked:
                if word.chi == CHI_AVG:
                    scalar = 1.0
                    for comp in q.components:
                        mults, cross, _ = _component_parts(q, comp)
                        scalar *= _closed_component(ctx, mults, cross)
                    dot = scalar * r_total
                else:
                    dot = 1.0
                    for comp in q.components:
                        mults, cross, anchor = _component_parts(q, comp)
                        if anchor >= 0:
                            dot *= _closed_component(
                                ctx, mults, cross, anchor,
                                anchor_vec=gram_r, token=token,
                            )
                        else:
                            dot *= _closed_component(ctx, mults, cross)
                acc += float(c_unmasked) * dot
        word_terms.append(float(Fraction(word.sign, m**word.length)) * acc)
    return math.fsum(word_terms) / n
