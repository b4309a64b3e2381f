"""Words, position graphs, partitions, Mobius weights, quotients, class weights."""

from fractions import Fraction

import pytest

from neumann_ra.combinatorics import (
    CHI_AVG,
    CHI_UNIT,
    SetPartition,
    bell_number,
    coarsen,
    enumerate_partitions,
    enumerate_words,
    falling_factorial,
    make_word,
    mobius_weight,
    quotient,
    srswor_class_weights,
)
from neumann_ra.errors import BaseMismatch, DegreeTooLarge, SizeTooLarge


class TestWords:
    def test_counts(self):
        for d in range(4):
            assert len(enumerate_words(d)) == 2 * 3**d

    def test_degree_cap(self):
        with pytest.raises(DegreeTooLarge):
            enumerate_words(5)

    def test_degree_zero(self):
        unit, avg = enumerate_words(0)
        assert (unit.chi, unit.sign, unit.length, unit.edges) == (CHI_UNIT, 1, 1, ())
        assert (avg.chi, avg.sign, avg.length, avg.edges) == (CHI_AVG, -1, 2, ((0, 1),))

    def test_degree_one_table(self):
        # (symbols, tag) -> (sign, length, edges)
        expected = {
            (("I",), CHI_UNIT): (1, 1, ()),
            (("I",), CHI_AVG): (-1, 2, ((0, 1),)),
            (("U",), CHI_UNIT): (-1, 2, ((0, 1),)),
            (("U",), CHI_AVG): (1, 3, ((0, 1), (1, 2))),
            (("V",), CHI_UNIT): (1, 3, ((0, 1),)),
            (("V",), CHI_AVG): (-1, 4, ((0, 1), (2, 3))),
        }
        for word in enumerate_words(1):
            sign, length, edges = expected[(word.phi, word.chi)]
            assert word.sign == sign
            assert word.length == length
            assert word.edges == edges

    def test_vertex_count_formula(self):
        for d in range(4):
            for word in enumerate_words(d):
                n_u = word.phi.count("U")
                n_v = word.phi.count("V")
                assert word.length == 1 + n_u + 2 * n_v + (word.chi == CHI_AVG)
                assert len(word.edges) == n_u + n_v + (word.chi == CHI_AVG)
                used = {v for e in word.edges for v in e}
                assert used <= set(range(word.length))


class TestPartitions:
    def test_counts_match_bell_numbers(self):
        for size, count in [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52)]:
            parts = enumerate_partitions(size)
            assert len(parts) == count == bell_number(size)
            assert len(set(parts)) == count

    def test_size_two(self):
        parts = {p.blocks() for p in enumerate_partitions(2)}
        assert parts == {((0,), (1,)), ((0, 1),)}

    def test_cap(self):
        with pytest.raises(SizeTooLarge):
            enumerate_partitions(11)

    def test_blocks_ordered_by_minima(self):
        for pi in enumerate_partitions(4):
            minima = [min(b) for b in pi.blocks()]
            assert minima == sorted(minima)

    def test_from_blocks_round_trip(self):
        pi = SetPartition.from_blocks([(1,), (0, 2), (3,)], 4)
        assert pi.blocks() == ((0, 2), (1,), (3,))


class TestMobius:
    def test_discrete_partition(self):
        assert mobius_weight(SetPartition((0, 1, 2))) == 1

    def test_single_blocks(self):
        assert mobius_weight(SetPartition((0, 0, 0))) == 2
        assert mobius_weight(SetPartition((0, 0, 0, 0))) == -6

    def test_inversion_identity(self):
        # sum over rho of lam(rho) n^{|rho|} equals the number of injective maps.
        for ell in range(1, 6):
            for n in range(1, 9):
                total = sum(
                    mobius_weight(rho) * n**rho.num_blocks
                    for rho in enumerate_partitions(ell)
                )
                assert total == falling_factorial(n, ell)


class TestCoarsen:
    def test_discrete_is_identity(self):
        pi = SetPartition((0, 1, 0, 2))
        rho = SetPartition((0, 1, 2))
        assert coarsen(pi, rho) == pi

    def test_single_block(self):
        pi = SetPartition((0, 1, 0, 2))
        rho = SetPartition((0, 0, 0))
        assert coarsen(pi, rho).blocks() == ((0, 1, 2, 3),)

    def test_worked_example(self):
        pi = SetPartition.from_blocks([(0, 2), (1,), (3,)], 4)
        rho = SetPartition.from_blocks([(0, 1), (2,)], 3)
        assert coarsen(pi, rho).blocks() == ((0, 1, 2), (3,))

    def test_base_mismatch(self):
        with pytest.raises(BaseMismatch):
            coarsen(SetPartition((0, 1)), SetPartition((0, 1, 2)))

    def test_output_refines_upward(self):
        for pi in enumerate_partitions(4):
            for rho in enumerate_partitions(pi.num_blocks):
                merged = coarsen(pi, rho)
                for block in pi.blocks():
                    ids = {merged.block_of[k] for k in block}
                    assert len(ids) == 1

    def test_associative_with_nested_compositions(self):
        for pi in enumerate_partitions(4):
            for rho1 in enumerate_partitions(pi.num_blocks):
                for rho2 in enumerate_partitions(rho1.num_blocks):
                    left = coarsen(coarsen(pi, rho1), rho2)
                    right = coarsen(pi, coarsen(rho1, rho2))
                    assert left == right


class TestQuotient:
    def test_merged_pair_becomes_self_edge(self):
        word = make_word(("U",), CHI_UNIT)
        q = quotient(word, SetPartition((0, 0)))
        assert q.num_blocks == 1
        assert q.self_mult == (1,)
        assert q.cross_mult == ()
        assert q.anchor_block == 0

    def test_split_pair_is_cross_edge(self):
        word = make_word(("U",), CHI_UNIT)
        q = quotient(word, SetPartition((0, 1)))
        assert q.self_mult == (0, 0)
        assert q.cross_mult == ((0, 1, 1),)
        assert q.anchor_block == 1

    def test_edge_multiplicity_conserved(self):
        word = make_word(("V",), CHI_AVG)
        for pi in enumerate_partitions(word.length):
            q = quotient(word, pi)
            assert q.total_edge_count() == 2
            assert q.anchor_block is None

    def test_components_partition_blocks(self):
        word = make_word(("U", "V"), CHI_AVG)
        for pi in enumerate_partitions(word.length):
            q = quotient(word, pi)
            seen = sorted(v for comp in q.components for v in comp)
            assert seen == list(range(q.num_blocks))

    def test_base_mismatch(self):
        with pytest.raises(BaseMismatch):
            quotient(make_word(("U",), CHI_UNIT), SetPartition((0, 1, 2)))


class TestClassWeights:
    def test_worked_case(self):
        psi0, psi1 = srswor_class_weights(2, 3, 5)
        assert psi0 == Fraction(1, 6)
        assert psi1 == Fraction(1, 2)

    def test_single_block(self):
        for m, n in [(2, 6), (4, 9)]:
            psi0, psi1 = srswor_class_weights(1, m, n)
            assert psi0 == Fraction(m - 1, n - 1)
            assert psi1 == 1

    def test_zero_factor_gives_exact_zero(self):
        m, n = 4, 9
        psi0, psi1 = srswor_class_weights(m, m, n)
        assert psi0 == 0
        assert psi1 == Fraction(falling_factorial(m - 1, m - 1), falling_factorial(n - 1, m - 1))
