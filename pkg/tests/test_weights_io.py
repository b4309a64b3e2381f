"""Weight store: compute-once semantics, cache files, corruption recovery."""

import numpy as np

from neumann_ra.folding import GramContext, neumann_weights
from neumann_ra.weights_io import WeightStore, design_fingerprint

from conftest import random_design


class TestFingerprint:
    def test_deterministic(self):
        design = random_design(10, 2, 0)
        assert design_fingerprint(design) == design_fingerprint(design)

    def test_sensitive_to_entries(self):
        a = random_design(10, 2, 0)
        b = random_design(10, 2, 1)
        assert design_fingerprint(a) != design_fingerprint(b)


class TestWeightStore:
    def test_second_call_hits_memory(self, tmp_path):
        design = random_design(8, 2, 2)
        store = WeightStore(tmp_path)
        first = store.get_or_compute(design, 4, 1)
        second = store.get_or_compute(design, 4, 1)
        assert store.computations == 1
        assert second is first

    def test_distinct_sample_sizes_are_distinct_entries(self, tmp_path):
        design = random_design(8, 2, 3)
        store = WeightStore(tmp_path)
        a = store.get_or_compute(design, 3, 0)
        b = store.get_or_compute(design, 5, 0)
        assert store.computations == 2
        assert not np.array_equal(a.xi, b.xi)

    def test_disk_round_trip_bit_exact(self, tmp_path):
        design = random_design(9, 2, 4)
        store = WeightStore(tmp_path)
        vector = store.get_or_compute(design, 4, 2)
        fresh = WeightStore(tmp_path)
        loaded = fresh.get_or_compute(design, 4, 2)
        assert fresh.computations == 0
        assert loaded.xi.tobytes() == vector.xi.tobytes()

    def test_truncated_file_recomputed(self, tmp_path):
        design = random_design(8, 2, 5)
        store = WeightStore(tmp_path)
        vector = store.get_or_compute(design, 4, 1)
        (cache_file,) = tmp_path.glob("xi_*.bin")
        cache_file.write_bytes(cache_file.read_bytes()[:-16])
        fresh = WeightStore(tmp_path)
        recomputed = fresh.get_or_compute(design, 4, 1)
        assert fresh.computations == 1
        np.testing.assert_array_equal(recomputed.xi, vector.xi)
        # The overwritten file is whole again.
        again = WeightStore(tmp_path)
        assert again.get_or_compute(design, 4, 1).xi.tobytes() == vector.xi.tobytes()
        assert again.computations == 0

    def test_mismatched_design_recomputed(self, tmp_path):
        a = random_design(8, 2, 6)
        b = random_design(8, 2, 7)
        store = WeightStore(tmp_path)
        store.get_or_compute(a, 4, 1)
        store.get_or_compute(b, 4, 1)
        assert store.computations == 2

    def test_memory_only_store(self):
        design = random_design(8, 2, 8)
        store = WeightStore(None)
        vector = store.get_or_compute(design, 4, 0)
        expected = neumann_weights(0, 4, GramContext(design))
        np.testing.assert_array_equal(vector.xi, expected.xi)
