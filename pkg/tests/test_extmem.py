from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from superacc.core import Direction
from superacc.datasets import DatasetSpec, generate
from superacc.errors import BudgetTooSmall, IoFailure, NonFiniteInput
from superacc.extmem import ExtMemStats, MemoryBudget, iter_blocks, sum_external, sum_inmemory_stream
from superacc.oracle import oracle_sum
from superacc.parallel import sum_tree
from superacc.wire import RECORD_SIZE

finite = st.floats(allow_nan=False, allow_infinity=False)


def tight_budget(block: int, fan_in: int = 2) -> MemoryBudget:
    return MemoryBudget(2 * fan_in * block * RECORD_SIZE, block)


class TestBudget:
    def test_too_small(self):
        with pytest.raises(BudgetTooSmall):
            MemoryBudget(2 * 100 * RECORD_SIZE - 1, 100)
        with pytest.raises(BudgetTooSmall):
            MemoryBudget(10**6, 0)

    def test_fan_in(self):
        assert tight_budget(100, 4).fan_in == 4
        assert MemoryBudget(2 * 100 * RECORD_SIZE, 100).fan_in == 2


class TestStream:
    def test_no_intermediate_overflow(self):
        r = sum_inmemory_stream([1e308, 1e308, -1e308, -1e308])
        assert r.hex == "0x0000000000000000" and r.exact

    def test_single(self):
        assert sum_inmemory_stream([-2.5]).value == -2.5

    def test_generator_source(self):
        xs = generate(DatasetSpec(2, 3000, 500, 1))
        assert sum_inmemory_stream(float(x) for x in xs).bits == oracle_sum(xs).bits

    def test_iter_blocks_mixed(self):
        blocks = list(iter_blocks([1.0, 2.0, np.arange(5.0), 3.0], 2))
        assert np.concatenate(blocks).tolist() == [1.0, 2.0, 0.0, 1.0, 2.0, 3.0, 4.0, 3.0]
        assert max(b.size for b in blocks) <= 2

    def test_nonfinite(self):
        with pytest.raises(NonFiniteInput):
            sum_inmemory_stream([1.0, math.nan])
        assert sum_inmemory_stream([1.0, -math.inf], nonfinite="ieee").value == -math.inf


class TestExternal:
    def test_spills_and_merges(self, tmp_path):
        xs = generate(DatasetSpec(2, 10**5, 2000, 9))
        stats = ExtMemStats()
        r = sum_external(xs, tight_budget(4096), tmp_path, stats=stats)
        assert r.bits == oracle_sum(xs).bits == sum_tree(xs).bits
        assert stats.runs >= 8 and stats.merge_passes >= 2
        assert 0 < stats.peak_resident_bytes <= stats.limit_bytes
        assert stats.values == xs.size
        assert list(tmp_path.iterdir()) == []

    def test_keep_files(self, tmp_path):
        sum_external([1.0, 2.0], tight_budget(16), tmp_path, keep_files=True)
        assert (tmp_path / "digits.cmp").exists()

    def test_empty(self, tmp_path):
        r = sum_external([], tight_budget(16), tmp_path)
        assert r.hex == "0x0000000000000000" and r.exact and r.direction is Direction.EXACT

    def test_integer_sum(self, tmp_path):
        assert sum_external(np.ones(1000), tight_budget(64), tmp_path).value == 1000.0

    def test_cancellation(self, tmp_path):
        r = sum_external([1e308, 1e308, -1e308, -1e308], tight_budget(4), tmp_path)
        assert r.hex == "0x0000000000000000"

    def test_missing_tmpdir(self, tmp_path):
        with pytest.raises(IoFailure):
            sum_external([1.0], tight_budget(4), tmp_path / "nope")

    def test_nonfinite(self, tmp_path):
        with pytest.raises(NonFiniteInput):
            sum_external([1.0, math.inf], tight_budget(4), tmp_path)
        r = sum_external([1.0, math.inf], tight_budget(4), tmp_path, nonfinite="ieee")
        assert r.value == math.inf

    @settings(max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.lists(finite, max_size=200), st.integers(1, 16), st.integers(2, 4))
    def test_property(self, tmp_path, xs, block, fan_in):
        stats = ExtMemStats()
        r = sum_external(xs, tight_budget(block, fan_in), tmp_path, stats=stats)
        assert r.bits == oracle_sum(xs).bits
        assert stats.peak_resident_bytes <= stats.limit_bytes
