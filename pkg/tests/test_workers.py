import numpy as np
import pytest
from numpy.testing import assert_array_equal

from modules.calculus.workers import (
    block_sizes, chunked_draw, get_thread_cap, seed_sequence, set_thread_cap,
)
from modules.errors import ConfigError


def _uniform(rng, size):
    return rng.random(size)


class TestBlocks:

    def test_sizes(self):
        assert block_sizes(250, 100) == [100, 100, 50]
        assert block_sizes(100, 100) == [100]
        assert block_sizes(7, 100) == [7]

    def test_empty_request(self):
        with pytest.raises(ConfigError):
            block_sizes(0)

    @pytest.mark.parametrize("seed", [-1, None])
    def test_bad_seed(self, seed):
        with pytest.raises(ConfigError):
            seed_sequence(seed)


class TestChunkedDraw:
    """Output depends on seed and block size, never on the thread count."""

    def test_thread_cap_does_not_change_output(self, restore_threads):
        set_thread_cap(1)
        one = chunked_draw(_uniform, 1_050, seed=4, block_size=100)
        set_thread_cap(8)
        eight = chunked_draw(_uniform, 1_050, seed=4, block_size=100)
        assert one.shape == (1_050,)
        assert_array_equal(one, eight)

    def test_block_streams_are_independent_children(self):
        out = chunked_draw(_uniform, 200, seed=9, block_size=100)
        children = np.random.SeedSequence(9).spawn(2)
        assert_array_equal(out[100:], np.random.default_rng(children[1]).random(100))

    def test_two_dimensional_blocks(self):
        out = chunked_draw(lambda rng, size: rng.random((size, 3)), 250, seed=1, block_size=100)
        assert out.shape == (250, 3)

    def test_cap_validation(self, restore_threads):
        with pytest.raises(ConfigError):
            set_thread_cap(0)
        set_thread_cap(None)
        assert get_thread_cap() is None
