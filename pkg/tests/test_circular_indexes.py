import numpy as np
import pytest

from stratum.circular_indexes import ring_indexes, level_position


def test_ring_indexes():
    assert ring_indexes(0, 10, 100) == slice(0, 10)  # Slice
    assert ring_indexes(0, 1000, 1000) == slice(0, 1000)  # Slice
    assert ring_indexes(105, 3, 100) == slice(5, 8), 'start should wrap into the ring'

    idxs = ring_indexes(5, 10, 12)
    assert np.all(idxs == [5, 6, 7, 8, 9, 10, 11, 0, 1, 2]), 'Incorrect roll-over ' + str(idxs)

    idxs = ring_indexes(700, 1000, 1000)
    assert len(idxs) == 1000
    assert idxs[0] == 700 and idxs[299] == 999 and idxs[300] == 0


def test_ring_indexes_empty():
    assert ring_indexes(3, 0, 10) == slice(0, 0)
    assert ring_indexes(0, 4, 0) == slice(0, 0)

    with pytest.raises(ValueError):
        ring_indexes(0, 11, 10)


def test_level_position():
    assert level_position(3, 0, 5) == 2, 'newest level sits before the end pointer'
    assert level_position(3, 2, 5) == 0
    assert level_position(0, 0, 5) == 4, 'end pointer at 0 wraps to the last row'
    assert level_position(1, 1, 2) == 1

    with pytest.raises(IndexError):
        level_position(0, 0, 0)


if __name__ == '__main__':
    test_ring_indexes()
    test_ring_indexes_empty()
    test_level_position()
    print('All tests finished successfully!')
