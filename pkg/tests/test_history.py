import unittest

import numpy as np

import stratum
from stratum.history import LevelBuffer, format_levels


class TestLevelBuffer(unittest.TestCase):

    def setUp(self):
        self.maxsize = 5
        self.columns = 3
        self.buffer = LevelBuffer(self.maxsize, self.columns)
        self.levels = np.arange(3 * self.maxsize, dtype=np.float64).reshape(-1, self.columns)

    def test_control(self):
        self.assertEqual(self.buffer.maxsize, self.maxsize)
        self.assertEqual(self.buffer.columns, self.columns)
        self.assertEqual(self.buffer.dtype, np.float64)
        self.assertEqual(len(self.buffer), 0)

    def test_write(self):
        self.buffer.write(self.levels[0])
        self.assertEqual(len(self.buffer), 1)
        self.buffer.write(self.levels[1:4])
        self.assertEqual(len(self.buffer), 4)
        self.assertTrue(np.all(self.buffer.get_data() == self.levels[:4]))

        with self.assertRaises(OverflowError):
            self.buffer.write(self.levels[:2])
        self.assertEqual(len(self.buffer), 4, 'a failed write must not move the pointers')

        with self.assertRaises(ValueError):
            self.buffer.write(np.zeros(self.columns + 1))

    def test_write_overwrite(self):
        buffer = LevelBuffer(3, 1)
        buffer.write(np.array([9.0]), error=False)
        assert len(buffer) == 1, 'a 1D write is a single level'

        levels = np.arange(7, dtype=np.float64).reshape(-1, 1)
        buffer.write(levels, error=False)
        assert len(buffer) == 3
        assert np.all(buffer.get_data() == levels[-3:]), 'oldest levels should be dropped'

    def test_latest(self):
        for level in self.levels:
            self.buffer.write(level, error=False)
        self.assertTrue(np.all(self.buffer.latest() == self.levels[-1]))
        self.assertTrue(np.all(self.buffer.latest(1) == self.levels[-2]))
        self.assertTrue(np.all(self.buffer.latest(self.maxsize - 1) == self.levels[-self.maxsize]))

        with self.assertRaises(stratum.UnderflowError):
            self.buffer.latest(self.maxsize)
        with self.assertRaises(ValueError):
            self.buffer.latest(-1)

        value = self.buffer.latest()
        value[:] = -1
        self.assertFalse(np.any(self.buffer.latest() == -1), 'latest must return a copy')

    def test_seeded(self):
        buffer = LevelBuffer.seeded(np.array([1.0, 2.0]))
        self.assertEqual(len(buffer), 2)
        self.assertTrue(np.all(buffer.latest() == buffer.latest(1)))

        buffer.write(np.array([3.0, 4.0]), error=False)
        self.assertTrue(np.all(buffer.latest() == [3.0, 4.0]))
        self.assertTrue(np.all(buffer.latest(1) == [1.0, 2.0]))

    def test_copy(self):
        self.buffer.write(self.levels[:3])
        other = self.buffer.copy()
        other.write(self.levels[3])
        self.assertEqual(len(self.buffer), 3)
        self.assertEqual(len(other), 4)
        self.assertTrue(np.all(other.get_data()[:3] == self.buffer.get_data()))

    def test_write_wraps(self):
        more = self.levels + 100
        expected = np.vstack((self.levels[2:4], more[:3]))
        self.buffer.write(self.levels[:4])
        self.buffer.write(more[:3], error=False)
        self.assertEqual(len(self.buffer), self.maxsize)
        self.assertTrue(np.all(self.buffer.get_data() == expected), 'writes wrap around the storage')
        self.assertTrue(np.all(self.buffer.latest(self.maxsize - 1) == self.levels[2]))

        with self.assertRaises(OverflowError):
            self.buffer.write(self.levels[0])
        self.assertTrue(np.all(self.buffer.get_data() == expected))
# end class TestLevelBuffer


def test_format_levels():
    assert format_levels(3.0, 1, np.float64).shape == (1, 1)
    assert format_levels(np.arange(4), 4, np.float64).shape == (1, 4)
    assert format_levels(np.zeros((2, 4)), 4, np.float64).shape == (2, 4)


if __name__ == '__main__':
    unittest.main()
