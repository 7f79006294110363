"""
    stratum.history

Numpy ring buffer of time levels. Each row is one time level of a field (one value per cell) or one row of
a run's time series. The splitting loop keeps two levels of the precipitate per subdomain for the
extrapolation step; the run keeps its series of summary rows.
"""
import numpy as np

from .circular_indexes import ring_indexes, level_position


__all__ = ['UnderflowError', 'format_levels', 'LevelBuffer']


UnderflowError = ValueError


def format_levels(data, columns, dtype):
    """Return the data as a 2D array of levels. A 1D array is a single level."""
    data = np.asarray(data, dtype=dtype)
    if data.ndim == 0:
        data = data.reshape(1, 1)
    elif data.ndim == 1:
        data = data.reshape(1, -1)

    if data.shape[1] != columns:
        msg = "could not store levels of shape {:s} in a buffer of {:d} columns".format(str(data.shape), columns)
        raise ValueError(msg)
    return data
# end format_levels


class LevelBuffer(object):
    """Ring buffer of time levels.

    Args:
        maxsize (int): Number of levels kept.
        columns (int)[1]: Values per level.
        dtype (numpy.dtype)[numpy.float64]: Numpy data type for the buffer.
    """

    def __init__(self, maxsize, columns=1, dtype=np.float64):
        self._start = 0
        self._end = 0
        self._length = 0
        self._data = np.zeros(shape=(int(maxsize), int(columns)), dtype=dtype)
    # end constructor

    @classmethod
    def seeded(cls, level, maxsize=2, dtype=np.float64):
        """Return a full buffer where every level equals the given one (startup history)."""
        level = np.asarray(level, dtype=dtype).ravel()
        buffer = cls(maxsize, len(level), dtype=dtype)
        for _ in range(buffer.maxsize):
            buffer.write(level, error=False)
        return buffer

    def copy(self):
        """Return an independent buffer with the same levels."""
        other = self.__class__(self.maxsize, self.columns, dtype=self.dtype)
        other._data[:] = self._data
        other._start, other._end, other._length = self._start, self._end, self._length
        return other

    def get_data(self):
        """Return all stored levels, oldest first."""
        idxs = ring_indexes(self._start, self._length, self.maxsize)
        return self._data[idxs].copy()
    # end get_data

    def latest(self, back=0):
        """Return the level ``back`` steps older than the newest one."""
        if back < 0 or back >= self._length:
            raise UnderflowError("Level {:d} is not stored in {:s}".format(back, repr(self)))
        return self._data[level_position(self._end, back, self.maxsize)].copy()

    def write(self, data, error=True):
        """Write levels into the buffer.

        Args:
            data (numpy.array): One level (1D) or several levels (2D, oldest first).
            error (bool)[True]: Error on overflow else drop the oldest levels.

        Raises:
            ValueError: If the level width does not match the buffer columns.
            OverflowError: If error is True and there is not enough space.
        """
        data = format_levels(data, self.columns, self.dtype)
        length = data.shape[0]
        if not error and length > self.maxsize:
            data = data[-self.maxsize:]
            length = self.maxsize

        idxs = ring_indexes(self._end, length, self.maxsize)
        self._move_end(length, error)
        self._data[idxs] = data
    # end write

    def __len__(self):
        """Return the number of stored levels."""
        return self._length

    def _move_start(self, amount):
        """Move the start pointer the given amount, forgetting the oldest levels."""
        amount = min(amount, self._length)
        self._start = (self._start + amount) % self.maxsize
        self._sync_length(False)
    # end _move_start

    def _move_end(self, amount, error=True):
        """Move the end pointer the given amount.

        Raises:
            OverflowError: If error is True and the amount is > the available space.
        """
        available = self.maxsize - self._length
        if amount == 0:
            return
        elif amount > available:
            if error:
                raise OverflowError("Not enough space in the buffer " + repr(self) +
                                    " " + repr(len(self)) + " < " + repr(amount))

            # Drop the oldest levels to make it circular
            self._move_start(amount - available)

        self._end = (self._end + amount) % self.maxsize
        self._sync_length(True)
    # end _move_end

    def _sync_length(self, should_grow=True):
        """Sync the length with the start and end pointers.

        Args:
            should_grow (bool): Determines if start and end equal means full or empty.
        """
        try:
            self._length = (self._end - self._start) % self.maxsize
        except ZeroDivisionError:
            self._length = 0

        if self._length == 0 and should_grow:
            self._length = self.maxsize
    # end _sync_length

    @property
    def maxsize(self):
        """Return the number of levels the buffer can hold."""
        return len(self._data)

    @property
    def columns(self):
        """Return the number of values per level."""
        return self._data.shape[1]

    @property
    def dtype(self):
        """Return the dtype of the data."""
        return self._data.dtype
# end class LevelBuffer
