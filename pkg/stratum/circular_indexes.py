"""
Index arithmetic for ring storage of time levels.

A ring of ``maxsize`` rows holds the newest level just before the end pointer. Reading rows that run past the
last storage row wraps around to row 0.
"""
import numpy as np


__all__ = ['ring_indexes', 'level_position']


def ring_indexes(start, length, maxsize):
    """Return the storage rows for ``length`` levels starting at ``start``.

    A slice is returned when the rows are contiguous and an index array when they wrap.
    """
    if maxsize <= 0 or length <= 0:
        return slice(0, 0)
    elif length > maxsize:
        raise ValueError('cannot index {:d} levels in a ring of {:d}'.format(length, maxsize))

    start = start % maxsize
    stop = start + length
    if stop > maxsize:
        # Roll-over
        return np.concatenate((np.arange(start, maxsize), np.arange(0, stop - maxsize)))
    return slice(start, stop)
# end ring_indexes


def level_position(end, back, maxsize):
    """Return the storage row of the level ``back`` steps older than the newest one."""
    if maxsize <= 0:
        raise IndexError('empty ring has no levels')
    return (end - 1 - back) % maxsize
# end level_position
