"""Array stand-in that records every row index read from it."""

import dataclasses

import numpy as np


class TrackedArray:
    def __init__(self, array):
        self._array = np.asarray(array)
        self.rows_read: set[int] = set()
        self.full_reads = 0

    shape = property(lambda self: self._array.shape)
    dtype = property(lambda self: self._array.dtype)
    ndim = property(lambda self: self._array.ndim)

    def __len__(self):
        return len(self._array)

    def __getitem__(self, key):
        rows = key[0] if isinstance(key, tuple) else key
        self.rows_read.update(np.arange(len(self._array))[rows].reshape(-1).tolist())
        return self._array[key]

    def __array__(self, dtype=None, copy=None):
        self.full_reads += 1
        return self._array if dtype is None else self._array.astype(dtype)


def tracked(dataset):
    """Copy of ``dataset`` whose features and labels are tracked arrays."""
    return dataclasses.replace(dataset, features=TrackedArray(dataset.features),
                               labels=TrackedArray(dataset.labels))
