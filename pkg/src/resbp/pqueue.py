"""Indexed binary max-heap over integer keys with FIFO tie-breaking.

The heap state is a tuple of flat arrays so that the numba scheduler loops
and the Python ``IndexedPriorityQueue`` wrapper share one implementation.
Among equal priorities the entry with the smaller insertion sequence number
comes out first.
"""

from collections import namedtuple

import numba
import numpy as np

njit = numba.njit(cache=True, nogil=True)

HeapArrays = namedtuple("HeapArrays", ["heap", "pos", "pri", "seq", "meta"])
# meta[0] = size, meta[1] = next sequence number


def new_heap(capacity):
    return HeapArrays(
        np.zeros(capacity, np.int64),
        np.full(capacity, -1, np.int64),
        np.zeros(capacity, np.float64),
        np.zeros(capacity, np.int64),
        np.zeros(2, np.int64),
    )


@njit
def _before(h, a, b):
    pa = h.pri[a]
    pb = h.pri[b]
    return pa > pb or (pa == pb and h.seq[a] < h.seq[b])


@njit
def _sift_up(h, i):
    key = h.heap[i]
    while i > 0:
        parent = (i - 1) >> 1
        other = h.heap[parent]
        if not _before(h, key, other):
            break
        h.heap[i] = other
        h.pos[other] = i
        i = parent
    h.heap[i] = key
    h.pos[key] = i


@njit
def _sift_down(h, i):
    n = h.meta[0]
    key = h.heap[i]
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        right = child + 1
        if right < n and _before(h, h.heap[right], h.heap[child]):
            child = right
        other = h.heap[child]
        if not _before(h, other, key):
            break
        h.heap[i] = other
        h.pos[other] = i
        i = child
    h.heap[i] = key
    h.pos[key] = i


@njit
def heap_contains(h, key):
    return h.pos[key] >= 0


@njit
def heap_push(h, key, priority):
    """Insert ``key``, or re-insert it with a fresh sequence number."""
    h.pri[key] = priority
    h.seq[key] = h.meta[1]
    h.meta[1] += 1
    i = h.pos[key]
    if i < 0:
        i = h.meta[0]
        h.meta[0] += 1
        h.heap[i] = key
        h.pos[key] = i
        _sift_up(h, i)
    else:
        _sift_up(h, i)
        _sift_down(h, h.pos[key])


@njit
def heap_change_priority(h, key, priority):
    """Move an existing key, keeping its sequence number."""
    h.pri[key] = priority
    i = h.pos[key]
    _sift_up(h, i)
    _sift_down(h, h.pos[key])


@njit
def heap_remove(h, key):
    i = h.pos[key]
    last = h.meta[0] - 1
    h.meta[0] = last
    h.pos[key] = -1
    if i == last:
        return
    moved = h.heap[last]
    h.heap[i] = moved
    h.pos[moved] = i
    _sift_up(h, i)
    _sift_down(h, h.pos[moved])


@njit
def heap_peek_priority(h):
    if h.meta[0] == 0:
        return -np.inf
    return h.pri[h.heap[0]]


@njit
def heap_pop(h):
    key = h.heap[0]
    heap_remove(h, key)
    return key


class IndexedPriorityQueue:
    """Max-priority queue over keys ``0..capacity-1``.

    >>> q = IndexedPriorityQueue(4)
    >>> q.push(2, 1.0); q.push(0, 1.0); q.push(3, 5.0)
    >>> q.pop(), q.pop(), q.pop()
    ((3, 5.0), (2, 1.0), (0, 1.0))
    """

    def __init__(self, capacity):
        self.arrays = new_heap(capacity)

    def __len__(self):
        return int(self.arrays.meta[0])

    def __contains__(self, key):
        return 0 <= key < len(self.arrays.pos) and self.arrays.pos[key] >= 0

    def _check(self, key):
        if not 0 <= key < len(self.arrays.pos):
            raise IndexError(f"key {key} outside 0..{len(self.arrays.pos) - 1}")

    def push(self, key, priority):
        """Insert, or replace the pending entry of ``key`` as a new insertion."""
        self._check(key)
        heap_push(self.arrays, key, float(priority))

    def change_priority(self, key, priority):
        if key not in self:
            raise KeyError(key)
        heap_change_priority(self.arrays, key, float(priority))

    def remove(self, key):
        if key not in self:
            raise KeyError(key)
        heap_remove(self.arrays, key)

    def priority(self, key):
        if key not in self:
            raise KeyError(key)
        return float(self.arrays.pri[key])

    def peek(self):
        if not len(self):
            raise IndexError("peek at an empty queue")
        key = int(self.arrays.heap[0])
        return key, float(self.arrays.pri[key])

    def pop(self):
        if not len(self):
            raise IndexError("pop from an empty queue")
        key, pri = self.peek()
        heap_pop(self.arrays)
        return key, pri
