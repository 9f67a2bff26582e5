import pytest
from hypothesis import given, settings, strategies as st

from resbp.pqueue import IndexedPriorityQueue

CAP = 12

ops = st.lists(st.one_of(
    st.tuples(st.just("push"), st.integers(0, CAP - 1), st.sampled_from([0.0, 0.5, 1.0, 2.5])),
    st.tuples(st.just("change"), st.integers(0, CAP - 1), st.sampled_from([0.0, 0.5, 1.0, 3.0])),
    st.tuples(st.just("remove"), st.integers(0, CAP - 1), st.just(0.0)),
    st.tuples(st.just("pop"), st.just(0), st.just(0.0)),
), max_size=80)


class Reference:
    """Dict of key -> (priority, sequence); max priority, then oldest sequence."""

    def __init__(self):
        self.items = {}
        self.seq = 0

    def push(self, k, p):
        self.items[k] = (p, self.seq)
        self.seq += 1

    def change(self, k, p):
        self.items[k] = (p, self.items[k][1])

    def best(self):
        return min(self.items, key=lambda k: (-self.items[k][0], self.items[k][1]))


@settings(max_examples=300, deadline=None)
@given(ops)
def test_matches_reference_model(seq):
    q, ref = IndexedPriorityQueue(CAP), Reference()
    for op, k, p in seq:
        if op == "push":
            q.push(k, p)
            ref.push(k, p)
        elif op == "change":
            if k in ref.items:
                q.change_priority(k, p)
                ref.change(k, p)
            else:
                with pytest.raises(KeyError):
                    q.change_priority(k, p)
        elif op == "remove":
            if k in ref.items:
                q.remove(k)
                del ref.items[k]
            else:
                with pytest.raises(KeyError):
                    q.remove(k)
        elif ref.items:
            best = ref.best()
            assert q.peek() == (best, ref.items[best][0])
            assert q.pop() == (best, ref.items.pop(best)[0])
        assert len(q) == len(ref.items)
        for key in range(CAP):
            assert (key in q) == (key in ref.items)
    while ref.items:
        best = ref.best()
        assert q.pop() == (best, ref.items.pop(best)[0])
    assert len(q) == 0


def test_fifo_tie_break():
    q = IndexedPriorityQueue(5)
    for k in (3, 1, 4, 0):
        q.push(k, 1.0)
    q.push(1, 1.0)  # reinserting moves 1 behind the others
    assert [q.pop()[0] for _ in range(4)] == [3, 4, 0, 1]


def test_change_priority_keeps_position_in_ties():
    q = IndexedPriorityQueue(3)
    q.push(0, 1.0)
    q.push(1, 2.0)
    q.change_priority(1, 1.0)
    assert q.pop()[0] == 0


def test_empty_and_bounds():
    q = IndexedPriorityQueue(2)
    with pytest.raises(IndexError):
        q.pop()
    with pytest.raises(IndexError):
        q.peek()
    with pytest.raises(IndexError):
        q.push(2, 1.0)
    q.push(0, 1.0)
    assert q.priority(0) == 1.0
