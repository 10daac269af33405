"""Exhaustive generation of unlabelled rooted trees, used as an oracle corpus."""
from functools import lru_cache


@lru_cache(maxsize=None)
def rooted_trees(n):
    """All rooted trees with ``n`` vertices as canonical nested tuples."""
    if n == 1:
        return ((),)
    return tuple(tuple(f) for f in _forests(n - 1, 0))


def _catalogue(limit):
    out = []
    for size in range(1, limit + 1):
        out.extend((size, t) for t in rooted_trees(size))
    return out


def _forests(m, start):
    # multisets of trees, total size m, drawn in nondecreasing catalogue order
    if m == 0:
        yield ()
        return
    cat = _catalogue(m)
    for k in range(start, len(cat)):
        size, t = cat[k]
        if size > m:
            break
        for rest in _forests(m - size, k):
            yield (t,) + rest


def bfs_parents(tree):
    """Breadth-first parent array of a nested-tuple tree."""
    parents = [-1]
    queue = [(tree, 0)]
    head = 0
    while head < len(queue):
        node, idx = queue[head]
        head += 1
        for child in node:
            parents.append(idx)
            queue.append((child, len(parents) - 1))
    return parents
