from typing import Callable, Hashable, Iterable


class UnionFind:
    """Disjoint sets over hashable items, with path compression and union by size."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self.parent = {}
        self.size = {}
        for item in items:
            self.add(item)

    def add(self, item):
        if item not in self.parent:
            self.parent[item] = item
            self.size[item] = 1

    def __contains__(self, item):
        return item in self.parent

    def __len__(self):
        return len(self.parent)

    def find(self, item):
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self):
        """Return groups as lists, members in insertion order."""
        out = {}
        for item in self.parent:
            out.setdefault(self.find(item), []).append(item)
        return list(out.values())

    def copy(self):
        uf = UnionFind()
        uf.parent = dict(self.parent)
        uf.size = dict(self.size)
        return uf


def canonical_groups(uf: UnionFind, key: Callable) -> dict:
    """Map each group's representative to its sorted member list.

    The representative is the member minimising ``key``; the root chosen by
    the union-find is irrelevant, so the result does not depend on the order
    in which unions happened.
    """
    out = {}
    for members in uf.groups():
        members = sorted(members, key=key)
        out[members[0]] = members
    return dict(sorted(out.items(), key=lambda kv: key(kv[0])))
