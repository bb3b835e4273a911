"""Arithmetic indexing of the r-regular rooted tree truncated at depth n.

Vertices are labelled in breadth order: the root is 0, and the children of
vertex v are r*v + 1, ..., r*v + r.  Generation g occupies the contiguous
index block [(r^g - 1)/(r - 1), (r^{g+1} - 1)/(r - 1)).  No adjacency is
ever materialised; neighbours are computed arithmetically.
"""

from __future__ import annotations

import numpy as np

# Vertex labels must fit in a signed 64-bit integer.
MAX_VERTEX_COUNT = 2**63 - 1


def tree_vertex_count(r: int, depth: int) -> int:
    """Number of vertices of the r-ary tree truncated at `depth`."""
    return (r ** (depth + 1) - 1) // (r - 1)


class TreeTopology:
    """Truncated r-regular rooted tree B_n with arithmetic vertex indexing."""

    def __init__(self, r: int, depth: int):
        if r < 2:
            raise ValueError(f"branching factor r must be >= 2, got {r}")
        if depth < 0:
            raise ValueError(f"depth must be >= 0, got {depth}")
        count = tree_vertex_count(r, depth)
        if count > MAX_VERTEX_COUNT:
            raise ValueError(
                f"tree with r={r}, depth={depth} has {count} vertices, "
                f"exceeding the 63-bit label limit"
            )
        self.r = r
        self.depth = depth
        self.vertex_count = count
        # layer_starts[g] = first index of generation g; sentinel at the end.
        self._starts = tuple(
            (r**g - 1) // (r - 1) for g in range(depth + 2)
        )

    def __repr__(self) -> str:
        return f"TreeTopology(r={self.r}, depth={self.depth})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TreeTopology)
            and self.r == other.r
            and self.depth == other.depth
        )

    def __hash__(self) -> int:
        return hash((self.r, self.depth))

    def layer_start(self, g: int) -> int:
        if not 0 <= g <= self.depth + 1:
            raise ValueError(f"generation {g} outside [0, {self.depth + 1}]")
        return self._starts[g]

    def layer_size(self, g: int) -> int:
        if not 0 <= g <= self.depth:
            raise ValueError(f"generation {g} outside [0, {self.depth}]")
        return self.r**g

    def _check_vertex(self, v: int) -> None:
        if not 0 <= v < self.vertex_count:
            raise ValueError(f"vertex {v} outside [0, {self.vertex_count})")

    def generation(self, v: int) -> int:
        """Generation (distance from the root) of vertex v."""
        self._check_vertex(v)
        g = 0
        while self._starts[g + 1] <= v:
            g += 1
        return g

    def parent(self, v: int) -> int:
        self._check_vertex(v)
        if v == 0:
            raise ValueError("the root has no parent")
        return (v - 1) // self.r

    def children(self, v: int) -> list[int]:
        """Children of v inside the truncation (empty at the last layer)."""
        self._check_vertex(v)
        if v >= self._starts[self.depth]:
            return []
        base = self.r * v
        return [base + c for c in range(1, self.r + 1)]

    def neighbors(self, v: int) -> list[int]:
        out = [] if v == 0 else [(v - 1) // self.r]
        out.extend(self.children(v))
        return out

    def is_boundary(self, v: int) -> bool:
        """True when v lies in the last retained generation."""
        self._check_vertex(v)
        return v >= self._starts[self.depth]

    def is_ancestor(self, u: int, v: int) -> bool:
        """True when u is an ancestor of v (u == v counts)."""
        self._check_vertex(u)
        self._check_vertex(v)
        while v > u:
            v = (v - 1) // self.r
        return v == u

    def generations_array(self) -> np.ndarray:
        """Per-vertex generation labels as a uint8 array (depth <= 62)."""
        gens = np.empty(self.vertex_count, dtype=np.uint8)
        for g in range(self.depth + 1):
            gens[self._starts[g] : self._starts[g + 1]] = g
        return gens

    def layer_starts_array(self) -> np.ndarray:
        return np.array(self._starts, dtype=np.int64)
