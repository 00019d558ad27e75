"""Word-indexed rooted planar trees and their leaf-height encodings.

A vertex is a tuple of positive integers: the path of child indices from the
root, which is the empty tuple.  A tree is stored as the map from each vertex
to its out-degree; the vertex set is prefix-closed and child indices are
contiguous.  Sorting vertices as Python tuples gives the planar
(depth-first) order, and the meet of two vertices is their longest common
prefix.

A tree with k leaves is encoded by the pair (l, b) where l lists the leaf
heights in planar order and b[i] is the height of the meet of leaves i and
i+1.  Such a pair comes from a tree exactly when b[i] < min(l[i], l[i+1]),
and the correspondence is a bijection.
"""

import itertools
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PlanarTree",
    "TreeShape",
    "meet",
    "is_ancestor",
    "decode_heights",
    "encode_heights",
    "decompose_first_branch",
    "compose_first_branch",
    "subtree_spanned",
    "distance_matrix",
    "enumerate_shapes",
    "count_shapes",
    "count_deficient_tuples",
    "generate_trees",
    "tree_to_string",
    "tree_from_string",
]


def meet(v, w):
    """Longest common prefix of two vertices."""
    n = 0
    for a, b in zip(v, w):
        if a != b:
            break
        n += 1
    return v[:n]


def is_ancestor(v, w):
    """True when v is a (weak) ancestor of w, i.e. a prefix of it."""
    return w[: len(v)] == v


class PlanarTree:
    """A rooted planar tree given by a prefix-closed map vertex -> out-degree."""

    __slots__ = ("degrees", "vertices", "leaves", "branch_points")

    def __init__(self, degrees):
        if not degrees:
            raise ValueError("a planar tree contains at least its root")
        degrees = {tuple(v): int(d) for v, d in degrees.items()}
        if () not in degrees:
            raise ValueError("missing root vertex")
        for v, d in degrees.items():
            if d < 0:
                raise ValueError(f"negative out-degree at {v!r}")
            if v:
                parent = v[:-1]
                if parent not in degrees:
                    raise ValueError(f"vertex {v!r} has no parent")
                if not 1 <= v[-1] <= degrees[parent]:
                    raise ValueError(f"vertex {v!r} is outside its parent's degree")
        for v, d in degrees.items():
            for i in range(1, d + 1):
                if v + (i,) not in degrees:
                    raise ValueError(f"missing child {i} of {v!r}")
        self.degrees = degrees
        self.vertices = sorted(degrees)
        self.leaves = [v for v in self.vertices if degrees[v] == 0]
        self.branch_points = [v for v in self.vertices if degrees[v] >= 2]
        # in any tree the leaf count is one more than the total excess degree
        assert len(self.leaves) == 1 + sum(
            degrees[v] - 1 for v in self.branch_points
        )

    @property
    def size(self):
        return len(self.degrees)

    @property
    def height(self):
        return max(len(v) for v in self.degrees)

    def __contains__(self, v):
        return tuple(v) in self.degrees

    def __eq__(self, other):
        return isinstance(other, PlanarTree) and self.degrees == other.degrees

    def __hash__(self):
        return hash(frozenset(self.degrees.items()))

    def __repr__(self):
        return f"PlanarTree({tree_to_string(self)!r})"


@dataclass(frozen=True)
class TreeShape:
    """Leaf heights and consecutive-meet heights of a k-leaf tree.

    Entries may be ints (an actual tree) or floats (a point of the
    continuum shape space).  The constraint b[i] < min(l[i], l[i+1]) is
    enforced either way; for k = 1 the single leaf may sit at height 0.
    """

    leaf_heights: tuple
    branch_heights: tuple

    def __post_init__(self):
        l = tuple(self.leaf_heights)
        b = tuple(self.branch_heights)
        object.__setattr__(self, "leaf_heights", l)
        object.__setattr__(self, "branch_heights", b)
        if len(l) < 1:
            raise ValueError("need at least one leaf")
        if len(b) != len(l) - 1:
            raise ValueError("need exactly k-1 meet heights for k leaves")
        if any(x < 0 for x in l) or any(x < 0 for x in b):
            raise ValueError("heights must be nonnegative")
        for i, bi in enumerate(b):
            if not bi < min(l[i], l[i + 1]):
                raise ValueError(
                    f"meet height {bi} at position {i} must be below both "
                    f"neighbouring leaf heights"
                )

    @property
    def k(self):
        return len(self.leaf_heights)

    @property
    def height(self):
        return max(self.leaf_heights)

    @property
    def is_discrete(self):
        return all(
            isinstance(x, (int, np.integer))
            for x in self.leaf_heights + self.branch_heights
        )

    def scale(self, a):
        """The shape with every height multiplied by a > 0."""
        if a <= 0:
            raise ValueError("scale factor must be positive")
        return TreeShape(
            tuple(a * x for x in self.leaf_heights),
            tuple(a * x for x in self.branch_heights),
        )

    def to_json(self):
        return json.dumps(
            {"l": list(self.leaf_heights), "b": list(self.branch_heights)}
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(tuple(data["l"]), tuple(data["b"]))


def encode_heights(tree):
    """TreeShape of a planar tree: leaf heights and consecutive meets."""
    leaves = tree.leaves
    l = tuple(len(v) for v in leaves)
    b = tuple(len(meet(u, v)) for u, v in zip(leaves, leaves[1:]))
    return TreeShape(l, b)


def decode_heights(shape):
    """The unique planar tree whose leaf-height encoding is `shape`.

    Builds the first root-to-leaf path, then glues one branch per further
    leaf onto the right-most vertex at the prescribed meet height.  That
    vertex is always the current leaf truncated at the meet height.
    """
    if not shape.is_discrete:
        raise ValueError("only integer shapes correspond to trees")
    l = shape.leaf_heights
    b = shape.branch_heights
    degrees = {}
    for j in range(l[0]):
        degrees[(1,) * j] = 1
    leaf = (1,) * l[0]
    degrees[leaf] = 0
    for bi, li in zip(b, l[1:]):
        attach = leaf[:bi]
        degrees[attach] += 1
        cur = attach + (degrees[attach],)
        for _ in range(li - bi - 1):
            degrees[cur] = 1
            cur = cur + (1,)
        degrees[cur] = 0
        leaf = cur
    return PlanarTree(degrees)


def decompose_first_branch(tree):
    """Split a multi-leaf tree at the meet of all its leaves.

    Returns (stem_length, blocks, subtrees): the height of the meet w, the
    partition of leaf positions (0-based, consecutive) by the child of w
    they sit under, and the list of subtrees hanging off w, re-rooted at
    its children.  The meet has out-degree >= 2, so there are >= 2 blocks.
    """
    leaves = tree.leaves
    if len(leaves) < 2:
        raise ValueError("decomposition needs at least two leaves")
    w = leaves[0]
    for v in leaves[1:]:
        w = meet(w, v)
    d = tree.degrees[w]
    assert d >= 2
    subtrees = []
    for i in range(1, d + 1):
        prefix = w + (i,)
        sub = {
            v[len(prefix):]: deg
            for v, deg in tree.degrees.items()
            if v[: len(prefix)] == prefix
        }
        subtrees.append(PlanarTree(sub))
    blocks = []
    at = 0
    for sub in subtrees:
        size = len(sub.leaves)
        blocks.append(list(range(at, at + size)))
        at += size
    return len(w), blocks, subtrees


def compose_first_branch(stem_length, subtrees):
    """Inverse of decompose_first_branch.

    Grafts the given subtrees (>= 2 of them) onto the top of a path with
    `stem_length` edges.
    """
    if len(subtrees) < 2:
        raise ValueError("need at least two subtrees")
    degrees = {}
    for j in range(stem_length):
        degrees[(1,) * j] = 1
    w = (1,) * stem_length
    degrees[w] = len(subtrees)
    for i, sub in enumerate(subtrees, start=1):
        for v, deg in sub.degrees.items():
            degrees[w + (i,) + v] = deg
    return PlanarTree(degrees)


def subtree_spanned(tree, vertices):
    """Subtree spanned by the root and a tuple of vertices, relabelled.

    Keeps every ancestor of every chosen vertex and renumbers child
    indices to be contiguous again.  Returns (spanned, origin, full) where
    origin maps new vertices to old ones and full is False when the
    spanned tree has fewer leaves than len(vertices), i.e. when the tuple
    contains repeats or an ancestor pair.
    """
    span = set()
    for v in vertices:
        v = tuple(v)
        if v not in tree.degrees:
            raise ValueError(f"vertex {v!r} is not in the tree")
        for j in range(len(v) + 1):
            span.add(v[:j])
    new_degrees = {}
    origin = {}
    stack = [((), ())]
    while stack:
        old, new = stack.pop()
        kids = [i for i in range(1, tree.degrees[old] + 1) if old + (i,) in span]
        new_degrees[new] = len(kids)
        origin[new] = old
        for rank, i in enumerate(kids, start=1):
            stack.append((old + (i,), new + (rank,)))
    spanned = PlanarTree(new_degrees)
    return spanned, origin, len(spanned.leaves) == len(vertices)


def distance_matrix(shape, meet_factor=2):
    """Pairwise distances between the root (row 0) and the k leaves.

    With the default meet_factor=2 this is graph distance on the tree:
    d(v_i, v_j) = l_i + l_j - 2 * min(b[i..j-1]).  meet_factor=1 gives the
    variant where the meet height is subtracted only once.
    """
    l = shape.leaf_heights
    b = shape.branch_heights
    k = len(l)
    D = np.zeros((k + 1, k + 1))
    for j in range(k):
        D[0, j + 1] = D[j + 1, 0] = l[j]
    for i in range(k):
        low = l[i]
        for j in range(i + 1, k):
            low = min(low, b[j - 1])
            D[i + 1, j + 1] = D[j + 1, i + 1] = l[i] + l[j] - meet_factor * low
    return D


def enumerate_shapes(k, R):
    """All integer k-leaf shapes with every leaf height <= R, in order.

    For k = 1 the heights 0..R each give one shape.  For k >= 2 every leaf
    height ranges over 1..R and each meet height over 0..min-1, so the
    total count is sum over l of prod_i min(l[i], l[i+1]).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if R < 0:
        raise ValueError("R must be nonnegative")
    if k == 1:
        for l0 in range(R + 1):
            yield TreeShape((l0,), ())
        return
    for l in itertools.product(range(1, R + 1), repeat=k):
        ranges = [range(min(l[i], l[i + 1])) for i in range(k - 1)]
        for b in itertools.product(*ranges):
            yield TreeShape(l, b)


def count_shapes(k, R):
    """Closed-form count of enumerate_shapes(k, R)."""
    if k == 1:
        return R + 1
    total = 0
    for l in itertools.product(range(1, R + 1), repeat=k):
        prod = 1
        for i in range(k - 1):
            prod *= min(l[i], l[i + 1])
        total += prod
    return total


def count_deficient_tuples(tree, k):
    """Number of k-tuples of vertices (repeats allowed) spanning < k leaves.

    A tuple is deficient exactly when it has a repeated vertex or contains
    an ancestor pair.
    """
    vs = tree.vertices
    count = 0
    for combo in itertools.product(vs, repeat=k):
        if len(set(combo)) < k:
            count += 1
            continue
        if any(
            is_ancestor(u, v) or is_ancestor(v, u)
            for u, v in itertools.combinations(combo, 2)
        ):
            count += 1
    return count


def generate_trees(max_height, max_leaves):
    """All planar trees with height <= max_height and <= max_leaves leaves.

    Direct recursive construction, independent of the height encoding; used
    as an oracle against decode_heights/enumerate_shapes.
    """
    cache = {}

    def upto(h):
        got = cache.get(h)
        if got is not None:
            return got
        out = [({(): 0}, 1)]
        if h > 0:
            smaller = upto(h - 1)

            def extend(chosen, budget):
                if chosen:
                    degrees = {(): len(chosen)}
                    for i, (sub, _) in enumerate(chosen, start=1):
                        for v, d in sub.items():
                            degrees[(i,) + v] = d
                    yield degrees, sum(n for _, n in chosen)
                if len(chosen) >= max_leaves:
                    return
                for sub, n in smaller:
                    if n <= budget:
                        yield from extend(chosen + [(sub, n)], budget - n)

            out = out + list(extend([], max_leaves))
        cache[h] = out
        return out

    for degrees, _ in upto(max_height):
        yield PlanarTree(degrees)


def tree_to_string(tree):
    """Canonical parenthesis string: one '(...)' per vertex, children inside."""
    out = []
    stack = [((), 0)]
    while stack:
        v, i = stack.pop()
        if i == 0:
            out.append("(")
        if i < tree.degrees[v]:
            stack.append((v, i + 1))
            stack.append((v + (i + 1,), 0))
        else:
            out.append(")")
    return "".join(out)


def tree_from_string(s):
    """Parse the canonical parenthesis string back into a PlanarTree."""
    degrees = {}
    stack = []
    parsed_root = False
    for ch in s:
        if ch == "(":
            if not stack:
                if parsed_root:
                    raise ValueError("trailing characters after the root")
                v = ()
            else:
                parent, cnt = stack[-1]
                stack[-1] = (parent, cnt + 1)
                v = parent + (cnt + 1,)
            stack.append((v, 0))
        elif ch == ")":
            if not stack:
                raise ValueError("unbalanced parentheses")
            v, cnt = stack.pop()
            degrees[v] = cnt
            if not stack:
                parsed_root = True
        else:
            raise ValueError(f"unexpected character {ch!r}")
    if stack or not parsed_root:
        raise ValueError("unbalanced parentheses")
    return PlanarTree(degrees)
