"""Finite rooted measured metric spaces with marks, and their moment statistics.

A space is a finite point set with a distinguished root, a pseudo-distance
matrix, a nonnegative mass per point and an optional mark per point.  The
k-th monomial statistic of a test function phi sums, over all k-tuples of
points drawn with repetition, the product of masses times
phi(distance matrix including the root row, marks).  Restriction
operators zero out mass rather than dropping points, which keeps monomial
identities exact in floating point.
"""

import itertools
import json

import numpy as np

__all__ = [
    "FiniteMmmSpace",
    "tree_to_mmm",
    "generation_slice",
    "monomial",
    "restrict_ball",
    "restrict_height",
    "restrict_lower_mass",
]

_TRIANGLE_CHECK_LIMIT = 300


class FiniteMmmSpace:
    """Finite rooted mark-measured metric space.

    Parameters
    ----------
    points : sequence of str labels
    root : int index of the root point
    dist : (n, n) array-like, symmetric, zero diagonal, nonnegative.
        Triangle inequality is verified for spaces up to
        300 points and trusted beyond that.
    mass : (n,) nonnegative weights; the root may carry zero mass.
    mark : optional sequence of labels (or None entries).
    """

    def __init__(self, points, root, dist, mass, mark=None):
        self.points = [str(p) for p in points]
        n = len(self.points)
        dist = np.asarray(dist, dtype=float)
        if dist.shape != (n, n):
            raise ValueError("distance matrix shape does not match points")
        if not np.allclose(dist, dist.T, atol=1e-9):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.abs(np.diag(dist)) > 1e-12):
            raise ValueError("distance matrix must have zero diagonal")
        if np.any(dist < 0):
            raise ValueError("distances must be nonnegative")
        if n <= _TRIANGLE_CHECK_LIMIT:
            for p in range(n):
                if np.any(dist > dist[:, p][:, None] + dist[p, :][None, :] + 1e-9):
                    raise ValueError("triangle inequality fails")
        mass = np.asarray(mass, dtype=float)
        if mass.shape != (n,) or np.any(mass < 0):
            raise ValueError("mass must be a nonnegative vector over points")
        if not 0 <= root < n:
            raise ValueError("root index out of range")
        self.root = int(root)
        self.dist = dist
        self.mass = mass
        self.mark = list(mark) if mark is not None else [None] * n

    @property
    def size(self):
        return len(self.points)

    def support(self):
        """Indices of points with positive mass."""
        return np.flatnonzero(self.mass > 0)

    def to_json(self):
        return json.dumps(
            {
                "points": self.points,
                "root": self.root,
                "dist": [float(v) for v in self.dist.reshape(-1)],
                "mass": [float(v) for v in self.mass],
                "mark": self.mark,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        n = len(data["points"])
        dist = np.array(data["dist"], dtype=float).reshape(n, n)
        return cls(data["points"], data["root"], dist, data["mass"], data["mark"])


def tree_to_mmm(marked_tree, edge_scale=1.0, mass_scale=1.0):
    """The whole vertex set as a space: graph distance times edge_scale, one
    mass_scale of mass per vertex, marks carried over."""
    tree = marked_tree.tree
    vs = tree.vertices
    n = len(vs)
    depth = np.array([len(v) for v in vs], dtype=float)
    dist = np.zeros((n, n))
    for i in range(n):
        vi = vs[i]
        for j in range(i + 1, n):
            vj = vs[j]
            m = 0
            for a, b in zip(vi, vj):
                if a != b:
                    break
                m += 1
            d = edge_scale * (depth[i] + depth[j] - 2.0 * m)
            dist[i, j] = dist[j, i] = d
    labels = [".".join(map(str, v)) for v in vs]
    mass = np.full(n, float(mass_scale))
    marks = [marked_tree.marks[v] for v in vs]
    return FiniteMmmSpace(labels, 0, dist, mass, marks)


def generation_slice(marked_tree, n, mass_scale=1.0):
    """Generation-n vertices at mutual distance (2 (n - meet height)) / n.

    The root is kept as an extra zero-mass point at distance 1 from every
    generation-n vertex.  An empty generation gives the root alone.
    """
    tree = marked_tree.tree
    gen = [v for v in tree.vertices if len(v) == n]
    m = len(gen)
    dist = np.zeros((m + 1, m + 1))
    for i in range(m):
        dist[0, i + 1] = dist[i + 1, 0] = 1.0
        for j in range(i + 1, m):
            mt = 0
            for a, b in zip(gen[i], gen[j]):
                if a != b:
                    break
                mt += 1
            d = 2.0 * (n - mt) / n
            dist[i + 1, j + 1] = dist[j + 1, i + 1] = d
    labels = ["root"] + [".".join(map(str, v)) for v in gen]
    mass = np.concatenate([[0.0], np.full(m, float(mass_scale))])
    marks = [marked_tree.marks[()]] + [marked_tree.marks[v] for v in gen]
    return FiniteMmmSpace(labels, 0, dist, mass, marks)


def monomial(space, k, phi, cap=2_000_000, n_sub=64, rng=None):
    """k-th monomial statistic: sum over point tuples (with repetition) of
    the mass product times phi(D, marks).

    phi(D, marks) sees the (k+1) x (k+1) distance matrix whose row 0 is
    the root and a k-tuple of marks.  Exhaustive while the tuple count is
    at most `cap`; beyond that, stratified subsampling over the first
    coordinate with n_sub draws per point.  Returns (value, stderr) with
    stderr 0.0 in the exhaustive case.
    """
    support = space.support()
    ns = len(support)
    if ns == 0:
        return 0.0, 0.0
    dist = space.dist
    mass = space.mass
    mark = space.mark
    root = space.root

    def build(ids):
        D = np.zeros((k + 1, k + 1))
        for a in range(k):
            D[0, a + 1] = D[a + 1, 0] = dist[root, ids[a]]
            for b in range(a + 1, k):
                D[a + 1, b + 1] = D[b + 1, a + 1] = dist[ids[a], ids[b]]
        return D

    if ns**k <= cap:
        total = 0.0
        for ids in itertools.product(support, repeat=k):
            w = 1.0
            for i in ids:
                w *= mass[i]
            total += w * phi(build(ids), tuple(mark[i] for i in ids))
        return float(total), 0.0

    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    weights = mass[support]
    total_mass = float(weights.sum())
    probs = weights / total_mass
    value = 0.0
    var = 0.0
    for lead in support:
        draws = rng.choice(support, size=(n_sub, k - 1), p=probs)
        vals = np.empty(n_sub)
        for t in range(n_sub):
            ids = (lead,) + tuple(draws[t])
            vals[t] = phi(build(ids), tuple(mark[i] for i in ids))
        scale = float(mass[lead]) * total_mass ** (k - 1)
        value += scale * float(vals.mean())
        var += scale**2 * float(vals.var(ddof=1)) / n_sub
    return float(value), float(np.sqrt(var))


def restrict_ball(space, center, radius):
    """Zero the mass of every point outside the closed ball around `center`.

    Points and distances are kept, so monomials of the restricted space
    equal monomials of the original with the ball indicator folded into
    phi, with identical floating-point arithmetic.
    """
    keep = space.dist[center] <= radius
    return FiniteMmmSpace(
        space.points,
        space.root,
        space.dist,
        np.where(keep, space.mass, 0.0),
        space.mark,
    )


def restrict_height(space, radius):
    """Closed ball around the root."""
    return restrict_ball(space, space.root, radius)


def restrict_lower_mass(space, delta, threshold):
    """Keep mass only where the closed delta-ball carries at least `threshold`."""
    ball_mass = (space.dist <= delta) @ space.mass
    keep = ball_mass >= threshold
    return FiniteMmmSpace(
        space.points,
        space.root,
        space.dist,
        np.where(keep, space.mass, 0.0),
        space.mark,
    )
