"""k-point moments of branching populations, by three independent routes.

The k-point moment of a functional F is the expected sum of
F(shape, leaf types, branch types) over all k-tuples of distinct vertices
spanning k leaves, the shape being the leaf-height encoding of the spanned
subtree.  Routes:

  * brute force: enumerate every population outcome up to a horizon and
    sum over vertex tuples;
  * shape sum: weighted spine expectations summed over k-leaf shapes;
  * recursion: for product-form functionals, a stem sum feeding a branch
    point whose subtree moments are computed recursively.

The rescaled variants divide heights by n and renormalise, so that the
values can be compared against continuum limits.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .process import enumerate_population
from .spine import build_kernel, q_expectation
from .trees import TreeShape, enumerate_shapes, meet

__all__ = [
    "MomentQuery",
    "BruteForceMoments",
    "moment_bruteforce",
    "moment_m2f",
    "many_to_one",
    "PathFunctional",
    "BranchFunctional",
    "as_functional",
    "moment_recursive",
    "rescaled_moment",
    "ultrametric_moment",
]


@dataclass
class MomentQuery:
    """What to compute: tuple size k, start type, weight choice, functional, support radius.

    F is called as F(shape, leaf_types, branch_types) and must vanish on
    shapes with a leaf height above R.
    """

    k: int
    x0: str
    F: Callable
    R: int
    psi: object = "unit"


class BruteForceMoments:
    """Exact k-point moments by exhaustive enumeration of the population.

    Builds, per k, a table mapping (leaf heights, meet heights, leaf
    types, branch types) to total probability weight, once; evaluating a
    functional is then a plain weighted sum.  Feasible only while the
    outcome count stays under the cap.
    """

    def __init__(self, model, x0, horizon, cap=200_000):
        self.model = model
        self.x0 = x0
        self.horizon = horizon
        self.outcomes = enumerate_population(model, x0, horizon, cap=cap)
        self._tables = {}

    def table(self, k):
        tab = self._tables.get(k)
        if tab is not None:
            return tab
        tab = {}
        for prob, mt in self.outcomes:
            p = float(prob)
            marks = mt.marks
            vs = mt.tree.vertices
            for combo in itertools.combinations(vs, k):
                # in planar order an ancestor pair, if any, occurs at
                # consecutive positions
                if any(
                    combo[i] == combo[i + 1][: len(combo[i])]
                    for i in range(k - 1)
                ):
                    continue
                l = tuple(len(v) for v in combo)
                ms = tuple(meet(combo[i], combo[i + 1]) for i in range(k - 1))
                key = (
                    l,
                    tuple(len(m) for m in ms),
                    tuple(marks[v] for v in combo),
                    tuple(marks[m] for m in ms),
                )
                tab[key] = tab.get(key, 0.0) + p
        self._tables[k] = tab
        return tab

    def moment(self, k, F, R):
        if R > self.horizon:
            raise ValueError("support radius exceeds the enumeration horizon")
        total = 0.0
        for (l, b, lt, bt), w in self.table(k).items():
            if max(l) <= R:
                total += w * F(TreeShape(l, b), lt, bt)
        return total


def moment_bruteforce(model, query, horizon=None, cap=200_000):
    """k-point moment via full population enumeration (the reference route)."""
    horizon = int(query.R) if horizon is None else horizon
    bf = BruteForceMoments(model, query.x0, horizon, cap=cap)
    return bf.moment(query.k, query.F, int(query.R))


def moment_m2f(model, query, kernel=None):
    """k-point moment as a weighted spine sum over k-leaf shapes.

    Equals the brute-force value for every psi; the shape sum runs over
    leaf heights up to R, which covers the support of F.
    """
    if kernel is None:
        kernel = build_kernel(model, query.psi)
    psi_x = float(kernel.psi[model.index[query.x0]])
    total = 0.0
    for shape in enumerate_shapes(query.k, int(query.R)):
        total += q_expectation(kernel, shape, query.F, query.x0)
    return psi_x * total


def many_to_one(kernel, x0, n, F):
    """Expected sum of F(type path) over generation-n vertices.

    F sees the whole length-(n+1) tuple of types from the ancestor to the
    vertex.  Computed through the weighted spine chain, so the value is
    independent of the kernel's weight.
    """
    model = kernel.model
    nt = len(model.types)
    types = model.types
    i0 = model.index[x0]
    step = kernel.step
    total = 0.0
    for tail in itertools.product(range(nt), repeat=n):
        path = (i0,) + tail
        w = 1.0
        for a, b in zip(path, path[1:]):
            w *= step[a, b]
            if w == 0.0:
                break
        if w == 0.0:
            continue
        total += w * F(tuple(types[i] for i in path)) / kernel.psi[path[-1]]
    return float(kernel.psi[i0]) * total


@dataclass(frozen=True)
class PathFunctional:
    """Single-leaf functional f(leaf height, leaf type)."""

    f: Callable[[int, str], float]

    @property
    def k(self):
        return 1


@dataclass(frozen=True)
class BranchFunctional:
    """Product functional: stem part times one functional per block.

    stem(stem_height, branch_type) weighs the lowest meet of all leaves;
    blocks (two or more, each a PathFunctional or BranchFunctional) weigh
    the subtrees above it, left to right.
    """

    stem: Callable[[int, str], float]
    blocks: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if len(self.blocks) < 2:
            raise ValueError("a branch functional needs at least two blocks")

    @property
    def k(self):
        return sum(blk.k for blk in self.blocks)


def _eval_product(func, l, b, lt, bt):
    if isinstance(func, PathFunctional):
        if len(l) != 1:
            return 0.0
        return func.f(l[0], lt[0])
    if len(l) < 2:
        return 0.0
    s = min(b)
    cuts = [j for j, bj in enumerate(b) if bj == s]
    if len(cuts) + 1 != len(func.blocks):
        return 0.0
    val = func.stem(s, bt[cuts[0]])
    start = 0
    for blk, end in zip(func.blocks, cuts + [len(b)]):
        val *= _eval_product(
            blk,
            tuple(x - s - 1 for x in l[start : end + 1]),
            tuple(x - s - 1 for x in b[start:end]),
            lt[start : end + 1],
            bt[start:end],
        )
        if val == 0.0:
            return 0.0
        start = end + 1
    return val


def as_functional(func):
    """Adapt a Path/BranchFunctional to the F(shape, lt, bt) interface.

    The value is zero on shapes whose first-branch block structure does
    not match the functional's nesting.
    """

    def F(shape, lt, bt):
        return _eval_product(
            func, shape.leaf_heights, shape.branch_heights, lt, bt
        )

    return F


def _recursive_vector(kernel, func, R):
    """Vector over start types of the k-point moment of a product functional.

    A path functional is a stem sum; a branch functional takes a stem sum
    into a branch point whose distinct-children assignments are weighted
    by the block moments, computed recursively.
    """
    model = kernel.model
    nt = len(model.types)
    out = np.zeros(nt)
    if isinstance(func, PathFunctional):
        for n in range(R + 1):
            Bn = kernel.matrix_power(n, biased=True)
            for y in range(nt):
                val = func.f(n, model.types[y])
                if val:
                    out += Bn[:, y] * (val / kernel.psi[y])
        return kernel.psi * out
    d = len(func.blocks)
    vecs = [_recursive_vector(kernel, blk, R) for blk in func.blocks]
    inner = np.zeros(nt)
    for y, x in enumerate(model.types):
        acc = 0.0
        for p, cs in model.offspring[x]:
            if len(cs) < d:
                continue
            ids = [model.index[c] for c in cs]
            for pick in itertools.permutations(ids, d):
                term = float(p)
                for vec_i, zi in zip(vecs, pick):
                    term *= vec_i[zi]
                    if term == 0.0:
                        break
                acc += term
        inner[y] = acc
    fact = math.factorial(d)
    for n in range(R + 1):
        Bn = kernel.matrix_power(n, biased=True)
        for y in range(nt):
            sval = func.stem(n, model.types[y])
            if sval:
                out += Bn[:, y] * (sval * inner[y] / (fact * kernel.psi[y]))
    return kernel.psi * out


def moment_recursive(model, query, kernel=None):
    """k-point moment of a product-form functional by branch recursion.

    query.F must be a PathFunctional or BranchFunctional; stems are summed
    up to height R, so the functional has to vanish beyond that.  Agrees
    with moment_m2f applied to as_functional(query.F) whenever the
    functional's total support fits under R.
    """
    if not isinstance(query.F, (PathFunctional, BranchFunctional)):
        raise TypeError("moment_recursive needs a product-form functional")
    if kernel is None:
        kernel = build_kernel(model, query.psi)
    vec = _recursive_vector(kernel, query.F, int(query.R))
    return float(vec[model.index[query.x0]])


def rescaled_moment(model, k, F_cont, n, x0, R=1.0, kernel=None):
    """n^{-2k} times the k-point moment of F_cont(shape / n) up to height R * n.

    F_cont takes a continuum shape (heights already divided by n) plus the
    type tuples.  Uses the harmonic weight internally; n times the result
    approaches h(x0) (sigma^2 / 2)^{k-1} times the continuum shape
    integral of F_cont averaged over leaf types.
    """
    if kernel is None:
        kernel = build_kernel(model, "harmonic")
    R_disc = int(math.floor(R * n + 1e-9))

    def F(shape, lt, bt):
        return F_cont(shape.scale(1.0 / n), lt, bt)

    q = MomentQuery(k=k, x0=x0, F=F, R=R_disc, psi="harmonic")
    return moment_m2f(model, q, kernel=kernel) / float(n) ** (2 * k)


def ultrametric_moment(model, k, F_cont, n, x0, kernel=None):
    """n^{-k} times the k-point moment over generation-n vertices only.

    All leaf heights sit at n; heights are divided by n before F_cont sees
    them, so leaves sit at 1 and meets in [0, 1).  n times the result
    approaches h(x0) (sigma^2 / 2)^{k-1} times the integral of F_cont over
    uniform meet heights in [0, 1]^{k-1}.
    """
    if kernel is None:
        kernel = build_kernel(model, "harmonic")
    psi_x = float(kernel.psi[model.index[x0]])
    total = 0.0
    for b in itertools.product(range(n), repeat=k - 1):
        shape = TreeShape((n,) * k, b)
        scaled = shape.scale(1.0 / n)

        def F(_shape, lt, bt, _scaled=scaled):
            return F_cont(_scaled, lt, bt)

        total += q_expectation(kernel, shape, F, x0)
    return psi_x * total / float(n) ** k
