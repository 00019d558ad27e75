"""Finite-type branching processes.

A model assigns to each type a finite offspring law: a list of atoms, each
an ordered tuple of child types with a probability.  This module covers
simulation, exact enumeration of all populations up to a horizon, the mean
matrix with its Perron eigenpair, the branching variance, and extinction
probabilities with the associated survival-decay profile.
"""

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .trees import PlanarTree

__all__ = [
    "Model",
    "MarkedTree",
    "Eigenpair",
    "simulate",
    "enumerate_population",
    "mean_matrix",
    "eigenpair",
    "sigma_squared",
    "extinction_by",
    "survival_probability",
    "kolmogorov_profile",
]


class Model:
    """Offspring laws over a finite type space.

    Parameters
    ----------
    types : sequence of str
        Type labels; order fixes the indexing of all vectors and matrices.
    offspring : dict
        Maps each label to an iterable of (probability, children) pairs,
        children being an ordered tuple of labels.  Probabilities must sum
        to one per type (tolerance 1e-12) and may be Fractions, in which
        case exact enumeration stays exact.
    """

    def __init__(self, types, offspring):
        self.types = tuple(types)
        if len(set(self.types)) != len(self.types):
            raise ValueError("duplicate type labels")
        if set(offspring) != set(self.types):
            raise ValueError("offspring must cover exactly the declared types")
        self.index = {x: i for i, x in enumerate(self.types)}
        laws = {}
        for x in self.types:
            atoms = tuple((p, tuple(cs)) for p, cs in offspring[x])
            if not atoms:
                raise ValueError(f"type {x!r} has no offspring atoms")
            total = sum(p for p, _ in atoms)
            if abs(total - 1) > 1e-12:
                raise ValueError(f"offspring probabilities of {x!r} sum to {total}")
            for p, cs in atoms:
                if p < 0:
                    raise ValueError("negative probability")
                for c in cs:
                    if c not in self.index:
                        raise ValueError(f"unknown child type {c!r}")
            laws[x] = atoms
        self.offspring = laws

    @property
    def max_brood(self):
        return max(
            len(cs) for atoms in self.offspring.values() for _, cs in atoms
        )

    def to_json(self):
        data = {
            "types": list(self.types),
            "offspring": {
                x: [
                    {"prob": float(p), "children": list(cs)}
                    for p, cs in self.offspring[x]
                ]
                for x in self.types
            },
        }
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text, exact=False):
        """Parse the JSON schema {"types": [...], "offspring": {label: [{"prob": p, "children": [...]}]}}.

        With exact=True probabilities are converted to Fractions via
        Fraction(str(p)), so enumeration keeps exact arithmetic.
        """
        data = json.loads(text)
        if set(data) != {"types", "offspring"}:
            raise ValueError("model JSON must have exactly 'types' and 'offspring'")

        def conv(p):
            return Fraction(str(p)) if exact else float(p)

        offspring = {
            x: [(conv(a["prob"]), tuple(a["children"])) for a in atoms]
            for x, atoms in data["offspring"].items()
        }
        return cls(tuple(data["types"]), offspring)

    @classmethod
    def from_file(cls, path, exact=False):
        with open(path) as fh:
            return cls.from_json(fh.read(), exact=exact)


@dataclass
class MarkedTree:
    """A planar tree together with a type label on every vertex."""

    tree: PlanarTree
    marks: dict

    def __post_init__(self):
        if set(self.marks) != set(self.tree.degrees):
            raise ValueError("marks must cover exactly the tree's vertices")


@dataclass
class Eigenpair:
    """Perron data of the mean matrix.

    h and pi are the right and left eigenvectors in model type order,
    normalised so that pi sums to one and pi . h = 1.
    """

    h: np.ndarray
    pi: np.ndarray
    perron: float


def simulate(model, x0, n_gen, rng=None):
    """Sample a population tree run for n_gen generations from one x0 ancestor.

    Vertices in generation n_gen are recorded with out-degree zero; their
    offspring are not sampled.  rng may be a seed or a numpy Generator.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    tables = {}
    for x in model.types:
        probs = np.array([float(p) for p, _ in model.offspring[x]])
        tables[x] = (np.cumsum(probs), [cs for _, cs in model.offspring[x]])
    degrees = {}
    marks = {(): x0}
    frontier = [()]
    for _ in range(n_gen):
        nxt = []
        for v in frontier:
            cum, kids = tables[marks[v]]
            a = int(np.searchsorted(cum, rng.random(), side="right"))
            a = min(a, len(kids) - 1)
            cs = kids[a]
            degrees[v] = len(cs)
            for i, c in enumerate(cs, start=1):
                marks[v + (i,)] = c
                nxt.append(v + (i,))
        frontier = nxt
    for v in frontier:
        degrees[v] = 0
    return MarkedTree(PlanarTree(degrees), marks)


def enumerate_population(model, x0, n_gen, cap=200_000):
    """All possible populations up to generation n_gen with their probabilities.

    Returns a list of (probability, MarkedTree) covering every outcome of
    the first n_gen generations; generation-n_gen vertices carry degree 0.
    Probabilities are exact if the model holds Fractions.  Raises
    ValueError with a size estimate as soon as the outcome count would
    exceed `cap`.
    """
    outcomes = [(1, {}, {(): x0}, [()])]
    for _ in range(n_gen):
        new = []
        for prob, degs, marks, frontier in outcomes:
            if not frontier:
                new.append((prob, degs, marks, frontier))
                continue
            atom_lists = [model.offspring[marks[v]] for v in frontier]
            n_comb = 1
            for al in atom_lists:
                n_comb *= len(al)
            if len(new) + n_comb > cap:
                est = len(outcomes) * n_comb
                raise ValueError(
                    f"enumeration would exceed cap={cap} "
                    f"(roughly {est} outcomes at the next generation); "
                    f"raise the cap or lower the horizon"
                )
            for combo in itertools.product(*atom_lists):
                p2 = prob
                d2 = dict(degs)
                m2 = dict(marks)
                f2 = []
                for v, (pa, cs) in zip(frontier, combo):
                    p2 = p2 * pa
                    d2[v] = len(cs)
                    for i, c in enumerate(cs, start=1):
                        m2[v + (i,)] = c
                        f2.append(v + (i,))
                new.append((p2, d2, m2, f2))
        outcomes = new
    result = []
    for prob, degs, marks, frontier in outcomes:
        degs = dict(degs)
        for v in frontier:
            degs[v] = 0
        result.append((prob, MarkedTree(PlanarTree(degs), marks)))
    return result


def mean_matrix(model):
    """M[i, j] = expected number of type-j children of a type-i parent."""
    n = len(model.types)
    M = np.zeros((n, n))
    for i, x in enumerate(model.types):
        for p, cs in model.offspring[x]:
            for c in cs:
                M[i, model.index[c]] += float(p)
    return M


def _is_primitive(M):
    # some power of the support pattern must be strictly positive;
    # (n-1)^2 + 1 is the classical exponent bound
    n = M.shape[0]
    A = (M > 0).astype(int)
    B = A.copy()
    for _ in range((n - 1) ** 2 + 1):
        if B.all():
            return True
        B = ((B @ A) > 0).astype(int)
    return bool(B.all())


def _power_iterate(M, tol, max_iter):
    n = M.shape[0]
    v = np.ones(n) / n
    for _ in range(max_iter):
        w = M @ v
        s = w.sum()
        if s <= 0:
            raise ValueError("mean matrix has a zero power on positive vectors")
        w = w / s
        if np.max(np.abs(w - v)) <= tol:
            return w, float(s)
        v = w
    raise ValueError(f"power iteration did not reach tolerance {tol}")


def eigenpair(model, tol=1e-12, max_iter=100_000):
    """Perron eigenvalue and eigenvectors of the mean matrix.

    Power iteration to `tol` on both M and its transpose; requires the
    matrix to be irreducible and aperiodic.  Warns when the model is not
    critical, i.e. when |perron - 1| > 1e-9.
    """
    M = mean_matrix(model)
    if not _is_primitive(M):
        raise ValueError("mean matrix must be irreducible and aperiodic")
    h, perron = _power_iterate(M, tol, max_iter)
    pi, _ = _power_iterate(M.T, tol, max_iter)
    pi = pi / pi.sum()
    h = h / float(pi @ h)
    scale = max(1.0, perron)
    if np.max(np.abs(M @ h - perron * h)) > 1e-10 * scale * max(1.0, h.max()):
        raise ValueError("right eigenvector residual too large")
    if np.max(np.abs(M.T @ pi - perron * pi)) > 1e-10 * scale:
        raise ValueError("left eigenvector residual too large")
    if abs(perron - 1) > 1e-9:
        warnings.warn(
            f"model is not critical: perron root {perron!r}", stacklevel=2
        )
    return Eigenpair(h=h, pi=pi, perron=perron)


def sigma_squared(model, eig=None):
    """Branching variance sum_x pi(x) E_x[sum over ordered child pairs of h(c_i) h(c_j)]."""
    if eig is None:
        eig = eigenpair(model)
    total = 0.0
    for i, x in enumerate(model.types):
        acc = 0.0
        for p, cs in model.offspring[x]:
            hs = [float(eig.h[model.index[c]]) for c in cs]
            s1 = sum(hs)
            s2 = sum(v * v for v in hs)
            acc += float(p) * (s1 * s1 - s2)
        total += float(eig.pi[i]) * acc
    return total


def _extinction_curve(model, n_values):
    want = set(n_values)
    if any(n < 0 for n in want):
        raise ValueError("generations must be nonnegative")
    out = {}
    s = {x: 0.0 for x in model.types}
    if 0 in want:
        out[0] = dict(s)
    for n in range(1, max(want, default=0) + 1):
        s = {
            x: sum(
                float(p) * math.prod(s[c] for c in cs)
                for p, cs in model.offspring[x]
            )
            for x in model.types
        }
        if n in want:
            out[n] = dict(s)
    return out


def extinction_by(model, x0, n):
    """P(population starting from one x0 is gone by generation n)."""
    return _extinction_curve(model, [n])[n][x0]


def survival_probability(model, x0, n):
    """P(generation n is nonempty starting from one x0)."""
    return 1.0 - extinction_by(model, x0, n)


def kolmogorov_profile(model, n_values, x0=None):
    """Scaled survival n * P_x(alive at n) against its critical limit.

    Returns one row per (n, type) as a dict with keys n, type, observed,
    limit; the limit is 2 h(x) / sigma^2, or None when the branching
    variance vanishes.  Restrict to one type with x0.
    """
    eig = eigenpair(model)
    sig2 = sigma_squared(model, eig)
    curve = _extinction_curve(model, n_values)
    types = [x0] if x0 is not None else list(model.types)
    rows = []
    for n in sorted(set(n_values)):
        for x in types:
            surv = 1.0 - curve[n][x]
            limit = (
                2.0 * float(eig.h[model.index[x]]) / sig2 if sig2 > 0 else None
            )
            rows.append(
                {"n": n, "type": x, "observed": n * surv, "limit": limit}
            )
    return rows
