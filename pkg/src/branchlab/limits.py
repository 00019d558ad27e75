"""Continuum limit objects: shape-space integrals, the continuum random
tree moment formula, the Poisson point process representation of its
ultrametric companion, random-walk excursions, and a harness comparing
finite-n moments against their limits.

Conventions.  A continuum k-leaf shape is a point (l, b) with
b[i] < min(l[i], l[i+1]); the flat measure on that region is the limit of
counting shapes, and its ultrametric companion fixes l at all-ones and
lets b range over the unit cube.  Distance matrices carry the factor-two
meet convention throughout, so root distances are the leaf heights and
leaf-to-leaf distances are l_i + l_j - 2 min b.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .mmm import FiniteMmmSpace
from .process import eigenpair, kolmogorov_profile, sigma_squared
from .trees import TreeShape, distance_matrix

__all__ = [
    "lambda_k_integral",
    "lambda_tilde_k_integral",
    "LimitQuery",
    "crt_moment",
    "cpp_moment",
    "CppSample",
    "cpp_sample",
    "cpp_distance",
    "cpp_monomial_samples",
    "cpp_monomial_mc",
    "contour_tree",
    "sample_excursions",
    "donsker_crt_check",
    "ConvergenceReport",
    "convergence_report",
]


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def lambda_k_integral(
    k,
    f,
    R=1.0,
    method="mc",
    n_samples=100_000,
    grid_step=0.01,
    rng=None,
    vectorized=False,
):
    """Integral of f over k-leaf shapes with every leaf height in [0, R].

    f(l, b) takes arrays of k leaf heights and k-1 meet heights; with
    vectorized=True it receives (N, k) and (N, k-1) batches and returns N
    values.  method "mc" returns (estimate, stderr) from uniform sampling
    of the bounding box; "grid" returns (midpoint-rule value, 0.0).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    dim = 2 * k - 1
    if method == "mc":
        rng = _as_rng(rng)
        L = rng.uniform(0.0, R, size=(n_samples, k))
        B = rng.uniform(0.0, R, size=(n_samples, k - 1))
        ok = np.all(B < np.minimum(L[:, :-1], L[:, 1:]), axis=1)
        vals = np.zeros(n_samples)
        if vectorized:
            idx = np.flatnonzero(ok)
            if idx.size:
                vals[idx] = f(L[idx], B[idx])
        else:
            for i in np.flatnonzero(ok):
                vals[i] = f(L[i], B[i])
        box = float(R) ** dim
        est = box * float(vals.mean())
        err = box * float(vals.std(ddof=1)) / math.sqrt(n_samples)
        return est, err
    if method == "grid":
        n_cells = max(1, int(round(R / grid_step)))
        mids = (np.arange(n_cells) + 0.5) * (R / n_cells)
        axes = np.meshgrid(*([mids] * dim), indexing="ij")
        pts = np.stack([a.reshape(-1) for a in axes], axis=1)
        L = pts[:, :k]
        B = pts[:, k:]
        ok = np.all(B < np.minimum(L[:, :-1], L[:, 1:]), axis=1)
        cell = (R / n_cells) ** dim
        if vectorized:
            idx = np.flatnonzero(ok)
            total = float(f(L[idx], B[idx]).sum()) if idx.size else 0.0
        else:
            total = sum(float(f(L[i], B[i])) for i in np.flatnonzero(ok))
        return cell * total, 0.0
    raise ValueError(f"unknown method {method!r}")


def lambda_tilde_k_integral(
    k,
    f,
    method="mc",
    n_samples=100_000,
    grid_step=0.001,
    rng=None,
    vectorized=False,
):
    """Integral of f(ones, b) over meet heights b in the unit cube.

    Same calling conventions as lambda_k_integral; for k = 1 the value is
    exactly f at the single shape.
    """
    ones = np.ones(k)
    if k == 1:
        if vectorized:
            return float(f(ones[None, :], np.zeros((1, 0)))[0]), 0.0
        return float(f(ones, np.zeros(0))), 0.0
    dim = k - 1
    if method == "mc":
        rng = _as_rng(rng)
        B = rng.uniform(0.0, 1.0, size=(n_samples, dim))
        if vectorized:
            vals = f(np.broadcast_to(ones, (n_samples, k)), B)
        else:
            vals = np.array([f(ones, B[i]) for i in range(n_samples)])
        return float(vals.mean()), float(vals.std(ddof=1)) / math.sqrt(n_samples)
    if method == "grid":
        n_cells = max(1, int(round(1.0 / grid_step)))
        mids = (np.arange(n_cells) + 0.5) / n_cells
        axes = np.meshgrid(*([mids] * dim), indexing="ij")
        B = np.stack([a.reshape(-1) for a in axes], axis=1)
        if vectorized:
            total = float(f(np.broadcast_to(ones, (B.shape[0], k)), B).sum())
        else:
            total = sum(float(f(ones, B[i])) for i in range(B.shape[0]))
        return total / n_cells**dim, 0.0
    raise ValueError(f"unknown method {method!r}")


@dataclass
class LimitQuery:
    """Inputs of a continuum moment: tuple size, test function, variance,
    mark distribution and support radius.

    phi(D, marks) sees the (k+1) x (k+1) distance matrix (row 0 is the
    root) and a k-tuple of mark labels; it must vanish whenever a root
    distance exceeds R.  mark_probs maps labels to probabilities; None
    means a single unmarked class.
    """

    k: int
    phi: object
    sigma_sq: float = 1.0
    mark_probs: dict = field(default=None)
    R: float = 1.0


def _mark_tuples(query):
    if query.mark_probs is None:
        return [((None,) * query.k, 1.0)]
    labels = sorted(query.mark_probs)
    out = []
    for combo in itertools.product(labels, repeat=query.k):
        p = 1.0
        for c in combo:
            p *= query.mark_probs[c]
        if p > 0:
            out.append((combo, p))
    return out


def _symmetrized_integrand(query):
    marks = _mark_tuples(query)
    perms = [
        np.array((0,) + s) for s in itertools.permutations(range(1, query.k + 1))
    ]

    def g(l, b):
        D = distance_matrix(TreeShape(tuple(l), tuple(b)))
        total = 0.0
        for perm in perms:
            Dp = D[np.ix_(perm, perm)]
            for mk, p in marks:
                total += p * query.phi(Dp, mk)
        return total

    return g


def crt_moment(query, method="grid", n_samples=200_000, grid_step=0.02, rng=None):
    """Continuum tree moment: (sigma^2/2)^(k-1) times the shape integral of
    phi summed over leaf orderings, with marks drawn independently.

    Returns (value, stderr); stderr is 0.0 for the grid method.  The shape
    integral is truncated at leaf heights R, which is exact as long as phi
    vanishes beyond that radius.
    """
    g = _symmetrized_integrand(query)
    val, err = lambda_k_integral(
        query.k,
        g,
        R=query.R,
        method=method,
        n_samples=n_samples,
        grid_step=grid_step,
        rng=rng,
    )
    pref = (query.sigma_sq / 2.0) ** (query.k - 1)
    return pref * val, pref * err


def cpp_moment(query, grid_step=0.001):
    """Moment of the ultrametric companion: (sigma^2/2)^k times the unit-cube
    integral of phi over meet heights, summed over leaf orderings.

    Deterministic midpoint rule; leaf heights are pinned at one, so the
    root sits at distance one from every point.
    """
    g = _symmetrized_integrand(query)
    val, _ = lambda_tilde_k_integral(query.k, g, method="grid", grid_step=grid_step)
    return (query.sigma_sq / 2.0) ** query.k * val


@dataclass
class CppSample:
    """One realization: interval length Z, atom positions (sorted) and depths."""

    sigma_sq: float
    eps: float
    Z: float
    positions: np.ndarray
    depths: np.ndarray


def cpp_sample(sigma_sq, eps, rng=None):
    """Sample the Poisson comb on [0, Z] with depth intensity ds / s^2 on
    (eps, 1], Z exponential of rate one.

    eps truncates shallow atoms only: any statistic insensitive to
    distances below 2 eps is unaffected by the cutoff.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    rng = _as_rng(rng)
    Z = float(rng.exponential())
    a = 1.0 / eps
    count = rng.poisson(Z * (a - 1.0))
    pos = rng.uniform(0.0, Z, size=count)
    u = rng.random(count)
    depths = 1.0 / (a - u * (a - 1.0))
    order = np.argsort(pos)
    return CppSample(float(sigma_sq), float(eps), Z, pos[order], depths[order])


def cpp_distance(sample, u, v):
    """Comb distance: twice the deepest atom strictly between the two points
    (positions in (min, max]), zero when there is none."""
    if u == v:
        return 0.0
    lo, hi = (u, v) if u < v else (v, u)
    i1 = int(np.searchsorted(sample.positions, lo, side="right"))
    i2 = int(np.searchsorted(sample.positions, hi, side="right"))
    if i2 <= i1:
        return 0.0
    return 2.0 * float(sample.depths[i1:i2].max())


def _pair_distances(sample, us, vs):
    lo = np.minimum(us, vs)
    hi = np.maximum(us, vs)
    n = len(sample.positions)
    if n == 0:
        return np.zeros(len(lo))
    inside = (sample.positions[None, :] > lo[:, None]) & (
        sample.positions[None, :] <= hi[:, None]
    )
    vals = np.where(inside, sample.depths[None, :], 0.0)
    return 2.0 * vals.max(axis=1)


def cpp_monomial_samples(
    query,
    n_samples=100_000,
    eps=1e-3,
    n_inner=8,
    rng=None,
):
    """Per-realization monomial estimates of the comb, as an array.

    Each sample draws the comb, then n_inner uniform k-tuples of positions;
    the estimate per sample is ((sigma^2/2) Z)^k times the mean of
    phi(D, marks).  Marks are drawn independently per point.  Choose eps
    below half of any distance threshold phi probes (the comb's law below
    depth eps is cut off).
    """
    rng = _as_rng(rng)
    k = query.k
    if query.mark_probs is None:
        labels = None
    else:
        labels = sorted(query.mark_probs)
        probs = np.array([query.mark_probs[c] for c in labels])
    half = query.sigma_sq / 2.0
    pairs = list(itertools.combinations(range(k), 2))
    ests = np.empty(n_samples)
    for s in range(n_samples):
        sample = cpp_sample(query.sigma_sq, eps, rng)
        us = rng.uniform(0.0, sample.Z, size=(n_inner, k))
        if labels is None:
            marks = None
        else:
            marks = rng.choice(len(labels), size=(n_inner, k), p=probs)
        dmat = {}
        for i, j in pairs:
            dmat[(i, j)] = _pair_distances(sample, us[:, i], us[:, j])
        acc = 0.0
        for t in range(n_inner):
            D = np.zeros((k + 1, k + 1))
            D[0, 1:] = D[1:, 0] = 1.0
            for i, j in pairs:
                D[i + 1, j + 1] = D[j + 1, i + 1] = dmat[(i, j)][t]
            if marks is None:
                mk = (None,) * k
            else:
                mk = tuple(labels[m] for m in marks[t])
            acc += query.phi(D, mk)
        ests[s] = (half * sample.Z) ** k * (acc / n_inner)
    return ests


def cpp_monomial_mc(query, n_samples=100_000, eps=1e-3, n_inner=8, rng=None):
    """Monte Carlo k-th monomial of the comb: (estimate, stderr)."""
    ests = cpp_monomial_samples(
        query, n_samples=n_samples, eps=eps, n_inner=n_inner, rng=rng
    )
    return float(ests.mean()), float(ests.std(ddof=1)) / math.sqrt(len(ests))


_CONTOUR_SIZE_LIMIT = 4000


def contour_tree(path, mass_scale=1.0, merge_tol=1e-12):
    """Finite space read off a nonnegative path with zero endpoints.

    Distance between two time points is f(s) + f(t) - 2 min over [s, t];
    the first time point is the root, so root distances are the heights
    themselves.  Points at distance <= merge_tol are merged into one
    (their masses add up), each surviving class carrying mass_scale per
    original time point.
    """
    f = np.asarray(path, dtype=float)
    if f.ndim != 1 or len(f) < 1:
        raise ValueError("path must be a nonempty 1-d array")
    if abs(f[0]) > merge_tol or abs(f[-1]) > merge_tol:
        raise ValueError("path must start and end at zero")
    if np.any(f < -merge_tol):
        raise ValueError("path must be nonnegative")
    n = len(f)
    if n > _CONTOUR_SIZE_LIMIT:
        raise ValueError(
            f"path too long for a dense distance matrix ({n} points); "
            f"subsample it first"
        )
    D = np.zeros((n, n))
    for i in range(n):
        running = np.minimum.accumulate(f[i:])
        D[i, i:] = f[i] + f[i:] - 2.0 * running
        D[i:, i] = D[i, i:]
    reps = []
    rep_mass = []
    for i in range(n):
        placed = False
        for r, ri in enumerate(reps):
            if D[i, ri] <= merge_tol:
                rep_mass[r] += mass_scale
                placed = True
                break
        if not placed:
            reps.append(i)
            rep_mass.append(float(mass_scale))
    ids = np.array(reps)
    return FiniteMmmSpace(
        [f"t{r}" for r in reps],
        0,
        D[np.ix_(ids, ids)],
        np.array(rep_mass),
    )


def sample_excursions(n_excursions, n_steps, rng=None):
    """Uniform nonnegative simple-walk excursions, as height rows.

    n_steps must be even, 2m; each row holds the 2m+1 heights of a walk
    with m up and m down steps, nonnegative throughout, zero at both ends,
    uniform among all such walks.  Built by rotating a uniformly shuffled
    step sequence with one extra down step at its first minimum, then
    dropping that step.
    """
    if n_steps % 2 or n_steps <= 0:
        raise ValueError("n_steps must be positive and even")
    m = n_steps // 2
    rng = _as_rng(rng)
    n = 2 * m + 1
    base = np.concatenate([np.ones(m, dtype=np.int32), -np.ones(m + 1, dtype=np.int32)])
    keys = rng.random((n_excursions, n))
    idx = np.argsort(keys, axis=1)
    steps = base[idx]
    c = np.cumsum(steps, axis=1)
    j = np.argmin(c, axis=1)
    order = (j[:, None] + 1 + np.arange(n)[None, :]) % n
    rot = np.take_along_axis(steps, order, axis=1)
    h = np.cumsum(rot, axis=1)
    out = np.zeros((n_excursions, n_steps + 1), dtype=np.int32)
    out[:, 1:] = h[:, : n - 1]
    return out


def donsker_crt_check(
    phi_root=None,
    R=1.0,
    sigma_sq=1.0,
    n_excursions=10_000,
    n_steps=10_000,
    l_max=300.0,
    rng=None,
    batch=250,
):
    """Estimate the k = 1 continuum tree moment from rescaled walk excursions.

    phi_root maps an array of root distances to values (default: indicator
    of distance <= R, whose limit moment equals R).  Excursion lengths are
    importance-sampled proportionally to 1/sqrt(l) up to l_max and each
    excursion contributes its occupation sum; the walk is rescaled
    diffusively and distances carry the 2/sigma factor that turns the
    excursion into the continuum tree's contour.  Returns (estimate,
    stderr).  The l_max truncation biases the estimate low by about
    2 u^2 / sqrt(2 pi l_max) with u = R sigma / 2.
    """
    if phi_root is None:
        def phi_root(d):
            return (d <= R).astype(float)

    rng = _as_rng(rng)
    sigma = math.sqrt(sigma_sq)
    a = 2.0 / sigma
    N = n_excursions
    u = (np.arange(N) + rng.random(N)) / N
    lengths = l_max * u**2
    weights = np.sqrt(l_max / (2.0 * math.pi)) / lengths
    ests = np.empty(N)
    for start in range(0, N, batch):
        stop = min(start + batch, N)
        S = sample_excursions(stop - start, n_steps, rng)
        scale = a * np.sqrt(lengths[start:stop] / n_steps)
        H = S[:, :n_steps] * scale[:, None]
        occ = phi_root(H).sum(axis=1) * (lengths[start:stop] / n_steps)
        ests[start:stop] = a * weights[start:stop] * occ
    return float(ests.mean()), float(ests.std(ddof=1)) / math.sqrt(N)


@dataclass
class ConvergenceReport:
    """Rows of finite-size values against their limit, plus run diagnostics."""

    rows: list
    critical: bool
    perron: float
    sigma_sq: float

    def to_csv(self, fh):
        fh.write("n,observed,limit,rel_error,path\n")
        for r in self.rows:
            limit = "" if r["limit"] is None else f"{r['limit']:.12g}"
            rel = "" if r["rel_error"] is None else f"{r['rel_error']:.12g}"
            fh.write(f"{r['n']},{r['observed']:.12g},{limit},{rel},{r['path']}\n")

    @staticmethod
    def read_csv(fh):
        header = fh.readline().strip()
        if header != "n,observed,limit,rel_error,path":
            raise ValueError("unexpected header")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            n, obs, limit, rel, path = line.split(",")
            rows.append(
                {
                    "n": int(n),
                    "observed": float(obs),
                    "limit": None if limit == "" else float(limit),
                    "rel_error": None if rel == "" else float(rel),
                    "path": path,
                }
            )
        return rows


def convergence_report(
    model,
    k,
    F_cont,
    n_values,
    x0,
    R=1.0,
    mode="rescaled",
    grid_step=None,
    kolmogorov_ns=(),
):
    """Finite-n rescaled moments against the continuum limit, as report rows.

    mode "rescaled" compares n times the height-truncated rescaled moment
    with h(x0) (sigma^2/2)^(k-1) times the shape integral of F_cont,
    averaged over independent leaf marks; mode "ultrametric" does the same
    over generation-n tuples against the unit-cube meet integral.  F_cont
    receives (shape, leaf_types, branch_types) and must ignore branch
    types (the limit passes None); for "rescaled" it must vanish on shapes
    higher than R.  Kolmogorov survival rows are appended for the given
    generations.  Off criticality the limit columns are left empty.
    """
    from .moments import rescaled_moment, ultrametric_moment
    from .spine import build_kernel

    eig = eigenpair(model)
    sig2 = sigma_squared(model, eig)
    critical = abs(eig.perron - 1.0) <= 1e-6
    kernel = build_kernel(model, eig.h)
    hx = float(eig.h[model.index[x0]])
    pi = {x: float(eig.pi[i]) for i, x in enumerate(model.types)}

    def mark_avg(l, b):
        shape = TreeShape(tuple(l), tuple(b))
        total = 0.0
        for lt in itertools.product(model.types, repeat=k):
            p = 1.0
            for c in lt:
                p *= pi[c]
            total += p * F_cont(shape, lt, None)
        return total

    limit = None
    if critical:
        if mode == "rescaled":
            step = grid_step if grid_step is not None else (0.02 if k > 1 else 1e-4)
            integral, _ = lambda_k_integral(k, mark_avg, R=R, method="grid", grid_step=step)
        elif mode == "ultrametric":
            step = grid_step if grid_step is not None else 1e-3
            integral, _ = lambda_tilde_k_integral(k, mark_avg, method="grid", grid_step=step)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        limit = hx * (sig2 / 2.0) ** (k - 1) * integral

    rows = []
    for n in n_values:
        if mode == "rescaled":
            obs = n * rescaled_moment(model, k, F_cont, n, x0, R=R, kernel=kernel)
        else:
            obs = n * ultrametric_moment(model, k, F_cont, n, x0, kernel=kernel)
        rel = None if limit in (None, 0.0) else abs(obs - limit) / abs(limit)
        rows.append(
            {
                "n": n,
                "observed": obs,
                "limit": limit,
                "rel_error": rel,
                "path": f"{mode}:k={k}",
            }
        )
    for row in kolmogorov_profile(model, kolmogorov_ns, x0=x0) if kolmogorov_ns else []:
        obs, lim = row["observed"], row["limit"]
        shown = lim if critical else None
        rows.append(
            {
                "n": row["n"],
                "observed": obs,
                "limit": shown,
                "rel_error": abs(obs - shown) / shown if shown else None,
                "path": f"kolmogorov:{row['type']}",
            }
        )
    return ConvergenceReport(
        rows=rows, critical=critical, perron=eig.perron, sigma_sq=sig2
    )
