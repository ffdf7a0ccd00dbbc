"""Separated sets, deviation-set counts and Lyapunov exponents.

For affine or linear fiber maps the Bowen distance of two points depends
only on their difference, so on a grid that is a translate-invariant
pattern the set of index offsets in conflict (Bowen distance at most eps)
is computed once. Greedy selection then marks conflicting candidates
instead of testing pairs.
"""

from dataclasses import dataclass, field
import math

import numpy as np
import gmpy2
from gmpy2 import mpz

from .errors import GridTooCoarse, DegenerateFit, PreconditionViolation
from .fiber import TorusPoint, torus_norm, wrap
from .numerics import DOUBLE
from .orbit import batch_averages, _linear_system


@dataclass
class CandidateGrid:
    """Candidate points ``point(j, i)`` in rows ``j`` and columns ``i``.

    ``layout = "square"``: ``(i / G, j / G)``, periodic in both indices.
    ``layout = "unstable"``: ``(i h u1, j / R + i h u2)`` mod 1 where
    ``u = e_u`` and ``0 <= i h < 1 / |u1|``; a parametrization of the torus
    by unstable arc length ``i h`` and a vertical offset. Only rows are
    periodic. ``resolution`` is the column spacing ``1/G`` or ``h``.
    """

    layout: str
    rows: int
    cols: int
    resolution: float
    row_step: np.ndarray
    col_step: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @classmethod
    def square(cls, G, offset=0.0):
        G = int(G)
        return cls("square", G, G, 1.0 / G, np.array([0.0, 1.0 / G]), np.array([1.0 / G, 0.0]),
                   np.full(2, float(offset)))

    @classmethod
    def unstable(cls, matrix, resolution, rows):
        u = np.array(matrix.e_u)
        if u[0] < 0:
            u = -u
        cols = int(math.ceil(1.0 / abs(u[0]) / resolution))
        return cls("unstable", int(rows), cols, float(resolution), np.array([0.0, 1.0 / rows]),
                   resolution * u)

    @property
    def periodic_cols(self):
        return self.layout == "square"

    @property
    def size(self):
        return self.rows * self.cols

    def points(self, rows=None):
        """All points in row-major order, shape (size, 2)."""
        j = np.arange(self.rows)[:, None] if rows is None else np.asarray(rows)[:, None]
        i = np.arange(self.cols)[None, :]
        x1 = self.offset[0] + j * self.row_step[0] + i * self.col_step[0]
        x2 = self.offset[1] + j * self.row_step[1] + i * self.col_step[1]
        return np.mod(np.stack([x1, x2], axis=-1), 1.0).reshape(-1, 2)

    def point(self, j, i):
        return np.mod(self.offset + j * self.row_step + i * self.col_step, 1.0)


def default_grid(system, n, eps, resolution=None, layout="auto"):
    """Grid meeting the honesty bound ``resolution <= eps lambda^{-(n-1)} / 2``."""
    limit = eps * system.lambda_u ** (-(n - 1)) / 2
    if layout == "auto":
        layout = "square" if resolution is not None else "unstable"
    if layout == "square":
        if resolution is None:
            G = int(math.ceil(1 / limit))
        else:
            G = int(round(1 / resolution))
        return CandidateGrid.square(G)
    res = limit if resolution is None else float(resolution)
    rows = int(math.ceil(2 / min(eps, 0.5)))
    return CandidateGrid.unstable(system.matrix, res, rows)


def _check_resolution(system, grid, n, eps):
    limit = eps * system.lambda_u ** (-(n - 1)) / 2
    if grid.resolution > limit * (1 + 1e-12):
        raise GridTooCoarse(f"grid resolution {grid.resolution:.3g} exceeds "
                            f"eps lambda^-(n-1)/2 = {limit:.3g} at n={n}",
                            resolution=grid.resolution, limit=limit, n=n)


# -- Bowen distances of many differences -----------------------------------------

def bowen_norms(system, omega, deltas, n, cutoff=None):
    """Bowen lengths ``max_{t<n} |F^t-difference|`` for an array of differences.

    Differences whose length already exceeds ``cutoff`` are dropped from
    later steps and reported as ``inf``.
    """
    lin = _linear_system(system)
    D = wrap(np.asarray(deltas, dtype=float).reshape(-1, 2))
    out = torus_norm(D)
    alive = np.arange(len(D)) if cutoff is None else np.flatnonzero(out <= cutoff)
    if cutoff is not None:
        out = np.where(out <= cutoff, out, np.inf)
    D = D[alive]
    if lin.affine:
        m = lin.matrix
        A = np.array([[m.a, m.b], [m.c, m.d]], dtype=float)
        steps = [A] * (n - 1)
    else:
        syms = lin.symbols(omega, n - 1)
        steps = [lin.family.arrays[s] for s in syms]
    for A in steps:
        if len(alive) == 0:
            break
        D = wrap(D @ A.T)
        d = torus_norm(D)
        out[alive] = np.maximum(out[alive], d)
        if cutoff is not None:
            keep = d <= cutoff
            out[alive[~keep]] = np.inf
            alive, D = alive[keep], D[keep]
    return out


def conflict_table(system, omega, grid, n, eps):
    """Index offsets ``(dj, di)`` of candidate pairs with Bowen distance ``<= eps``.

    Returns a list, per row offset ``dj`` in ``[0, rows)``, of the
    column offsets ``di`` in conflict.
    """
    if grid.periodic_cols:
        reach = int(math.floor(eps / grid.resolution)) + 1
        di = np.arange(-min(reach, grid.cols - 1), min(reach, grid.cols - 1) + 1)
        if grid.cols <= 2 * reach + 1:
            di = np.arange(grid.cols)
    else:
        di = np.arange(-(grid.cols - 1), grid.cols)
    table = []
    for dj in range(grid.rows):
        deltas = dj * grid.row_step[None, :] + di[:, None] * grid.col_step[None, :]
        d = bowen_norms(system, omega, deltas, n, cutoff=eps)
        hit = di[d <= eps]
        if grid.periodic_cols:
            hit = np.unique(np.mod(hit, grid.cols))
        table.append(hit.astype(np.int64))
    return table


def greedy_select(grid, table, eligible=None):
    """Row-major greedy maximal independent set of the conflict pattern."""
    R, C = grid.rows, grid.cols
    blocked = np.zeros((R, C), dtype=bool)
    if eligible is not None:
        blocked |= ~np.asarray(eligible, dtype=bool).reshape(R, C)
    chosen = []
    nonempty = [(dj, t) for dj, t in enumerate(table) if len(t)]
    for j in range(R):
        row = memoryview(blocked[j])
        for i in range(C):
            if row[i]:
                continue
            chosen.append(j * C + i)
            for dj, offs in nonempty:
                jj = (j + dj) % R
                cols = i + offs
                if grid.periodic_cols:
                    cols = np.mod(cols, C)
                else:
                    cols = cols[(cols >= 0) & (cols < C)]
                blocked[jj, cols] = True
    return np.array(chosen, dtype=np.int64)


EXACT_LIMIT = 1024
EXACT_BUDGET = 50_000


def conflict_masks(grid, table, eligible=None):
    """Conflict neighbourhoods as Python-int bitsets over the grid indices."""
    R, C = grid.rows, grid.cols
    masks = []
    for j in range(R):
        for i in range(C):
            hit = []
            for dj, offs in enumerate(table):
                if not len(offs):
                    continue
                cols = i + offs
                cols = np.mod(cols, C) if grid.periodic_cols else cols[(cols >= 0) & (cols < C)]
                hit.append(((j + dj) % R) * C + cols)
            m = 0
            if hit:
                for k in np.unique(np.concatenate(hit)).tolist():
                    m |= 1 << k
            masks.append(m & ~(1 << (j * C + i)))
    return masks


def _popcount(x):
    return bin(x).count("1")


def exact_maximum(conflicts, seed=(), allowed=None, fix_first=False, budget=EXACT_BUDGET):
    """Maximum independent set of the conflict graph by branch and bound.

    Searches for a maximum clique of the compatibility graph with a greedy
    colouring bound. ``seed`` is a known independent set (the search only
    looks for larger ones). ``fix_first`` restricts to sets containing the
    lowest allowed vertex, valid when the graph is vertex-transitive.
    Returns ``(vertices, proven)``; ``proven`` is False when ``budget``
    search nodes were exhausted.
    """
    N = len(conflicts)
    full = (1 << N) - 1 if allowed is None else allowed
    compat = [full & ~conflicts[v] & ~(1 << v) for v in range(N)]
    best = [list(seed)]
    nodes = [0]

    class _Stop(Exception):
        pass

    def colour(P):
        order, colours = [], []
        U, k = P, 0
        while U:
            k += 1
            Q = U
            while Q:
                low = Q & -Q
                v = low.bit_length() - 1
                Q &= ~low & ~compat[v]
                U &= ~low
                order.append(v)
                colours.append(k)
        return order, colours

    def expand(chosen, P):
        nodes[0] += 1
        if nodes[0] > budget:
            raise _Stop
        order, colours = colour(P)
        for v, c in zip(reversed(order), reversed(colours)):
            if len(chosen) + c <= len(best[0]):
                return
            chosen.append(v)
            nxt = P & compat[v]
            if nxt:
                expand(chosen, nxt)
            elif len(chosen) > len(best[0]):
                best[0] = list(chosen)
            chosen.pop()
            P &= ~(1 << v)

    try:
        if full:
            if fix_first:
                v0 = (full & -full).bit_length() - 1
                if len(best[0]) < 1:
                    best[0] = [v0]
                if compat[v0]:
                    expand([v0], compat[v0])
            else:
                expand([], full)
        proven = True
    except _Stop:
        proven = False
    return sorted(best[0]), proven


@dataclass
class SeparatedSet:
    """Points pairwise more than ``epsilon`` apart in the depth-``n`` Bowen metric."""

    omega: object
    n: int
    epsilon: float
    points: np.ndarray
    grid: CandidateGrid = None
    indices: np.ndarray = None
    method: str = "greedy"

    @property
    def cardinality(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)

    def torus_points(self):
        return [TorusPoint(*p) for p in self.points]


def max_separated(system, omega, n, eps, grid_resolution=None, ctx=DOUBLE, layout="auto",
                  exact="auto"):
    """Large ``(omega, eps, n)``-separated subset of a candidate grid.

    The row-major greedy scan gives a maximal set. On coarse grids (at
    most ``EXACT_LIMIT`` candidates, the default ``exact="auto"``) a branch
    and bound seeded with the greedy set upgrades it to a maximum one;
    ``SeparatedSet.method`` says which was achieved. ``grid_resolution`` may
    be a spacing (float), a ``CandidateGrid``, or ``None`` for the coarsest
    honest unstable-aligned grid. Double precision is used throughout; the
    depth cap from the resolution bound keeps it accurate.
    """
    return _separated(system, omega, n, eps, grid_resolution, layout, None, exact)


def _separated(system, omega, n, eps, grid_resolution, layout, eligible_fn, exact):
    if n < 1 or eps <= 0:
        raise PreconditionViolation("need n >= 1 and eps > 0")
    if isinstance(grid_resolution, CandidateGrid):
        grid = grid_resolution
    else:
        grid = default_grid(system, n, eps, grid_resolution, layout)
    _check_resolution(system, grid, n, eps)
    eligible = eligible_fn(grid) if eligible_fn is not None else None
    if eligible is not None and eligible.all():
        eligible = None
    method = "greedy"
    if eps >= 0.5:
        # the max-metric diameter of the torus is 1/2
        idx = np.flatnonzero(eligible)[:1] if eligible is not None else np.array([0])
        method = "exact"
    else:
        table = conflict_table(system, omega, grid, n, eps)
        idx = greedy_select(grid, table, eligible)
        if exact == "auto":
            exact = grid.size <= EXACT_LIMIT
        if exact:
            masks = conflict_masks(grid, table)
            allowed = None
            if eligible is not None:
                allowed = 0
                for k in np.flatnonzero(eligible).tolist():
                    allowed |= 1 << k
            # a square grid is a translation group, so every vertex looks alike
            found, proven = exact_maximum(masks, idx.tolist(), allowed,
                                          fix_first=grid.periodic_cols and eligible is None)
            idx = np.array(found, dtype=np.int64)
            method = "exact" if proven else "greedy+search"
    rows = idx // grid.cols
    cols = idx % grid.cols
    pts = np.mod(grid.offset + rows[:, None] * grid.row_step + cols[:, None] * grid.col_step, 1.0)
    return SeparatedSet(omega, n, eps, pts.reshape(-1, 2), grid, idx, method)


@dataclass(frozen=True)
class DeviationQuery:
    alpha: float
    delta: float
    n: int
    epsilon: float
    omega: object = 0.0

    def __post_init__(self):
        if self.delta <= 0 or self.n < 1 or self.epsilon <= 0:
            raise PreconditionViolation("need delta > 0, n >= 1, epsilon > 0")


def deviation_count(system, query, phi, grid_resolution=None, ctx=DOUBLE, layout="auto",
                    exact="auto"):
    """Separated subset of the grid points whose n-step average is within delta of alpha.

    Selection is as in ``max_separated`` restricted to the eligible points.
    """
    if query.delta > 2 * phi.sup_norm:
        raise PreconditionViolation("delta exceeds the range of the observable")

    def eligible(grid):
        avg = np.empty(grid.size)
        per = max(1, (1 << 17) // grid.cols)  # rows per batch
        for start in range(0, grid.rows, per):
            rows = np.arange(start, min(grid.rows, start + per))
            avg[start * grid.cols:(rows[-1] + 1) * grid.cols] = \
                batch_averages(system, query.omega, grid.points(rows), phi, query.n)
        return np.abs(avg - query.alpha) < query.delta

    return _separated(system, query.omega, query.n, query.epsilon, grid_resolution, layout,
                      eligible, exact)


def _step_matrices(system, omega, n):
    if system.affine:
        m = system.matrix
        return [np.array([[m.a, m.b], [m.c, m.d]], dtype=float)] * n
    return [system.family.arrays[k] for k in system.symbols(omega, n)]


def _middle_box(mats, m, n, eps):
    """Bounding box of ``{v : |M_t ... M_m v| <= eps`` forward and backward of time ``m``}``."""
    from scipy.optimize import linprog
    rows = [np.eye(2)]
    P = np.eye(2)
    for t in range(m, n - 1):
        P = mats[t] @ P
        rows.append(P.copy())
    P = np.eye(2)
    for t in range(m - 1, -1, -1):
        P = P @ np.linalg.inv(mats[t])
        rows.append(P.copy())
    A = np.concatenate(rows)
    A_ub = np.concatenate([A, -A])
    b_ub = np.full(len(A_ub), eps)
    box = []
    for k in range(2):
        c = np.zeros(2)
        c[k] = -1.0
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * 2, method="highs")
        box.append(-res.fun)
    return max(box)


def certify_separated(system, sep, block=512):
    """Exhaustive pairwise check of a separated set.

    Orbits of the points themselves are compared, not the difference table
    used by the selection. Returns the number of pairs at Bowen distance
    ``<= epsilon``; zero certifies the set.

    When ``eps (r + 1) <= 1`` for the largest row sum ``r`` of the fiber
    matrices, a difference that stays ``eps``-small cannot wrap around the
    torus, so it evolves linearly and, at the middle time, lies in a small
    polytope. A periodic kd-tree at the polytope's radius lists every
    candidate pair, and each candidate is then checked at all times. For
    larger ``eps`` all pairs are scanned.
    """
    pts = np.asarray(sep.points, dtype=float)
    Z, n, eps = len(pts), sep.n, sep.epsilon
    if Z < 2:
        return 0
    mats = _step_matrices(system, sep.omega, n)
    orbits = np.empty((n, Z, 2))
    X = pts.copy()
    h = system.offsets(sep.omega, n) if system.affine else np.zeros((n, 2))
    for t in range(n):
        orbits[t] = X
        X = np.mod(X @ mats[t].T + h[t], 1.0)
    row_sum = max(float(np.abs(M).sum(axis=1).max()) for M in mats)

    def survivors(I, J, times):
        for t in times:
            if len(I) == 0:
                break
            keep = torus_norm(orbits[t, J] - orbits[t, I]) <= eps
            I, J = I[keep], J[keep]
        return len(I)

    if eps * (row_sum + 1) <= 1:
        from scipy.spatial import cKDTree
        m = (n - 1) // 2
        radius = _middle_box(mats, m, n, eps) * (1 + 1e-9) + 1e-12
        tree = cKDTree(orbits[m], boxsize=1.0)
        pairs = tree.query_pairs(radius, p=np.inf, output_type="ndarray")
        if len(pairs) == 0:
            return 0
        return survivors(pairs[:, 0], pairs[:, 1], range(n))
    bad = 0
    order = (0, n - 1, *range(1, n - 1)) if n > 1 else (0,)
    for s in range(0, Z - 1, block):
        rows = np.arange(s, min(s + block, Z - 1))
        I, J = np.nonzero(np.arange(Z)[None, :] > rows[:, None])
        bad += survivors(rows[I], J, order)
    return bad


@dataclass
class RateFit:
    ns: np.ndarray
    log_counts: np.ndarray
    slope: float
    stderr: float
    intercept: float = 0.0

    @property
    def counts(self):
        return np.rint(np.exp(self.log_counts)).astype(np.int64)


def entropy_rate(ns, counts=None, allow_degenerate=False):
    """Least-squares growth rate of ``log count`` against ``n``.

    ``ns`` may also be a sequence of SeparatedSet objects.
    """
    if counts is None:
        sets = list(ns)
        ns = [s.n for s in sets]
        counts = [len(s) for s in sets]
    ns = np.asarray(ns, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if len(ns) < 3 or len(ns) != len(counts):
        raise PreconditionViolation("need at least 3 (n, count) pairs")
    if np.any(counts <= 0):
        raise PreconditionViolation("counts must be positive")
    logs = np.log(counts)
    if np.all(counts == counts[0]):
        if allow_degenerate:
            return RateFit(ns.astype(int), logs, 0.0, 0.0, float(logs[0]))
        raise DegenerateFit("all counts are equal; no growth rate")
    x = ns - ns.mean()
    sxx = float(x @ x)
    slope = float(x @ (logs - logs.mean())) / sxx
    intercept = float(logs.mean() - slope * ns.mean())
    resid = logs - (intercept + slope * ns)
    dof = len(ns) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return RateFit(ns.astype(int), logs, slope, stderr, intercept)


def lyapunov_exponent(family, word, n, ctx=DOUBLE, renorm=32):
    """``(1/n) ln || B_{w[n-1]} ... B_{w[0]} ||`` in the max-row-sum norm."""
    if n < 1:
        raise PreconditionViolation("n must be >= 1")
    word = np.asarray(word, dtype=int)[:n]
    if len(word) < n:
        raise PreconditionViolation("word shorter than n")
    if ctx.exact:
        P = ((mpz(1), mpz(0)), (mpz(0), mpz(1)))
        for k in word:
            (a, b), (c, d) = family.matrices[k]
            P = ((a * P[0][0] + b * P[1][0], a * P[0][1] + b * P[1][1]),
                 (c * P[0][0] + d * P[1][0], c * P[0][1] + d * P[1][1]))
        norm = max(abs(P[0][0]) + abs(P[0][1]), abs(P[1][0]) + abs(P[1][1]))
        with gmpy2.context(precision=ctx.mantissa_bits):
            return float(gmpy2.log(gmpy2.mpfr(norm)) / n)
    mats = [tuple(float(v) for row in B for v in row) for B in family.matrices]
    p, q, r, s = 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    for t, k in enumerate(word.tolist(), 1):
        a, b, c, d = mats[k]
        p, q, r, s = a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s
        if t % renorm == 0:
            nrm = max(abs(p) + abs(q), abs(r) + abs(s))
            p, q, r, s = p / nrm, q / nrm, r / nrm, s / nrm
            log_scale += math.log(nrm)
    nrm = max(abs(p) + abs(q), abs(r) + abs(s))
    return (log_scale + math.log(nrm)) / n
