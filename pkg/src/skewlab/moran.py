"""Irregular points by level-by-level orbit gluing, and the dense-variant chain.

Level ``k`` of the construction consists of ``N_k`` blocks of length
``n_k``, each preceded by a gap of ``m_k`` steps and anchored at a grid
point whose block average is close to the level target (alternating
between two values). The level-``k`` representative is glued from the
previous representative's whole orbit segment and the new blocks, so its
orbit stays within the level radius of everything built before.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (PreconditionViolation, ScheduleInfeasible, EmptyDeviationSet,
                     OscillationNotCertified, PrecisionExhausted)
from .fiber import TorusPoint, eigen_split, torus_norm, CAT_MAP
from .numerics import NumericsContext, DOUBLE
from .orbit import (birkhoff_sums, batch_averages, jump_fixed, as_fixed, as_floats,
                    BirkhoffTrace)
from .shadow import Specification, shadow_specification, gap_function, DEFAULT_C_LAT

DEFAULT_ETA = 0.2
DEFAULT_GROWTH = 12.0
DEFAULT_DELTA = 0.005
MANTISSA_CAP = 1 << 25
ANCHOR_BITS = 8  # anchors are searched on the (2^-8 Z)^2 grid
OFFSET_GRID_BITS = 7  # coarser grid when orbits are not periodic


# -- schedule -------------------------------------------------------------------

@dataclass
class MoranSchedule:
    """Block lengths, counts, gaps, precisions and cumulative times per level.

    ``times[k][j]`` is ``T_j`` of level ``k + 1`` (``j = 0 .. N``); level
    ``k`` block ``j`` occupies ``[times[k][j-1] + m, times[k][j] - 1]``.
    """

    levels: int
    block_lengths: list
    block_counts: list
    gaps: list
    deltas: list
    radii: list
    times: list
    eta: float
    growth: float
    mantissa_bits: int
    lambda_u: float

    def __post_init__(self):
        self.validate()

    def validate(self):
        K = self.levels
        for name in ("block_lengths", "block_counts", "gaps", "deltas", "radii", "times"):
            if len(getattr(self, name)) != K:
                raise PreconditionViolation(f"schedule field {name} needs {K} levels")
        if any(self.deltas[k + 1] >= self.deltas[k] for k in range(K - 1)):
            raise PreconditionViolation("level precisions must strictly decrease")
        flat = [t for level in self.times for t in level[1:]]
        if any(b <= a for a, b in zip(flat, flat[1:])):
            raise PreconditionViolation("cumulative times must strictly increase")
        for k in range(K):
            T = self.times[k]
            start = self.times[k - 1][-1] if k else 0
            if T[0] != start:
                raise PreconditionViolation("each level starts where the previous ends")
            if any(T[j] - T[j - 1] != self.block_lengths[k] + self.gaps[k]
                   for j in range(1, len(T))):
                raise PreconditionViolation("each block advances by its length plus its gap")
            if len(T) != self.block_counts[k] + 1:
                raise PreconditionViolation("times need one entry per block plus the start")
            if self.block_lengths[k] < 2 ** self.gaps[k]:
                raise PreconditionViolation("block length below 2^gap")

    @property
    def horizon(self):
        return self.times[-1][-1]

    @property
    def level_times(self):
        """``T_{N_k}`` for every level: where the oscillation is read off."""
        return [T[-1] for T in self.times]

    @property
    def dominance_ratios(self):
        lt = self.level_times
        return [lt[k - 1] / lt[k] for k in range(1, self.levels)]

    def blocks(self, k):
        """Intervals of level ``k`` (0-based)."""
        T, m = self.times[k], self.gaps[k]
        return [(T[j - 1] + m, T[j] - 1) for j in range(1, len(T))]

    def to_json(self):
        return {"levels": self.levels, "block_lengths": self.block_lengths,
                "block_counts": self.block_counts, "gaps": self.gaps, "deltas": self.deltas,
                "radii": self.radii, "times": self.times, "eta": self.eta,
                "growth": self.growth, "mantissa_bits": self.mantissa_bits,
                "dominance_ratios": self.dominance_ratios}


def _bits_for(n, lambda_u):
    return NumericsContext.for_depth(n, lambda_u).mantissa_bits


def build_schedule(eps_base=DEFAULT_ETA, K=4, T=CAT_MAP, growth=DEFAULT_GROWTH,
                   block_counts=None, delta=DEFAULT_DELTA, mantissa_cap=MANTISSA_CAP,
                   c_lat=DEFAULT_C_LAT):
    """Desk-scale schedule with radius ``eta / 2^{4+k}`` at level ``k``.

    The first block length is ``2^{m_1}``; later levels take the largest of
    ``2^{m_k}``, ``growth^{k-1}`` times the first length, and the shortest
    length that makes the previous levels at most ``1/growth`` of the
    running time.
    """
    K = int(K)
    if K < 2:
        raise PreconditionViolation("need at least two levels for an oscillation")
    if growth < 2:
        raise PreconditionViolation("growth must be >= 2")
    if not 0 < eps_base <= 4:
        raise PreconditionViolation("expansivity constant must lie in (0, 4]")
    matrix = eigen_split(T)
    counts = [1] * K if block_counts is None else [int(c) for c in block_counts]
    if len(counts) != K or min(counts) < 1:
        raise PreconditionViolation("need one positive block count per level")
    radii = [eps_base / 2 ** (4 + k) for k in range(1, K + 1)]
    gaps = [gap_function(r, T, c_lat) for r in radii]
    deltas = [delta / 2 ** k for k in range(K)]
    first = 2 ** gaps[0]
    lengths, times = [], []
    start = 0
    for k in range(K):
        n = max(2 ** gaps[k], int(math.ceil(growth ** k * first)))
        if k:
            need = (growth - 1) * start / counts[k] - gaps[k]
            n = max(n, int(math.ceil(need)))
        lengths.append(n)
        level = [start + j * (n + gaps[k]) for j in range(counts[k] + 1)]
        times.append(level)
        start = level[-1]
    bits = _bits_for(start, matrix.lambda_u)
    if bits > mantissa_cap:
        raise ScheduleInfeasible(f"horizon {start} needs {bits} mantissa bits, above the cap "
                                 f"{mantissa_cap}", horizon=start, mantissa_bits=bits,
                                 cap=mantissa_cap)
    return MoranSchedule(K, lengths, counts, gaps, deltas, radii, times, float(eps_base),
                         float(growth), bits, matrix.lambda_u)


# -- anchors ----------------------------------------------------------------------

def _period_mod(matrix, D):
    """Smallest ``p`` with ``T^p = I`` modulo ``D``."""
    a, b, c, d = matrix.a, matrix.b, matrix.c, matrix.d
    P = (1, 0, 0, 1)
    for p in range(1, 6 * D * D + 1):
        P = ((a * P[0] + b * P[2]) % D, (a * P[1] + b * P[3]) % D,
             (c * P[0] + d * P[2]) % D, (c * P[1] + d * P[3]) % D)
        if P == (1, 0, 0, 1):
            return p
    raise PreconditionViolation("no period found")


def _dyadic_averages(system, phi, n, bits):
    """Exact n-step averages of every point of the ``2^-bits`` grid (h = 0).

    Grid orbits are periodic and exactly representable in double, so a
    full period is summed once and reused.
    """
    D = 1 << bits
    i, j = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
    X = np.stack([i.ravel(), j.ravel()], axis=1).astype(np.int64)
    m = system.matrix
    a, b, c, d = m.a, m.b, m.c, m.d
    P = _period_mod(system.matrix, D)
    q, rem = divmod(n, P)
    total = np.zeros(len(X))
    partial = None
    zero = np.zeros(len(X))
    for t in range(P):
        if t == rem:
            partial = total.copy()
        total += phi(zero, X / D)
        X = np.stack([(a * X[:, 0] + b * X[:, 1]) % D, (c * X[:, 0] + d * X[:, 1]) % D], axis=1)
    if partial is None:
        partial = total.copy()
    pts = np.stack([i.ravel(), j.ravel()], axis=1) / D
    return pts, (q * total + partial) / n


def _grid_averages(system, omega, phi, n, bits):
    """n-step averages of the ``2^-bits`` grid with offsets or a symbol-driven cocycle.

    The linear part of a grid orbit stays on the grid and is carried in
    integers; the offset sums ``F^t(0)`` are rounded once per time, so no
    rounding error is amplified along the orbit.
    """
    D = 1 << bits
    i, j = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
    X = np.stack([i.ravel(), j.ravel()], axis=1).astype(np.int64)
    pts = X / D
    om = system.omega_values(omega, n)
    total = np.zeros(len(X))
    if system.affine:
        m = system.matrix
        mats = None
        shift = np.zeros((n + 1, 2)) if system.linear_offset_free \
            else system.exact_offsets(omega, _bits_for(n, system.lambda_u), n).floats
    else:
        mats = [system.family.matrices[k] for k in system.symbols(omega, n)]
    for t in range(n):
        P = X / D if mats is not None else np.mod(X / D + shift[t], 1.0)
        total += phi(np.full(len(X), om[t]), P)
        (a, b), (c, d) = mats[t] if mats is not None else ((m.a, m.b), (m.c, m.d))
        X = np.stack([(a * X[:, 0] + b * X[:, 1]) % D, (c * X[:, 0] + d * X[:, 1]) % D], axis=1)
    return pts, total / n


def find_block_anchor(system, omega, alpha, delta, n, phi, ctx=DOUBLE, grid_bits=ANCHOR_BITS):
    """Grid point whose ``n``-step average from driving state ``omega`` is within ``4 delta`` of ``alpha``.

    The closest grid point to the target is returned. With a zero offset
    and an observable of the fiber only, grid orbits are periodic and the
    averages are exact. Otherwise the grid is ``2^-7`` and averages carry
    one rounding per step (see ``_grid_averages``); in a BIGFLOAT context
    the chosen point is rechecked along its exact orbit.
    """
    if abs(alpha) > phi.sup_norm:
        raise PreconditionViolation(f"target {alpha} outside the range of the observable")
    if delta <= 0 or n < 1:
        raise PreconditionViolation("need delta > 0 and n >= 1")
    if system.linear_offset_free and not phi.depends_on_omega:
        pts, avg = _dyadic_averages(system, phi, int(n), grid_bits)
        exact_avg = True
    else:
        pts, avg = _grid_averages(system, omega, phi, int(n), min(grid_bits, OFFSET_GRID_BITS))
        exact_avg = False
    err = np.abs(avg - alpha)
    order = np.argsort(err, kind="stable")
    for idx in order[:8]:
        if err[idx] >= 4 * delta:
            break
        p = TorusPoint(*pts[idx])
        if exact_avg or not ctx.exact:
            return p
        s = birkhoff_sums(system, omega, p, phi, [int(n)], ctx)[0] / n
        if abs(s - alpha) < 4 * delta:
            return p
    raise EmptyDeviationSet(f"no grid point has an {n}-step average within {4 * delta:g} of "
                            f"{alpha:g} (best {float(err[order[0]]):.3g})",
                            alpha=alpha, delta=delta, n=n)


# -- irregular points -------------------------------------------------------------

@dataclass
class IrregularCertificate:
    """Glued point with the averages at the end of each level and their ledger."""

    point: TorusPoint
    trace: BirkhoffTrace
    alpha0: float
    alpha1: float
    deviations: list
    tolerances: list
    ledger: list = field(default_factory=list)
    schedule: MoranSchedule = None
    exact_point: object = None
    nesting: list = field(default_factory=list)

    def target(self, k):
        """Target of level ``k`` (1-based): ``alpha1`` on odd levels, ``alpha0`` on even."""
        return self.alpha1 if k % 2 else self.alpha0

    def recheck(self):
        """Deviations recomputed from the trace."""
        return [abs(a - self.target(k)) for k, a in enumerate(self.trace.averages, 1)]

    @property
    def level_gaps(self):
        a = np.asarray(self.trace.averages)
        return np.abs(np.diff(a)).tolist()

    @property
    def certified(self):
        return all(d <= t for d, t in zip(self.deviations, self.tolerances))

    def to_json(self, digits=None):
        pt = self.exact_point
        out = {
            "point": list(pt.decimal_strings(digits)) if pt is not None
            else [repr(self.point.x1), repr(self.point.x2)],
            "alpha0": self.alpha0, "alpha1": self.alpha1,
            "times": [int(t) for t in self.trace.times],
            "averages": [float(a) for a in self.trace.averages],
            "deviations": self.deviations, "tolerances": self.tolerances,
            "level_gaps": self.level_gaps, "nesting": self.nesting, "ledger": self.ledger,
        }
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_json()
        return out


def _level_context(schedule, ctx, horizon):
    """BIGFLOAT context for a partial horizon, scaled like ``ctx`` against the schedule."""
    base = _bits_for(horizon, schedule.lambda_u)
    scale = ctx.mantissa_bits / schedule.mantissa_bits
    return NumericsContext.bigfloat(max(int(math.ceil(base * scale)), base))


def construct_irregular(system, omega, phi, alpha0, alpha1, schedule, ctx=None,
                        allow_equal=False, grid_bits=ANCHOR_BITS):
    """Glue the levels of ``schedule`` into one point and certify its oscillation.

    ``ctx`` defaults to the schedule's BIGFLOAT precision; a context with
    more bits scales every level's precision in proportion.
    """
    if alpha0 == alpha1 and not allow_equal:
        raise PreconditionViolation("targets must differ")
    for a in (alpha0, alpha1):
        if abs(a) > phi.sup_norm:
            raise PreconditionViolation(f"target {a} outside the range of the observable")
    if ctx is None:
        ctx = NumericsContext.bigfloat(schedule.mantissa_bits)
    if not ctx.exact:
        raise PrecisionExhausted("the construction needs a BIGFLOAT context")
    if ctx.mantissa_bits < schedule.mantissa_bits:
        raise PrecisionExhausted(f"{ctx.mantissa_bits} bits below the schedule's "
                                 f"{schedule.mantissa_bits}", requested=schedule.horizon,
                                 mantissa_bits=ctx.mantissa_bits)
    K = schedule.levels
    rep, ledger, nesting = None, [], []
    anchor_cache = {}
    block_devs = []
    for k in range(K):
        level = k + 1
        target = alpha1 if level % 2 else alpha0
        n, delta, radius = schedule.block_lengths[k], schedule.deltas[k], schedule.radii[k]
        blocks = schedule.blocks(k)
        anchors = []
        for a, _ in blocks:
            state = system.advance(omega, a)
            key = (target, delta, n) if system.linear_offset_free and not phi.depends_on_omega \
                else (target, delta, n, a)
            if key not in anchor_cache:
                anchor_cache[key] = find_block_anchor(system, state, target, delta, n, phi,
                                                      DOUBLE, grid_bits)
            anchors.append(anchor_cache[key])
        intervals, points = list(blocks), list(anchors)
        if rep is not None:
            intervals.insert(0, (0, schedule.times[k][0] - 1))
            points.insert(0, rep)
        lctx = _level_context(schedule, ctx, schedule.times[k][-1])
        spec = Specification(omega, intervals, points)
        res = shadow_specification(system, spec, radius, lctx,
                                   budgets=[radius] * (len(intervals) - 1))
        rep = res.point
        devs = list(res.block_deviations)
        if k:
            nesting.append(devs.pop(0))
        block_devs.append(max(devs))
        ledger.append({"level": level, "target": target, "block_length": n,
                       "blocks": len(blocks), "gap": schedule.gaps[k], "radius": radius,
                       "delta": delta, "anchors": [[p.x1, p.x2] for p in anchors],
                       "block_deviation": max(devs), "bounds": res.block_bounds,
                       "retries": res.retries, "mantissa_bits": lctx.mantissa_bits})
    final_ctx = _level_context(schedule, ctx, schedule.horizon)
    x_star = rep.with_bits(final_ctx.mantissa_bits)
    times = schedule.level_times
    sums = birkhoff_sums(system, omega, x_star, phi, times, final_ctx)
    trace = BirkhoffTrace(np.asarray(times), sums / np.asarray(times))
    deviations, tolerances = [], []
    norm = phi.sup_norm
    for k in range(K):
        level = k + 1
        target = alpha1 if level % 2 else alpha0
        # distance of x* from the level-k anchors: own gluing plus all later nestings
        reach = block_devs[k] + sum(nesting[k:])
        var = phi.modulus(max(schedule.radii[k], reach))
        T_end = times[k]
        T_start = schedule.times[k][0]
        free = T_start + schedule.block_counts[k] * schedule.gaps[k]
        overhead = 2 * norm * free / T_end
        tol = 4 * schedule.deltas[k] + var + overhead
        dev = abs(float(trace.averages[k]) - target)
        deviations.append(dev)
        tolerances.append(tol)
        ledger[k].update({"reach": reach, "variation": var, "overhead": overhead,
                          "tolerance": tol, "deviation": dev})
    cert = IrregularCertificate(TorusPoint(*x_star.as_floats()), trace, float(alpha0),
                                float(alpha1), deviations, tolerances, ledger, schedule,
                                x_star, nesting)
    if not cert.certified:
        bad = [k + 1 for k in range(K) if deviations[k] > tolerances[k]]
        raise OscillationNotCertified(f"levels {bad} exceed their tolerance",
                                      certificate=cert, levels=bad)
    return cert


# -- dense variant ----------------------------------------------------------------

@dataclass
class DenseVariantResult:
    """Point near ``target`` whose averages follow those of ``x``."""

    point: TorusPoint
    exact_point: object
    distance: float
    average_gap: float
    bound: float
    gaps: list
    block_lengths: list
    ends: list
    ledger_L: list
    measured_L: list

    @property
    def ok(self):
        return self.average_gap <= self.bound

    def to_json(self):
        return {"point": list(self.exact_point.decimal_strings()), "distance": self.distance,
                "average_gap": self.average_gap, "bound": self.bound, "gaps": self.gaps,
                "block_lengths": self.block_lengths, "ends": self.ends,
                "ledger_L": self.ledger_L, "measured_L": self.measured_L}


def dense_block_lengths(eps, K, T=CAT_MAP, c_lat=DEFAULT_C_LAT):
    """Gaps ``s_k = gap_function(eps / 2^k)`` and minimal lengths ``2^{max(s_k, s_{k+1})}``."""
    s = [gap_function(eps / 2 ** k, T, c_lat) for k in range(1, K + 2)]
    n = [2 ** max(s[k], s[k + 1]) for k in range(K)]
    return s, n


def construct_dense_variant(system, omega, x, target, eps, K, phi, ctx=None,
                            block_lengths=None):
    """Point within ``eps`` of ``target`` that then follows the orbit of ``x``.

    Level ``k`` glues the previous level's orbit over ``[0, l_{k-1})``
    (or the single point ``target`` when ``k = 1``) to the orbit of ``x``
    over ``[l_{k-1} + s_k, l_k)`` at precision ``eps / 2^k``, where
    ``l_k = sum_{i <= k} (s_i + n_i)``.
    """
    if not 0 < eps < 0.25:
        raise PreconditionViolation("eps must lie in (0, 1/4)")
    K = int(K)
    if K < 2:
        raise PreconditionViolation("need at least two levels")
    if not system.affine:
        raise PreconditionViolation("the dense variant needs an affine fiber family")
    s, n_min = dense_block_lengths(eps, K, system.matrix.matrix)
    n = list(n_min) if block_lengths is None else [int(v) for v in block_lengths]
    if len(n) != K or any(a < b for a, b in zip(n, n_min)):
        raise PreconditionViolation(f"block lengths must be at least {n_min}")
    ends = list(np.cumsum([s[k] + n[k] for k in range(K)]).astype(int).tolist())
    horizon = ends[-1]
    if ctx is None or not ctx.exact:
        ctx = NumericsContext.for_depth(horizon, system.lambda_u)
    ctx.check_depth(horizon, system.lambda_u)
    bits = ctx.mantissa_bits
    xf = as_fixed(x, bits)
    y = None
    for k in range(K):
        r = eps / 2 ** (k + 1)
        start = (ends[k - 1] if k else 0) + s[k]
        seg = jump_fixed(system, omega, xf, start)
        if k == 0:
            intervals, points = [(0, 0), (start, ends[0] - 1)], [as_fixed(target, bits), seg]
        else:
            intervals, points = [(0, ends[k - 1] - 1), (start, ends[k] - 1)], [y, seg]
        res = shadow_specification(system, Specification(omega, intervals, points), r, ctx,
                                   budgets=[r])
        y = res.point
    z = y
    zp = TorusPoint(*z.as_floats())
    tp = target if isinstance(target, TorusPoint) else TorusPoint(*as_floats(target))
    dist = float(torus_norm(np.array([zp.x1 - tp.x1, zp.x2 - tp.x2])))
    sz = birkhoff_sums(system, omega, z, phi, ends, ctx)
    sx = birkhoff_sums(system, omega, xf, phi, ends, ctx)
    measured_L = np.abs(sz - sx).tolist()
    norm = phi.sup_norm
    L = [2 * s[0] * norm + n[0] * phi.modulus(eps / 2)]
    for k in range(1, K):
        v = phi.modulus(eps / 2 ** (k + 1))
        L.append(ends[k - 1] * v + L[-1] + 2 * s[k] * norm + n[k] * v)
    bound = phi.modulus(eps / 2 ** K) + L[-1] / ends[-1] + 2 * s[K] * norm / n[-1]
    gap = measured_L[-1] / ends[-1]
    out = DenseVariantResult(zp, z, dist, gap, bound, s, n, ends, L, measured_L)
    if dist >= eps or gap > bound:
        raise OscillationNotCertified(f"dense variant failed: distance {dist:.3g} (limit {eps}), "
                                      f"average gap {gap:.3g} (bound {bound:.3g})", result=out)
    return out
