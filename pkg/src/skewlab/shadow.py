"""Specifications and a constructive shadowing solver.

Orbit segments are glued left to right. Each gluing moves the current
point along its unstable direction so that, after the gap, it lands on the
local stable segment of the next anchor. In eigen-coordinates this is a
small integer search: find a lattice vector ``n`` and reals ``s, r`` with

    u' + s e_u = v + r e_s + n,

where ``u'`` is the current orbit at the next block start ``a``, ``v`` the
anchor there, ``|r| <= rho/2`` and ``|s| <= rho lambda^g / 2`` for the gap
``g``. Moving the point by ``s mu^{-a} e_u`` at time zero realizes the
shift: only the expanding eigenvalue is inverted, never the matrix.
"""

from dataclasses import dataclass, field, replace
import json
import math

import numpy as np
import gmpy2
from gmpy2 import mpz, mpfr

from .errors import (GapTooSmall, LatticeSearchFailed, InvalidSpecification,
                     PrecisionExhausted, PreconditionViolation)
from .fiber import TorusPoint, eigen_split, torus_norm, wrap, CAT_MAP
from .fixed import FixedPoint
from .numerics import NumericsContext, DOUBLE
from .orbit import (as_fixed, as_floats, jump_fixed, difference_stream, iterate,
                    _double_stream)

DEFAULT_C_LAT = 4.0
SELF_HEAL_RETRIES = 3
MARGIN = 0.5


@dataclass
class Specification:
    """Finite specification: driving state, time intervals and one anchor per interval.

    ``anchors[i]`` is the orbit point at time ``a_i``; the rest of each
    segment is regenerated from it.
    """

    omega: object
    intervals: list
    anchors: list

    def __post_init__(self):
        self.intervals = [(int(a), int(b)) for a, b in self.intervals]
        self.validate()

    def validate(self):
        if not self.intervals:
            raise InvalidSpecification("a specification needs at least one interval")
        if len(self.anchors) != len(self.intervals):
            raise InvalidSpecification("one anchor per interval is required")
        prev = None
        for a, b in self.intervals:
            if a < 0 or b < a:
                raise InvalidSpecification(f"bad interval [{a}, {b}]")
            if prev is not None and a <= prev:
                raise InvalidSpecification("intervals must be sorted and disjoint")
            prev = b
        for p in self.anchors:
            v = as_floats(p)
            if v.shape != (2,) or not np.all(np.isfinite(v)):
                raise InvalidSpecification("anchors must be finite torus points")

    @property
    def horizon(self):
        return self.intervals[-1][1]

    @property
    def gaps(self):
        """``a_{i+1} - b_i`` for consecutive intervals."""
        return [self.intervals[i + 1][0] - self.intervals[i][1]
                for i in range(len(self.intervals) - 1)]

    @property
    def spacing(self):
        """Largest ``m`` for which every ``a_{i+1} > b_i + m``."""
        g = self.gaps
        return min(g) - 1 if g else math.inf

    def is_spaced(self, m):
        return self.spacing >= m

    def to_json(self):
        om = getattr(self.omega, "value", getattr(self.omega, "index", self.omega))
        return {"omega": om, "intervals": [list(t) for t in self.intervals],
                "anchors": [[float(v) for v in as_floats(p)] for p in self.anchors]}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            return cls(obj["omega"], obj["intervals"],
                       [TorusPoint(*p) for p in obj["anchors"]])
        except (KeyError, TypeError) as exc:
            raise InvalidSpecification(f"malformed specification: {exc}")


@dataclass(frozen=True)
class GapBudget:
    epsilon: float
    m: int
    lattice_constant: float = DEFAULT_C_LAT
    matrix: object = None

    def __post_init__(self):
        T = self.matrix if self.matrix is not None else CAT_MAP
        need = gap_function(self.epsilon, T, self.lattice_constant)
        if self.m < need:
            raise GapTooSmall(f"gap {self.m} below gap_function = {need}")


def gap_function(eps, T=CAT_MAP, c_lat=DEFAULT_C_LAT):
    """Gap ``ceil((2 ln(1/eps) + ln C_lat) / ln lambda_u)`` for the lattice gluing."""
    if not 0 < eps <= 0.25:
        raise PreconditionViolation("gap_function needs 0 < eps <= 1/4")
    lam = eigen_split(T).lambda_u
    return int(math.ceil((2 * math.log(1 / eps) + math.log(c_lat)) / math.log(lam)
                         - 1e-12))


# -- lattice search -----------------------------------------------------------------

@dataclass(frozen=True)
class Gluing:
    """Solution of one lattice gluing."""

    s: float
    r: float
    lattice: tuple
    gap: int
    radius: float
    expansion: float  # growth of the unstable direction over the gap

    @property
    def backward_shift(self):
        """Size of the unstable move at the end of the earlier block."""
        return abs(self.s) / self.expansion


SEARCH_SPAN = 64.0


def lattice_candidates(delta, u_dir, s_dir, s_max, r_max, bound):
    """All ``(n1, n2, s, r)`` with ``delta + n = s u_dir - r s_dir`` inside the box.

    Enumeration runs over ``n1``; for each, the admissible ``n2`` form a
    short interval solved from the ``r`` constraint.
    """
    E = np.column_stack([u_dir, s_dir])
    F = np.linalg.inv(E)
    fu, fs = F[0], F[1]
    n1 = np.arange(-bound, bound + 1, dtype=np.float64)
    q = fs[0] * (delta[0] + n1) + fs[1] * delta[1]
    if abs(fs[1]) < 1e-300:
        raise LatticeSearchFailed("stable direction is vertical; search degenerate")
    lo = (-r_max - q) / fs[1]
    hi = (r_max - q) / fs[1]
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    lo, hi = np.ceil(lo), np.floor(hi)
    width = int(np.max(hi - lo, initial=-1)) + 1
    if width <= 0:
        return np.empty((0, 4))
    rows = []
    for j in range(width):
        n2 = lo + j
        ok = (n2 <= hi) & (np.abs(n2) <= bound)
        if not np.any(ok):
            continue
        a1, a2 = n1[ok], n2[ok]
        d1, d2 = delta[0] + a1, delta[1] + a2
        s = fu[0] * d1 + fu[1] * d2
        r = -(fs[0] * d1 + fs[1] * d2)
        keep = (np.abs(s) <= s_max) & (np.abs(r) <= r_max)
        if np.any(keep):
            rows.append(np.column_stack([a1[keep], a2[keep], s[keep], r[keep]]))
    return np.concatenate(rows) if rows else np.empty((0, 4))


def select_candidate(cands):
    """Smallest ``|r|``, then smallest ``|s|``, then lexicographic lattice vector."""
    order = np.lexsort((cands[:, 1], cands[:, 0], np.abs(cands[:, 2]), np.abs(cands[:, 3])))
    return cands[order[0]]


def solve_gluing(delta, u_dir, s_dir, expansion, radius, gap):
    """Lattice gluing for mismatch ``delta`` (next anchor minus current orbit)."""
    delta = wrap(np.asarray(delta, dtype=float))
    s_max = radius * expansion / 2
    r_max = radius / 2
    # a strip of area well above the unit covolume already holds lattice points,
    # so the unstable span starts small and only widens when it comes up empty
    span = min(s_max, SEARCH_SPAN / radius)
    while True:
        bound = int(math.ceil(span + r_max + 2))
        cands = lattice_candidates(delta, np.asarray(u_dir), np.asarray(s_dir), span, r_max,
                                   bound)
        if len(cands) or span >= s_max:
            break
        span = min(s_max, 2 * span)
    if len(cands) == 0:
        raise LatticeSearchFailed(f"no lattice vector within |n| <= {bound} for radius {radius:g} "
                                  f"and gap {gap}", radius=radius, gap=gap)
    n1, n2, s, r = select_candidate(cands)
    return Gluing(float(s), float(r), (int(n1), int(n2)), int(gap), float(radius), float(expansion))


# -- splitting providers -----------------------------------------------------------

class _AffineSplitting:
    def __init__(self, system):
        self.m = system.matrix

    def directions(self, a, b):
        return np.array(self.m.e_u), np.array(self.m.e_s), self.m.lambda_u ** (a - b)

    def directions_hp(self, a, bits):
        e_u, e_s, _, _ = self.m.eigen_fixed(bits)
        return e_u, e_s

    def pullback(self, s, a, bits):
        """Fixed-point displacement at time 0 that becomes ``s e_u`` at time ``a``."""
        e_u, _, mu_u, _ = self.m.eigen_fixed(bits)
        with gmpy2.context(precision=bits + 64):
            c = mpfr(s) / (mu_u ** a)
            return _to_fixed_vec((c * e_u[0], c * e_u[1]), bits)

    def shift_float(self, s, a, b):
        """Unstable move observed at time ``b <= a``."""
        return s * float(self.m.mu_u) ** (b - a) * np.array(self.m.e_u)

    def sup_e_u(self):
        return float(np.abs(self.m.e_u).max())

    def sup_e_s(self):
        return float(np.abs(self.m.e_s).max())


class _CocycleSplitting:
    """Finite-time directions of a positive cocycle along one word.

    The unstable direction at time ``a`` is the image of ``(1, 1)`` under
    the product of the first ``a`` matrices, and the stable one is the
    preimage of ``(1, -1)`` under the product from ``a`` to the horizon.
    Both come from exact integer products, so pulling back is exact.
    """

    def __init__(self, system, omega, horizon):
        self.fam = system.family
        self.word = system.symbols(omega, horizon + 1)
        self.horizon = horizon
        self._fwd = {}
        self._bwd = {}

    def _image(self, t):
        v = self._fwd.get(t)
        if v is None:
            x, y = mpz(1), mpz(1)
            for k in self.word[:t]:
                (a, b), (c, d) = self.fam.matrices[k]
                x, y = a * x + b * y, c * x + d * y
            v = self._fwd[t] = (x, y)
        return v

    def _preimage(self, t):
        v = self._bwd.get(t)
        if v is None:
            x, y = mpz(1), mpz(-1)
            for k in self.word[t:self.horizon + 1][::-1]:
                (a, b), (c, d) = self.fam.inverse(int(k))
                x, y = a * x + b * y, c * x + d * y
            v = self._bwd[t] = (x, y)
        return v

    @staticmethod
    def _unit(v, prec):
        with gmpy2.context(precision=prec):
            x, y = mpfr(v[0]), mpfr(v[1])
            n = gmpy2.sqrt(x * x + y * y)
            x, y = x / n, y / n
            if x < 0:
                x, y = -x, -y
            return x, y

    def directions(self, a, b):
        u = np.array([float(c) for c in self._unit(self._image(a), 128)])
        s = np.array([float(c) for c in self._unit(self._preimage(a), 128)])
        return u, s, self._ratio(a, b)

    def directions_hp(self, a, bits):
        return self._unit(self._image(a), bits + 32), self._unit(self._preimage(a), bits + 32)

    def _ratio(self, a, b):
        xa, ya = self._image(a)
        xb, yb = self._image(b)
        with gmpy2.context(precision=128):
            return float(gmpy2.sqrt(mpfr(xa) ** 2 + mpfr(ya) ** 2) /
                         gmpy2.sqrt(mpfr(xb) ** 2 + mpfr(yb) ** 2))

    def pullback(self, s, a, bits):
        xa, ya = self._image(a)
        with gmpy2.context(precision=bits + 64):
            c = mpfr(s) / gmpy2.sqrt(mpfr(xa) ** 2 + mpfr(ya) ** 2)
            return _to_fixed_vec((c, c), bits)

    def shift_float(self, s, a, b):
        x, y = self._unit(self._image(b), 64)
        return s / self._ratio(a, b) * np.array([float(x), float(y)])

    def sup_e_u(self):
        return 1.0

    def sup_e_s(self):
        return 1.0


def _to_fixed_vec(vec, bits):
    out = []
    for v in vec:
        out.append(mpz(gmpy2.floor(gmpy2.mul_2exp(v, bits))))
    return out


def _splitting(system, omega, horizon):
    if system.affine:
        return _AffineSplitting(system)
    return _CocycleSplitting(system, omega, horizon)


# -- public gluing ------------------------------------------------------------------

def _exact_delta(v, u):
    """Torus difference ``v - u`` of two fixed points, centered.

    Returns the float approximation and the exact signed integers.
    """
    bits = max(v.bits, u.bits)
    v, u = v.with_bits(bits), u.with_bits(bits)
    out, ints = [], []
    for dv in (v.x1 - u.x1, v.x2 - u.x2):
        dv = dv % (mpz(1) << bits)
        if dv >= (mpz(1) << (bits - 1)):
            dv -= mpz(1) << bits
        ints.append(dv)
        sh = max(bits - 64, 0)
        out.append(float(dv >> sh) * 2.0 ** (sh - bits))
    return np.array(out), (ints[0], ints[1], bits)


def _refine(glu, exact_delta, u_hp, s_hp):
    """Exact ``(s, r)`` for the chosen lattice vector: the double solve only picks ``n``."""
    D1, D2, bits = exact_delta
    n1, n2 = glu.lattice
    with gmpy2.context(precision=bits + 64):
        d0 = gmpy2.mul_2exp(mpfr(D1), -bits) + n1
        d1 = gmpy2.mul_2exp(mpfr(D2), -bits) + n2
        det = u_hp[0] * s_hp[1] - u_hp[1] * s_hp[0]
        # delta + n = s u - r s_dir
        return (d0 * s_hp[1] - d1 * s_hp[0]) / det, (u_hp[1] * d0 - u_hp[0] * d1) / det


def glue_pair(system, omega, u, b, v, a, eps, ctx=DOUBLE, c_lat=DEFAULT_C_LAT):
    """Glue the orbit ending at ``u`` (time ``b``) to the anchor ``v`` (time ``a``).

    Returns ``w`` at time ``b`` on the unstable segment of ``u`` whose
    image after ``g = a - b`` steps lies on the stable segment of ``v``,
    both within ``eps / 2``. ``omega`` is the driving state at time 0.
    A FixedPoint is returned in BIGFLOAT contexts, a TorusPoint otherwise.
    """
    if not system.affine:
        raise PreconditionViolation("glue_pair needs an affine fiber family")
    g = int(a) - int(b)
    need = gap_function(eps, system.matrix, c_lat)
    if g < need:
        raise GapTooSmall(f"gap {g} below gap_function({eps:g}) = {need}", gap=g, required=need)
    split = _AffineSplitting(system)
    state_b = system.advance(omega, b)
    if ctx.exact:
        ctx.check_depth(g, system.lambda_u)
        bits = ctx.mantissa_bits
        uf = as_fixed(u, bits)
        u_img = jump_fixed(system, state_b, uf, g)
        delta, exact = _exact_delta(as_fixed(v, bits), u_img)
    else:
        uf = as_floats(u)
        u_img = iterate(system, state_b, uf, g, ctx)
        delta = as_floats(v) - np.array([u_img.x1, u_img.x2])
    e_u, e_s, expansion = split.directions(a, b)
    glu = solve_gluing(delta, e_u, e_s, expansion, eps, g)
    if ctx.exact:
        s_exact, _ = _refine(glu, exact, *split.directions_hp(g, bits))
        d1, d2 = split.pullback(s_exact, g, bits)
        return uf.shifted(d1, d2)
    w = uf + split.shift_float(glu.s, g, 0)
    return TorusPoint(float(w[0]), float(w[1]))


# -- solver --------------------------------------------------------------------------

@dataclass
class ShadowResult:
    """Solver output with the gluing ledger."""

    point: FixedPoint
    gluings: list
    budgets: list
    block_bounds: list
    block_deviations: list
    retries: int
    verified: bool
    max_deviation: float

    def as_torus(self):
        return TorusPoint(*self.point.as_floats())


def _anchor_fixed(system, spec, i, bits):
    return as_fixed(spec.anchors[i], bits)


def _initial_point(system, spec, bits):
    """Pull the first anchor back to time 0."""
    a0 = spec.intervals[0][0]
    anchor = _anchor_fixed(system, spec, 0, bits)
    if a0 == 0:
        return anchor
    if system.affine:
        # F^a x = T^a x + c_a(omega) with the exact forward offset sum c_a
        kern = system.matrix.kernel()
        if system.family.offset.is_zero:
            return kern.apply(anchor, -a0)
        c1, c2 = system.exact_offsets(spec.omega, bits, a0).exact(a0)
        return kern.apply(anchor.shifted(-c1, -c2), -a0)
    # forward-only drive: invert the matrix product exactly
    word = system.symbols(spec.omega, a0)
    mask = (mpz(1) << bits) - 1
    X1, X2 = anchor.x1, anchor.x2
    for k in word[::-1]:
        (a, b), (c, d) = system.family.inverse(int(k))
        X1, X2 = (a * X1 + b * X2) & mask, (c * X1 + d * X2) & mask
    return FixedPoint(X1, X2, bits)


def _block_bounds(spec, gluings, split):
    """Ledger of worst-case deviation on each block from the chosen coefficients."""
    k = len(spec.intervals)
    bounds = []
    for j in range(k):
        b_j = spec.intervals[j][1]
        total = abs(gluings[j - 1].r) * split.sup_e_s() if j > 0 else 0.0
        for i in range(j, k - 1):
            a_next = spec.intervals[i + 1][0]
            total += float(np.abs(split.shift_float(gluings[i].s, a_next, b_j)).max())
        bounds.append(total + 1e-12)
    return bounds


def shadow_specification(system, spec, eps, ctx, c_lat=DEFAULT_C_LAT,
                         retries=SELF_HEAL_RETRIES, margin=MARGIN, budgets=None):
    """Build and verify a point shadowing ``spec`` within ``eps``; full ledger returned.

    Gluing ``i`` uses radius ``eps * margin / 2**i`` unless explicit
    ``budgets`` are given; each gap must reach ``gap_function`` of its
    radius. Self-heal retries widen a radius by ``sqrt(2)`` per attempt.
    """
    if not isinstance(spec, Specification):
        raise InvalidSpecification("expected a Specification")
    spec.validate()
    if not ctx.exact:
        raise PrecisionExhausted("shadowing needs a BIGFLOAT context certified through "
                                 "the last interval", requested=spec.horizon)
    ctx.check_depth(spec.horizon, system.lambda_u)
    bits = ctx.mantissa_bits
    k = len(spec.intervals)
    if budgets is None:
        budgets = [eps * margin / 2 ** i for i in range(k - 1)]
    budgets = [float(b) for b in budgets]
    if len(budgets) != k - 1 or any(not 0 < b <= 0.25 for b in budgets):
        raise PreconditionViolation("need one gluing radius in (0, 1/4] per gap")
    if system.affine and k > 1:
        # every gap must carry its own gluing radius
        for i, g in enumerate(spec.gaps):
            need = gap_function(budgets[i], system.matrix, c_lat)
            if g < need:
                raise GapTooSmall(f"gap {i} is {g}, below gap_function({budgets[i]:g}) = {need}",
                                  gap=g, required=need, index=i)
    split = _splitting(system, spec.omega, spec.horizon)
    x = _initial_point(system, spec, bits)
    gluings, used = [], 0
    for i in range(k - 1):
        b = spec.intervals[i][1]
        a = spec.intervals[i + 1][0]
        current = jump_fixed(system, spec.omega, x, a)
        delta, exact = _exact_delta(_anchor_fixed(system, spec, i + 1, bits), current)
        u_dir, s_dir, expansion = split.directions(a, b)
        glu = None
        for attempt in range(retries + 1):
            radius = min(budgets[i] * 2 ** (attempt / 2), 0.9 * eps)
            try:
                glu = solve_gluing(delta, u_dir, s_dir, expansion, radius, a - b)
                break
            except LatticeSearchFailed:
                if attempt == retries:
                    raise
                used += 1
        s_exact, r_exact = _refine(glu, exact, *split.directions_hp(a, bits))
        d1, d2 = split.pullback(s_exact, a, bits)
        x = x.shifted(d1, d2)
        # the ledger describes the point actually built, not the double solve
        gluings.append(replace(glu, s=float(s_exact), r=float(r_exact)))
    bounds = _block_bounds(spec, gluings, split)
    devs = block_deviations(system, spec, x, ctx)
    mx = max(devs)
    ok = mx < eps
    if system.affine and (not ok or any(d > bd + 1e-9 for d, bd in zip(devs, bounds))):
        raise LatticeSearchFailed("glued point failed verification", deviations=devs,
                                  bounds=bounds)
    if not ok:
        raise LatticeSearchFailed("best-effort cocycle gluing failed verification",
                                  deviations=devs)
    return ShadowResult(x, gluings, budgets, bounds, devs, used, ok, mx)


def random_specification(rng, system, eps, c_lat=DEFAULT_C_LAT, margin=MARGIN, max_length=40,
                         slack=4):
    """Random 2-4 block specification whose gaps meet the per-gluing gate.

    Block lengths are uniform in ``[1, max_length)``; each gap is the
    ``gap_function`` of its default gluing radius plus a uniform extra in
    ``[0, slack)``. Anchors and the driving state are uniform.
    """
    k = int(rng.integers(2, 5))
    intervals, t = [], 0
    for i in range(k):
        length = int(rng.integers(1, max_length))
        intervals.append((t, t + length - 1))
        t += length - 1
        if i < k - 1:
            t += gap_function(eps * margin / 2 ** i, system.matrix, c_lat)
            t += int(rng.integers(0, slack))
    anchors = [tuple(rng.random(2).tolist()) for _ in range(k)]
    omega = float(rng.random()) if system.driver.kind == "rotation" else int(rng.integers(0, 1000))
    return Specification(omega, intervals, anchors)


def solve_specification(system, spec, eps, ctx, c_lat=DEFAULT_C_LAT):
    """Point whose orbit stays within ``eps`` of every specified segment.

    The returned FixedPoint has ``ctx.mantissa_bits`` digits; its
    verification has already passed.
    """
    return shadow_specification(system, spec, eps, ctx, c_lat).point


def block_deviations(system, spec, x, ctx=DOUBLE):
    """Max torus deviation between the orbit of ``x`` and each specified segment."""
    out = []
    for i, (a, b) in enumerate(spec.intervals):
        n = b - a + 1
        state_a = system.advance(spec.omega, a)
        if ctx.exact:
            ctx.check_depth(b, system.lambda_u)
            bits = ctx.mantissa_bits
            p = jump_fixed(system, spec.omega, as_fixed(x, bits), a)
            q = _anchor_fixed(system, spec, i, bits)
        else:
            p = iterate(system, spec.omega, x, a, ctx)
            q = spec.anchors[i]
        best = 0.0
        for part in difference_stream(system, state_a, q, p, n, ctx):
            best = max(best, float(torus_norm(part).max()))
        out.append(best)
    return out


def verify_shadowing(system, spec, x, eps, ctx=DOUBLE):
    """``(all deviations < eps, max deviation)`` over every specified time."""
    devs = block_deviations(system, spec, x, ctx)
    mx = max(devs)
    return mx < eps, mx
