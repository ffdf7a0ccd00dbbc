"""Skew-product orbits, fiber Bowen metrics, observables and Birkhoff sums.

``DOUBLE`` contexts produce ordinary floating-point pseudo-orbits.
``BIGFLOAT`` contexts run on exact fixed-point coordinates (see
``skewlab.fixed``) and refuse horizons beyond the certified depth.
"""

from dataclasses import dataclass
import math
import re

import numpy as np
from gmpy2 import mpz

from .errors import PrecisionExhausted, PreconditionViolation, ConfigInvalid
from .driving import RotationDriver, SturmianDriver
from .fiber import (AffineFiberFamily, PositiveCocycleFamily, TorusPoint, torus_norm,
                    torus_distance, wrap)
from .fixed import FixedPoint, AffineOffsets, GUARD_BITS, fixed_to_float
from .numerics import NumericsContext, DOUBLE


class SkewSystem:
    """Driving system paired with a fiber family: ``(omega, x) -> (theta omega, F_omega x)``."""

    def __init__(self, driver=None, family=None):
        self.driver = driver if driver is not None else RotationDriver()
        self.family = family if family is not None else AffineFiberFamily()
        if self.family.kind == "cocycle" and not isinstance(self.driver, SturmianDriver):
            raise ConfigInvalid("cocycle families are driven by the Sturmian subshift",
                                fields={"driver": "cocycle family needs 'sturmian'"})
        if (self.family.kind == "affine" and not self.family.offset.is_zero
                and not isinstance(self.driver, RotationDriver)):
            raise ConfigInvalid("nonzero offset maps need a circle-rotation driver",
                                fields={"h": "needs driver 'rotation'"})
        self._offset_cache = {}

    @property
    def affine(self):
        return self.family.kind == "affine"

    @property
    def matrix(self):
        if not self.affine:
            raise PreconditionViolation("operation needs an affine fiber family")
        return self.family.matrix

    @property
    def lambda_u(self):
        """Per-step expansion used for precision budgeting."""
        if self.affine:
            return self.family.matrix.lambda_u
        return self.family.growth_bound

    @property
    def linear_offset_free(self):
        return self.affine and self.family.offset.is_zero

    def state(self, omega):
        return self.driver.state(omega)

    def advance(self, omega, t):
        return self.driver.advance(self.state(omega), t)

    def omega_values(self, omega, n):
        return self.driver.omega_values(self.state(omega), n)

    def offsets(self, omega, n):
        """Float offsets ``h(theta^t omega)`` for ``t < n`` (affine only)."""
        if self.family.offset.is_zero:
            return np.zeros((n, 2))
        return self.family.offset(self.omega_values(omega, n))

    def symbols(self, omega, n):
        return self.driver.symbols(self.state(omega), n)

    # -- exact affine offsets ------------------------------------------------

    def exact_offsets(self, omega, bits, horizon):
        """Cached ``F^t_omega(0)`` tables for the affine family."""
        state = self.state(omega)
        key = (repr(state), bits)
        tab = self._offset_cache.get(key)
        if tab is None or tab.horizon < horizon:
            off = self.family.offset
            drv = self.driver

            def offset(t, b):
                return off.fixed(drv, state, t, b)

            tab = AffineOffsets(self.matrix.kernel(), offset, bits, max(horizon, 1))
            if len(self._offset_cache) > 16:
                self._offset_cache.clear()
            self._offset_cache[key] = tab
        return tab

    def describe(self):
        out = dict(self.driver.describe())
        out.update(self.family.describe())
        return out


# -- observables --------------------------------------------------------------

_TERMS = {
    "cos_x1": (lambda om, x: np.cos(2 * np.pi * x[..., 0]), False, 1),
    "cos_omega_sin_x2": (lambda om, x: np.cos(2 * np.pi * om) * np.sin(2 * np.pi * x[..., 1]),
                         True, 2),
}


_TERM_RE = re.compile(r"\s*([+-]?)\s*(?:((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*\*\s*)?"
                      r"([A-Za-z_][A-Za-z0-9_]*)\s*")


class Observable:
    """Finite real combination of the built-in observables.

    ``COS_X1`` is ``cos(2 pi x1)``; ``COS_OMEGA_SIN_X2`` is
    ``cos(2 pi omega) sin(2 pi x2)``.
    """

    def __init__(self, terms=None):
        terms = dict(terms or {})
        for k in terms:
            if k not in _TERMS:
                raise ConfigInvalid(f"unknown observable term {k!r}",
                                    fields={"observable": f"unknown term {k!r}"})
        self.terms = {k: float(v) for k, v in terms.items() if v != 0}

    @classmethod
    def parse(cls, text):
        """Read ``"cos_x1"`` or ``"0.5*cos_x1 - 2e-1 * cos_omega_sin_x2"``."""
        text = text.strip()
        if text in ("", "0"):
            return cls({})
        terms, pos = {}, 0
        for m in _TERM_RE.finditer(text):
            if m.start() != pos or (pos > 0 and not m.group(1)):
                break
            sign = -1.0 if m.group(1) == "-" else 1.0
            coef = float(m.group(2)) if m.group(2) else 1.0
            name = m.group(3).lower()
            terms[name] = terms.get(name, 0.0) + sign * coef
            pos = m.end()
        if pos != len(text) or not terms:
            raise ConfigInvalid(f"cannot read observable {text!r}",
                                fields={"observable": "expected terms like 0.5*cos_x1"})
        return cls(terms)

    def __call__(self, omega, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for k, c in self.terms.items():
            out = out + c * _TERMS[k][0](np.asarray(omega, dtype=float), x)
        return out

    def __add__(self, other):
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0.0) + v
        return Observable(t)

    def __rmul__(self, c):
        return Observable({k: c * v for k, v in self.terms.items()})

    __mul__ = __rmul__

    @property
    def sup_norm(self):
        """Upper bound for ``sup |phi|``: the sum of absolute coefficients."""
        return float(sum(abs(c) for c in self.terms.values()))

    @property
    def depends_on_omega(self):
        return any(_TERMS[k][1] for k in self.terms)

    def modulus(self, r):
        """Bound on ``|phi(p) - phi(q)|`` for points closer than ``r`` in the product metric."""
        r = min(float(r), 0.5)
        base = 2.0 * math.sin(math.pi * r)
        total = sum(abs(c) * min(_TERMS[k][2] * base, 2.0) for k, c in self.terms.items())
        return min(total, 2.0 * self.sup_norm)

    def describe(self):
        if not self.terms:
            return "0"
        return " + ".join(f"{c!r}*{k}" for k, c in self.terms.items())

    def __repr__(self):
        return f"Observable({self.describe()!r})"


COS_X1 = Observable({"cos_x1": 1.0})
COS_OMEGA_SIN_X2 = Observable({"cos_omega_sin_x2": 1.0})
ZERO = Observable({})


@dataclass
class BirkhoffTrace:
    """Partial Birkhoff averages ``averages[j]`` after ``times[j]`` steps."""

    times: np.ndarray
    averages: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.averages = np.asarray(self.averages, dtype=float)

    def to_rows(self):
        return [(int(t), float(a)) for t, a in zip(self.times, self.averages)]

    def to_csv(self, path):
        from ._io import write_csv
        write_csv(path, ["n", "average"], [(t, repr(a)) for t, a in self.to_rows()])


# -- point coercion -------------------------------------------------------------

def as_fixed(x, bits):
    """Exact fixed-point copy of a point at ``bits`` digits."""
    if isinstance(x, FixedPoint):
        return x.with_bits(bits)
    if isinstance(x, TorusPoint):
        return FixedPoint.from_values(x.x1, x.x2, bits)
    x1, x2 = x
    return FixedPoint.from_values(x1, x2, bits)


def as_floats(x):
    if isinstance(x, FixedPoint):
        return np.array(x.as_floats())
    if isinstance(x, TorusPoint):
        return np.array([x.x1, x.x2])
    return np.mod(np.asarray(x, dtype=float), 1.0)


def _to_torus(v):
    return TorusPoint(float(v[0]), float(v[1]))


def _bits(ctx, system, n):
    ctx.check_depth(abs(n), system.lambda_u)
    return ctx.mantissa_bits


# -- exact jumps ---------------------------------------------------------------

def jump_fixed(system, omega, x, n, bits=None):
    """Exact ``F^n_omega x`` as a FixedPoint (affine family; ``n`` may be negative)."""
    x = x if isinstance(x, FixedPoint) else as_fixed(x, bits)
    if bits is not None and x.bits != bits:
        x = x.with_bits(bits)
    if not system.affine:
        return _cocycle_jump(system, omega, x, n)
    kern = system.matrix.kernel()
    if system.family.offset.is_zero or n == 0:
        return kern.apply(x, n)
    if n > 0:
        c1, c2 = system.exact_offsets(omega, x.bits, n).exact(n)
        return kern.apply(x, n).shifted(c1, c2)
    # x_{-k} = T^{-k} (x - c_k(theta^{-k} omega))
    k = -n
    start = system.advance(omega, -k)
    c1, c2 = system.exact_offsets(start, x.bits, k).exact(k)
    return kern.apply(x.shifted(-c1, -c2), -k)


def _cocycle_jump(system, omega, x, n):
    if n < 0:
        raise PreconditionViolation("cocycle families iterate forward only")
    syms = system.symbols(omega, n)
    mats = [tuple(mpz(v) for row in B for v in row) for B in system.family.matrices]
    mask = (mpz(1) << x.bits) - 1
    X1, X2 = x.x1, x.x2
    for s in syms:
        a, b, c, d = mats[s]
        X1, X2 = (a * X1 + b * X2) & mask, (c * X1 + d * X2) & mask
    return FixedPoint(X1, X2, x.bits)


# -- streams ---------------------------------------------------------------------

def _double_stream(system, omega, x, n, chunk=1 << 15):
    """Float pseudo-orbit positions at times ``0 .. n-1`` in chunks."""
    x1, x2 = (float(v) for v in as_floats(x))
    done = 0
    if system.affine:
        m = system.matrix
        a, b, c, d = float(m.a), float(m.b), float(m.c), float(m.d)
        zero = system.family.offset.is_zero
        while done < n:
            L = min(chunk, n - done)
            out = np.empty((L, 2))
            if zero:
                for t in range(L):
                    out[t, 0] = x1
                    out[t, 1] = x2
                    x1, x2 = (a * x1 + b * x2) % 1.0, (c * x1 + d * x2) % 1.0
            else:
                h = system.offsets(system.advance(omega, done), L)
                h1, h2 = h[:, 0].tolist(), h[:, 1].tolist()
                for t in range(L):
                    out[t, 0] = x1
                    out[t, 1] = x2
                    x1, x2 = (a * x1 + b * x2 + h1[t]) % 1.0, (c * x1 + d * x2 + h2[t]) % 1.0
            done += L
            yield out
    else:
        mats = [tuple(float(v) for row in B for v in row) for B in system.family.matrices]
        while done < n:
            L = min(chunk, n - done)
            syms = system.symbols(system.advance(omega, done), L).tolist()
            out = np.empty((L, 2))
            for t in range(L):
                out[t, 0] = x1
                out[t, 1] = x2
                a, b, c, d = mats[syms[t]]
                x1, x2 = (a * x1 + b * x2) % 1.0, (c * x1 + d * x2) % 1.0
            done += L
            yield out


def _exact_stream(system, omega, x, n):
    bits = x.bits
    if system.affine:
        kern = system.matrix.kernel()
        if kern.need(n) > bits:
            raise PrecisionExhausted(f"{bits} bits cannot certify {n} steps",
                                     requested=n, mantissa_bits=bits)
        if system.family.offset.is_zero:
            yield from kern.stream(x, n)
            return
        tab = system.exact_offsets(omega, bits, n)
        done = 0
        for part in kern.stream(x, n):
            L = len(part)
            yield np.mod(part + tab.floats[done:done + L], 1.0)
            done += L
        return
    mats = [tuple(mpz(v) for row in B for v in row) for B in system.family.matrices]
    mask = (mpz(1) << bits) - 1
    X1, X2 = x.x1, x.x2
    done = 0
    while done < n:
        L = min(1 << 14, n - done)
        syms = system.symbols(system.advance(omega, done), L).tolist()
        out = np.empty((L, 2))
        for t in range(L):
            out[t, 0] = fixed_to_float(X1, bits)
            out[t, 1] = fixed_to_float(X2, bits)
            a, b, c, d = mats[syms[t]]
            X1, X2 = (a * X1 + b * X2) & mask, (c * X1 + d * X2) & mask
        done += L
        yield out


def orbit_stream(system, omega, x, n, ctx=DOUBLE):
    """Yield (k, 2) float arrays with ``F^t_omega x`` for ``t = 0 .. n-1``."""
    if n <= 0:
        return
    if ctx.exact:
        bits = _bits(ctx, system, n)
        yield from _exact_stream(system, omega, as_fixed(x, bits), n)
    else:
        yield from _double_stream(system, omega, x, n)


def orbit_array(system, omega, x, n, ctx=DOUBLE):
    parts = list(orbit_stream(system, omega, x, n, ctx))
    return np.concatenate(parts) if parts else np.empty((0, 2))


def _linear_system(system):
    """The same system with the offset removed: it acts on differences."""
    if system.linear_offset_free or not system.affine:
        return system
    lin = getattr(system, "_linear_twin", None)
    if lin is None:
        lin = SkewSystem(system.driver, AffineFiberFamily(system.matrix))
        system._linear_twin = lin
    return lin


def difference_stream(system, omega, x, y, n, ctx=DOUBLE):
    """Yield chunks of ``F^t y - F^t x`` (mod 1) for ``t < n``.

    Fiber maps are affine or linear, so the difference follows the linear
    part alone and is computed without the cancellation of subtracting two
    orbits.
    """
    lin = _linear_system(system)
    if ctx.exact:
        bits = _bits(ctx, system, n)
        X, Y = as_fixed(x, bits), as_fixed(y, bits)
        diff = FixedPoint(Y.x1 - X.x1, Y.x2 - X.x2, bits)
        yield from _exact_stream(lin, omega, diff, n)
        return
    d = wrap(as_floats(y) - as_floats(x))
    if lin.affine:
        m = lin.matrix
        a, b, c, dd = float(m.a), float(m.b), float(m.c), float(m.d)
        d1, d2 = float(d[0]), float(d[1])
        done = 0
        while done < n:
            L = min(1 << 15, n - done)
            out = np.empty((L, 2))
            for t in range(L):
                out[t, 0] = d1
                out[t, 1] = d2
                e1, e2 = a * d1 + b * d2, c * d1 + dd * d2
                d1, d2 = e1 - math.floor(e1 + 0.5), e2 - math.floor(e2 + 0.5)
            done += L
            yield out
    else:
        yield from _double_stream(lin, omega, np.mod(d, 1.0), n)


# -- public operations ---------------------------------------------------------------

def iterate_fixed(system, omega, x, n, ctx):
    """Exact ``F^n_omega x`` in a BIGFLOAT context, as a FixedPoint."""
    if not ctx.exact:
        raise PreconditionViolation("iterate_fixed needs a BIGFLOAT context")
    bits = _bits(ctx, system, n)
    return jump_fixed(system, omega, as_fixed(x, bits), n)


def iterate(system, omega, x, n, ctx=DOUBLE):
    """Fiber image ``F^n_omega x`` along ``theta^i omega``.

    Negative ``n`` is allowed for affine families.
    """
    n = int(n)
    if n == 0:
        return _to_torus(as_floats(x))
    if n < 0 and not system.affine:
        raise PreconditionViolation("cocycle families iterate forward only")
    if ctx.exact:
        return _to_torus(iterate_fixed(system, omega, x, n, ctx).as_floats())
    if n > 0:
        last = None
        for part in _double_stream(system, omega, x, n + 1):
            last = part
        return _to_torus(last[-1])
    # backward in double precision
    m = system.matrix
    det = m.det
    ia, ib, ic, id_ = m.d * det, -m.b * det, -m.c * det, m.a * det
    x1, x2 = (float(v) for v in as_floats(x))
    k = -n
    h = system.offsets(system.advance(omega, -k), k)
    for t in range(k - 1, -1, -1):
        y1, y2 = x1 - h[t, 0], x2 - h[t, 1]
        x1, x2 = (ia * y1 + ib * y2) % 1.0, (ic * y1 + id_ * y2) % 1.0
    return _to_torus((x1, x2))


def bowen_distance(system, omega, n, x, y, ctx=DOUBLE):
    """``max_{0 <= i < n} d(F^i x, F^i y)`` along the drive from ``omega``."""
    if n < 1:
        raise PreconditionViolation("Bowen distance needs n >= 1")
    best = 0.0
    for part in difference_stream(system, omega, x, y, n, ctx):
        best = max(best, float(torus_norm(part).max()))
    return best


def in_bowen_ball(system, omega, n, x, y, eps, ctx=DOUBLE):
    """Membership of ``y`` in the open Bowen ball of radius ``eps`` about ``x``."""
    return bowen_distance(system, omega, n, x, y, ctx) < eps


def birkhoff_sums(system, omega, x, phi, checkpoints, ctx=DOUBLE):
    """Sums ``sum_{i < c} phi(Theta^i(omega, x))`` at each checkpoint ``c``."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or len(cps) == 0 or cps[0] < 1 or np.any(np.diff(cps) <= 0):
        raise PreconditionViolation("checkpoints must be strictly increasing and >= 1")
    n = int(cps[-1])
    sums = np.empty(len(cps))
    total, done, j = 0.0, 0, 0
    for part in orbit_stream(system, omega, x, n, ctx):
        L = len(part)
        om = system.omega_values(system.advance(omega, done), L) if phi.depends_on_omega \
            else np.zeros(L)
        vals = phi(om, part)
        csum = np.cumsum(vals)
        while j < len(cps) and cps[j] <= done + L:
            sums[j] = total + csum[cps[j] - done - 1]
            j += 1
        total += float(vals.sum())
        done += L
    return sums


def birkhoff_trace(system, omega, x, phi, checkpoints, ctx=DOUBLE):
    """Birkhoff averages of ``phi`` at the given checkpoints."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    sums = birkhoff_sums(system, omega, x, phi, cps, ctx)
    return BirkhoffTrace(cps, sums / cps)


def default_checkpoints(n):
    """Powers of two up to ``n``, plus ``n`` itself."""
    out = [1 << k for k in range(int(math.log2(max(n, 1))) + 1) if (1 << k) <= n]
    if out[-1] != n:
        out.append(n)
    return out


def batch_averages(system, omega, points, phi, n):
    """Double-precision n-step Birkhoff averages for many starting points at once."""
    X = np.mod(np.asarray(points, dtype=float), 1.0).copy()
    om = system.omega_values(omega, n)
    total = np.zeros(len(X))
    if system.affine:
        h = system.offsets(omega, n)
        for t in range(n):
            total += phi(np.full(len(X), om[t]), X)
            X = np.mod(system.family.linear_step(X) + h[t], 1.0)
    else:
        syms = system.symbols(omega, n)
        for t in range(n):
            total += phi(np.full(len(X), om[t]), X)
            X = system.family(syms[t], X)
    return total / n
