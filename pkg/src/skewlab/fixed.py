"""Exact fixed-point arithmetic on the 2-torus.

A point is stored as two integers ``X1, X2`` in ``[0, 2**bits)`` standing
for ``(X1 / 2**bits, X2 / 2**bits)``. An integer matrix acts on such
points without rounding: ``(T X) mod 2**bits``. Only the deliberate
truncations below lose information, and each one is followed by at most
``n`` further steps whose amplification is covered by the guard bits, so
an orbit of length ``n`` started from ``need(n)`` bits is faithful to the
true orbit of the stored point.

Long orbits are streamed by divide and conquer: a segment of length ``n``
is split in two, the start of the second half is obtained with one
multiplication by ``T**h``, and each half is truncated to the precision it
still needs. Short leaves are finished in vectorized ``int64`` arithmetic.
"""

from fractions import Fraction
from decimal import Decimal
import math

import numpy as np
import gmpy2
from gmpy2 import mpz

GUARD_BITS = 64
LEAF = 16
CHUNK = 1 << 16


def to_fixed(value, bits):
    """Return ``floor(value * 2**bits) mod 2**bits`` for an exact value.

    Floats are dyadic, so their conversion is exact. Strings and Decimals
    are read as exact rationals.
    """
    if isinstance(value, type(mpz(0))):
        return value % (mpz(1) << bits)
    if isinstance(value, str):
        value = Fraction(Decimal(value.strip()))
    elif isinstance(value, (Decimal, float, int)):
        value = Fraction(value)
    elif isinstance(value, gmpy2.mpfr(0).__class__):
        m, e = value.as_mantissa_exp()
        value = Fraction(int(m)) * Fraction(2) ** int(e)
    elif isinstance(value, np.floating):
        value = Fraction(float(value))
    if not isinstance(value, Fraction):
        raise TypeError(f"cannot convert {type(value).__name__} to fixed point")
    num = mpz(value.numerator) << bits
    return (num // value.denominator) % (mpz(1) << bits)


def fixed_to_float(X, bits):
    """Nearest-double value of ``X / 2**bits`` (without materializing a huge float)."""
    if bits > 64:
        X = X >> (bits - 64)
        bits = 64
    return float(X) / float(1 << bits)


class FixedPoint:
    """Torus point with integer coordinates at ``bits`` binary digits."""

    __slots__ = ("x1", "x2", "bits")

    def __init__(self, x1, x2, bits):
        mask = (mpz(1) << bits) - 1
        self.x1 = mpz(x1) & mask
        self.x2 = mpz(x2) & mask
        self.bits = int(bits)

    @classmethod
    def from_values(cls, v1, v2, bits):
        return cls(to_fixed(v1, bits), to_fixed(v2, bits), bits)

    def as_floats(self):
        return (fixed_to_float(self.x1, self.bits), fixed_to_float(self.x2, self.bits))

    def with_bits(self, bits):
        """Extend with zeros or truncate toward zero."""
        if bits >= self.bits:
            sh = bits - self.bits
            return FixedPoint(self.x1 << sh, self.x2 << sh, bits)
        sh = self.bits - bits
        return FixedPoint(self.x1 >> sh, self.x2 >> sh, bits)

    def shifted(self, d1, d2):
        """Add a displacement given as fixed integers at the same precision."""
        return FixedPoint(self.x1 + d1, self.x2 + d2, self.bits)

    def decimal_strings(self, digits=None):
        """Decimal expansions in [0, 1), rounded down to ``digits`` places.

        The default ``digits`` keeps a rounding error below ``2**-bits``.
        """
        if digits is None:
            digits = int(math.ceil(self.bits * math.log10(2))) + 1
        scale = mpz(10) ** digits
        out = []
        for X in (self.x1, self.x2):
            q = (X * scale) >> self.bits
            out.append("0." + gmpy2.digits(q).rjust(digits, "0"))
        return tuple(out)

    def __eq__(self, other):
        return (isinstance(other, FixedPoint) and self.bits == other.bits
                and self.x1 == other.x1 and self.x2 == other.x2)

    def __hash__(self):
        return hash((int(self.x1), int(self.x2), self.bits))

    def __repr__(self):
        a, b = self.as_floats()
        return f"FixedPoint({a!r}, {b!r}, bits={self.bits})"


def _mat_mul(p, q):
    a, b, c, d = p
    e, f, g, h = q
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


class LinearKernel:
    """Exact powers and orbits of an integer matrix with ``|det| = 1``."""

    def __init__(self, a, b, c, d, lambda_u):
        self.entries = tuple(mpz(v) for v in (a, b, c, d))
        a, b, c, d = self.entries
        det = a * d - b * c
        if abs(det) != 1:
            raise ValueError("matrix must be unimodular")
        self.inverse = (d * det, -b * det, -c * det, a * det)
        self.log2_lambda = math.log2(lambda_u)
        rowsum = max(abs(a) + abs(b), abs(c) + abs(d))
        # each leaf runs on two int64 limbs of limb_bits; one step must not overflow a limb
        self.limb_bits = 62 - int(rowsum).bit_length()
        self.leaf_bits = 2 * self.limb_bits
        self._powers = {0: (mpz(1), mpz(0), mpz(0), mpz(1)), 1: self.entries,
                        -1: self.inverse}

    def need(self, n):
        """Bits required to follow ``n`` steps faithfully."""
        return int(math.ceil(max(n, 0) * self.log2_lambda)) + GUARD_BITS

    def certified_depth(self, bits):
        return int(math.floor((bits - GUARD_BITS) / self.log2_lambda))

    def power(self, n):
        n = int(n)
        hit = self._powers.get(n)
        if hit is not None:
            return hit
        base = self.entries if n > 0 else self.inverse
        k = abs(n)
        result = (mpz(1), mpz(0), mpz(0), mpz(1))
        sq = base
        while k:
            if k & 1:
                result = _mat_mul(sq, result)
            k >>= 1
            if k:
                sq = _mat_mul(sq, sq)
        if len(self._powers) > 4096:
            self._powers.clear()
            self._powers[1] = self.entries
            self._powers[-1] = self.inverse
            self._powers[0] = (mpz(1), mpz(0), mpz(0), mpz(1))
        self._powers[n] = result
        return result

    def apply(self, point, n):
        """Exact image ``T**n point`` at the point's precision."""
        a, b, c, d = self.power(n)
        return FixedPoint(a * point.x1 + b * point.x2, c * point.x1 + d * point.x2,
                          point.bits)

    def apply_raw(self, X1, X2, bits, n):
        a, b, c, d = self.power(n)
        mask = (mpz(1) << bits) - 1
        return (a * X1 + b * X2) & mask, (c * X1 + d * X2) & mask

    # -- streaming -------------------------------------------------------

    def _leaves(self, X1, X2, prec, n, out):
        if n <= LEAF:
            sh = prec - self.leaf_bits
            if sh >= 0:
                out.append((int(X1 >> sh), int(X2 >> sh)))
            else:
                out.append((int(X1 << -sh), int(X2 << -sh)))
            return
        h = LEAF * ((n // LEAF + 1) // 2)
        p1 = self.need(h)
        if p1 < prec:
            sh = prec - p1
            self._leaves(X1 >> sh, X2 >> sh, p1, h, out)
        else:
            self._leaves(X1, X2, prec, h, out)
        Y1, Y2 = self.apply_raw(X1, X2, prec, h)
        p2 = self.need(n - h)
        if p2 < prec:
            sh = prec - p2
            Y1, Y2, prec = Y1 >> sh, Y2 >> sh, p2
        self._leaves(Y1, Y2, prec, n - h, out)

    def _finish_leaves(self, starts, n):
        """Expand leaf starts into an (n, 2) float array of positions."""
        L = self.limb_bits
        low = (1 << L) - 1
        S = np.array([(v1 >> L, v1 & low, v2 >> L, v2 & low) for v1, v2 in starts],
                     dtype=np.int64).reshape(-1, 4)
        a, b, c, d = (int(v) for v in self.entries)
        mask, shift = np.int64(low), np.int64(L)
        hi = np.empty((S.shape[0], LEAF, 2), dtype=np.int64)
        lo = np.empty_like(hi)
        xh, xl, yh, yl = (S[:, k].copy() for k in range(4))
        for t in range(LEAF):
            hi[:, t, 0], lo[:, t, 0], hi[:, t, 1], lo[:, t, 1] = xh, xl, yh, yl
            # low limbs first, carrying the (signed) overflow into the high limbs
            ul, vl = a * xl + b * yl, c * xl + d * yl
            xh, yh = ((a * xh + b * yh + (ul >> shift)) & mask,
                      (c * xh + d * yh + (vl >> shift)) & mask)
            xl, yl = ul & mask, vl & mask
        pos = hi.reshape(-1, 2)[:n].astype(np.float64) * 2.0 ** -L
        pos += lo.reshape(-1, 2)[:n].astype(np.float64) * 2.0 ** (-2 * L)
        return np.mod(pos, 1.0)

    def stream(self, point, n, chunk=CHUNK):
        """Yield float arrays with the positions at times ``0 .. n-1``.

        Raises ``ValueError`` if ``point.bits`` is below ``need(n)``; the
        orbit module converts that into its public precision error.
        """
        if n <= 0:
            return
        if point.bits < self.need(n):
            raise ValueError(f"{point.bits} bits cannot certify {n} steps")
        chunk = max(LEAF, (chunk // LEAF) * LEAF)
        X1, X2, prec = point.x1, point.x2, point.bits
        done = 0
        while done < n:
            length = min(chunk, n - done)
            remaining = n - done
            p = self.need(remaining)
            if p < prec:
                sh = prec - p
                X1, X2, prec = X1 >> sh, X2 >> sh, p
            starts = []
            q = self.need(length)
            sh = prec - q
            if sh > 0:
                self._leaves(X1 >> sh, X2 >> sh, q, length, starts)
            else:
                self._leaves(X1, X2, prec, length, starts)
            yield self._finish_leaves(starts, length)
            done += length
            if done < n:
                X1, X2 = self.apply_raw(X1, X2, prec, length)

    def orbit(self, point, n):
        """All positions at times ``0 .. n-1`` as one (n, 2) array."""
        if n <= 0:
            return np.empty((0, 2))
        return np.concatenate(list(self.stream(point, n)))


class AffineOffsets:
    """Accumulated offsets ``c_t = F^t(0)`` of an affine family along one drive.

    ``c_0 = 0`` and ``c_{t+1} = T c_t + h_t`` where ``offset(t, bits)``
    returns ``h_t`` as fixed integers. Float copies are kept for every
    time up to the horizon; exact checkpoints are kept every ``stride``
    steps so any exact ``c_t`` can be replayed cheaply.
    """

    def __init__(self, kernel, offset, bits, horizon, stride=256):
        self.kernel = kernel
        self.bits = bits
        self.horizon = int(horizon)
        self.stride = stride
        self._offset = offset
        a, b, c, d = kernel.entries
        mask = (mpz(1) << bits) - 1
        C1, C2 = mpz(0), mpz(0)
        self.floats = np.empty((self.horizon + 1, 2))
        self._checkpoints = {}
        for t in range(self.horizon + 1):
            if t % stride == 0:
                self._checkpoints[t] = (C1, C2)
            self.floats[t, 0] = fixed_to_float(C1, bits)
            self.floats[t, 1] = fixed_to_float(C2, bits)
            if t == self.horizon:
                break
            H1, H2 = offset(t, bits)
            C1, C2 = (a * C1 + b * C2 + H1) & mask, (c * C1 + d * C2 + H2) & mask

    def exact(self, t):
        if not 0 <= t <= self.horizon:
            raise ValueError("time outside the tabulated horizon")
        base = (t // self.stride) * self.stride
        C1, C2 = self._checkpoints[base]
        a, b, c, d = self.kernel.entries
        mask = (mpz(1) << self.bits) - 1
        for s in range(base, t):
            H1, H2 = self._offset(s, self.bits)
            C1, C2 = (a * C1 + b * C2 + H1) & mask, (c * C1 + d * C2 + H2) & mask
        return C1, C2
