"""Driving systems: irrational circle rotation and the Sturmian subshift.

Rotation numbers are held exactly (a rational read from a decimal string,
or a named quadratic irrational whose binary digits are produced on demand
with integer square roots), so floors of ``n * alpha`` are exact for any
index.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from decimal import Decimal, InvalidOperation

import numpy as np
import gmpy2
from gmpy2 import mpz

from .errors import DegenerateParameter, ConfigInvalid, PreconditionViolation

# a rational rotation number with a denominator this small codes a periodic word
DEGENERATE_DENOMINATOR = 10 ** 9
ALPHA_BITS = 128


class RotationNumber:
    """An exact real in (0, 1) used as a rotation angle.

    Parameters
    ----------
    spec : str or Fraction
        ``"golden"`` for (sqrt(5) - 1) / 2, ``"silver"`` for sqrt(2) - 1,
        a decimal string such as ``"0.4142135623730950488"``, or a
        fraction ``"p/q"``.
    """

    NAMED = {"golden": (5, 1, 2), "silver": (2, 1, 1)}  # (sqrt(D) - s) / q

    def __init__(self, spec="golden"):
        self.spec = str(spec).strip() if not isinstance(spec, Fraction) else str(spec)
        key = self.spec.lower()
        self.rational = None
        self._cache = {}
        if key in self.NAMED:
            self._quadratic = self.NAMED[key]
        else:
            self._quadratic = None
            try:
                if "/" in key:
                    value = Fraction(key)
                else:
                    value = Fraction(Decimal(key))
            except (ValueError, ZeroDivisionError, InvalidOperation):
                raise ConfigInvalid(f"cannot read rotation number {spec!r}",
                                    fields={"alpha": "not a number or known name"})
            self.rational = value
        v = self.fraction_approx(ALPHA_BITS)
        if not 0 < v < 1:
            raise ConfigInvalid("rotation number must lie in (0, 1)",
                                fields={"alpha": "outside (0, 1)"})
        self.value = float(v)

    @classmethod
    def coerce(cls, alpha):
        return alpha if isinstance(alpha, cls) else cls(alpha)

    @property
    def is_rational(self):
        return self.rational is not None

    @property
    def degenerate(self):
        """True when the coded word would be periodic at reachable indices."""
        return self.is_rational and self.rational.denominator <= DEGENERATE_DENOMINATOR

    def fixed(self, bits):
        """``floor(alpha * 2**bits)`` as an exact integer."""
        hit = self._cache.get(bits)
        if hit is not None:
            return hit
        if self._quadratic is not None:
            D, s, q = self._quadratic
            one = mpz(1) << bits
            root = gmpy2.isqrt(mpz(D) << (2 * bits))
            val = (root - s * one) // q
        else:
            val = (mpz(self.rational.numerator) << bits) // self.rational.denominator
        self._cache[bits] = val
        return val

    def fraction_approx(self, bits):
        if self.rational is not None:
            return self.rational
        return Fraction(int(self.fixed(bits)), 1 << bits)

    def floor_multiple(self, n):
        """Exact ``floor(n * alpha)`` for an integer ``n >= 0``."""
        n = int(n)
        if self.rational is not None:
            return (n * self.rational.numerator) // self.rational.denominator
        # a quadratic irrational stays 1/(c n) away from integers, so this
        # many bits make the truncated product round correctly
        bits = ALPHA_BITS + 2 * max(n.bit_length(), 1)
        return int((n * self.fixed(bits)) >> bits)

    def __eq__(self, other):
        return isinstance(other, RotationNumber) and self.spec.lower() == other.spec.lower()

    def __hash__(self):
        return hash(self.spec.lower())

    def __repr__(self):
        return f"RotationNumber({self.spec!r})"


@dataclass(frozen=True)
class CircleAngle:
    """A point of the circle, stored as a float in [0, 1)."""

    value: float

    def __post_init__(self):
        v = float(self.value) % 1.0
        if v >= 1.0:
            v = 0.0
        object.__setattr__(self, "value", v)


WINDOW = 64


@dataclass(frozen=True)
class SturmianState:
    """The Sturmian word coding rotation by ``alpha``, shifted by ``index``.

    ``window`` caches the next ``WINDOW`` symbols.
    """

    alpha: RotationNumber
    index: int = 0
    window: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.alpha.degenerate:
            raise DegenerateParameter(f"rational rotation number {self.alpha.spec} "
                                      "gives a periodic coding")
        if self.index < 0:
            raise PreconditionViolation("Sturmian states are one-sided (index >= 0)")
        if not self.window:
            object.__setattr__(self, "window", tuple(_symbols(self.alpha, self.index, WINDOW)))

    def symbol(self, n=0):
        if 0 <= n < len(self.window):
            return self.window[n]
        return sturmian_symbol(self, n)


def _symbols(alpha, start, length):
    f = [alpha.floor_multiple(k) for k in range(start, start + length + 1)]
    return np.diff(np.array(f, dtype=object)).astype(np.int8)


def rotate(state, steps, alpha="golden"):
    """Rotate ``state`` by ``steps * alpha`` (mod 1), exactly, then round to float."""
    alpha = RotationNumber.coerce(alpha)
    bits = ALPHA_BITS + max(int(abs(steps)).bit_length(), 1)
    from .fixed import to_fixed, fixed_to_float
    V = to_fixed(float(state.value), bits)
    V = (V + int(steps) * alpha.fixed(bits)) % (mpz(1) << bits)
    return CircleAngle(fixed_to_float(V, bits))


def sturmian_symbol(state, n):
    """Symbol ``floor((i+1) alpha) - floor(i alpha)`` at position ``i = index + n``."""
    if n < 0:
        raise PreconditionViolation("symbol position must be >= 0")
    if state.alpha.degenerate:
        raise DegenerateParameter("rational rotation number")
    i = state.index + int(n)
    return state.alpha.floor_multiple(i + 1) - state.alpha.floor_multiple(i)


class RotationDriver:
    """Circle rotation ``omega -> omega + alpha``."""

    kind = "rotation"
    invertible = True

    def __init__(self, alpha="golden"):
        self.alpha = RotationNumber.coerce(alpha)

    def state(self, value=0.0):
        return value if isinstance(value, CircleAngle) else CircleAngle(value)

    def advance(self, state, steps):
        return rotate(self.state(state), steps, self.alpha)

    def omega_values(self, state, n):
        """Angles of ``theta^i omega`` for ``i < n``."""
        state = self.state(state)
        i = np.arange(n, dtype=np.float64)
        return np.mod(state.value + np.mod(i * self.alpha.value, 1.0), 1.0)

    def fixed_angle(self, state, t, bits):
        """Exact fixed-point angle of ``theta^t omega`` at ``bits`` digits."""
        from .fixed import to_fixed
        state = self.state(state)
        return (to_fixed(float(state.value), bits) + int(t) * self.alpha.fixed(bits)) \
            % (mpz(1) << bits)

    def describe(self):
        return {"driver": self.kind, "alpha": self.alpha.spec}

    def __repr__(self):
        return f"RotationDriver({self.alpha.spec!r})"


class SturmianDriver:
    """One-sided shift on the Sturmian word of rotation number ``alpha``."""

    kind = "sturmian"
    invertible = False

    def __init__(self, alpha="golden"):
        self.alpha = RotationNumber.coerce(alpha)
        if self.alpha.degenerate:
            raise DegenerateParameter(f"rational rotation number {self.alpha.spec} "
                                      "gives a periodic coding")

    def state(self, index=0):
        if isinstance(index, SturmianState):
            return index
        return SturmianState(self.alpha, int(index))

    def advance(self, state, steps):
        state = self.state(state)
        return SturmianState(self.alpha, state.index + int(steps))

    def symbols(self, state, n):
        """Symbols at positions ``index .. index + n - 1``."""
        state = self.state(state)
        if n <= len(state.window):
            return np.array(state.window[:n], dtype=np.int8)
        return _symbols(self.alpha, state.index, n)

    def omega_values(self, state, n):
        """Circle coordinate ``frac(i alpha)`` of the coded rotation orbit."""
        state = self.state(state)
        i = np.arange(state.index, state.index + n, dtype=np.float64)
        return np.mod(i * self.alpha.value, 1.0)

    def describe(self):
        return {"driver": self.kind, "alpha": self.alpha.spec}

    def __repr__(self):
        return f"SturmianDriver({self.alpha.spec!r})"


def make_driver(kind="rotation", alpha="golden"):
    """Build a driver from its config name."""
    if kind == "rotation":
        return RotationDriver(alpha)
    if kind == "sturmian":
        return SturmianDriver(alpha)
    raise ConfigInvalid(f"unknown driver {kind!r}",
                        fields={"driver": "expected 'rotation' or 'sturmian'"})
