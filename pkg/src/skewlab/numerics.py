"""Arithmetic mode and precision budget."""

from dataclasses import dataclass
import enum
import math

from .errors import PrecisionExhausted, PreconditionViolation
from .fixed import GUARD_BITS


class Mode(enum.Enum):
    DOUBLE = "double"
    BIGFLOAT = "bigfloat"


@dataclass(frozen=True)
class NumericsContext:
    """Arithmetic mode plus mantissa budget.

    In ``DOUBLE`` mode orbits are ordinary floating-point pseudo-orbits,
    suitable for statistics. In ``BIGFLOAT`` mode points are exact binary
    fixed-point numbers with ``mantissa_bits`` digits and orbits are
    certified up to ``certified_depth``.
    """

    mode: Mode = Mode.DOUBLE
    mantissa_bits: int = 53

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode(self.mode.lower()))
        if int(self.mantissa_bits) < 53:
            raise PreconditionViolation("mantissa_bits must be at least 53")
        object.__setattr__(self, "mantissa_bits", int(self.mantissa_bits))

    @classmethod
    def double(cls):
        return cls(Mode.DOUBLE, 53)

    @classmethod
    def bigfloat(cls, bits):
        return cls(Mode.BIGFLOAT, bits)

    @classmethod
    def for_depth(cls, n, lambda_u, extra_bits=0):
        """Smallest BIGFLOAT context certifying ``n`` steps."""
        bits = int(math.ceil(max(n, 0) * math.log2(lambda_u))) + GUARD_BITS + extra_bits
        return cls(Mode.BIGFLOAT, max(bits, 128))

    @property
    def exact(self):
        return self.mode is Mode.BIGFLOAT

    def certified_depth(self, lambda_u):
        """Largest orbit length certified at this precision (BIGFLOAT only)."""
        return int(math.floor((self.mantissa_bits - GUARD_BITS) / math.log2(lambda_u)))

    def check_depth(self, n, lambda_u):
        if self.exact and n > self.certified_depth(lambda_u):
            raise PrecisionExhausted(
                f"{n} steps exceed the certified depth "
                f"{self.certified_depth(lambda_u)} at {self.mantissa_bits} bits",
                requested=n, certified=self.certified_depth(lambda_u),
                mantissa_bits=self.mantissa_bits)

    def doubled(self):
        return NumericsContext(self.mode, 2 * self.mantissa_bits)

    def metadata(self):
        return {"mode": self.mode.value, "mantissa_bits": self.mantissa_bits}


DOUBLE = NumericsContext.double()
