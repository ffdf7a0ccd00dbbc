"""Fiber map families on the 2-torus and their hyperbolic splitting."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import NonHyperbolicMatrix, InsufficientWord, PreconditionViolation, ConfigInvalid


@dataclass(frozen=True)
class TorusPoint:
    """Point of R^2/Z^2 with coordinates reduced to [0, 1)."""

    x1: float
    x2: float

    def __post_init__(self):
        for name in ("x1", "x2"):
            v = float(getattr(self, name)) % 1.0
            if v >= 1.0:
                v = 0.0
            object.__setattr__(self, name, v)

    def as_array(self):
        return np.array([self.x1, self.x2])

    def __iter__(self):
        return iter((self.x1, self.x2))


def wrap(delta):
    """Lift torus differences to the representative in [-1/2, 1/2)."""
    return delta - np.floor(delta + 0.5)


def torus_distance(p, q):
    """Max-coordinate torus distance; vectorizes over trailing axis of length 2."""
    p, q = (v.as_array() if isinstance(v, TorusPoint) else v for v in (p, q))
    d = np.abs(wrap(np.asarray(q, dtype=float) - np.asarray(p, dtype=float)))
    return d.max(axis=-1)


def torus_norm(delta):
    """Distance from ``delta`` to the nearest lattice point (max norm)."""
    return np.abs(wrap(np.asarray(delta, dtype=float))).max(axis=-1)


@dataclass(frozen=True)
class HyperbolicMatrix:
    """Integer hyperbolic matrix with its eigen-splitting.

    ``mu_u`` and ``mu_s`` are the signed eigenvalues; ``lambda_u = |mu_u|``
    and ``lambda_s = mu_s``. Eigenvectors are unit length with a
    nonnegative first coordinate.
    """

    a: int
    b: int
    c: int
    d: int
    lambda_u: float
    lambda_s: float
    mu_u: float
    e_u: tuple
    e_s: tuple

    @property
    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)

    @property
    def int_matrix(self):
        return ((self.a, self.b), (self.c, self.d))

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    @property
    def trace(self):
        return self.a + self.d

    @property
    def expansion(self):
        """Expansion constant ``log lambda_u``."""
        return math.log(self.lambda_u)

    @property
    def dual(self):
        """Rows of the inverse eigenbasis: coordinates along ``e_u`` and ``e_s``."""
        E = np.column_stack([self.e_u, self.e_s])
        return np.linalg.inv(E)

    def kernel(self):
        from .fixed import LinearKernel
        k = _KERNELS.get(self.int_matrix)
        if k is None:
            k = _KERNELS[self.int_matrix] = LinearKernel(self.a, self.b, self.c, self.d,
                                                         self.lambda_u)
        return k

    def eigen_fixed(self, bits):
        """High-precision ``e_u`` and ``e_s`` and ``mu_u`` as mpfr values."""
        import gmpy2
        key = (self.int_matrix, bits)
        hit = _EIGEN_HP.get(key)
        if hit is not None:
            return hit
        with gmpy2.context(precision=bits + 32):
            a, b, c, d = (gmpy2.mpfr(v) for v in (self.a, self.b, self.c, self.d))
            tr, det = a + d, a * d - b * c
            root = gmpy2.sqrt(tr * tr - 4 * det)
            mu_u = (tr + root) / 2 if self.trace > 0 else (tr - root) / 2
            mu_s = det / mu_u
            vecs = []
            for mu in (mu_u, mu_s):
                v = _eigvec_hp(a, b, c, d, mu)
                vecs.append(v)
            out = (vecs[0], vecs[1], mu_u, mu_s)
        if len(_EIGEN_HP) > 64:
            _EIGEN_HP.clear()
        _EIGEN_HP[key] = out
        return out


_KERNELS = {}
_EIGEN_HP = {}


def _eigvec(a, b, c, d, mu):
    # (b, mu - a) and (mu - d, c) both solve (T - mu) v = 0; take the larger
    v1 = np.array([b, mu - a], dtype=float)
    v2 = np.array([mu - d, c], dtype=float)
    v = v1 if np.abs(v1).max() >= np.abs(v2).max() else v2
    v = v / np.hypot(*v)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return v


def _eigvec_hp(a, b, c, d, mu):
    import gmpy2
    v1 = (b, mu - a)
    v2 = (mu - d, c)
    v = v1 if max(abs(v1[0]), abs(v1[1])) >= max(abs(v2[0]), abs(v2[1])) else v2
    n = gmpy2.sqrt(v[0] * v[0] + v[1] * v[1])
    v = (v[0] / n, v[1] / n)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = (-v[0], -v[1])
    return v


def eigen_split(T):
    """Eigen-splitting of a hyperbolic integer 2x2 matrix.

    Raises ``NonHyperbolicMatrix`` when ``|trace| <= 2`` or ``|det| != 1``.
    """
    if isinstance(T, HyperbolicMatrix):
        return T
    M = np.asarray(T)
    if M.shape != (2, 2):
        raise PreconditionViolation("expected a 2x2 matrix")
    if not np.all(np.equal(np.mod(M, 1), 0)):
        raise PreconditionViolation("matrix entries must be integers")
    a, b, c, d = (int(v) for v in M.ravel())
    det, tr = a * d - b * c, a + d
    if abs(det) != 1 or abs(tr) <= 2:
        raise NonHyperbolicMatrix(f"trace {tr}, det {det}: not a hyperbolic automorphism")
    root = math.sqrt(tr * tr - 4 * det)
    mu_u = (tr + root) / 2 if tr > 0 else (tr - root) / 2
    mu_s = det / mu_u
    e_u = _eigvec(a, b, c, d, mu_u)
    e_s = _eigvec(a, b, c, d, mu_s)
    return HyperbolicMatrix(a, b, c, d, abs(mu_u), mu_s, mu_u, tuple(e_u), tuple(e_s))


CAT_MAP = ((2, 1), (1, 1))


# -- offset maps ------------------------------------------------------------

class ZeroOffset:
    name = "zero"
    approximate = False
    is_zero = True

    def __call__(self, omega):
        return np.zeros(np.shape(omega) + (2,))

    def fixed(self, driver, state, t, bits):
        return 0, 0


class AngleOffset:
    """``omega -> (omega, 0)`` for a circle-rotation driver."""

    name = "angle"
    approximate = False
    is_zero = False

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.stack([omega, np.zeros_like(omega)], axis=-1)

    def fixed(self, driver, state, t, bits):
        return driver.fixed_angle(state, t, bits), 0


class TabulatedOffset:
    """Continuous offset given by samples on an even grid of the circle.

    Values between samples are linearly interpolated (per coordinate, along
    the shortest torus lift), hence ``approximate = True``.
    """

    name = "tabulated"
    approximate = True
    is_zero = False

    def __init__(self, samples):
        s = np.asarray(samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != 2 or len(s) < 2:
            raise PreconditionViolation("samples must have shape (K, 2), K >= 2")
        self.samples = np.mod(s, 1.0)

    def __call__(self, omega):
        omega = np.mod(np.asarray(omega, dtype=float), 1.0)
        K = len(self.samples)
        pos = omega * K
        i = np.floor(pos).astype(int) % K
        f = (pos - np.floor(pos))[..., None]
        lo, hi = self.samples[i], self.samples[(i + 1) % K]
        return np.mod(lo + f * wrap(hi - lo), 1.0)

    def fixed(self, driver, state, t, bits):
        from .fixed import to_fixed
        om = driver.omega_values(driver.advance(state, t), 1)[0]
        v = self.__call__(om)
        return to_fixed(float(v[0]), bits), to_fixed(float(v[1]), bits)


def make_offset(name):
    if name in (None, "zero"):
        return ZeroOffset()
    if name == "angle":
        return AngleOffset()
    raise ConfigInvalid(f"unknown offset map {name!r}",
                        fields={"h": "expected 'zero' or 'angle'"})


# -- families ---------------------------------------------------------------

class AffineFiberFamily:
    """Fiber maps ``F_omega(x) = T x + h(omega)``."""

    kind = "affine"

    def __init__(self, matrix=CAT_MAP, offset=None):
        self.matrix = eigen_split(matrix)
        self.offset = offset if offset is not None and not isinstance(offset, str) \
            else make_offset(offset)

    def linear_step(self, x):
        m = self.matrix
        x = np.asarray(x, dtype=float)
        return np.stack([m.a * x[..., 0] + m.b * x[..., 1],
                         m.c * x[..., 0] + m.d * x[..., 1]], axis=-1)

    def __call__(self, omega, x):
        return np.mod(self.linear_step(x) + self.offset(omega), 1.0)

    def describe(self):
        m = self.matrix
        return {"family": "affine", "matrix": [[m.a, m.b], [m.c, m.d]], "h": self.offset.name}


class PositiveCocycleFamily:
    """Fiber maps ``F_omega = B_{omega_0}`` chosen by the current symbol."""

    kind = "cocycle"

    def __init__(self, matrices):
        mats = [np.asarray(B) for B in matrices]
        if not mats:
            raise PreconditionViolation("need at least one matrix")
        for B in mats:
            if B.shape != (2, 2) or not np.all(np.equal(np.mod(B, 1), 0)):
                raise PreconditionViolation("matrices must be 2x2 integer arrays")
            if np.any(B < 1):
                raise PreconditionViolation("all entries must be >= 1")
            if abs(round(B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0])) != 1:
                raise PreconditionViolation("matrices must have |det| = 1")
        self.matrices = tuple(tuple(tuple(int(v) for v in row) for row in B) for B in mats)
        self.arrays = np.array(self.matrices, dtype=float)

    @property
    def growth_bound(self):
        """Largest row sum: a crude per-step expansion bound."""
        return float(np.max(self.arrays.sum(axis=2)))

    def inverse(self, k):
        (a, b), (c, d) = self.matrices[k]
        det = a * d - b * c
        return ((d * det, -b * det), (-c * det, a * det))

    def __call__(self, symbol, x):
        B = self.arrays[symbol]
        x = np.asarray(x, dtype=float)
        return np.mod(np.einsum("...ij,...j->...i", B, x), 1.0)

    def describe(self):
        return {"family": "cocycle", "matrices": [list(map(list, B)) for B in self.matrices]}


def apply_fiber(family, driving_state, p):
    """One fiber step ``F_omega p``.

    For an affine family ``driving_state`` is a ``CircleAngle`` (or any
    angle value); for a cocycle family it is a ``SturmianState`` and the
    current symbol selects the matrix.
    """
    x = np.array([p.x1, p.x2] if isinstance(p, TorusPoint) else p, dtype=float)
    if family.kind == "affine":
        omega = getattr(driving_state, "value", driving_state)
        y = family(float(omega) if omega is not None else 0.0, x)
    else:
        sym = driving_state.symbol(0) if hasattr(driving_state, "symbol") else int(driving_state)
        y = family(sym, x)
    return TorusPoint(float(y[0]), float(y[1]))


def finite_time_splitting(family, word, t, depth):
    """Finite-time unstable and stable directions of a cocycle at time ``t``.

    The unstable direction pushes the positive diagonal through the
    ``depth`` matrices before ``t``; the stable direction pulls the
    anti-diagonal back through the inverses of the ``depth`` matrices from
    ``t`` on. Symbol ``word[i]`` acts at step ``i -> i + 1``.
    """
    word = np.asarray(word, dtype=int)
    if depth < 1 or t - depth < 0 or t + depth > len(word):
        raise InsufficientWord(f"need word indices [{t - depth}, {t + depth}) "
                               f"within a word of length {len(word)}")
    u = np.array([1.0, 1.0])
    for i in range(t - depth, t):
        u = family.arrays[word[i]] @ u
        u /= np.abs(u).max()
    s = np.array([1.0, -1.0])
    for i in range(t + depth - 1, t - 1, -1):
        s = np.array(family.inverse(word[i]), dtype=float) @ s
        s /= np.abs(s).max()
    u /= np.hypot(*u)
    s /= np.hypot(*s)
    if u[0] < 0:
        u = -u
    if s[0] < 0:
        s = -s
    return u, s
