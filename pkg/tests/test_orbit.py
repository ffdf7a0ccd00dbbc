import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import fraction_orbit
from skewlab.driving import RotationDriver, SturmianDriver
from skewlab.errors import PreconditionViolation, PrecisionExhausted, ConfigInvalid
from skewlab.fiber import (AffineFiberFamily, PositiveCocycleFamily, TorusPoint, eigen_split,
                           CAT_MAP, torus_distance)
from skewlab.fixed import FixedPoint
from skewlab.numerics import NumericsContext, DOUBLE
from skewlab.orbit import (SkewSystem, Observable, COS_X1, COS_OMEGA_SIN_X2, ZERO, iterate,
                           iterate_fixed, bowen_distance, in_bowen_ball, birkhoff_trace,
                           birkhoff_sums, default_checkpoints, batch_averages, orbit_array,
                           BirkhoffTrace)

CAT = SkewSystem()
ANGLE = SkewSystem(RotationDriver(), AffineFiberFamily(CAT_MAP, "angle"))
DYADIC = SkewSystem(RotationDriver("0.3759765625"), AffineFiberFamily(CAT_MAP, "angle"))
COCYCLE = SkewSystem(SturmianDriver(), PositiveCocycleFamily([CAT_MAP, ((1, 1), (1, 2))]))
coord = st.integers(0, 2 ** 20 - 1).map(lambda k: k / 2 ** 20)
points = st.tuples(coord, coord)


def bits_for(n):
    return NumericsContext.for_depth(n, CAT.lambda_u)


def test_fixed_point_long_orbit():
    assert iterate(CAT, 0.0, (0.0, 0.0), 10 ** 6) == TorusPoint(0.0, 0.0)


def test_period_three_exact():
    ctx = bits_for(3)
    p = iterate_fixed(CAT, 0.0, (0.5, 0.5), 3, ctx)
    assert p == FixedPoint.from_values(0.5, 0.5, ctx.mantissa_bits)
    assert iterate(CAT, 0.0, (0.5, 0.5), 3) == TorusPoint(0.5, 0.5)


def test_zero_steps_identity():
    assert iterate(ANGLE, 0.3, (0.123, 0.456), 0) == TorusPoint(0.123, 0.456)


def test_iterate_deterministic():
    a = iterate(ANGLE, 0.3, (0.123, 0.456), 200)
    b = iterate(ANGLE, 0.3, (0.123, 0.456), 200)
    assert a == b


@given(points, coord, st.integers(1, 60))
def test_exact_orbit_matches_rationals(x, omega, n):
    ctx = bits_for(n)
    got = iterate_fixed(DYADIC, omega, x, n, ctx)
    ref = fraction_orbit(x, n, omega=omega, alpha=Fraction(385, 1024))[-1]
    want = FixedPoint(int(ref[0] * 2 ** ctx.mantissa_bits), int(ref[1] * 2 ** ctx.mantissa_bits),
                      ctx.mantissa_bits)
    assert got == want


@given(points, coord, st.integers(0, 40), st.integers(0, 40))
def test_cocycle_law_exact(x, omega, m, n):
    ctx = bits_for(m + n)
    whole = iterate_fixed(DYADIC, omega, x, m + n, ctx)
    first = iterate_fixed(DYADIC, omega, x, m, ctx)
    second = iterate_fixed(DYADIC, DYADIC.advance(omega, m), first, n, ctx)
    assert whole == second


@given(points, st.integers(0, 15), st.integers(0, 15))
def test_cocycle_law_double(x, m, n):
    # with h = 0 or a dyadic rotation both routes perform identical float operations
    for system, omega in ((CAT, 0.0), (DYADIC, 0.625)):
        whole = iterate(system, omega, x, m + n)
        first = iterate(system, omega, x, m)
        second = iterate(system, system.advance(omega, m), first, n)
        assert torus_distance(whole, second) <= 1e-10


@given(points, coord, st.integers(0, 15), st.integers(0, 15))
def test_cocycle_law_double_irrational(x, omega, m, n):
    # the restarted drive is rounded to a double once; hyperbolicity grows that by lambda^n
    whole = iterate(ANGLE, omega, x, m + n)
    first = iterate(ANGLE, omega, x, m)
    second = iterate(ANGLE, ANGLE.advance(omega, m), first, n)
    assert torus_distance(whole, second) <= 1e-15 * ANGLE.lambda_u ** (n + 1)


@given(points, st.integers(0, 40), st.integers(0, 40))
def test_cocycle_law_sturmian(x, m, n):
    whole = iterate(COCYCLE, 0, x, m + n, bits_for(2 * (m + n)))
    first = iterate_fixed(COCYCLE, 0, x, m, bits_for(2 * (m + n)))
    second = iterate(COCYCLE, COCYCLE.advance(0, m), first, n, bits_for(2 * (m + n)))
    assert whole == second


@given(points, coord, st.integers(1, 20))
def test_backward_inverts_forward(x, omega, n):
    ctx = bits_for(n)
    y = iterate_fixed(DYADIC, omega, x, n, ctx)
    back = iterate_fixed(DYADIC, DYADIC.advance(omega, n), y, -n, ctx)
    assert back == FixedPoint.from_values(x[0], x[1], ctx.mantissa_bits)


def test_bowen_single_term():
    x, y = (0.1, 0.2), (0.95, 0.3)
    assert bowen_distance(CAT, 0.0, 1, x, y) == pytest.approx(0.15, abs=1e-15)


def test_bowen_self_zero():
    assert bowen_distance(ANGLE, 0.4, 25, (0.3, 0.7), (0.3, 0.7)) == 0.0


def test_bowen_unstable_expansion():
    m = eigen_split(CAT_MAP)
    y = (1e-4 * m.e_u[0], 1e-4 * m.e_u[1])
    # the displacement after 7 steps is 1e-4 lambda^7 e_u; the max metric keeps its larger coordinate
    lam = (3 + math.sqrt(5)) / 2
    e1 = 1 / math.sqrt(1 + ((math.sqrt(5) - 1) / 2) ** 2)
    expected = 1e-4 * lam ** 7 * e1
    assert expected == pytest.approx(0.0717, abs=1e-4)
    assert bowen_distance(CAT, 0.0, 8, (0.0, 0.0), y) == pytest.approx(expected, rel=1e-9)


@given(points, points, coord, st.integers(1, 30))
def test_bowen_monotone(x, y, omega, n):
    a = bowen_distance(ANGLE, omega, n, x, y)
    b = bowen_distance(ANGLE, omega, n + 1, x, y)
    assert a <= b


@given(points, points, st.integers(1, 12), st.floats(0.01, 0.5))
def test_bowen_ball_membership(x, y, n, eps):
    assert in_bowen_ball(CAT, 0.0, n, x, y, eps) == (bowen_distance(CAT, 0.0, n, x, y) < eps)


def test_bowen_ball_is_open():
    x, y = (0.0, 0.0), (0.125, 0.0)
    assert not in_bowen_ball(CAT, 0.0, 1, x, y, 0.125)
    assert in_bowen_ball(CAT, 0.0, 1, x, y, 0.1250001)


def test_bowen_needs_positive_n():
    with pytest.raises(PreconditionViolation):
        bowen_distance(CAT, 0.0, 0, (0, 0), (0, 0))


def test_fixed_point_trace():
    tr = birkhoff_trace(CAT, 0.0, (0.0, 0.0), COS_X1, [1, 5, 17, 1000])
    assert np.all(tr.averages == 1.0)


def test_zero_observable():
    tr = birkhoff_trace(ANGLE, 0.2, (0.3, 0.1), ZERO, [1, 10, 100])
    assert np.all(tr.averages == 0.0)


def test_random_starts_average_near_zero():
    rng = np.random.default_rng(20240611)
    hits = 0
    for _ in range(20):
        x = tuple(rng.random(2))
        hits += abs(birkhoff_trace(CAT, 0.0, x, COS_X1, [10 ** 5]).averages[-1]) <= 0.02
    assert hits >= 19


def test_trace_bounded_and_recomputed():
    phi = Observable.parse("0.5*cos_x1 - 2*cos_omega_sin_x2")
    assert phi.sup_norm == 2.5
    cps = [1, 2, 3, 10, 64, 100, 333]
    tr = birkhoff_trace(ANGLE, 0.37, (0.2, 0.9), phi, cps)
    assert np.all(np.abs(tr.averages) <= phi.sup_norm)
    # direct recomputation from the orbit
    orb = orbit_array(ANGLE, 0.37, (0.2, 0.9), 333)
    om = ANGLE.omega_values(0.37, 333)
    vals = 0.5 * np.cos(2 * np.pi * orb[:, 0]) - 2 * np.cos(2 * np.pi * om) * np.sin(2 * np.pi * orb[:, 1])
    for c, a in zip(cps, tr.averages):
        assert a == pytest.approx(vals[:c].mean(), abs=1e-12)


def test_bigfloat_trace_stable_under_doubling():
    ctx = NumericsContext.for_depth(400, CAT.lambda_u)
    cps = default_checkpoints(400)
    a = birkhoff_trace(ANGLE, 0.1, (0.3, 0.6), COS_X1, cps, ctx)
    b = birkhoff_trace(ANGLE, 0.1, (0.3, 0.6), COS_X1, cps, ctx.doubled())
    assert np.abs(a.averages - b.averages).max() <= 1e-6


def test_certified_depth_gate():
    ctx = NumericsContext.bigfloat(128)
    with pytest.raises(PrecisionExhausted):
        iterate_fixed(CAT, 0.0, (0.1, 0.2), 200, ctx)


def test_checkpoints_validated():
    with pytest.raises(PreconditionViolation):
        birkhoff_sums(CAT, 0.0, (0, 0), COS_X1, [3, 2])
    with pytest.raises(PreconditionViolation):
        birkhoff_sums(CAT, 0.0, (0, 0), COS_X1, [0, 2])


def test_default_checkpoints():
    assert default_checkpoints(100) == [1, 2, 4, 8, 16, 32, 64, 100]
    assert default_checkpoints(64) == [1, 2, 4, 8, 16, 32, 64]


def test_observable_parse_and_algebra():
    phi = Observable.parse("cos_x1 + 3*cos_omega_sin_x2")
    assert phi.terms == {"cos_x1": 1.0, "cos_omega_sin_x2": 3.0}
    assert phi.depends_on_omega and not COS_X1.depends_on_omega
    assert (COS_X1 + COS_OMEGA_SIN_X2).sup_norm == 2.0
    assert (2 * COS_X1).sup_norm == 2.0
    assert Observable.parse("0.5*cos_x1 - 2 * cos_omega_sin_x2").terms == \
        {"cos_x1": 0.5, "cos_omega_sin_x2": -2.0}
    assert Observable.parse("-1e-3*cos_x1").terms == {"cos_x1": -1e-3}
    assert Observable.parse("0").terms == {}
    for bad in ("sin_x3", "cos_x1 cos_x1", "2*", "cos_x1 +"):
        with pytest.raises(ConfigInvalid):
            Observable.parse(bad)


@given(points, points)
def test_observable_modulus(p, q):
    phi = Observable.parse("cos_x1 + cos_omega_sin_x2")
    d = max(min(abs(p[i] - q[i]), 1 - abs(p[i] - q[i])) for i in range(2))
    diff = abs(phi(0.3, np.array(p)) - phi(0.3, np.array(q)))
    assert diff <= phi.modulus(d) + 1e-12


def test_batch_matches_single():
    pts = np.array([[0.1, 0.2], [0.7, 0.4], [0.33, 0.99]])
    got = batch_averages(ANGLE, 0.2, pts, COS_X1, 50)
    for p, g in zip(pts, got):
        assert g == pytest.approx(birkhoff_trace(ANGLE, 0.2, p, COS_X1, [50]).averages[0], abs=1e-12)
    got = batch_averages(COCYCLE, 3, pts, COS_X1, 20)
    for p, g in zip(pts, got):
        assert g == pytest.approx(birkhoff_trace(COCYCLE, 3, p, COS_X1, [20]).averages[0], abs=1e-12)


def test_trace_csv(tmp_path):
    tr = BirkhoffTrace([1, 2], [1.0, 0.5])
    path = tmp_path / "t.csv"
    tr.to_csv(str(path))
    assert path.read_text().splitlines() == ["n,average", "1,1.0", "2,0.5"]


def test_double_context_flags():
    assert not DOUBLE.exact
    assert bits_for(10).exact and bits_for(10).mantissa_bits >= 128
    assert bits_for(100).doubled().mantissa_bits == 2 * bits_for(100).mantissa_bits


@pytest.mark.parametrize("matrix", [CAT_MAP, ((1, 1), (1, 2)), ((3, 1), (2, 1))])
def test_exact_stream_is_double_accurate(matrix):
    # every streamed position is the exact orbit point rounded to a double
    kern = eigen_split(matrix).kernel()
    bits = kern.need(200)
    rng = np.random.default_rng(3)
    p = FixedPoint(int(rng.integers(1, 2 ** 62)) << (bits - 62),
                   int(rng.integers(1, 2 ** 62)) << (bits - 62), bits)
    stream = kern.orbit(p, 200)
    for t in range(200):
        exact = np.array(kern.apply(p, t).as_floats())
        assert np.abs((stream[t] - exact + 0.5) % 1 - 0.5).max() <= 2 ** -52
