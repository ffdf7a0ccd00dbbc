from decimal import Decimal, getcontext
from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewlab.driving import (RotationNumber, CircleAngle, SturmianState, RotationDriver,
                             SturmianDriver, make_driver, rotate, sturmian_symbol)
from skewlab.errors import ConfigInvalid, DegenerateParameter, PreconditionViolation

getcontext().prec = 80
GOLDEN_DEC = (Decimal(5).sqrt() - 1) / 2


def floor_golden(k):
    return int((k * GOLDEN_DEC).to_integral_value(rounding="ROUND_FLOOR"))


def test_rotate_identity():
    assert rotate(CircleAngle(0.0), 0).value == 0.0


def test_rotate_by_golden():
    assert rotate(CircleAngle(0.0), 1).value == pytest.approx(0.6180339887498949, abs=1e-15)


def test_rotate_wraps():
    # 0.9 + alpha - 1, worked in 80-digit decimals
    expected = float(Decimal("0.9") + GOLDEN_DEC - 1)
    assert expected == pytest.approx(0.5180339887498949, abs=1e-15)
    assert rotate(CircleAngle(0.9), 1).value == pytest.approx(expected, abs=1e-15)


def test_circle_angle_reduced():
    assert CircleAngle(1.25).value == 0.25
    assert CircleAngle(-0.25).value == 0.75
    assert 0 <= CircleAngle(-1e-18).value < 1


@given(st.lists(st.integers(0, 2 ** 20 - 1), min_size=2, max_size=12, unique=True),
       st.integers(-50, 50))
def test_rotation_is_isometric_bijection(nums, steps):
    # dyadic angles and a dyadic rotation number keep every value exact
    alpha = "0.3759765625"  # 385 / 1024
    pts = [CircleAngle(v / 2 ** 20) for v in nums]
    img = [rotate(p, steps, alpha).value for p in pts]
    a = Fraction(385, 1024)
    for p, q in zip(pts, img):
        assert Fraction(q) == (Fraction(p.value) + steps * a) % 1
    assert len(set(img)) == len(img)

    def dist(u, v):
        d = abs(u - v) % 1
        return min(d, 1 - d)
    for i in range(len(pts)):
        for j in range(len(pts)):
            assert dist(img[i], img[j]) == dist(pts[i].value, pts[j].value)


def test_unique_ergodicity_proxy():
    drv = RotationDriver()
    n = 10 ** 5
    avgs = [np.cos(2 * np.pi * drv.omega_values(w, n)).mean() for w in (0.0, 0.13, 0.4, 0.77, 0.9)]
    assert max(avgs) - min(avgs) <= 0.02


def test_sturmian_examples():
    st_ = SturmianState(RotationNumber("golden"))
    oracle = [floor_golden(i + 1) - floor_golden(i) for i in range(5)]
    assert oracle == [0, 1, 0, 1, 1]
    assert [st_.symbol(i) for i in range(5)] == oracle
    assert sturmian_symbol(st_, 1) == 1


@given(st.integers(0, 10 ** 9))
def test_floor_multiple_exact(k):
    assert RotationNumber("golden").floor_multiple(k) == floor_golden(k)


@given(st.integers(0, 10 ** 6), st.integers(0, 200))
def test_symbols_match_floor_oracle(start, n):
    s = SturmianState(RotationNumber("golden"), start)
    i = start + n
    assert s.symbol(n) == floor_golden(i + 1) - floor_golden(i)


def test_balanced_factors():
    drv = SturmianDriver()
    w = drv.symbols(0, 10 ** 4).astype(np.int64)
    c = np.concatenate([[0], np.cumsum(w)])
    for L in range(1, 21):
        counts = c[L:] - c[:-L]
        assert counts.max() - counts.min() <= 1


def test_length_ten_factors_balanced():
    w = SturmianDriver("silver").symbols(0, 5000).astype(int)
    c = np.concatenate([[0], np.cumsum(w)])
    counts = c[10:] - c[:-10]
    assert counts.max() - counts.min() <= 1


@pytest.mark.parametrize("n", [1, 7, 100, 999, 10 ** 4])
def test_frequency_converges(n):
    w = SturmianDriver().symbols(0, n)
    alpha = (math.sqrt(5) - 1) / 2
    assert abs(w.mean() - alpha) <= 2 / n


def test_rational_alpha_degenerate():
    with pytest.raises(DegenerateParameter):
        SturmianDriver("1/3")
    # rotations by rationals are allowed
    assert RotationDriver("1/3").advance(0.0, 3).value == pytest.approx(0.0, abs=1e-15)


def test_bad_alpha_rejected():
    with pytest.raises(ConfigInvalid):
        RotationNumber("weather")
    with pytest.raises(ConfigInvalid):
        RotationNumber("1.5")


def test_decimal_alpha_read_exactly():
    a = RotationNumber("0.4142135623730950488016887242097")
    assert a.rational == Fraction("0.4142135623730950488016887242097")
    assert a.floor_multiple(10 ** 30) == (10 ** 30 * a.rational.numerator) // a.rational.denominator


def test_make_driver():
    assert make_driver("rotation").kind == "rotation"
    assert make_driver("sturmian").kind == "sturmian"
    with pytest.raises(ConfigInvalid):
        make_driver("weather")


def test_negative_index_rejected():
    with pytest.raises(PreconditionViolation):
        SturmianState(RotationNumber(), -1)
    with pytest.raises(PreconditionViolation):
        sturmian_symbol(SturmianState(RotationNumber()), -2)


def test_sturmian_window_consistent():
    s = SturmianDriver().advance(0, 12345)
    far = [sturmian_symbol(s, k) for k in range(100)]
    assert [s.symbol(k) for k in range(100)] == far
    assert list(SturmianDriver().symbols(s, 100)) == far


def test_drivers_immutable():
    s = SturmianState(RotationNumber())
    with pytest.raises(Exception):
        s.index = 3
    with pytest.raises(Exception):
        CircleAngle(0.1).value = 0.2
