import math

import numpy as np
import pytest
from hypothesis import given, assume, settings, strategies as st

from oracles import bowen_matrix, max_independent
from skewlab.driving import SturmianDriver, RotationDriver
from skewlab.errors import GridTooCoarse, DegenerateFit, PreconditionViolation
from skewlab.fiber import AffineFiberFamily, PositiveCocycleFamily, CAT_MAP
from skewlab.numerics import NumericsContext
from skewlab.orbit import SkewSystem, COS_X1, bowen_distance, batch_averages
from skewlab.entropy import (CandidateGrid, default_grid, conflict_table, greedy_select,
                             max_separated, deviation_count, DeviationQuery, certify_separated,
                             entropy_rate, lyapunov_exponent, SeparatedSet)

CAT = SkewSystem()
ANGLE = SkewSystem(RotationDriver(), AffineFiberFamily(CAT_MAP, "angle"))
LOG_LAMBDA = math.log((3 + math.sqrt(5)) / 2)
B0, B1 = ((2, 1), (1, 1)), ((1, 1), (1, 2))


def pairwise_ok(system, sep):
    pts = sep.points
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if bowen_distance(system, sep.omega, sep.n, pts[i], pts[j]) <= sep.epsilon:
                return False
    return True


def test_single_step_example():
    for sep in (max_separated(CAT, 0.0, 1, 0.3), max_separated(CAT, 0.0, 1, 0.3, 1 / 8)):
        assert 4 <= len(sep) <= 16
        pts = sep.points
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = np.abs(pts[i] - pts[j])
                assert np.minimum(d, 1 - d).max() > 0.3


def test_eight_grid_maximum():
    # the 8 x 8 grid at n = 1, eps = 0.3: the row-major greedy scan stops at 4
    grid = CandidateGrid.square(8)
    table = conflict_table(CAT, 0.0, grid, 1, 0.3)
    assert len(greedy_select(grid, table)) == 4
    sep = max_separated(CAT, 0.0, 1, 0.3, grid)
    assert len(sep) == 5 and sep.method == "exact"
    adj = bowen_matrix(8, 1) <= 0.3
    np.fill_diagonal(adj, False)
    assert max_independent(adj) == 5


@pytest.mark.parametrize("eps", [0.5, 0.6, 2.0])
def test_diameter_bound(eps):
    assert len(max_separated(CAT, 0.0, 3, eps)) == 1


# (n, eps, G, true maximum capped at 12), maxima from the exhaustive oracle
BRUTE_CASES = [(1, 0.3, 8, 5), (1, 0.3, 16, 9), (1, 0.35, 16, 5), (1, 0.4, 16, 4),
               (1, 0.45, 8, 4), (2, 0.4, 16, 8), (2, 0.45, 16, 8), (2, 0.45, 32, 8),
               (2, 0.3, 32, 12), (3, 0.45, 32, 12), (3, 0.49, 32, 12)]


@pytest.mark.parametrize("n,eps,G,frozen", BRUTE_CASES)
def test_brute_force_equivalence(n, eps, G, frozen):
    D = bowen_matrix(G, n)
    adj = D <= eps
    np.fill_diagonal(adj, False)
    oracle = max_independent(adj, cap=12, transitive=True)
    assert oracle == frozen
    sep = max_separated(CAT, 0.0, n, eps, 1 / G)
    row, col = np.divmod(sep.indices, G)
    idx = col * G + row  # oracle numbering
    # the returned set is separated in the exact rational Bowen metric
    sub = adj[np.ix_(idx, idx)]
    assert not sub.any()
    if oracle < 12:
        assert len(sep) == oracle
    else:
        assert len(sep) >= 12


def test_grid_indices_match_oracle_layout():
    # oracle vertex i * G + j is (i / G, j / G); library index row * G + col is (col / G, row / G)
    G = 16
    sep = max_separated(CAT, 0.0, 2, 0.4, 1 / G)
    for k, p in zip(sep.indices, sep.points):
        row, col = divmod(int(k), G)
        assert np.allclose(p, [col / G, row / G])


@pytest.mark.parametrize("n,eps", [(1, 0.3), (3, 0.25), (5, 0.25), (6, 0.2)])
def test_certificate(n, eps):
    sep = max_separated(ANGLE, 0.17, n, eps)
    assert certify_separated(ANGLE, sep) == 0


def test_certificate_against_pairwise():
    sep = max_separated(ANGLE, 0.4, 3, 0.3)
    assert pairwise_ok(ANGLE, sep)
    assert certify_separated(ANGLE, sep) == 0


def test_certificate_catches_violations():
    sep = max_separated(CAT, 0.0, 4, 0.25)
    pts = sep.points
    rng = np.random.default_rng(3)
    # nudge some points next to others
    extra = pts[:5] + rng.uniform(-1e-3, 1e-3, (5, 2))
    bad = SeparatedSet(sep.omega, sep.n, sep.epsilon, np.vstack([pts, np.mod(extra, 1)]))
    count = certify_separated(CAT, bad)
    brute = 0
    P = bad.points
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            brute += bowen_distance(CAT, 0.0, 4, P[i], P[j]) <= 0.25
    assert count == brute >= 5


def test_certificate_large_eps_path():
    sep = max_separated(CAT, 0.0, 2, 0.45)
    assert certify_separated(CAT, sep) == 0


@settings(max_examples=25)
@given(st.sampled_from([(1, 8), (1, 16), (2, 16)]), st.floats(0.25, 0.49),
       st.floats(0.0, 0.05))
def test_monotone_in_eps(case, eps, step):
    n, G = case
    assume(1 / G <= eps * CAT.lambda_u ** (1 - n) / 2)
    a = max_separated(CAT, 0.0, n, eps, 1 / G)
    b = max_separated(CAT, 0.0, n, min(eps + step, 0.49), 1 / G)
    assume(a.method == "exact" and b.method == "exact")
    assert len(b) <= len(a)


@pytest.mark.parametrize("n,eps,grids", [(1, 0.35, (8, 16, 32)), (1, 0.4, (8, 16, 32)),
                                         (2, 0.45, (16, 32)), (2, 0.49, (16, 32))])
def test_monotone_in_refinement(n, eps, grids):
    sizes = []
    for G in grids:
        sep = max_separated(CAT, 0.0, n, eps, 1 / G)
        assert sep.method == "exact"
        sizes.append(len(sep))
    assert sizes == sorted(sizes)


def test_vacuous_deviation_window():
    q = DeviationQuery(0.0, 2.0, 4, 0.25)
    a = deviation_count(CAT, q, COS_X1)
    b = max_separated(CAT, 0.0, 4, 0.25)
    assert np.array_equal(a.indices, b.indices)


def test_fixed_point_deviation_set():
    q = DeviationQuery(1.0, 0.02, 8, 0.25)
    sep = deviation_count(CAT, q, COS_X1)
    full = max_separated(CAT, 0.0, 8, 0.25)
    assert 1 <= len(sep) <= len(full) / 100
    avg = batch_averages(CAT, 0.0, sep.points, COS_X1, 8)
    assert np.all(np.abs(avg - 1.0) < 0.02)
    # cos(2 pi x) > 0.98 needs |x1| < 0.032 along the whole orbit
    assert np.all(np.minimum(sep.points, 1 - sep.points).max(axis=1) < 0.07)


@pytest.mark.parametrize("n,G", [(1, 16), (1, 32), (2, 16)])
def test_deviation_nesting(n, G):
    prev = -1
    for delta in (0.1, 0.3, 0.6, 1.0, 2.0):
        sep = deviation_count(CAT, DeviationQuery(0.0, delta, n, 0.45), COS_X1, 1 / G)
        assert sep.method == "exact"
        assert len(sep) >= prev
        prev = len(sep)


def test_deviation_gates():
    with pytest.raises(PreconditionViolation):
        deviation_count(CAT, DeviationQuery(0.0, 2.5, 3, 0.25), COS_X1)
    with pytest.raises(PreconditionViolation):
        DeviationQuery(0.0, 0.0, 3, 0.25)


def test_empty_deviation_set_is_legal():
    sep = deviation_count(CAT, DeviationQuery(-1.5, 0.1, 3, 0.3), COS_X1)
    assert len(sep) == 0


def test_resolution_precondition():
    with pytest.raises(GridTooCoarse):
        max_separated(CAT, 0.0, 6, 0.25, 1 / 64)
    grid = default_grid(CAT, 10, 0.25)
    assert grid.resolution <= 0.25 * CAT.lambda_u ** -9 / 2


def test_unstable_grid_covers_torus():
    grid = default_grid(CAT, 3, 0.25)
    pts = grid.points()
    assert grid.size == len(pts)
    assert np.all((0 <= pts) & (pts < 1))
    # every point of a fine test mesh is near some candidate
    from scipy.spatial import cKDTree
    tree = cKDTree(pts, boxsize=1.0)
    probe = np.random.default_rng(0).random((2000, 2))
    d, _ = tree.query(probe, p=np.inf)
    assert d.max() < 0.25


def test_rate_geometric():
    ns = np.arange(4, 11)
    fit = entropy_rate(ns, 3.0 * ((3 + math.sqrt(5)) / 2) ** ns)
    assert fit.slope == pytest.approx(LOG_LAMBDA, abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-10)


def test_rate_degenerate():
    with pytest.raises(DegenerateFit):
        entropy_rate([1, 2, 3], [5, 5, 5])
    assert entropy_rate([1, 2, 3], [5, 5, 5], allow_degenerate=True).slope == 0.0
    with pytest.raises(PreconditionViolation):
        entropy_rate([1, 2], [3, 9])


@given(st.lists(st.integers(1, 10 ** 6), min_size=3, max_size=10))
def test_rate_is_least_squares(counts):
    assume(len(set(counts)) > 1)
    ns = np.arange(1, len(counts) + 1)
    fit = entropy_rate(ns, counts)
    slope, intercept = np.polyfit(ns, np.log(counts), 1)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(intercept, abs=1e-8)
    assert fit.stderr >= 0


def test_rate_from_sets():
    sets = [max_separated(CAT, 0.0, n, 0.25) for n in (3, 4, 5, 6)]
    fit = entropy_rate(sets)
    assert list(fit.ns) == [3, 4, 5, 6]
    assert list(fit.counts) == [len(s) for s in sets]


def test_lyapunov_single_step():
    fam = PositiveCocycleFamily([B0])
    assert lyapunov_exponent(fam, [0], 1) == pytest.approx(math.log(3), abs=1e-15)


def test_lyapunov_constant_word():
    fam = PositiveCocycleFamily([B0, B1])
    for k in (0, 1):
        est = lyapunov_exponent(fam, np.full(10 ** 4, k), 10 ** 4)
        assert abs(est - LOG_LAMBDA) <= 1e-3


def test_lyapunov_sturmian_converges():
    fam = PositiveCocycleFamily([B0, B1])
    word = SturmianDriver().symbols(0, 10 ** 4)
    a = lyapunov_exponent(fam, word, 10 ** 3)
    b = lyapunov_exponent(fam, word, 10 ** 4)
    assert abs(a - b) < 1e-2


def test_lyapunov_exact_matches_double():
    fam = PositiveCocycleFamily([B0, B1])
    word = SturmianDriver().symbols(5, 2000)
    a = lyapunov_exponent(fam, word, 2000)
    b = lyapunov_exponent(fam, word, 2000, NumericsContext.bigfloat(256))
    assert a == pytest.approx(b, abs=1e-9)


def test_cocycle_separated_sets():
    sysc = SkewSystem(SturmianDriver(), PositiveCocycleFamily([B0, B1]))
    sep = max_separated(sysc, 0, 3, 0.3, 1 / 64, layout="square")
    assert len(sep) > 1
    assert certify_separated(sysc, sep) == 0
