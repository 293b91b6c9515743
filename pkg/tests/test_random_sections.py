import math

import numpy as np
import pytest
from scipy import stats

from eqzlab import bergman as B
from eqzlab import random_sections as R
from eqzlab import weights as W
from eqzlab.sphere import Points, SpherePoint, harmonic_dictionary, make_grid


@pytest.fixture(scope="module")
def flat20():
    return B.build_space(20, 0, W.constant(0.0))


@pytest.fixture(scope="module")
def gauss20():
    return B.build_space(20, 0, W.gauss_bump(2.0, 0.7))


def _match(a, b):
    """Max distance after greedy nearest matching of two root lists (on the sphere)."""
    a = list(Points.of(a).xyz) if not isinstance(a, np.ndarray) else list(a)
    b = list(b)
    worst = 0.0
    for x in a:
        d = [np.linalg.norm(x - y) for y in b]
        k = int(np.argmin(d))
        worst = max(worst, d[k])
        b.pop(k)
    return worst


def test_determinism(flat20):
    a = R.sample_section(flat20, 123, 7)
    b = R.sample_section(flat20, 123, 7)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert not np.array_equal(a.coeffs, R.sample_section(flat20, 123, 8).coeffs)
    assert not np.array_equal(a.coeffs, R.sample_section(flat20, 124, 7).coeffs)


def test_zero_sets_independent_of_threads(gauss20):
    a = R.sample_zero_sets(gauss20, 5, range(40), threads=1)
    b = R.sample_zero_sets(gauss20, 5, range(40), threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.points.coord, y.points.coord)
        assert np.array_equal(x.points.in_z, y.points.in_z)
        assert np.array_equal(x.multiplicity, y.multiplicity)


def test_gaussian_moments():
    a = np.array([R.complex_gaussian(R.generator(9, 10, i), 11) for i in range(10 ** 4)])
    m = (np.abs(a) ** 2).mean(axis=0)
    # Var |a|^2 = 1 for a standard complex Gaussian
    assert np.all(np.abs(m - 1.0) <= 3.0 / math.sqrt(10 ** 4))


def test_chi_square_real_part():
    x = np.array([R.complex_gaussian(R.generator(2, 10, i), 1)[0] for i in range(10 ** 4)])
    z = math.sqrt(2.0) * x.real
    edges = stats.norm.ppf(np.linspace(0, 1, 21))
    counts, _ = np.histogram(z, edges)
    assert stats.chisquare(counts).pvalue > 0.01


def test_tuple_independence_and_reduction(flat20):
    n = 10 ** 4
    pairs = np.array([[abs(s.coeffs[0]) for s in R.sample_tuple(flat20, 2, 3, i)] for i in range(n)])
    r = np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1]
    assert abs(r) <= 3.0 / math.sqrt(n)
    one = R.sample_tuple(flat20, 1, 3, 5)
    assert len(one) == 1 and one[0].coeffs.tobytes() == R.sample_section(flat20, 3, 5).coeffs.tobytes()
    with pytest.raises(ValueError):
        R.sample_tuple(flat20, 0, 3)


def test_section_validation():
    with pytest.raises(ValueError):
        R.RandomSection(np.zeros(3), 2, 0)
    with pytest.raises(ValueError):
        R.RandomSection(np.ones(4), 2, 0)
    with pytest.raises(ValueError):
        R.polynomial_zeros(np.zeros(5))


def test_linear_root():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a0, a1 = rng.normal(size=2) + 1j * rng.normal(size=2)
        zs = R.polynomial_zeros(np.array([a0, a1]))
        assert len(zs) == 1 and zs.multiplicity[0] == 1
        root = Points.of(zs.points).z_values()[0]
        assert abs(root - (-a0 / a1)) <= 1e-14 * max(1, abs(root))


def test_linear_root_through_space():
    s1 = B.build_space(1, 0, W.gauss_bump(2.0, 0.7))
    sec = R.sample_section(s1, 0, 0)
    c = R.monomial_coefficients(sec, s1)
    zs = R.zeros(sec, s1)
    assert abs(zs.points.z_values()[0] + c[0] / c[1]) <= 1e-13 * max(1, abs(c[0] / c[1]))


def test_monomial_section_is_dirac(flat20):
    zs = R.polynomial_zeros(np.eye(21)[20])
    assert len(zs) == 1 and zs.multiplicity[0] == 20 and zs.points.in_z[0] and zs.points.coord[0] == 0
    # the same divisor built from an orthonormal-basis vector
    a = np.linalg.solve(flat20.coeffs.T, np.eye(21)[20])
    zs2 = R.zeros(R.RandomSection(a, 20, 0), flat20)
    assert zs2.items() == [(SpherePoint(0j, "z"), 20)]
    for u in harmonic_dictionary(3):
        assert abs(R.empirical_pairing(zs2, u, 20) - u(Points.from_z(np.array([0j])))[0]) <= 1e-15


def test_roots_at_infinity_and_zero():
    zs = R.polynomial_zeros(np.array([0, 0, 2.0, 1.0, 0, 0, 0]))
    d = dict()
    for pt, k in zs.items():
        d[(pt.chart, pt.coord)] = k
    assert d[("z", 0j)] == 2 and d[("w", 0j)] == 3 and zs.total_multiplicity == 6
    assert abs(zs.points.z_values()[np.flatnonzero(zs.multiplicity == 1)[0]] + 2.0) < 1e-14
    # below the trim threshold the top coefficient counts as a zero at infinity
    zs = R.polynomial_zeros(np.array([1.0, 1.0, 1e-15]))
    assert zs.total_multiplicity == 2 and sorted(zs.multiplicity.tolist()) == [1, 1]
    assert any((not iz) and c == 0 for c, iz in zip(zs.points.coord, zs.points.in_z))


def test_vieta_degree_20():
    rng = np.random.default_rng(20)
    for _ in range(20):
        c = rng.normal(size=21) + 1j * rng.normal(size=21)
        zs = R.polynomial_zeros(c)
        r = zs.points.z_values()
        assert zs.total_multiplicity == 20 and np.all(zs.multiplicity == 1)
        assert abs(r.sum() - (-c[19] / c[20])) <= 1e-8 * max(1, abs(c[19] / c[20]))
        assert abs(np.prod(r) - c[0] / c[20]) <= 1e-8 * max(1, abs(c[0] / c[20]))
        assert R.backward_error(c, zs) <= 1e-8


@pytest.mark.parametrize("n", [5, 50, 120, 200])
def test_backward_error_kac(n):
    rng = np.random.default_rng(n)
    for _ in range(10):
        c = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
        assert R.backward_error(c, R.polynomial_zeros(c)) <= 1e-8


@pytest.mark.parametrize("w", [W.constant(0.0), W.gauss_bump(2.0, 0.7), W.holder_bump(1.0, 0.5, "north")],
                         ids=["flat", "gauss", "holder"])
@pytest.mark.parametrize("p", [50, 200])
def test_backward_error_weighted_sections(w, p):
    s = B.build_space(p, 0, w, make_grid(400, 400))
    for i in range(5):
        sec = R.sample_section(s, 1, i)
        zs = R.zeros(sec, s)
        assert zs.total_multiplicity == p
        assert R.backward_error(R.monomial_coefficients(sec, s), zs) <= 1e-8


def test_scale_invariance(gauss20):
    s = R.sample_section(gauss20, 4, 0)
    base = R.zeros(s, gauss20)
    for lam in (1e-7, 3.5 - 2j, 1e9j):
        other = R.zeros(s.scaled(lam), gauss20)
        assert np.array_equal(other.multiplicity, base.multiplicity)
        assert _match(base.points.xyz, other.points.xyz) <= 1e-10


def test_mass(gauss20):
    one = harmonic_dictionary(0)[0]
    for m in (0, -2, 3):
        sp = B.build_space(20, m, W.gauss_bump(2.0, 0.7))
        zs = R.zeros(R.sample_section(sp, 0, 1), sp)
        assert zs.total_multiplicity == 20 + m
        assert abs(R.empirical_pairing(zs, one, 20) - (20 + m) / 20) <= 1e-15


def test_monte_carlo_unbiased(gauss20):
    D = harmonic_dictionary(4)
    zsets = R.sample_zero_sets(gauss20, 11, range(2000))
    mat = R.empirical_pairings(zsets, D, 20)
    expected = B.fs_current_pairings(gauss20, D)
    se = mat.std(axis=0, ddof=1) / math.sqrt(mat.shape[0])
    # the constant element has zero variance; fall back to a rounding floor there
    assert np.all(np.abs(mat.mean(axis=0) - expected) <= np.maximum(3 * se, 1e-10))


def test_empirical_pairings_match_scalar_route(gauss20):
    D = harmonic_dictionary(3)
    zsets = R.sample_zero_sets(gauss20, 0, range(3))
    mat = R.empirical_pairings(zsets, D, 20)
    for i, zs in enumerate(zsets):
        for k, u in enumerate(D):
            assert abs(mat[i, k] - R.empirical_pairing(zs, u, 20)) <= 1e-14
    assert R.empirical_pairings([], D, 20).shape == (0, len(D))


def test_mp_constant():
    for d in (1, 2, 17, 10 ** 6):
        assert R.mp_constant(d, 1) == 1.0
    assert abs(R.mp_constant(1, 2) - 2 ** -0.5) <= 1e-15
    for d, k in ((3, 2), (5, 4), (10, 3)):
        exact = (math.factorial(d * k) / math.factorial(d) ** k) ** (-1.0 / (d * k))
        assert abs(R.mp_constant(d, k) - exact) <= 1e-13
    for bad in ((0, 1), (1, 0), (2.5, 1)):
        with pytest.raises(ValueError):
            R.mp_constant(*bad)


@pytest.mark.parametrize("k", range(1, 9))
def test_mp_constant_bounds(k):
    ds = np.unique(np.concatenate([np.arange(1, 2001), np.geomspace(2000, 10 ** 6, 400).astype(int)]))
    vals = np.array([R.mp_constant(int(d), k) for d in ds])
    eps_k = vals.min()
    assert np.all(vals <= 1.0) and eps_k > 0
    # the multinomial bound (dk)!/(d!)^k <= k^{dk} gives c_{d,k} >= 1/k
    assert eps_k >= 1.0 / k - 1e-12


def test_zero_sets_csv(tmp_path, gauss20):
    zsets = R.sample_zero_sets(gauss20, 0, [4, 9])
    R.zero_sets_to_csv(zsets, tmp_path / "z.csv")
    lines = (tmp_path / "z.csv").read_text().splitlines()
    assert lines[0] == "sample,chart,re,im,multiplicity"
    assert len(lines) == 1 + sum(len(z) for z in zsets)
    assert {l.split(",")[0] for l in lines[1:]} == {"4", "9"}
    first = lines[1].split(",")
    pt = zsets[0].items()[0][0]
    assert first[1] == pt.chart and complex(float(first[2]), float(first[3])) == pt.coord
