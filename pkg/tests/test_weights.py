import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqzlab import weights as W
from eqzlab.sphere import Points, geodesic_distance

from conftest import exp_map, random_points, tangent_frame


def _fd_laplacian(w, x, h=1e-3):
    e1, e2 = tangent_frame(x)
    f = lambda v: w(Points.from_xyz(exp_map(x, v)))
    f0 = f(0 * e1)
    return (f(h * e1) + f(-h * e1) + f(h * e2) + f(-h * e2) - 4 * f0) / h ** 2


def test_constant_weight():
    w = W.constant(0.0)
    assert np.all(w(random_points(100)) == 0.0)
    assert w.is_radial and w.is_smooth and w.is_psh


@pytest.mark.parametrize("beta", [-0.9, -0.5, 0.5, 3.0])
def test_scaled_fs_is_omega_fs_psh(beta):
    w = W.scaled_fs(beta)
    x = random_points(3000, seed=4).xyz
    lap = _fd_laplacian(w, x)
    assert lap.min() >= -0.5 - 1e-5
    # bounded and continuous through both poles
    v = w(Points.from_z(np.array([0, 1e-12, 1e12, np.inf])))
    assert np.all(np.isfinite(v))
    assert abs(v[0] - v[1]) < 1e-12 and abs(v[2] - v[3]) < 1e-12


def test_scaled_fs_curvature_at_origin():
    # dd^c phi = beta omega_FS at z = 0, i.e. Lap_S phi = beta / 2 there
    w = W.scaled_fs(0.5)
    x = np.array([[0.0, 0.0, -1.0]])
    assert abs(_fd_laplacian(w, x, 1e-3)[0] - 0.25) < 1e-5


def test_scaled_fs_rejects_beta_below_minus_one():
    with pytest.raises(W.WeightError):
        W.scaled_fs(-1.0)


def test_holder_bump_empirical_constant():
    w = W.holder_bump(1.0, 0.5, "north")
    alpha, C = w.holder
    rng = np.random.default_rng(11)
    a = rng.normal(size=(10 ** 5, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    # half of the pairs are close, many of them around the kink at the cap edge and the apex
    b = np.where(rng.uniform(size=(10 ** 5, 1)) < 0.5, a + 1e-3 * rng.normal(size=(10 ** 5, 3)),
                 rng.normal(size=(10 ** 5, 3)))
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    d = geodesic_distance(a, b)
    ok = d > 0
    ratio = np.abs(w(a) - w(b))[ok] / d[ok] ** alpha
    assert ratio.max() <= 1.05 * C


def test_holder_metadata_and_errors():
    assert W.holder_bump(1.0, 0.5).holder[0] == 0.5
    assert W.gauss_bump(2, 0.7).holder[0] == 1.0
    for bad in (0.0, 1.5, -0.2):
        with pytest.raises(W.WeightError):
            W.holder_bump(1.0, bad)
    with pytest.raises(W.WeightError):
        W.builtin("nope", {})
    with pytest.raises(W.WeightError):
        W.builtin("constant", {"c": math.inf})


@given(st.floats(-14, 14))
def test_radial_profile_matches_evaluator(t):
    for w in (W.scaled_fs(0.5), W.gauss_bump(2.0, 0.7), W.holder_bump(1.0, 0.5, "north"),
              W.holder_bump(-0.3, 1.0, "south")):
        direct = w(Points.from_z(np.array([np.exp(t) + 0j])))[0]
        # rounding of the distance near the cap edge is amplified by u -> u^alpha
        alpha, C = w.holder
        assert abs(direct - w.radial_profile(t)) <= 1e-10 + C * (8 * np.finfo(float).eps) ** alpha


def test_holder_bump_off_pole_is_not_radial():
    w = W.holder_bump(1.0, 0.5, (1.0, 0.0, 0.0))
    assert not w.is_radial
    with pytest.raises(W.WeightError):
        w.radial_profile(0.0)


def test_spec_round_trip():
    for w in (W.constant(1.5), W.scaled_fs(0.5), W.gauss_bump(2, 0.7), W.holder_bump(1, 0.5, "north")):
        w2 = W.from_spec(w.spec())
        x = random_points(50)
        assert np.array_equal(w(x), w2(x))
        assert w.content_hash == w2.content_hash
    assert W.constant(0).content_hash != W.constant(1).content_hash


def test_shift_is_exact():
    w = W.gauss_bump(2, 0.7)
    x = random_points(100)
    assert np.array_equal(w.shifted(0.25)(x), w(x) + 0.25)


def test_lelong_identity_and_log_case():
    w = W.from_lelong(lambda z: 0.5 * np.log1p(np.abs(z) ** 2), 0.0)
    assert np.abs(w(random_points(200))).max() < 1e-12
    w2 = W.from_lelong(lambda z: np.log(np.abs(z)), 0.0)
    assert abs(w2(Points.from_z(np.array([1.0 + 0j])))[0] + 0.5 * math.log(2)) < 1e-15


def test_lelong_growth_violation():
    with pytest.raises(W.WeightError):
        W.from_lelong(lambda z: 0.5 * np.log1p(np.abs(z) ** 4), 0.0)


def test_lelong_round_trip_on_builtins():
    rng = np.random.default_rng(0)
    z = np.sqrt(rng.uniform(size=500)) * np.exp(2j * np.pi * rng.uniform(size=500))
    for w in (W.scaled_fs(0.5), W.gauss_bump(2, 0.7), W.constant(0.3)):
        psi = W.to_lelong(w)
        back = W.from_lelong(psi, 10.0)
        pts = Points.from_z(z)
        assert np.abs(back(pts) - w(pts)).max() <= 1e-10


def test_lelong_value_at_infinity_uses_proxy():
    w = W.from_lelong(lambda z: 0.5 * np.log1p(np.abs(z) ** 2), 0.0)
    assert np.isfinite(w(Points.from_z(np.array([np.inf])))[0])


def test_ball_sup_properties():
    x = random_points(500, seed=2)
    c = W.constant(0.7)
    assert np.array_equal(W.ball_sup(c, 0.3)(x), c(x))
    w = W.gauss_bump(2, 0.7)
    prev = w(x)
    for rho in (0.05, 0.1, 0.2, 0.3, 0.45):
        cur = W.ball_sup(w, rho)(x)
        assert np.all(cur >= prev)
        prev = cur
    for bad in (0.0, 0.5, 1.0):
        with pytest.raises(W.WeightError):
            W.ball_sup(w, bad)


def test_csv_weight_bilinear(tmp_path):
    xs = np.linspace(-1.2, 1.2, 13)
    path = tmp_path / "w.csv"
    with open(path, "w") as fh:
        fh.write("chart,re,im,value\n")
        for chart, s in (("z", 1.0), ("w", -1.0)):
            for a in xs:
                for b in xs:
                    fh.write(f"{chart},{a},{b},{s * (0.3 * a + 0.1 * b + 0.05 * a * b)}\n")
    w = W.from_csv(path)
    rng = np.random.default_rng(0)
    c = 0.9 * rng.uniform(-1, 1, 50) + 0.9j * rng.uniform(-1, 1, 50)
    c = c[np.abs(c) <= 1]
    exact = 0.3 * c.real + 0.1 * c.imag + 0.05 * c.real * c.imag
    assert np.allclose(w(Points(c, True)), exact, atol=1e-13)
    assert np.allclose(w(Points(c, False)), -exact, atol=1e-13)
