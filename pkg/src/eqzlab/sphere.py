"""Charts, quadrature and test functions on the Riemann sphere.

Conventions used throughout the package:

* The unit sphere is identified with P^1 by stereographic projection from
  the north pole ``N = (0, 0, 1)``, so ``z = (x + iy) / (1 - x3)``.  The
  point ``z = 0`` is the south pole and ``z = oo`` (``w = 0``) is ``N``.
* A point is stored in the z-chart when ``|z| <= 1`` (south hemisphere) and
  in the w-chart ``w = 1/z`` otherwise.
* ``omega_FS = (1/pi) (1+|z|^2)^-2 dx dy = dA / (4 pi)`` has total mass 1.
* ``dd^c u = (1/2pi) Lap_z u dx dy = 2 Lap_S u omega_FS`` where ``Lap_S`` is
  the round Laplace-Beltrami operator.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

NORTH = np.array([0.0, 0.0, 1.0])
SOUTH = np.array([0.0, 0.0, -1.0])

Z_CHART = "z"
W_CHART = "w"


class NonFiniteIntegrand(ValueError):
    """Raised when an integrand is not finite at some quadrature node."""


# ---------------------------------------------------------------------------
# points


def xyz_from_chart(coord, in_z):
    """Unit vectors for chart coordinates (vectorized)."""
    coord = np.asarray(coord, dtype=complex)
    in_z = np.broadcast_to(np.asarray(in_z, dtype=bool), coord.shape)
    a2 = np.abs(coord) ** 2
    den = 1.0 + a2
    # z-chart: x + iy = 2z/(1+|z|^2), x3 = (|z|^2-1)/(|z|^2+1)
    # w-chart: x + iy = 2 conj(w)/(1+|w|^2), x3 = (1-|w|^2)/(1+|w|^2)
    c = np.where(in_z, coord, np.conj(coord))
    x = 2.0 * c.real / den
    y = 2.0 * c.imag / den
    x3 = np.where(in_z, (a2 - 1.0) / den, (1.0 - a2) / den)
    return np.stack([x, y, x3], axis=-1)


def chart_from_xyz(xyz):
    """Return ``(coord, in_z)``, choosing the chart with ``|coord| <= 1``."""
    xyz = np.asarray(xyz, dtype=float)
    x, y, x3 = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    in_z = x3 <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (x + 1j * y) / (1.0 - x3)
        w = (x - 1j * y) / (1.0 + x3)
    coord = np.where(in_z, z, w)
    return coord, in_z


@dataclass(frozen=True)
class SpherePoint:
    """A single point of P^1, kept in the chart where ``|coord| <= 1``."""

    coord: complex
    chart: str = Z_CHART

    def __post_init__(self):
        if self.chart not in (Z_CHART, W_CHART):
            raise ValueError(f"unknown chart {self.chart!r}")
        c = complex(self.coord)
        if abs(c) > 1.0 + 1e-6:
            # move to the other chart
            if c == 0:
                raise ValueError("coordinate 0 is always representable")
            object.__setattr__(self, "coord", 1.0 / c)
            object.__setattr__(self, "chart", W_CHART if self.chart == Z_CHART else Z_CHART)
        else:
            object.__setattr__(self, "coord", c)

    @classmethod
    def from_z(cls, z: complex) -> "SpherePoint":
        if z == complex("inf") or (isinstance(z, float) and math.isinf(z)):
            return cls(0j, W_CHART)
        return cls(complex(z), Z_CHART)

    @classmethod
    def from_xyz(cls, v) -> "SpherePoint":
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        coord, in_z = chart_from_xyz(v)
        return cls(complex(coord), Z_CHART if bool(in_z) else W_CHART)

    @property
    def xyz(self) -> np.ndarray:
        return xyz_from_chart(self.coord, self.chart == Z_CHART)

    @property
    def z(self) -> complex:
        if self.chart == Z_CHART:
            return self.coord
        return complex("inf") if self.coord == 0 else 1.0 / self.coord


class Points:
    """A vectorized batch of sphere points.

    Holds both the unit vectors and the chart representation so that
    radial quantities such as ``log|z|`` are computed without cancellation
    near the poles.
    """

    __slots__ = ("coord", "in_z", "_xyz")

    def __init__(self, coord, in_z, xyz=None):
        self.coord = np.asarray(coord, dtype=complex).ravel()
        self.in_z = np.broadcast_to(np.asarray(in_z, dtype=bool), self.coord.shape).copy()
        self._xyz = None if xyz is None else np.asarray(xyz, dtype=float).reshape(-1, 3)

    @classmethod
    def from_xyz(cls, xyz) -> "Points":
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        xyz = xyz / np.linalg.norm(xyz, axis=1, keepdims=True)
        coord, in_z = chart_from_xyz(xyz)
        return cls(coord, in_z, xyz)

    @classmethod
    def from_z(cls, z) -> "Points":
        """Points from z-chart coordinates (``inf`` allowed)."""
        z = np.asarray(z, dtype=complex).ravel()
        big = ~np.isfinite(z) | (np.abs(z) > 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(np.isfinite(z), 1.0 / z, 0.0)
        coord = np.where(big, w, z)
        return cls(coord, ~big)

    @classmethod
    def from_chart(cls, coord, in_z) -> "Points":
        """Points from arbitrary chart coordinates, renormalized to ``|coord| <= 1``."""
        coord = np.asarray(coord, dtype=complex).ravel()
        in_z = np.broadcast_to(np.asarray(in_z, dtype=bool), coord.shape)
        flip = np.abs(coord) > 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / coord
        return cls(np.where(flip, inv, coord), np.where(flip, ~in_z, in_z))

    @classmethod
    def of(cls, pts) -> "Points":
        if isinstance(pts, Points):
            return pts
        if isinstance(pts, SpherePoint):
            return cls([pts.coord], [pts.chart == Z_CHART])
        if isinstance(pts, (list, tuple)) and pts and isinstance(pts[0], SpherePoint):
            return cls([p.coord for p in pts], [p.chart == Z_CHART for p in pts])
        return cls.from_xyz(pts)

    def __len__(self) -> int:
        return self.coord.size

    def __getitem__(self, idx) -> "Points":
        xyz = None if self._xyz is None else self._xyz[idx]
        return Points(self.coord[idx], self.in_z[idx], xyz)

    @property
    def xyz(self) -> np.ndarray:
        if self._xyz is None:
            self._xyz = xyz_from_chart(self.coord, self.in_z).reshape(-1, 3)
        return self._xyz

    @property
    def abs_coord(self) -> np.ndarray:
        return np.abs(self.coord)

    @property
    def log_abs_z(self) -> np.ndarray:
        """``t = log|z|`` (``-inf`` at z = 0, ``+inf`` at z = oo)."""
        with np.errstate(divide="ignore"):
            la = np.log(np.abs(self.coord))
        return np.where(self.in_z, la, -la)

    @property
    def fs_potential(self) -> np.ndarray:
        """Global function ``1/2 log(1+|z|^2)`` (``+inf`` at z = oo)."""
        a2 = np.abs(self.coord) ** 2
        with np.errstate(divide="ignore"):
            wpart = 0.5 * np.log1p(a2) - np.log(np.abs(self.coord))
        return np.where(self.in_z, 0.5 * np.log1p(a2), wpart)

    @property
    def conformal_factor(self) -> np.ndarray:
        """``4/(1+|c|^2)^2``: ``Lap_c = conformal_factor * Lap_S`` in the point's chart."""
        return 4.0 / (1.0 + np.abs(self.coord) ** 2) ** 2

    def z_values(self) -> np.ndarray:
        """Affine coordinate ``z``; the north pole maps to ``inf``."""
        c = np.where(self.in_z | (self.coord == 0), 1.0, self.coord)
        return np.where(self.in_z, self.coord, np.where(self.coord == 0, complex(np.inf, 0.0), 1.0 / c))


def geodesic_distance(a, b) -> np.ndarray:
    """Great-circle distance between unit vectors (accurate for small angles)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    chord = np.linalg.norm(a - b, axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Two-chart product rule for integration against omega_FS.

    On each closed chart disk the Fubini-Study measure equals
    ``(1/2pi) dv dtheta`` with ``v = |c|^2/(1+|c|^2) in [0, 1/2]``; the rule
    is Gauss-Legendre in ``v`` and uniform in ``theta``.  Nodes are ordered
    chart-major (z then w), then radial, then angular.
    """

    n_r: int
    n_theta: int
    v: np.ndarray = field(repr=False)
    radius: np.ndarray = field(repr=False)
    radial_weights: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    points: Points = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.weights.size

    def descriptor(self) -> dict:
        return {"kind": "two-chart-gl-v", "version": 1, "n_r": self.n_r, "n_theta": self.n_theta}

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.descriptor(), sort_keys=True).encode()).hexdigest()

    def to_json(self) -> str:
        d = self.descriptor()
        d["hash"] = self.content_hash
        return json.dumps(d, sort_keys=True)

    def chart_block(self, chart: int) -> slice:
        n = self.n_r * self.n_theta
        return slice(chart * n, (chart + 1) * n)


@lru_cache(maxsize=16)
def make_grid(n_r: int = 400, n_theta: int = 400) -> QuadratureGrid:
    if int(n_r) != n_r or int(n_theta) != n_theta:
        raise ValueError("node counts must be integers")
    if n_r < 4 or n_theta < 4:
        raise ValueError(f"need n_r, n_theta >= 4, got ({n_r}, {n_theta})")
    x, wx = np.polynomial.legendre.leggauss(n_r)
    v = 0.25 * (x + 1.0)
    wv = 0.25 * wx
    radius = np.sqrt(v / (1.0 - v))
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    # (1/2pi) dv dtheta  ->  wv * (2pi/n_theta) / (2pi)
    radial_weights = wv / n_theta
    c = (radius[:, None] * np.exp(1j * theta[None, :])).ravel()
    coord = np.concatenate([c, c])
    in_z = np.concatenate([np.ones(c.size, bool), np.zeros(c.size, bool)])
    w = np.tile(np.repeat(radial_weights, n_theta), 2)
    return QuadratureGrid(n_r, n_theta, v, radius, radial_weights, theta, Points(coord, in_z), w)


def integrate(f, grid: QuadratureGrid) -> float:
    """``sum f(node) * weight``; ``f`` is a callable on :class:`Points` or an array of node values."""
    vals = np.asarray(f(grid.points) if callable(f) else f, dtype=float)
    if vals.shape != grid.weights.shape:
        vals = np.broadcast_to(vals, grid.weights.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        chart = Z_CHART if grid.points.in_z[i] else W_CHART
        raise NonFiniteIntegrand(
            f"integrand is {vals[i]} at node {i} ({chart}-chart, coord={grid.points.coord[i]:.6g})"
        )
    return float(np.sum(vals * grid.weights))


@dataclass(frozen=True, eq=False)
class LatLongGrid:
    """Colatitude/longitude grid with single nodes at the poles.

    Colatitude is measured from the north pole (z = oo).  Interior nodes are
    stored as an ``(n_lat - 2, n_lon)`` block followed by north, south.
    """

    n_lat: int = 361
    n_lon: int = 720

    def __post_init__(self):
        if self.n_lat < 5 or self.n_lon < 4 or self.n_lon % 2:
            raise ValueError("need n_lat >= 5 and even n_lon >= 4")

    @property
    def h_theta(self) -> float:
        return np.pi / (self.n_lat - 1)

    @property
    def h_phi(self) -> float:
        return 2.0 * np.pi / self.n_lon

    @property
    def colat(self) -> np.ndarray:
        return self.h_theta * np.arange(1, self.n_lat - 1)

    @property
    def lon(self) -> np.ndarray:
        return self.h_phi * np.arange(self.n_lon)

    @property
    def n_nodes(self) -> int:
        return (self.n_lat - 2) * self.n_lon + 2

    def xyz(self) -> np.ndarray:
        th, ph = np.meshgrid(self.colat, self.lon, indexing="ij")
        inner = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1).reshape(-1, 3)
        return np.vstack([inner, NORTH, SOUTH])

    def points(self) -> Points:
        return Points.from_xyz(self.xyz())

    def interpolate(self, values, pts: Points) -> np.ndarray:
        """Bilinear interpolation in (colatitude, longitude) of nodal values."""
        values = np.asarray(values, dtype=float)
        nin = self.n_lat - 2
        block = values[: nin * self.n_lon].reshape(nin, self.n_lon)
        full = np.vstack([np.full(self.n_lon, values[-2]), block, np.full(self.n_lon, values[-1])])
        xyz = pts.xyz
        th = np.arccos(np.clip(xyz[:, 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(xyz[:, 1], xyz[:, 0]), 2.0 * np.pi)
        fi = th / self.h_theta
        i0 = np.clip(np.floor(fi).astype(int), 0, self.n_lat - 2)
        a = fi - i0
        fj = ph / self.h_phi
        j0 = np.floor(fj).astype(int) % self.n_lon
        b = fj - np.floor(fj)
        j1 = (j0 + 1) % self.n_lon
        return ((1 - a) * ((1 - b) * full[i0, j0] + b * full[i0, j1])
                + a * ((1 - b) * full[i0 + 1, j0] + b * full[i0 + 1, j1]))


# ---------------------------------------------------------------------------
# second-order jets (value, gradient, Hessian in R^3)


class Jet:
    """Truncated second-order Taylor data of a function on R^3 at N points."""

    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h):
        self.v, self.g, self.h = v, g, h

    @classmethod
    def const(cls, c, n):
        return cls(np.full(n, float(c)), np.zeros((n, 3)), np.zeros((n, 3, 3)))

    @classmethod
    def coordinate(cls, xyz, k):
        n = xyz.shape[0]
        g = np.zeros((n, 3))
        g[:, k] = 1.0
        return cls(xyz[:, k].copy(), g, np.zeros((n, 3, 3)))

    def __add__(self, o):
        if isinstance(o, Jet):
            return Jet(self.v + o.v, self.g + o.g, self.h + o.h)
        return Jet(self.v + o, self.g, self.h)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Jet):
            return Jet(self.v - o.v, self.g - o.g, self.h - o.h)
        return Jet(self.v - o, self.g, self.h)

    def __neg__(self):
        return Jet(-self.v, -self.g, -self.h)

    def __mul__(self, o):
        if isinstance(o, Jet):
            gg = self.g[:, :, None] * o.g[:, None, :]
            h = (self.h * o.v[:, None, None] + o.h * self.v[:, None, None]
                 + gg + np.swapaxes(gg, 1, 2))
            return Jet(self.v * o.v, self.g * o.v[:, None] + o.g * self.v[:, None], h)
        return Jet(self.v * o, self.g * o, self.h * o)

    __rmul__ = __mul__

    def compose(self, f0, f1, f2):
        """Chain rule for ``F(self)`` given ``F, F', F''`` evaluated at ``self.v``."""
        g = self.g * f1[:, None]
        h = self.h * f1[:, None, None] + f2[:, None, None] * self.g[:, :, None] * self.g[:, None, :]
        return Jet(f0, g, h)

    def on_sphere(self, xyz):
        """Return ``(|u|, |grad_S u|, |Hess_S u|, Lap_S u)`` for the restriction to S^2."""
        n = xyz.shape[0]
        proj = np.eye(3)[None] - xyz[:, :, None] * xyz[:, None, :]
        grad = np.einsum("nij,nj->ni", proj, self.g)
        radial = np.einsum("ni,ni->n", xyz, self.g)
        hs = self.h - radial[:, None, None] * np.eye(3)[None]
        hs = np.einsum("nij,njk,nkl->nil", proj, hs, proj)
        lap = np.einsum("nii->n", hs)
        return (np.abs(self.v), np.linalg.norm(grad, axis=1),
                np.sqrt(np.einsum("nij,nij->n", hs, hs)), lap)


# ---------------------------------------------------------------------------
# real spherical harmonics through solid-harmonic recurrences


def harmonic_index(ell: int, m: int) -> int:
    return ell * ell + ell + m


def _solid_harmonics(x, y, z, r2, L, one):
    """Real solid harmonics ``r^l Y_lm`` for ``0 <= l <= L``, orthonormal on S^2.

    Works on plain arrays or on :class:`Jet` objects.  ``one`` is the
    multiplicative identity of the chosen type.  Returns a list indexed by
    :func:`harmonic_index`.
    """
    out = [None] * (L + 1) ** 2
    cm, sm = one, 0 * one  # Re, Im of (x + iy)^m
    for m in range(L + 1):
        if m > 0:
            cm, sm = cm * x - sm * y, sm * x + cm * y
        # Q_l^m = r^(l-m) d^m P_l / dt^m (z/r)
        dfact = float(np.prod(np.arange(2 * m - 1, 0, -2))) if m > 0 else 1.0
        q_prev = None
        q = one * dfact
        for ell in range(m, L + 1):
            if ell == m + 1:
                q_prev, q = q, q * z * float(2 * m + 1)
            elif ell > m + 1:
                q_prev, q = q, (q * z * float(2 * ell - 1) - q_prev * r2 * float(ell + m - 1)) * (1.0 / (ell - m))
            norm = math.sqrt((2 * ell + 1) / (4 * math.pi) * math.exp(math.lgamma(ell - m + 1) - math.lgamma(ell + m + 1)))
            if m == 0:
                out[harmonic_index(ell, 0)] = q * norm
            else:
                norm *= math.sqrt(2.0)
                out[harmonic_index(ell, m)] = q * cm * norm
                out[harmonic_index(ell, -m)] = q * sm * norm
    return out


def real_harmonics(xyz, L: int) -> np.ndarray:
    """Orthonormal real spherical harmonics at unit vectors, shape ``(N, (L+1)^2)``."""
    xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    ones = np.ones(xyz.shape[0])
    vals = _solid_harmonics(x, y, z, ones, L, ones)
    return np.stack(vals, axis=1)


def _harmonic_jets(xyz, L):
    x, y, z = (Jet.coordinate(xyz, k) for k in range(3))
    r2 = x * x + y * y + z * z
    return _solid_harmonics(x, y, z, r2, L, Jet.const(1.0, xyz.shape[0]))


# ---------------------------------------------------------------------------
# smooth cutoff for localized dictionaries


@dataclass(frozen=True)
class SphericalCap:
    """The open cap ``{x : angle(x, center) < radius}``."""

    center: tuple = (0.0, 0.0, -1.0)
    radius: float = np.pi / 2

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        norm = np.linalg.norm(c) if c.shape == (3,) else 0.0
        if not (np.isfinite(norm) and norm > 0):
            raise ValueError("cap center must be a non-zero finite 3-vector")
        object.__setattr__(self, "center", tuple(float(t) for t in c / norm))
        if not 0.0 < self.radius <= np.pi:
            raise ValueError("cap radius must lie in (0, pi]")

    def contains(self, pts: Points) -> np.ndarray:
        return geodesic_distance(pts.xyz, np.asarray(self.center)) < self.radius

    def descriptor(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}

    def cutoff_jet(self, xyz) -> Jet:
        """Jet of ``chi(x.c)``, ``chi = (1-s)^3 (1+3s)`` with ``s = (1 - x.c)/(1 - cos radius)``.

        The profile is C^2 across the cap boundary and vanishes outside.
        """
        c = np.asarray(self.center)
        t = Jet(xyz @ c, np.broadcast_to(c, xyz.shape).copy(), np.zeros((xyz.shape[0], 3, 3)))
        width = 1.0 - math.cos(self.radius)
        s = (1.0 - t.v) / width
        inside = s < 1.0
        sc = np.clip(s, 0.0, 1.0)
        f0 = np.where(inside, (1 - sc) ** 3 * (1 + 3 * sc), 0.0)
        ds = -1.0 / width
        f1 = np.where(inside, -12.0 * sc * (1 - sc) ** 2, 0.0) * ds
        f2 = np.where(inside, -12.0 * (1 - sc) * (1 - 3 * sc), 0.0) * ds * ds
        return t.compose(f0, f1, f2)

    def cutoff(self, xyz) -> np.ndarray:
        return self.cutoff_jet(np.asarray(xyz, dtype=float).reshape(-1, 3)).v


# ---------------------------------------------------------------------------
# dictionary of test functions

CERT_GRID = (721, 1440)


def _legendre_theta(theta, L):
    """Normalized ``f_lm(theta)`` with first and second theta-derivatives.

    ``Y_lm = f_lm(theta) cos(m phi)`` (or ``sin``); returned as a dict
    ``(l, m) -> (f, f', f'')`` for ``m >= 0``.
    """
    c, s = np.cos(theta), np.sin(theta)

    def mul(a, b):
        return (a[0] * b[0], a[1] * b[0] + a[0] * b[1], a[2] * b[0] + 2 * a[1] * b[1] + a[0] * b[2])

    def lin(a, x, b, y):
        return tuple(a * u + b * v for u, v in zip(x, y))

    one = (np.ones_like(theta), np.zeros_like(theta), np.zeros_like(theta))
    cj = (c, -s, -c)
    sj = (s, c, -s)
    out = {}
    sm = one
    for m in range(L + 1):
        if m > 0:
            sm = mul(sm, sj)
        dfact = float(np.prod(np.arange(2 * m - 1, 0, -2))) if m > 0 else 1.0
        prev, cur = None, tuple(dfact * t for t in sm)
        for ell in range(m, L + 1):
            if ell == m + 1:
                prev, cur = cur, tuple((2 * m + 1) * t for t in mul(cj, cur))
            elif ell > m + 1:
                prev, cur = cur, lin((2 * ell - 1) / (ell - m), mul(cj, cur), -(ell + m - 1) / (ell - m), prev)
            norm = math.sqrt((2 * ell + 1) / (4 * math.pi)
                             * math.exp(math.lgamma(ell - m + 1) - math.lgamma(ell + m + 1)))
            if m > 0:
                norm *= math.sqrt(2.0)
            out[ell, m] = tuple(norm * t for t in cur)
    return out


def _cutoff_theta(theta, cap):
    """1-D jet in colatitude of a cap cutoff whose center is a pole."""
    ct = cap.center[2]
    c, s = np.cos(theta), np.sin(theta)
    width = 1.0 - math.cos(cap.radius)
    # x.center = ct * cos(theta)
    sv = (1.0 - ct * c) / width
    s1 = ct * s / width
    s2 = ct * c / width
    inside = sv < 1.0
    sc = np.clip(sv, 0.0, 1.0)
    f0 = np.where(inside, (1 - sc) ** 3 * (1 + 3 * sc), 0.0)
    f1 = np.where(inside, -12.0 * sc * (1 - sc) ** 2, 0.0)
    f2 = np.where(inside, -12.0 * (1 - sc) * (1 - 3 * sc), 0.0)
    return f0, f1 * s1, f2 * s1 * s1 + f1 * s2


@lru_cache(maxsize=8)
def _c2_bounds(L: int, cap: SphericalCap | None, n_lat: int, n_lon: int) -> np.ndarray:
    """Grid maxima of ``|u| + |grad u| + |Hess u|`` for every raw dictionary element.

    Uses the separated form ``f(theta) trig(m phi)`` on the open rows of the
    lat-long grid and full 3-D jets at the two poles.
    """
    K = (L + 1) ** 2
    sup = np.zeros((3, K))
    poles = np.array([NORTH, SOUTH])
    pole_jets = _harmonic_jets(poles, L)
    chi_pole = cap.cutoff_jet(poles) if cap is not None else None
    for k, jet in enumerate(pole_jets):
        if chi_pole is not None:
            jet = jet * chi_pole
        sup[:, k] = [t.max() for t in jet.on_sphere(poles)[:3]]

    polar_cap = cap is None or abs(abs(cap.center[2]) - 1.0) < 1e-15
    if not polar_cap:
        return _c2_bounds_generic(L, cap, n_lat, n_lon, sup)

    theta = np.linspace(0.0, np.pi, n_lat)[1:-1]
    phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    fl = _legendre_theta(theta, L)
    chi = _cutoff_theta(theta, cap) if cap is not None else None
    for (ell, m), (f, f1, f2) in fl.items():
        if chi is not None:
            f, f1, f2 = f * chi[0], f1 * chi[0] + f * chi[1], f2 * chi[0] + 2 * f1 * chi[1] + f * chi[2]
        f, f1, f2 = f[:, None], f1[:, None], f2[:, None]
        cos2 = np.cos(m * phi)[None, :] ** 2
        sin2 = 1.0 - cos2
        a_c = f * f
        g_c, g_s = f1 * f1, (m * f / s) ** 2
        h_c = f2 * f2 + (-m * m * f / s ** 2 + c / s * f1) ** 2
        h_s = 2.0 * (m * (f1 - c / s * f) / s) ** 2
        variants = [(harmonic_index(ell, m), cos2, sin2)]
        if m > 0:
            variants.append((harmonic_index(ell, -m), sin2, cos2))
        for k, cc, ss in variants:
            sup[0, k] = max(sup[0, k], np.sqrt((a_c * cc).max()))
            sup[1, k] = max(sup[1, k], np.sqrt((g_c * cc + g_s * ss).max()))
            sup[2, k] = max(sup[2, k], np.sqrt((h_c * cc + h_s * ss).max()))
    return sup.sum(axis=0)


def _c2_bounds_generic(L, cap, n_lat, n_lon, sup):
    th = np.linspace(0.0, np.pi, n_lat)[1:-1]
    ph = 2.0 * np.pi * np.arange(n_lon) / n_lon
    rows_per_chunk = max(1, 40000 // n_lon)
    for i0 in range(0, th.size, rows_per_chunk):
        T, P = np.meshgrid(th[i0:i0 + rows_per_chunk], ph, indexing="ij")
        xyz = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
        xyz = xyz[geodesic_distance(xyz, np.asarray(cap.center)) < cap.radius]
        if xyz.shape[0] == 0:
            continue
        chi = cap.cutoff_jet(xyz)
        for k, jet in enumerate(_harmonic_jets(xyz, L)):
            a, g, h, _ = (jet * chi).on_sphere(xyz)
            sup[0, k] = max(sup[0, k], a.max())
            sup[1, k] = max(sup[1, k], g.max())
            sup[2, k] = max(sup[2, k], h.max())
    return sup.sum(axis=0)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """One dictionary element ``u = Y_lm * chi / c2_bound``."""

    ell: int
    m: int
    c2_bound: float
    cap: SphericalCap | None = None

    __test__ = False  # not a pytest class

    @property
    def degree(self) -> int:
        return self.ell

    def _jet(self, xyz):
        jet = _harmonic_jets(xyz, self.ell)[harmonic_index(self.ell, self.m)]
        if self.cap is not None:
            jet = jet * self.cap.cutoff_jet(xyz)
        return jet * (1.0 / self.c2_bound)

    def __call__(self, pts) -> np.ndarray:
        pts = Points.of(pts)
        y = real_harmonics(pts.xyz, self.ell)[:, harmonic_index(self.ell, self.m)]
        if self.cap is not None:
            y = y * self.cap.cutoff(pts.xyz)
        return y / self.c2_bound

    def laplacian_sphere(self, pts) -> np.ndarray:
        pts = Points.of(pts)
        if self.cap is None:
            return -self.ell * (self.ell + 1) * self(pts)
        return self._jet(pts.xyz).on_sphere(pts.xyz)[3]

    def chart_laplacian(self, pts) -> np.ndarray:
        """``Lap_c u`` in each point's own chart coordinate."""
        pts = Points.of(pts)
        return pts.conformal_factor * self.laplacian_sphere(pts)


class Dictionary:
    """A finite family of C^2-normalized test functions evaluated in bulk."""

    def __init__(self, L: int, cap: SphericalCap | None = None, cert_grid=CERT_GRID):
        if not 0 <= L <= 32:
            raise ValueError(f"dictionary degree must be in [0, 32], got {L}")
        self.L = L
        self.cap = cap
        self.c2_bounds = _c2_bounds(L, cap, *cert_grid)
        self.functions = [
            TestFunction(ell, m, float(self.c2_bounds[harmonic_index(ell, m)]), cap)
            for ell in range(L + 1) for m in range(-ell, ell + 1)
        ]

    @property
    def id(self) -> str:
        if self.cap is None:
            return f"harm-L{self.L}"
        c = self.cap.center
        return f"harm-L{self.L}-cap({c[0]:.6g},{c[1]:.6g},{c[2]:.6g};{self.cap.radius:.6g})"

    def __len__(self) -> int:
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def __getitem__(self, k) -> TestFunction:
        return self.functions[k]

    @property
    def degrees(self) -> np.ndarray:
        return np.array([f.ell for f in self.functions])

    def values(self, pts) -> np.ndarray:
        """Matrix ``(N, K)`` of normalized test-function values."""
        pts = Points.of(pts)
        vals = real_harmonics(pts.xyz, self.L)
        if self.cap is not None:
            vals = vals * self.cap.cutoff(pts.xyz)[:, None]
        return vals / self.c2_bounds[None, :]

    def values_and_laplacians(self, pts):
        pts = Points.of(pts)
        if self.cap is None:
            u = self.values(pts)
            ell = self.degrees
            return u, -(ell * (ell + 1))[None, :] * u
        xyz = pts.xyz
        jets = _harmonic_jets(xyz, self.L)
        chi = self.cap.cutoff_jet(xyz)
        u = np.empty((xyz.shape[0], len(self)))
        lap = np.empty_like(u)
        for k, jet in enumerate(jets):
            pj = jet * chi
            u[:, k] = pj.v
            lap[:, k] = pj.on_sphere(xyz)[3]
        return u / self.c2_bounds, lap / self.c2_bounds

    def pair_density(self, grid: QuadratureGrid, mass=None, potential=None, chunk: int = 40000) -> np.ndarray:
        """Pair every element with ``mass * omega_FS + dd^c potential``.

        ``mass`` and ``potential`` are node arrays (or scalars) on ``grid``;
        the dd^c is moved onto the test functions, so
        ``<T, u> = sum w (mass u + 2 potential Lap_S u)``.
        """
        n = grid.size
        out = np.zeros(len(self))
        for s in range(0, n, chunk):
            sl = slice(s, min(n, s + chunk))
            pts = grid.points[sl]
            w = grid.weights[sl]
            if potential is None:
                u = self.values(pts)
                lap = None
            else:
                u, lap = self.values_and_laplacians(pts)
            if mass is not None:
                m = np.broadcast_to(np.asarray(mass, dtype=float), (n,))[sl]
                out += (w * m) @ u
            if potential is not None:
                ph = np.broadcast_to(np.asarray(potential, dtype=float), (n,))[sl]
                if not np.all(np.isfinite(ph)):
                    raise NonFiniteIntegrand("potential is not finite on the grid")
                out += 2.0 * (w * ph) @ lap
        return out


@lru_cache(maxsize=8)
def harmonic_dictionary(L: int = 8, cap: SphericalCap | None = None) -> Dictionary:
    """C^2-normalized real spherical harmonics of degree ``<= L`` (optionally cut off to a cap)."""
    return Dictionary(L, cap)
