"""Global weights on P^1: ``h = h_FS exp(-2 phi)``."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .sphere import NORTH, SOUTH, Points, geodesic_distance

PROFILE_WINDOW = 14.0
INFINITY_PROXY = 1e-8
RING_RADII = (0.25, 0.5, 0.75, 1.0)
RING_ANGLES = 32


class WeightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Weight:
    """A global weight ``phi``: a vectorized evaluator on :class:`Points`.

    ``profile`` (radial weights only) maps ``t = log|z|`` to ``phi(e^t)``.
    ``holder`` is ``(exponent, constant)`` w.r.t. geodesic distance on S^2.
    """

    name: str
    params: dict
    evaluator: Callable[[Points], np.ndarray] = field(repr=False)
    is_radial: bool = False
    is_smooth: bool = False
    holder: tuple | None = None
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    is_psh: bool = False

    def __call__(self, pts) -> np.ndarray:
        return np.asarray(self.evaluator(Points.of(pts)), dtype=float)

    def radial_profile(self, t, window: float = PROFILE_WINDOW) -> np.ndarray:
        """``phi(e^t)``, clamped to ``[-window, window]``."""
        if not self.is_radial:
            raise WeightError(f"weight {self.name!r} is not radial")
        t = np.clip(np.asarray(t, dtype=float), -window, window)
        if self.profile is not None:
            return np.asarray(self.profile(t), dtype=float)
        return self(Points.from_z(np.exp(t)))

    def spec(self) -> dict:
        return {"name": self.name, "params": self.params}

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.spec(), sort_keys=True, default=str).encode()).hexdigest()

    def shifted(self, c: float) -> "Weight":
        """``phi + c``."""
        prof = None if self.profile is None else (lambda t, f=self.profile: f(t) + c)
        return Weight(f"{self.name}+const", {"base": self.spec(), "shift": c},
                      lambda pts, f=self.evaluator: f(pts) + c, self.is_radial, self.is_smooth,
                      self.holder, prof, self.is_psh)


def _lipschitz_of_profile(deriv_r, n=200001) -> float:
    """Sup of ``|dphi/ds|`` for radial ``phi`` given ``dphi/dr`` (s = geodesic arclength)."""
    t = np.linspace(-PROFILE_WINDOW, PROFILE_WINDOW, n)
    r = np.exp(t)
    # ds = 2 dr / (1 + r^2)
    return float(np.max(np.abs(deriv_r(r)) * (1.0 + r * r) / 2.0)) * 1.01


def _pole_vector(center) -> np.ndarray:
    if isinstance(center, str):
        key = center.lower()
        if key in ("north", "pole", "infinity", "inf"):
            return NORTH.copy()
        if key in ("south", "zero", "origin"):
            return SOUTH.copy()
        raise WeightError(f"unknown center {center!r}")
    v = np.asarray(center, dtype=float)
    return v / np.linalg.norm(v)


def constant(c: float = 0.0) -> Weight:
    c = float(c)
    return Weight("constant", {"c": c}, lambda pts: np.full(len(pts), c), True, True, (1.0, 0.0),
                  lambda t: np.full(np.shape(t), c), True)


def scaled_fs(beta: float) -> Weight:
    """``phi = 1/2 log((1 + (1+beta)|z|^2)/(1+|z|^2)) - 1/2 log(1 + beta/2)``.

    The Fubini-Study potential of the dilation ``z -> sqrt(1+beta) z`` minus
    the standard one: smooth, bounded, omega_FS-psh for ``beta > -1``, with
    ``dd^c phi = beta omega_FS`` at ``z = 0`` and ``phi = 0`` on ``|z| = 1``.
    """
    beta = float(beta)
    if not beta > -1.0:
        raise WeightError("scaled_fs needs beta > -1")
    lam = 1.0 + beta
    shift = 0.5 * math.log1p(beta / 2.0)

    def ev(pts):
        a2 = pts.abs_coord ** 2
        zpart = 0.5 * np.log((1.0 + lam * a2) / (1.0 + a2))
        wpart = 0.5 * np.log((a2 + lam) / (a2 + 1.0))
        return np.where(pts.in_z, zpart, wpart) - shift

    def prof(t):
        # stable in both directions: work with e^{-2|t|}
        e = np.exp(-2.0 * np.abs(t))
        small = 0.5 * np.log((1.0 + lam * e) / (1.0 + e))
        large = 0.5 * np.log((e + lam) / (e + 1.0))
        return np.where(t <= 0, small, large) - shift

    lip = _lipschitz_of_profile(lambda r: (lam - 1.0) * r / ((1.0 + lam * r * r) * (1.0 + r * r)))
    return Weight("scaled_fs", {"beta": beta}, ev, True, True, (1.0, lip), prof, True)


def gauss_bump(a: float, s: float) -> Weight:
    """``phi = a exp(-|z|^2 / s^2)``."""
    a, s = float(a), float(s)
    if not s > 0:
        raise WeightError("gauss_bump needs s > 0")

    def ev(pts):
        a2 = pts.abs_coord ** 2
        with np.errstate(divide="ignore", over="ignore"):
            wz = np.where(a2 > 0, 1.0 / np.where(a2 > 0, a2, 1.0), np.inf)
        return np.where(pts.in_z, a * np.exp(-a2 / s ** 2), a * np.exp(-wz / s ** 2))

    def prof(t):
        return a * np.exp(-np.exp(2.0 * t) / s ** 2)

    lip = _lipschitz_of_profile(lambda r: a * 2.0 * r / s ** 2 * np.exp(-r * r / s ** 2))
    return Weight("gauss_bump", {"a": a, "s": s}, ev, True, True, (1.0, lip), prof, a == 0.0)


def holder_bump(a: float, alpha: float, center="north") -> Weight:
    """``phi = a max(0, 1 - 2 dist(., center)/pi)^alpha``.

    ``|u^alpha - v^alpha| <= |u - v|^alpha`` and the base is (2/pi)-Lipschitz,
    so the Hölder constant is ``|a| (2/pi)^alpha``.
    """
    a, alpha = float(a), float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise WeightError(f"Hölder exponent must lie in (0, 1], got {alpha}")
    c = _pole_vector(center)
    radial = bool(abs(abs(c[2]) - 1.0) < 1e-15)

    def ev(pts):
        d = geodesic_distance(pts.xyz, c)
        return a * np.maximum(0.0, 1.0 - 2.0 * d / np.pi) ** alpha

    prof = None
    if radial:
        north = c[2] > 0

        def prof(t):
            # colatitude from N is 2 arctan(1/|z|), from S it is 2 arctan|z|
            d = 2.0 * np.arctan(np.exp(-t)) if north else 2.0 * np.arctan(np.exp(t))
            return a * np.maximum(0.0, 1.0 - 2.0 * d / np.pi) ** alpha

    cparam = center if isinstance(center, str) else [float(x) for x in c]
    return Weight("holder_bump", {"a": a, "alpha": alpha, "center": cparam}, ev, radial, alpha == 1.0,
                  (alpha, abs(a) * (2.0 / np.pi) ** alpha), prof, a == 0.0)


BUILTINS = {
    "constant": constant,
    "scaled_fs": scaled_fs,
    "gauss_bump": gauss_bump,
    "holder_bump": holder_bump,
}


def builtin(name: str, params: dict | None = None) -> Weight:
    params = dict(params or {})
    if name not in BUILTINS:
        raise WeightError(f"unknown weight {name!r}; choose from {sorted(BUILTINS)}")
    for k, v in params.items():
        if isinstance(v, (int, float)) and not math.isfinite(v):
            raise WeightError(f"parameter {k} is not finite")
    try:
        return BUILTINS[name](**params)
    except TypeError as e:
        raise WeightError(f"bad parameters for {name}: {e}") from None


def from_spec(spec: dict) -> Weight:
    """Build a weight from ``{"name": ..., "params": {...}}`` or ``{"csv": path}``."""
    if "csv" in spec:
        return from_csv(spec["csv"])
    unknown = set(spec) - {"name", "params"}
    if unknown:
        raise WeightError(f"unknown weight keys {sorted(unknown)}")
    return builtin(spec["name"], spec.get("params"))


# ---------------------------------------------------------------------------


def from_lelong(psi: Callable[[np.ndarray], np.ndarray], c_psi: float, name: str = "lelong") -> Weight:
    """Weight ``phi = psi - 1/2 log(1+|z|^2)`` of an entire function of logarithmic growth.

    ``psi`` takes complex z-values.  The growth bound
    ``psi <= 1/2 log(1+|z|^2) + c_psi`` is checked on ``|z| = 10, 100, 1000``;
    the value at infinity is taken at ``|w| = 1e-8``.
    """
    ang = np.exp(2j * np.pi * np.arange(64) / 64)
    for R in (10.0, 100.0, 1000.0):
        z = R * ang
        excess = np.max(np.asarray(psi(z), dtype=float) - 0.5 * np.log1p(R * R) - c_psi)
        if excess > 1e-12:
            raise WeightError(f"growth bound violated by {excess:.3g} on |z| = {R:g}")

    def ev(pts):
        w = np.where(pts.in_z, 0.0, pts.coord)
        w = np.where(pts.in_z | (np.abs(w) >= INFINITY_PROXY), w, INFINITY_PROXY)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(pts.in_z, pts.coord, 1.0 / w)
            val = np.asarray(psi(z), dtype=float)
        a2 = np.abs(pts.coord) ** 2
        with np.errstate(divide="ignore"):
            # 1/2 log(1+|z|^2) with |z| = 1/|w| in the w-chart
            fs = np.where(pts.in_z, 0.5 * np.log1p(a2), 0.5 * np.log1p(a2) - np.log(np.abs(w)))
        return val - fs

    return Weight(name, {"c_psi": c_psi}, ev, False, False, None, None, True)


def to_lelong(w: Weight) -> Callable[[np.ndarray], np.ndarray]:
    """Inverse correspondence on the z-chart: ``psi(z) = phi(z) + 1/2 log(1+|z|^2)``."""
    def psi(z):
        z = np.asarray(z, dtype=complex)
        return w(Points.from_z(z)) + 0.5 * np.log1p(np.abs(z) ** 2)
    return psi


def custom(evaluator: Callable[[Points], np.ndarray], name: str = "custom", **flags) -> Weight:
    return Weight(name, {"id": name}, evaluator, **flags)


def from_csv(path) -> Weight:
    """Grid-sampled weight from ``chart,re,im,value`` rows.

    Each chart must be sampled on a full tensor grid in ``(re, im)``;
    values are bilinearly interpolated.
    """
    rows = {"z": [], "w": []}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(line for line in fh if not line.startswith("#")):
            rows[rec["chart"].strip()].append((float(rec["re"]), float(rec["im"]), float(rec["value"])))
    interps = {}
    for chart, data in rows.items():
        if not data:
            raise WeightError(f"CSV weight has no samples for the {chart}-chart")
        arr = np.array(data)
        xs, ys = np.unique(arr[:, 0]), np.unique(arr[:, 1])
        if xs.size * ys.size != arr.shape[0]:
            raise WeightError(f"{chart}-chart samples do not form a tensor grid")
        grid = np.full((xs.size, ys.size), np.nan)
        grid[np.searchsorted(xs, arr[:, 0]), np.searchsorted(ys, arr[:, 1])] = arr[:, 2]
        interps[chart] = RegularGridInterpolator((xs, ys), grid, bounds_error=False, fill_value=None)

    def ev(pts):
        q = np.stack([pts.coord.real, pts.coord.imag], -1)
        return np.where(pts.in_z, interps["z"](q), interps["w"](q))

    digest = hashlib.sha256(open(path, "rb").read()).hexdigest()
    return Weight("csv", {"sha256": digest}, ev)


# ---------------------------------------------------------------------------


def ball_sup(w: Weight, rho: float) -> Weight:
    """Upper envelope ``psi'(x) = sup_{B(x, rho^4)} w`` over chart balls.

    The sup is the max over the center and 4 rings of 32 points inside the
    ball of radius ``rho^4`` around the chart coordinate of ``x``.
    """
    if not 0.0 < rho < 0.5:
        raise WeightError("ball_sup needs rho in (0, 0.5)")
    r = rho ** 4
    ang = np.exp(2j * np.pi * np.arange(RING_ANGLES) / RING_ANGLES)
    offsets = np.concatenate([[0.0], (r * np.asarray(RING_RADII)[:, None] * ang[None, :]).ravel()])

    def ev(pts):
        c = pts.coord[:, None] + offsets[None, :]
        inz = np.repeat(pts.in_z[:, None], offsets.size, axis=1)
        vals = w(Points.from_chart(c.ravel(), inz.ravel())).reshape(c.shape)
        return vals.max(axis=1)

    prof = None
    return Weight(f"ball_sup({w.name})", {"base": w.spec(), "rho": rho}, ev, False, w.is_smooth, w.holder, prof,
                  w.is_psh)
