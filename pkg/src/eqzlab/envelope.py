"""Equilibrium weights: the largest omega_FS-psh function below a weight.

Two independent solvers:

* :func:`radial_envelope` -- for radial weights.  A radial ``psi`` is
  omega_FS-psh iff ``F(t) = psi(e^t) + 1/2 log(1+e^{2t})`` is convex with
  slopes in ``[0, 1]``, so the envelope is a slope-clamped lower convex hull.
* :func:`lcp_envelope` -- the discrete obstacle problem
  ``psi <= phi, Lap_S psi >= -1/2`` with complementarity on a lat-long grid.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sphere import LatLongGrid, Points, QuadratureGrid, TestFunction
from .weights import PROFILE_WINDOW, Weight, WeightError

log = logging.getLogger(__name__)

RADIAL = "radial_hull"
LCP = "lcp"


def softplus_half(t):
    """``1/2 log(1 + e^{2t})`` without overflow."""
    return 0.5 * np.logaddexp(0.0, 2.0 * np.asarray(t, dtype=float))


@dataclass(eq=False)
class EnvelopeResult:
    method: str
    values: np.ndarray            # phi_eq at the solver nodes
    obstacle: np.ndarray          # phi at the solver nodes
    obstacle_residual: float
    feasibility_residual: float
    complementarity_residual: float
    iterations: int
    converged: bool = True
    t: np.ndarray | None = field(default=None, repr=False)
    hull: np.ndarray | None = field(default=None, repr=False)
    slopes: np.ndarray | None = field(default=None, repr=False)
    latlong: LatLongGrid | None = None
    laplacian: np.ndarray | None = field(default=None, repr=False)
    weight: Weight | None = field(default=None, repr=False)

    @property
    def residuals(self) -> dict:
        return {"obstacle": self.obstacle_residual, "feasibility": self.feasibility_residual,
                "complementarity": self.complementarity_residual}

    def __call__(self, pts) -> np.ndarray:
        """phi_eq at arbitrary points (hull or bilinear interpolation)."""
        pts = Points.of(pts)
        if self.method == RADIAL:
            return self.at_t(pts.log_abs_z)
        return self.latlong.interpolate(self.values, pts)

    def at_t(self, t) -> np.ndarray:
        """Radial envelope as a function of ``t = log|z|`` (all of R, incl. +-inf)."""
        t = np.asarray(t, dtype=float)
        T0, T1 = self.t[0], self.t[-1]
        g = np.interp(np.clip(t, T0, T1), self.t, self.hull)
        out = g - softplus_half(np.clip(t, T0, T1))
        left = t < T0
        right = t > T1
        # beyond the window the hull is flat on the left and has slope 1 on the right
        with np.errstate(invalid="ignore", over="ignore"):
            out = np.where(left, self.hull[0] - softplus_half(t), out)
            tail = self.hull[-1] - T1 - 0.5 * np.log1p(np.exp(-2.0 * np.where(right, t, T1)))
        out = np.where(right, tail, out)
        if self.weight is not None:
            # the envelope follows phi on contact intervals; min() restores it
            # exactly where the chord of a curved contact piece lies above phi
            out = np.minimum(out, self.weight.radial_profile(t))
        return out

    def hull_measure(self):
        """Vertices and point masses of ``omega_eq = g''(t) dt`` (radial method only)."""
        s = np.concatenate([[0.0], self.slopes, [1.0]])
        jumps = np.diff(s)
        return self.t, jumps

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# method = {self.method}\n# iterations = {self.iterations}\n")
            fh.write(f"# converged = {self.converged}\n")
            for k, v in self.residuals.items():
                fh.write(f"# {k}_residual = {v:.6e}\n")
            wr = csv.writer(fh)
            if self.method == RADIAL:
                wr.writerow(["t", "abs_z", "phi", "phi_eq"])
                for t, o, v in zip(self.t, self.obstacle, self.values):
                    wr.writerow([f"{t:.17g}", f"{np.exp(t):.17g}", f"{o:.17g}", f"{v:.17g}"])
            else:
                wr.writerow(["x", "y", "x3", "phi", "phi_eq", "lap_plus_half"])
                xyz = self.latlong.xyz()
                for p, o, v, r in zip(xyz, self.obstacle, self.values, self.laplacian + 0.5):
                    wr.writerow([f"{p[0]:.17g}", f"{p[1]:.17g}", f"{p[2]:.17g}", f"{o:.17g}", f"{v:.17g}",
                                 f"{r:.17g}"])


# ---------------------------------------------------------------------------
# radial hull


def t_grid(n: int = 16385, window: float = PROFILE_WINDOW) -> np.ndarray:
    return np.linspace(-window, window, n)


def lower_hull(x, y) -> np.ndarray:
    """Indices of the lower convex hull of points sorted by ``x`` (monotone chain)."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]) <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull)


def slope_clamped_hull(t, f):
    """Largest convex minorant of ``(t, f)`` with slopes in ``[0, 1]``.

    Returns ``(values, interval_slopes)``; the left tail is flat at ``min f``
    and the right tail has slope 1 through the minimizer of ``f - t``.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    i0 = int(np.argmin(f))
    i1 = int(np.argmin(f - t))
    if i1 < i0:  # cannot happen for a proper hull, guard against ties
        i1 = i0
    idx = lower_hull(t[i0:i1 + 1], f[i0:i1 + 1]) + i0
    seg = np.searchsorted(idx, np.arange(t.size - 1), side="right") - 1
    seg_slopes = np.diff(f[idx]) / np.diff(t[idx]) if idx.size > 1 else np.zeros(0)
    slopes = np.empty(t.size - 1)
    inner = (np.arange(t.size - 1) >= i0) & (np.arange(t.size - 1) < i1)
    slopes[np.arange(t.size - 1) < i0] = 0.0
    slopes[np.arange(t.size - 1) >= i1] = 1.0
    if inner.any():
        slopes[inner] = seg_slopes[seg[inner]]
    values = np.empty_like(f)
    values[: i0 + 1] = f[i0]
    values[i0:i1 + 1] = np.interp(t[i0:i1 + 1], t[idx], f[idx])
    values[i1:] = f[i1] + (t[i1:] - t[i1])
    return values, slopes


def radial_envelope(w: Weight, t: np.ndarray | None = None) -> EnvelopeResult:
    if not w.is_radial:
        raise WeightError(f"radial_envelope needs a radial weight, got {w.name!r}")
    t = t_grid() if t is None else np.asarray(t, dtype=float)
    dt = np.diff(t)
    if t.size < 3 or np.any(dt <= 0):
        raise ValueError("t grid must be increasing with at least 3 nodes")
    phi = w.radial_profile(t)
    sp_half = softplus_half(t)
    f = phi + sp_half
    g, slopes = slope_clamped_hull(t, f)
    phi_eq = g - sp_half

    # residuals in Lap_S units: Lap_S psi + 1/2 = cosh(t)^2 d^2F/dt^2
    d2 = np.zeros_like(t)
    d2[1:-1] = (slopes[1:] - slopes[:-1]) / (0.5 * (dt[1:] + dt[:-1]))
    scale = np.cosh(t) ** 2
    lap_plus_half = scale * d2
    slope_violation = max(0.0, -slopes.min(), slopes.max() - 1.0)
    feas = max(0.0, float(-(lap_plus_half.min())), slope_violation)
    obstacle = max(0.0, float((phi_eq - phi).max()))
    comp = float(np.abs(np.minimum(phi - phi_eq, lap_plus_half)).max())
    return EnvelopeResult(RADIAL, phi_eq, phi, obstacle, feas, comp, 1, True, t=t, hull=g, slopes=slopes,
                          weight=w)


# ---------------------------------------------------------------------------
# lat-long obstacle problem


def laplace_beltrami(ll: LatLongGrid):
    """Finite-volume stiffness ``K`` and cell areas ``A`` with ``Lap_S psi = -(K psi)/A``.

    Interior nodes use the 5-point stencil; each pole couples to every node
    of the adjacent ring (its Laplacian is ``4/h^2 (ring mean - pole)``).
    """
    nin, nl = ll.n_lat - 2, ll.n_lon
    ht, hp = ll.h_theta, ll.h_phi
    th = ll.colat
    n = ll.n_nodes
    north, south = n - 2, n - 1
    idx = np.arange(nin * nl).reshape(nin, nl)

    area = np.empty(n)
    area[: nin * nl] = np.repeat(2.0 * hp * np.sin(th) * np.sin(ht / 2.0), nl)
    area[north] = area[south] = 2.0 * np.pi * (1.0 - np.cos(ht / 2.0))

    rows, cols, vals = [], [], []

    def couple(a, b, k):
        rows.extend([a, b])
        cols.extend([b, a])
        vals.extend([k, k])

    # longitudinal faces: length ht, distance sin(th) hp
    k_lon = np.repeat(ht / (np.sin(th) * hp), nl)
    a = idx.ravel()
    b = np.roll(idx, -1, axis=1).ravel()
    couple(a, b, k_lon)
    # latitudinal faces between ring i and i+1: length hp sin(th + ht/2), distance ht
    k_lat = np.repeat(hp * np.sin(th[:-1] + ht / 2.0) / ht, nl)
    couple(idx[:-1].ravel(), idx[1:].ravel(), k_lat)
    # poles: face length hp sin(ht/2) to each ring node
    k_pole = np.full(nl, hp * np.sin(ht / 2.0) / ht)
    couple(np.full(nl, north), idx[0], k_pole)
    couple(np.full(nl, south), idx[-1], k_pole)

    rows = np.concatenate([np.atleast_1d(r) for r in rows])
    cols = np.concatenate([np.atleast_1d(c) for c in cols])
    vals = np.concatenate([np.atleast_1d(v) for v in vals])
    off = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    diag = np.asarray(off.sum(axis=1)).ravel()
    K = (sp.diags(diag) - off).tocsr()
    return K, area


def _colors(ll: LatLongGrid):
    nin, nl = ll.n_lat - 2, ll.n_lon
    i, j = np.meshgrid(np.arange(nin), np.arange(nl), indexing="ij")
    parity = ((i + j) % 2).ravel()
    red = np.flatnonzero(parity == 0)
    black = np.flatnonzero(parity == 1)
    poles = np.array([ll.n_nodes - 2, ll.n_nodes - 1])
    return red, black, poles


def _lcp_residuals(K, area, psi, phi):
    lap = -(K @ psi) / area
    obstacle = max(0.0, float((psi - phi).max()))
    feas = max(0.0, float(-(lap + 0.5).min()))
    comp = float(np.abs(np.minimum(phi - psi, lap + 0.5)).max())
    return lap, obstacle, feas, comp


def psor(K, area, phi, psi, tol, max_iter, omega=1.8, colors=None):
    """Projected SOR sweeps ``psi_i <- min(phi_i, psi_i + omega (gs_i - psi_i))``.

    Returns ``(psi, sweeps, converged)``.  Sweeps visit the colour classes in
    order, so each class update uses the freshest neighbour values.
    """
    diag = K.diagonal()
    off = (sp.diags(diag) - K).tocsr()
    rhs = 0.5 * area
    blocks = [(c, off[c], diag[c], rhs[c], phi[c]) for c in colors]
    psi = psi.copy()
    for sweep in range(1, max_iter + 1):
        change = 0.0
        for c, off_c, d_c, r_c, phi_c in blocks:
            gs = (off_c @ psi + r_c) / d_c
            new = np.minimum(phi_c, psi[c] + omega * (gs - psi[c]))
            change = max(change, float(np.abs(new - psi[c]).max()))
            psi[c] = new
        if change <= tol:
            return psi, sweep, True
    return psi, max_iter, False


def primal_dual_active_set(K, area, phi, max_iter=200):
    """Exact solution of the discrete obstacle LCP by primal-dual active sets.

    Returns ``(psi, iterations, converged)``.
    """
    n = phi.size
    rhs = 0.5 * area
    psi = phi.copy()
    mu = rhs - K @ psi
    active = mu > 0.0
    Kc = K.tocsc()
    for it in range(1, max_iter + 1):
        inactive = ~active
        psi = phi.copy()
        if inactive.any():
            I = np.flatnonzero(inactive)
            A = np.flatnonzero(active)
            b = rhs[I] - Kc[I][:, A] @ phi[A]
            psi[I] = spla.spsolve(Kc[I][:, I].tocsc(), b)
        mu = rhs - K @ psi
        mu[inactive] = 0.0
        new_active = (mu / area - (phi - psi)) > 0.0
        if np.array_equal(new_active, active):
            return psi, it, True
        active = new_active
        log.debug("active-set iteration %d: %d active nodes", it, int(active.sum()))
    return psi, max_iter, False


def lcp_envelope(w: Weight, ll: LatLongGrid | None = None, tol: float = 1e-8, max_iter: int = 200_000,
                 omega: float = 1.8, warm_start: bool = True) -> EnvelopeResult:
    """Discrete envelope on a lat-long grid.

    With ``warm_start`` the LCP is first solved exactly by primal-dual active
    sets; projected SOR sweeps then run from that iterate until the sup-change
    drops below ``tol`` (normally after one sweep).  Without it, projected SOR
    starts from the obstacle.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ll = ll or LatLongGrid()
    phi = w(ll.points())
    K, area = laplace_beltrami(ll)
    iters = 0
    psi = phi.copy()
    if warm_start:
        psi, iters, ok = primal_dual_active_set(K, area, phi)
        if not ok:
            log.warning("active-set solve did not settle after %d iterations", iters)
    psi, sweeps, converged = psor(K, area, phi, psi, tol, max_iter, omega, _colors(ll))
    lap, obstacle, feas, comp = _lcp_residuals(K, area, psi, phi)
    return EnvelopeResult(LCP, psi, phi, obstacle, feas, comp, iters + sweeps, converged, latlong=ll,
                          laplacian=lap)


def envelope(w: Weight, method: str | None = None, **kw) -> EnvelopeResult:
    if method is None:
        method = RADIAL if w.is_radial else LCP
    if method == RADIAL:
        return radial_envelope(w, kw.get("t"))
    if method == LCP:
        return lcp_envelope(w, **kw)
    raise ValueError(f"unknown envelope method {method!r}")


# ---------------------------------------------------------------------------


def equilibrium_pairing(env: EnvelopeResult, u: TestFunction, grid: QuadratureGrid) -> float:
    """``<omega_eq, u> = int u omega_FS + int phi_eq dd^c u``."""
    if not env.converged:
        raise ValueError("envelope did not converge")
    pts = grid.points
    vals = u(pts) + 2.0 * env(pts) * u.laplacian_sphere(pts)
    return float(np.sum(vals * grid.weights))
