"""Weighted section spaces H^0_(2)(P^1, O(p) x O(m)) and their Bergman kernels.

A section of ``O(n)``, ``n = p + m``, is a polynomial ``f`` of degree ``<= n``
in the z-chart, with pointwise norm

    |s|^2_{h_p} = |f(z)|^2 (1+|z|^2)^{-n} exp(-2 p phi(z)).

Internally the basis is the scaled monomials ``b_k = a_k z^k``,
``a_k = sqrt((n+1) binom(n, k))``, which is orthonormal for ``phi = 0``, and
``phi`` is shifted by its grid minimum ``shift``.  Neither changes ``B_p``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.special import gammaln, logsumexp

from .sphere import Points, QuadratureGrid, TestFunction, make_grid
from .weights import Weight

log = logging.getLogger(__name__)

JITTER = 1e-12
MAX_JITTER_ATTEMPTS = 3
ORTHONORMALITY_TOL = 1e-6
CACHE_MAGIC = b"EQZGRAM1"
CACHE_VERSION = 1


class GramError(RuntimeError):
    """The Gram matrix is not numerically positive definite (under-resolved quadrature)."""


def scaled_monomial_factors(n: int) -> np.ndarray:
    k = np.arange(n + 1)
    return np.exp(0.5 * (np.log(n + 1.0) + gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)))


def _log_abs_basis(coord_abs, in_z, n):
    """``log |b_k| - (n/2) log(1+|c|^2)`` at points, shape ``(N, n+1)``."""
    k = np.arange(n + 1)
    loga = np.log(scaled_monomial_factors(n))
    with np.errstate(divide="ignore"):
        lr = np.log(coord_abs)
    power = np.where(in_z[:, None], k[None, :], (n - k)[None, :])
    with np.errstate(invalid="ignore"):
        lv = power * lr[:, None]
    lv = np.where(power == 0, 0.0, lv)  # 0 * log 0
    return lv + loga[None, :] - 0.5 * n * np.log1p(coord_abs ** 2)[:, None]


def frame_values(pts: Points, n: int) -> np.ndarray:
    """Scaled monomials in a unitary frame: ``U_k = a_k z^k (1+|z|^2)^{-n/2}`` up to a common phase.

    ``sum_k |U_k|^2 = n + 1`` at every point.
    """
    k = np.arange(n + 1)
    mag = np.exp(_log_abs_basis(np.abs(pts.coord), pts.in_z, n))
    ang = np.angle(pts.coord)
    power = np.where(pts.in_z[:, None], k[None, :], (n - k)[None, :])
    return mag * np.exp(1j * power * ang[:, None])


@dataclass(eq=False)
class SectionSpace:
    p: int
    m: int
    weight: Weight = field(repr=False)
    grid: QuadratureGrid = field(repr=False)
    shift: float
    gram: np.ndarray = field(repr=False)          # scaled-basis Gram, weight shifted by ``shift``
    coeffs: np.ndarray = field(repr=False)        # rows: orthonormal sections in the scaled basis
    jitter_used: int = 0

    def __post_init__(self):
        # one memory layout for fresh and cached matrices keeps BLAS results bit-identical
        self.gram = np.ascontiguousarray(self.gram, dtype=complex)
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=complex)

    @property
    def degree(self) -> int:
        return self.p + self.m

    @property
    def dim(self) -> int:
        return self.p + self.m + 1

    @property
    def gram_monomial(self) -> np.ndarray:
        """``G_jk = int z^j conj(z)^k (1+|z|^2)^{-n} e^{-2 p phi} omega_FS``."""
        a = scaled_monomial_factors(self.degree)
        return self.gram / np.outer(a, a) * math.exp(-2.0 * self.p * self.shift)

    @property
    def orthonormal_monomial(self) -> np.ndarray:
        """Rows are the monomial coefficients of an orthonormal basis ``s^p_j``."""
        a = scaled_monomial_factors(self.degree)
        return self.coeffs * a[None, :] * math.exp(self.p * self.shift)

    def log_section_norms(self, pts) -> np.ndarray:
        """``log |s_j(x)|^2_{h_p}`` for every orthonormal section, shape ``(N, d)``."""
        pts = Points.of(pts)
        phi = self.weight(pts)
        out = np.empty((len(pts), self.dim))
        scale = np.abs(self.coeffs).max(axis=1)
        ctil = self.coeffs / scale[:, None]
        for s in range(0, len(pts), 20000):
            sl = slice(s, s + 20000)
            vals = frame_values(pts[sl], self.degree) @ ctil.T
            with np.errstate(divide="ignore"):
                out[sl] = np.log(np.abs(vals) ** 2) + 2.0 * np.log(scale)[None, :]
        return out - 2.0 * self.p * (phi - self.shift)[:, None]

    def _log_kernel_shifted(self, pts: Points) -> np.ndarray:
        """``log sum_j |C U(x)|_j^2`` (no weight factor)."""
        scale = np.abs(self.coeffs).max(axis=1)
        ctil = self.coeffs / scale[:, None]
        out = np.empty(len(pts))
        for s in range(0, len(pts), 20000):
            sl = slice(s, s + 20000)
            vals = frame_values(pts[sl], self.degree) @ ctil.T
            with np.errstate(divide="ignore"):
                terms = np.log(np.abs(vals) ** 2) + 2.0 * np.log(scale)[None, :]
            out[sl] = logsumexp(terms, axis=1)
        return out

    def _log_kernel_grid(self, grid: QuadratureGrid) -> np.ndarray:
        """:meth:`_log_kernel_shifted` at every node of a product grid, by angular FFTs.

        On a ring of radius ``r`` each section is a trigonometric polynomial in
        ``theta`` with coefficients ``C_jk A_k(r)``, so one FFT per section and
        ring replaces the dense ``(nodes x d x d)`` evaluation.
        """
        n, d = self.degree, self.dim
        nr, nt = grid.n_r, grid.n_theta
        scale = np.abs(self.coeffs).max(axis=1)
        ctil = self.coeffs / scale[:, None]
        two_log_scale = 2.0 * np.log(scale)
        k = np.arange(d)
        loga = np.log(scaled_monomial_factors(n))
        lr = np.log(grid.radius)
        out = np.empty(grid.size)
        for chart in (0, 1):
            power = k if chart == 0 else n - k
            A = np.exp(power[None, :] * lr[:, None] + loga[None, :] - 0.5 * n * np.log1p(grid.radius ** 2)[:, None])
            freq = np.mod(power, nt)
            block = out[grid.chart_block(chart)].reshape(nr, nt)
            for i0 in range(0, nr, 16):
                a = A[i0:i0 + 16]
                spec = np.zeros((a.shape[0], d, nt), dtype=complex)
                if d <= nt:
                    spec[:, :, freq] = ctil[None, :, :] * a[:, None, :]
                else:  # aliased frequencies accumulate
                    np.add.at(spec, (slice(None), slice(None), freq), ctil[None, :, :] * a[:, None, :])
                vals = nt * np.fft.ifft(spec, axis=2)
                with np.errstate(divide="ignore"):
                    terms = np.log(np.abs(vals) ** 2) + two_log_scale[None, :, None]
                block[i0:i0 + 16] = logsumexp(terms, axis=1)
        return out

    def section_values(self, pts) -> np.ndarray:
        """Orthonormal sections at points in a unitary frame (phases frame dependent), ``(N, d)``."""
        pts = Points.of(pts)
        w = np.exp(-self.p * (self.weight(pts) - self.shift))
        return (frame_values(pts, self.degree) @ self.coeffs.T) * w[:, None]


# ---------------------------------------------------------------------------
# Gram assembly


def _gram_fft(n: int, p: int, phi_shifted: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Scaled-basis Gram matrix using the product structure of the grid.

    Per radial ring the angular sum of ``g e^{i q theta}`` is a DFT, so
    ``G_jk = sum_i W_i A_ij A_ik ghat_i[q(j, k)]``.
    """
    nr, nt = grid.n_r, grid.n_theta
    d = n + 1
    if nt <= n:
        log.warning("n_theta=%d does not resolve degree %d; Gram matrix will alias", nt, n)
    k = np.arange(d)
    loga = np.log(scaled_monomial_factors(n))
    lr = np.log(grid.radius)
    G = np.zeros((d, d), dtype=complex)
    for chart in (0, 1):
        g = np.exp(-2.0 * p * phi_shifted[grid.chart_block(chart)]).reshape(nr, nt)
        ghat = nt * np.fft.ifft(g, axis=1)
        power = k if chart == 0 else n - k
        # z-chart products carry e^{i(j-k)theta}, w-chart ones e^{i(k-j)theta}
        q = (k[:, None] - k[None, :]) if chart == 0 else (k[None, :] - k[:, None])
        q = np.mod(q, nt)
        A = np.exp(power[None, :] * lr[:, None] + loga[None, :] - 0.5 * n * np.log1p(grid.radius ** 2)[:, None])
        A *= np.sqrt(grid.radial_weights)[:, None]
        for i0 in range(0, nr, 32):
            sl = slice(i0, i0 + 32)
            a = A[sl]
            G += np.einsum("ij,ik,ijk->jk", a, a, ghat[sl][:, q], optimize=True)
    return 0.5 * (G + G.conj().T)


def gram_direct(n: int, p: int, phi_shifted: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Brute-force ``sum_x w V(x) V(x)^H`` (reference implementation)."""
    d = n + 1
    G = np.zeros((d, d), dtype=complex)
    pts = grid.points
    for s in range(0, grid.size, 20000):
        sl = slice(s, s + 20000)
        V = frame_values(pts[sl], n) * np.exp(-p * phi_shifted[sl])[:, None]
        G += (V * grid.weights[sl, None]).T @ V.conj()
    return 0.5 * (G + G.conj().T)


def _orthonormalize(G: np.ndarray):
    d = G.shape[0]
    D = np.real(np.diag(G))
    if np.any(D <= 0) or not np.all(np.isfinite(D)):
        raise GramError("Gram matrix has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(D)
    Ghat = G * np.outer(s, s)
    jit = JITTER * np.real(np.trace(Ghat)) / d
    for attempt in range(MAX_JITTER_ATTEMPTS + 1):
        try:
            L = np.linalg.cholesky(Ghat + attempt * jit * np.eye(d))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise GramError(f"Cholesky failed after {MAX_JITTER_ATTEMPTS} jitter attempts; refine the quadrature")
    Linv = sla.solve_triangular(L, np.eye(d), lower=True)
    C = Linv * s[None, :]
    err = float(np.abs(C @ G @ C.conj().T - np.eye(d)).max())
    if err > ORTHONORMALITY_TOL:
        raise GramError(f"orthonormalized basis is off by {err:.2e}; the Gram matrix is too ill-conditioned")
    return C, attempt


def build_space(p: int, m: int, w: Weight, grid: QuadratureGrid | None = None, cache_dir=None) -> SectionSpace:
    """Assemble the Gram matrix of ``O(p+m)`` sections with metric ``h_FS^{p+m} e^{-2 p phi}``."""
    if int(p) != p or int(m) != m:
        raise ValueError("p and m must be integers")
    p, m = int(p), int(m)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p + m < 0:
        raise ValueError(f"p + m = {p + m} < 0: the section space is empty")
    grid = grid or make_grid()
    if cache_dir is not None:
        cached = load_cached(cache_dir, p, m, w, grid)
        if cached is not None:
            return cached
    n = p + m
    phi = w(grid.points)
    if not np.all(np.isfinite(phi)):
        raise ValueError("weight is not finite on the quadrature grid")
    shift = float(phi.min())
    G = _gram_fft(n, p, phi - shift, grid)
    C, jit = _orthonormalize(G)
    space = SectionSpace(p, m, w, grid, shift, G, C, jit)
    if cache_dir is not None:
        save_cached(cache_dir, space)
    return space


# ---------------------------------------------------------------------------
# kernel, Fubini-Study weights, currents


def _log_kernel(space: SectionSpace, pts) -> tuple[Points, np.ndarray]:
    if isinstance(pts, QuadratureGrid):
        return pts.points, space._log_kernel_grid(pts)
    pts = Points.of(pts)
    return pts, space._log_kernel_shifted(pts)


def log_bergman(space: SectionSpace, pts) -> np.ndarray:
    """``log B_p`` at points (or at every node when ``pts`` is a :class:`QuadratureGrid`)."""
    pts, lk = _log_kernel(space, pts)
    return lk - 2.0 * space.p * (space.weight(pts) - space.shift)


def bergman_function(space: SectionSpace, pts) -> np.ndarray:
    """``B_p(x) = sum_j |s^p_j(x)|^2_{h_p}``."""
    return np.exp(log_bergman(space, pts))


def fs_weight(space: SectionSpace, pts) -> np.ndarray:
    """Global Fubini-Study weight ``phi_p = phi + log(B_p) / 2p``.

    The weight cancels analytically, so this is evaluated without ``phi``.
    """
    _, lk = _log_kernel(space, pts)
    return space.shift + lk / (2.0 * space.p)


def fs_current_pairing(space: SectionSpace, u: TestFunction, grid: QuadratureGrid | None = None) -> float:
    """``<omega_p / p, u> = ((p+m)/p) int u omega_FS + int phi_p dd^c u``."""
    grid = grid or space.grid
    pts = grid.points
    mass = space.degree / space.p
    vals = mass * u(pts) + 2.0 * fs_weight(space, grid) * u.laplacian_sphere(pts)
    return float(np.sum(vals * grid.weights))


def fs_current_pairings(space: SectionSpace, dictionary, grid: QuadratureGrid | None = None) -> np.ndarray:
    grid = grid or space.grid
    return dictionary.pair_density(grid, mass=space.degree / space.p, potential=fs_weight(space, grid))


def trace_integral(space: SectionSpace, grid: QuadratureGrid | None = None) -> float:
    """``int B_p omega_FS`` on ``grid`` (defaults to the build grid)."""
    grid = grid or space.grid
    return float(np.sum(bergman_function(space, grid) * grid.weights))


def log_bergman_l1(space: SectionSpace, grid: QuadratureGrid | None = None, region=None) -> float:
    """``||log B_p||_{L^1(U)}`` against omega_FS; ``region`` is a cap or ``None`` for all of P^1."""
    grid = grid or space.grid
    vals = np.abs(log_bergman(space, grid))
    w = grid.weights
    if region is not None:
        w = w * region.contains(grid.points)
    return float(np.sum(vals * w))


def extremal_section(space: SectionSpace, x) -> np.ndarray:
    """Unit-norm coefficients of the section maximizing ``|s(x)|_{h_p}``."""
    S = space.section_values(Points.of(x))[0]
    return np.conj(S) / np.linalg.norm(S)


def section_norm_at(space: SectionSpace, a: np.ndarray, x) -> np.ndarray:
    """``|sum_j a_j s_j(x)|^2_{h_p}`` for coefficient rows ``a``."""
    S = space.section_values(Points.of(x))[0]
    return np.abs(np.atleast_2d(a) @ S) ** 2


def extremal_value(space: SectionSpace, x, n_samples: int, seed: int) -> float:
    """Max of ``|s(x)|^2_{h_p}`` over ``n_samples`` random unit-norm sections."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    from .random_sections import generator

    rng = generator(seed, space.p, 0, 0)
    a = (rng.standard_normal((n_samples, space.dim)) + 1j * rng.standard_normal((n_samples, space.dim)))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    return float(section_norm_at(space, a, x).max())


# ---------------------------------------------------------------------------
# on-disk Gram cache
#
# layout: magic(8) version(u32) p(i32) m(i32) dim(u32) shift(f64)
#         grid sha256(32) weight sha256(32), then G.real, G.imag, C.real,
#         C.imag as row-major little-endian float64 planes (scaled basis).

_HEADER = struct.Struct("<8sIiiId32s32s")


def cache_path(cache_dir, p, m, w: Weight, grid: QuadratureGrid) -> Path:
    key = hashlib.sha256(f"{p}|{m}|{grid.content_hash}|{w.content_hash}".encode()).hexdigest()[:32]
    return Path(cache_dir) / f"gram-{key}.bin"


def save_cached(cache_dir, space: SectionSpace) -> Path:
    path = cache_path(cache_dir, space.p, space.m, space.weight, space.grid)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, space.p, space.m, space.dim, space.shift,
                          bytes.fromhex(space.grid.content_hash), bytes.fromhex(space.weight.content_hash))
    planes = [space.gram.real, space.gram.imag, space.coeffs.real, space.coeffs.imag]
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        for a in planes:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    tmp.replace(path)
    return path


def read_cache_file(path):
    raw = Path(path).read_bytes()
    magic, version, p, m, dim, shift, gh, wh = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise ValueError(f"{path} is not a version-{CACHE_VERSION} Gram cache file")
    planes = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if planes.size != 4 * dim * dim:
        raise ValueError(f"{path} is truncated")
    planes = planes.reshape(4, dim, dim)
    header = {"p": p, "m": m, "dim": dim, "shift": shift, "grid_hash": gh.hex(), "weight_hash": wh.hex()}
    return header, planes[0] + 1j * planes[1], planes[2] + 1j * planes[3]


def load_cached(cache_dir, p, m, w: Weight, grid: QuadratureGrid) -> SectionSpace | None:
    path = cache_path(cache_dir, p, m, w, grid)
    if not path.exists():
        return None
    header, G, C = read_cache_file(path)
    if (header["p"], header["m"], header["grid_hash"], header["weight_hash"]) != (
            p, m, grid.content_hash, w.content_hash):
        return None
    return SectionSpace(p, m, w, grid, header["shift"], G, C)
