"""Random sections, their zero divisors and empirical zero measures.

A section drawn with iid standard complex Gaussian coordinates in an
orthonormal basis projectivizes to the Fubini-Study measure on
``P(H^0)`` (unitary invariance), so no rejection step is needed.

Random streams are counter based (Philox) and keyed by
``(seed, p, sample, factor)``; any parallel schedule reproduces the same
numbers.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import companion, eigvals
from scipy.special import gammaln

from .bergman import SectionSpace, scaled_monomial_factors
from .sphere import Points, SpherePoint, Z_CHART, W_CHART

TRIM = 1e-13


def generator(seed: int, p: int, sample: int, factor: int = 0) -> np.random.Generator:
    """Independent Philox stream for one ``(p, sample, factor)`` cell of an experiment."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(p), int(sample), int(factor)))
    return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng: np.random.Generator, size) -> np.ndarray:
    """Standard complex Gaussians, ``E|a|^2 = 1``."""
    x = rng.standard_normal(size)
    y = rng.standard_normal(size)
    return (x + 1j * y) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class RandomSection:
    coeffs: np.ndarray = field(repr=False)   # in the orthonormal basis
    p: int
    m: int
    seed: int | None = None
    sample: int | None = None
    factor: int = 0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size != self.p + self.m + 1:
            raise ValueError(f"expected {self.p + self.m + 1} coefficients, got shape {c.shape}")
        if not np.any(c != 0):
            raise ValueError("the zero vector does not define a section")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.p + self.m

    def scaled(self, lam: complex) -> "RandomSection":
        return RandomSection(self.coeffs * lam, self.p, self.m, self.seed, self.sample, self.factor)


def sample_section(space: SectionSpace, seed: int, sample: int = 0, factor: int = 0) -> RandomSection:
    rng = generator(seed, space.p, sample, factor)
    return RandomSection(complex_gaussian(rng, space.dim), space.p, space.m, int(seed), int(sample), int(factor))


def sample_tuple(space: SectionSpace, k: int, seed: int, sample: int = 0) -> list[RandomSection]:
    """``k`` independent sections (a draw from the product measure on ``P(H^0)^k``)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return [sample_section(space, seed, sample, f) for f in range(k)]


# ---------------------------------------------------------------------------
# zeros


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """Zeros of a section of ``O(degree)`` with multiplicities (total = degree)."""

    points: Points = field(repr=False)
    multiplicity: np.ndarray = field(repr=False)
    degree: int
    sample: int | None = None

    def __post_init__(self):
        mult = np.asarray(self.multiplicity, dtype=np.int64)
        object.__setattr__(self, "multiplicity", mult)
        if mult.size != len(self.points) or np.any(mult < 1):
            raise ValueError("multiplicities must be positive, one per point")
        if int(mult.sum()) != self.degree:
            raise ValueError(f"multiplicities sum to {int(mult.sum())}, expected {self.degree}")

    def __len__(self) -> int:
        return len(self.points)

    def items(self) -> list[tuple[SpherePoint, int]]:
        return [
            (SpherePoint(complex(c), Z_CHART if iz else W_CHART), int(k))
            for c, iz, k in zip(self.points.coord, self.points.in_z, self.multiplicity)
        ]

    @property
    def total_multiplicity(self) -> int:
        return int(self.multiplicity.sum())


def monomial_coefficients(s: RandomSection, space: SectionSpace) -> np.ndarray:
    """Coefficients of ``1, z, ..., z^n`` up to a common positive factor."""
    b = s.coeffs @ space.coeffs
    return b * scaled_monomial_factors(space.degree)


def _horner(c, x):
    """Value and derivative of ``sum c_k x^k`` (``c`` lowest degree first)."""
    v = np.zeros_like(x)
    d = np.zeros_like(x)
    for ck in c[::-1]:
        d = d * x + v
        v = v * x + ck
    return v, d


def polynomial_zeros(c: np.ndarray, sample: int | None = None, trim: float = TRIM) -> ZeroSet:
    """Zeros on P^1 of ``sum c_k z^k`` viewed as a section of ``O(len(c) - 1)``.

    Top coefficients with ``|c_k| <= trim * max |c|`` count as zeros at
    infinity.  Weighted spaces have coefficient ranges of 20+ decades, so
    :func:`zeros` only trims exact zeros; a small root near infinity is
    then reported in the w-chart close to ``w = 0``.
    """
    c = np.asarray(c, dtype=complex)
    n = c.size - 1
    mag = np.abs(c)
    if not np.any(mag > 0):
        raise ValueError("zero polynomial has no divisor")
    # vanishing top coefficients are zeros at infinity, vanishing low ones zeros at 0
    hi = int(np.flatnonzero(mag > trim * mag.max())[-1])
    at_zero = lo = int(np.flatnonzero(mag)[0])
    at_inf = n - hi
    core = c[lo:hi + 1]
    coords, in_z, mult = [], [], []
    if core.size > 1:
        # companion matrix of the monic polynomial; LAPACK balances it
        roots = eigvals(companion(core[::-1] / core[-1]))
        big = np.abs(roots) > 1.0
        w = np.where(big, 1.0 / np.where(big, roots, 1.0), 0.0)
        if big.any():
            # one Newton step on the reversed polynomial in the w-chart
            rev = c[::-1]
            v, d = _horner(rev, w[big])
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(d != 0, v / d, 0.0)
            w[big] = w[big] - np.where(np.isfinite(step), step, 0.0)
        coords.extend(np.where(big, w, roots))
        in_z.extend(~big)
        mult.extend([1] * roots.size)
    if at_zero:
        coords.append(0j)
        in_z.append(True)
        mult.append(at_zero)
    if at_inf:
        coords.append(0j)
        in_z.append(False)
        mult.append(at_inf)
    pts = Points.from_chart(np.asarray(coords, dtype=complex), np.asarray(in_z, dtype=bool))
    return ZeroSet(pts, np.asarray(mult), n, sample)


def zeros(s: RandomSection, space: SectionSpace) -> ZeroSet:
    if s.degree != space.degree:
        raise ValueError("section and space have different degrees")
    return polynomial_zeros(monomial_coefficients(s, space), s.sample, trim=0.0)


def backward_error(c: np.ndarray, zs: ZeroSet) -> float:
    """``max |f(root)| / ||c||`` with each root evaluated in its own chart."""
    c = np.asarray(c, dtype=complex)
    pts = zs.points
    vz, _ = _horner(c, np.where(pts.in_z, pts.coord, 0.0))
    vw, _ = _horner(c[::-1], np.where(pts.in_z, 0.0, pts.coord))
    res = np.where(pts.in_z, np.abs(vz), np.abs(vw))
    return float(res.max() / np.linalg.norm(c)) if res.size else 0.0


def sample_zero_sets(space: SectionSpace, seed: int, samples, threads: int = 1) -> list[ZeroSet]:
    """Zero sets of ``sample_section(space, seed, i)`` for each ``i``, in input order."""
    samples = list(samples)

    def one(i):
        return zeros(sample_section(space, seed, i), space)

    if threads <= 1:
        return [one(i) for i in samples]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, samples))


# ---------------------------------------------------------------------------
# empirical measures


def empirical_pairing(zs: ZeroSet, u, p: int) -> float:
    """``<(1/p) [Div s], u> = (1/p) sum mult * u(root)``."""
    return float(np.dot(zs.multiplicity, u(zs.points)) / p)


def empirical_pairings(zero_sets, dictionary, p: int) -> np.ndarray:
    """Pairings of ``(1/p)[Div]`` with every dictionary element, shape ``(len(zero_sets), K)``."""
    zero_sets = list(zero_sets)
    if not zero_sets:
        return np.zeros((0, len(dictionary)))
    coord = np.concatenate([z.points.coord for z in zero_sets])
    in_z = np.concatenate([z.points.in_z for z in zero_sets])
    mult = np.concatenate([z.multiplicity for z in zero_sets]).astype(float)
    owner = np.repeat(np.arange(len(zero_sets)), [len(z) for z in zero_sets])
    vals = dictionary.values(Points(coord, in_z)) * mult[:, None]
    out = np.zeros((len(zero_sets), len(dictionary)))
    np.add.at(out, owner, vals)
    return out / p


def zero_sets_to_csv(zero_sets, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sample", "chart", "re", "im", "multiplicity"])
        for k, zs in enumerate(zero_sets):
            sid = zs.sample if zs.sample is not None else k
            for c, iz, mu in zip(zs.points.coord, zs.points.in_z, zs.multiplicity):
                wr.writerow([sid, Z_CHART if iz else W_CHART, f"{c.real:.17g}", f"{c.imag:.17g}", int(mu)])


# ---------------------------------------------------------------------------


def mp_constant(d: int, k: int) -> float:
    """``c_{d,k}`` with ``c_{d,k}^{-dk} = (dk)! / (d!)^k``, via log-gamma."""
    if int(d) != d or int(k) != k or d < 1 or k < 1:
        raise ValueError(f"need integers d, k >= 1, got ({d}, {k})")
    d, k = int(d), int(k)
    return math.exp(-(gammaln(d * k + 1.0) - k * gammaln(d + 1.0)) / (d * k))
