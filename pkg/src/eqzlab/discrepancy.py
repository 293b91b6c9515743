"""Dictionary seminorms between currents and convergence-rate fits.

Every current is reduced to its vector of pairings against one fixed
C^2-normalized dictionary; the sup-distance of two such vectors is a lower
bound for the dual C^2 seminorm of their difference.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bergman import SectionSpace, fs_weight
from .envelope import EnvelopeResult
from .random_sections import ZeroSet, empirical_pairings
from .sphere import Dictionary, QuadratureGrid, make_grid

EMPIRICAL = "empirical"
FS_CURRENT = "fs_current"
EQUILIBRIUM = "equilibrium"
FUBINI_STUDY = "fubini_study"
TAGS = (EMPIRICAL, FS_CURRENT, EQUILIBRIUM, FUBINI_STUDY)


class DictionaryMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PairingVector:
    tag: str
    values: np.ndarray = field(repr=False)
    dictionary_id: str
    region: str | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown current tag {self.tag!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())

    def __len__(self) -> int:
        return self.values.size

    def to_row(self, p=None) -> list:
        return [p if p is not None else "", self.dictionary_id] + [f"{v:.17g}" for v in self.values]


def _region_of(dictionary: Dictionary) -> str | None:
    return None if dictionary.cap is None else dictionary.id


def fubini_study_vector(dictionary: Dictionary, grid: QuadratureGrid | None = None) -> PairingVector:
    grid = grid or make_grid()
    vals = dictionary.pair_density(grid, mass=1.0)
    return PairingVector(FUBINI_STUDY, vals, dictionary.id, _region_of(dictionary))


def equilibrium_vector(env: EnvelopeResult, dictionary: Dictionary,
                       grid: QuadratureGrid | None = None) -> PairingVector:
    """``<omega_eq, u>`` for every element (dd^c moved onto the test functions)."""
    if not env.converged:
        raise ValueError("envelope did not converge")
    grid = grid or make_grid()
    vals = dictionary.pair_density(grid, mass=1.0, potential=env(grid.points))
    return PairingVector(EQUILIBRIUM, vals, dictionary.id, _region_of(dictionary))


def fs_current_vector(space: SectionSpace, dictionary: Dictionary, grid: QuadratureGrid | None = None,
                      scale: float | None = None) -> PairingVector:
    """``<omega_p / p, u>``; ``scale = p`` gives the unscaled current ``omega_p``."""
    grid = grid or space.grid
    vals = dictionary.pair_density(grid, mass=space.degree / space.p, potential=fs_weight(space, grid))
    if scale is not None:
        vals = vals * scale
    return PairingVector(FS_CURRENT, vals, dictionary.id, _region_of(dictionary))


def empirical_vectors(zero_sets, dictionary: Dictionary, p: int, scale: float | None = None) -> list[PairingVector]:
    """``<(1/p)[Div s], u>`` per zero set; ``scale = p`` gives ``[Div s]``."""
    mat = empirical_pairings(zero_sets, dictionary, p)
    if scale is not None:
        mat = mat * scale
    region = _region_of(dictionary)
    return [PairingVector(EMPIRICAL, row, dictionary.id, region) for row in mat]


def _check(a: PairingVector, b: PairingVector) -> None:
    if a.dictionary_id != b.dictionary_id or a.region != b.region:
        raise DictionaryMismatch(f"cannot compare {a.dictionary_id!r}/{a.region} with {b.dictionary_id!r}/{b.region}")
    if len(a) != len(b):
        raise DictionaryMismatch(f"vector lengths differ ({len(a)} vs {len(b)})")


def dict_seminorm(a: PairingVector, b: PairingVector) -> float:
    """``max_u |<A, u> - <B, u>|`` over the dictionary."""
    _check(a, b)
    return float(np.max(np.abs(a.values - b.values))) if len(a) else 0.0


def dict_seminorms(rows: np.ndarray, b: PairingVector) -> np.ndarray:
    """Vectorized :func:`dict_seminorm` for a matrix of pairings against ``b``."""
    rows = np.atleast_2d(rows)
    if rows.shape[1] != len(b):
        raise DictionaryMismatch("vector lengths differ")
    return np.max(np.abs(rows - b.values[None, :]), axis=1)


def mass(obj, p: int | None = None, grid: QuadratureGrid | None = None) -> float:
    """Pairing with the constant function 1.

    ``ZeroSet`` (needs ``p``): ``(p+m)/p`` for the scaled divisor.
    ``SectionSpace``: the current ``omega_p / p``.  ``EnvelopeResult``: ``omega_eq``.
    """
    if isinstance(obj, ZeroSet):
        if p is None:
            raise ValueError("the mass of a scaled divisor needs p")
        return obj.total_multiplicity / p
    grid = grid or make_grid()
    if isinstance(obj, SectionSpace):
        # dd^c 1 = 0: only the omega_FS part contributes
        return float(np.sum(grid.weights) * obj.degree / obj.p)
    if isinstance(obj, EnvelopeResult):
        return float(np.sum(grid.weights))
    if isinstance(obj, PairingVector):
        raise TypeError("a pairing vector carries no constant-function entry; pass the current instead")
    raise TypeError(f"cannot take the mass of {type(obj).__name__}")


# ---------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True, eq=False)
class RateFit:
    """``e_p <= C log p / p`` fit: ``C = max r_p`` with ``r_p = e_p p / log p``."""

    p: np.ndarray
    errors: np.ndarray
    ratios: np.ndarray
    C: float
    max_ratio: float
    median_ratio: float
    slope: float            # log-log regression of e_p against p (diagnostic)
    intercept: float

    @property
    def stable(self) -> bool:
        """``max r_p <= 2 median r_p``."""
        return self.max_ratio <= 2.0 * self.median_ratio

    def to_rows(self) -> list[list]:
        return [[int(p), f"{e:.17g}", f"{r:.17g}"] for p, e, r in zip(self.p, self.errors, self.ratios)]

    def summary(self) -> dict:
        return {"C": self.C, "max_ratio": self.max_ratio, "median_ratio": self.median_ratio,
                "stable": bool(self.stable), "loglog_slope": self.slope}


def rate_fit(seq, min_points: int = 5, min_p: int = 5) -> RateFit:
    """Fit ``e_p <= C log p / p`` from ``(p, e_p)`` pairs with ``p >= min_p`` (``log p > 1``)."""
    arr = np.asarray(list(seq), dtype=float).reshape(-1, 2)
    if arr.shape[0] < min_points:
        raise ValueError(f"rate_fit needs at least {min_points} points, got {arr.shape[0]}")
    if np.any(arr[:, 0] < min_p):
        raise ValueError(f"rate_fit uses only p >= {min_p}")
    order = np.argsort(arr[:, 0], kind="stable")
    p, e = arr[order, 0], arr[order, 1]
    if not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite")
    ratios = e * p / np.log(p)
    pos = e > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(np.log(p[pos]), np.log(e[pos]), 1)
    else:
        slope, intercept = math.nan, math.nan
    return RateFit(p.astype(int), e, ratios, float(ratios.max()), float(ratios.max()),
                   float(np.median(ratios)), float(slope), float(intercept))


def pairing_vectors_to_csv(rows, path, header: dict | None = None) -> None:
    """``rows`` is a list of ``(p, PairingVector)``; columns are p, dictionary id, values."""
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        wr = csv.writer(fh)
        for p, vec in rows:
            wr.writerow(vec.to_row(p))


def rate_fit_to_csv(fit: RateFit, path, header: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        wr = csv.writer(fh)
        wr.writerow(["p", "error", "ratio"])
        wr.writerows(fit.to_rows())
