"""Atomic measures, one-parameter families, and empirical spectra.

Everything downstream (Newton inversion, kernel columns, ensemble
generation) consumes the two measure-like types defined here through the
same small set of operations: Stieltjes transform, moments, characteristic
function, histogram.
"""

from __future__ import annotations

import json
import math
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DivisionNearPole, EmptySpectrum

# Locations closer than this (relative to the support scale) collapse into
# one atom; families can degenerate near the edge of their domain.
MERGE_RTOL = 1e-10

WEIGHT_SUM_TOL = 1e-12


class AtomicMeasure:
    """Finite discrete probability measure: spike locations plus weights.

    Atoms are stored sorted by location; duplicates (within
    ``MERGE_RTOL * (1 + max|loc|)``) are merged at construction by summing
    weights, the merged location being the weight-averaged one.
    """

    __slots__ = ("locations", "weights")

    def __init__(self, atoms: Iterable[tuple[float, float]]):
        pairs = [(float(a), float(w)) for a, w in atoms]
        if not pairs:
            raise ValueError("measure needs at least one atom")
        loc = np.array([p[0] for p in pairs])
        wgt = np.array([p[1] for p in pairs])
        if not np.all(np.isfinite(loc)):
            raise ValueError("atom locations must be finite")
        if np.any(wgt <= 0.0) or np.any(wgt > 1.0):
            raise ValueError("atom weights must lie in (0, 1]")
        total = wgt.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"atom weights sum to {total!r}, expected 1")

        order = np.argsort(loc)
        loc, wgt = loc[order], wgt[order]
        tol = MERGE_RTOL * (1.0 + np.abs(loc).max())
        merged_loc, merged_wgt = [], []
        for a, w in zip(loc, wgt):
            if merged_loc and a - merged_loc[-1] < tol:
                # weight-averaged location keeps moments intact to ~tol
                tw = merged_wgt[-1] + w
                merged_loc[-1] = (merged_loc[-1] * merged_wgt[-1] + a * w) / tw
                merged_wgt[-1] = tw
            else:
                merged_loc.append(a)
                merged_wgt.append(w)

        self.locations = np.array(merged_loc)
        self.weights = np.array(merged_wgt)
        self.locations.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.locations.tolist(), self.weights.tolist()))

    def __len__(self) -> int:
        return len(self.locations)

    def __repr__(self) -> str:
        inner = ", ".join(f"{w:.4g}*d({a:.6g})" for a, w in self.atoms)
        return f"AtomicMeasure({inner})"

    def to_json(self) -> dict:
        return {"atoms": [[a, w] for a, w in self.atoms]}

    @classmethod
    def from_json(cls, obj: Union[dict, str]) -> "AtomicMeasure":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls([(a, w) for a, w in obj["atoms"]])


class EmpiricalSpectrum:
    """Sorted real eigenvalues of a matrix, or i.i.d. scalar samples."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float]):
        v = np.sort(np.asarray(values, dtype=float))
        if v.size == 0:
            raise EmptySpectrum("spectrum needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectrum values must be finite")
        self.values = v
        self.values.setflags(write=False)

    @property
    def dimension(self) -> int:
        return int(self.values.size)

    def __repr__(self) -> str:
        return f"EmpiricalSpectrum(N={self.dimension}, range=[{self.values[0]:.4g}, {self.values[-1]:.4g}])"

    def to_json(self) -> dict:
        return {"values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj: Union[dict, str]) -> "EmpiricalSpectrum":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["values"])


MeasureLike = Union[AtomicMeasure, EmpiricalSpectrum]


def _support_weights(m: MeasureLike):
    """Common access path: (support points, weights or None for uniform)."""
    if isinstance(m, AtomicMeasure):
        return m.locations, m.weights
    if isinstance(m, EmpiricalSpectrum):
        return m.values, None
    raise TypeError(f"expected AtomicMeasure or EmpiricalSpectrum, got {type(m).__name__}")


def _check_pole(lam: np.ndarray, z: complex):
    gap = np.abs(z - lam).min()
    if gap < 1e-14 * (1.0 + abs(z)):
        raise DivisionNearPole(f"z={z!r} within {gap:.3e} of a support point")


def stieltjes(m: MeasureLike, z: complex) -> complex:
    """Cauchy transform sum(w_i / (z - lam_i)); uniform weights for spectra."""
    lam, w = _support_weights(m)
    z = complex(z)
    _check_pole(lam, z)
    terms = 1.0 / (z - lam)
    return complex(np.mean(terms) if w is None else np.dot(w, terms))


def stieltjes_deriv(m: MeasureLike, z: complex) -> complex:
    """d/dz of :func:`stieltjes`: -sum(w_i / (z - lam_i)^2)."""
    lam, w = _support_weights(m)
    z = complex(z)
    _check_pole(lam, z)
    terms = -1.0 / (z - lam) ** 2
    return complex(np.mean(terms) if w is None else np.dot(w, terms))


def moment(m: MeasureLike, k: int) -> float:
    """Raw moment sum(w_i * lam_i^k); k = 0 gives 1 by normalization."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    lam, w = _support_weights(m)
    pw = lam ** k
    return float(np.mean(pw) if w is None else np.dot(w, pw))


def char_fn(m: MeasureLike, xi: complex) -> complex:
    """Characteristic function sum(w_i * exp(-i * lam_i * xi))."""
    lam, w = _support_weights(m)
    terms = np.exp(-1j * lam * complex(xi))
    return complex(np.mean(terms) if w is None else np.dot(w, terms))


def histogram(
    s: EmpiricalSpectrum,
    bins: int,
    range: Optional[tuple[float, float]] = None,
) -> list[tuple[float, int]]:
    """Bin the spectrum: half-open bins, final bin closed, counts sum to N.

    Default range is [min, max] of the values, so every sample lands in a
    bin. Returns (bin_center, count) pairs.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if s.values.size == 0:
        raise EmptySpectrum("cannot histogram an empty spectrum")
    counts, edges = np.histogram(s.values, bins=bins, range=range)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return [(float(c), int(n)) for c, n in zip(centers, counts)]


def histogram_csv(rows: Sequence[tuple[float, int]]) -> str:
    lines = ["bin_center,count"]
    lines += [f"{c:.17g},{n}" for c, n in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# One-parameter families
# ---------------------------------------------------------------------------

_SMOOTH_PROBE_POINTS = 17


class ParametricFamily:
    """Map x -> AtomicMeasure over a closed interval.

    ``normalization`` declares the moment convention the family promises:
    ``"centered"`` (first moment 0, free-additive use) or ``"unit_mean"``
    (first moment 1, free-multiplicative use). Both are asserted to 1e-12
    on a coarse grid at construction, together with a finite-difference
    smoothness probe on the atom location/weight paths.
    """

    def __init__(
        self,
        family_id: Optional[str],
        domain: tuple[float, float],
        rule: Callable[[float], AtomicMeasure],
        normalization: Optional[str] = None,
    ):
        lo, hi = float(domain[0]), float(domain[1])
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
            raise ValueError(f"domain must be a nondegenerate interval, got {domain!r}")
        if normalization not in (None, "centered", "unit_mean"):
            raise ValueError(f"unknown normalization {normalization!r}")
        self.family_id = family_id
        self.domain = (lo, hi)
        self._rule = rule
        self.normalization = normalization
        self._probe()

    def __call__(self, x: float) -> AtomicMeasure:
        lo, hi = self.domain
        if not (lo - 1e-12 <= x <= hi + 1e-12):
            raise ValueError(f"parameter {x!r} outside family domain [{lo}, {hi}]")
        m = self._rule(float(x))
        if not isinstance(m, AtomicMeasure):
            raise TypeError("family rule must return an AtomicMeasure")
        return m

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    def spectral_radius(self, n_probe: int = 33) -> float:
        """max |atom location| over a probe grid of the domain."""
        grid = np.linspace(self.domain[0], self.domain[1], n_probe)
        return max(float(np.abs(self(x).locations).max()) for x in grid)

    def _probe(self):
        grid = np.linspace(self.domain[0], self.domain[1], _SMOOTH_PROBE_POINTS)
        measures = [self(x) for x in grid]

        counts = {len(m) for m in measures}
        if len(counts) != 1:
            raise ValueError(f"atom count changes across the domain: {sorted(counts)}")

        if self.normalization is not None:
            target = 0.0 if self.normalization == "centered" else 1.0
            for x, m in zip(grid, measures):
                m1 = moment(m, 1)
                if abs(m1 - target) > 1e-12:
                    raise ValueError(
                        f"family {self.family_id!r} promises first moment {target} "
                        f"but has {m1!r} at x={x}"
                    )

        # Atoms are sorted by location, so pairing by index is consistent as
        # long as paths never cross; a crossing shows up as a kink below.
        locs = np.array([m.locations for m in measures])
        wgts = np.array([m.weights for m in measures])
        for paths, scale in ((locs, np.abs(locs).max()), (wgts, 1.0)):
            d1 = np.diff(paths, axis=0)
            d2 = np.diff(paths, n=2, axis=0)
            # smooth path: 2nd difference is O(h) smaller than 1st; a jump
            # or kink makes them comparable
            bound = 0.5 * np.abs(d1).max() + 1e-9 * (1.0 + scale)
            if np.abs(d2).max() > bound:
                raise ValueError(
                    "family paths fail the smoothness probe "
                    f"(max 2nd difference {np.abs(d2).max():.3e} > {bound:.3e})"
                )


def _two_atom(a: float, wa: float, b: float) -> AtomicMeasure:
    return AtomicMeasure([(a, wa), (b, 1.0 - wa)])


BUILTIN_FAMILIES = {
    # classical: coin-flip style atoms at 0 and x
    "F1": dict(domain=(0.2, 1.0), normalization=None,
               rule=lambda x: _two_atom(0.0, 0.5, x)),
    "F2": dict(domain=(0.2, 1.0), normalization=None,
               rule=lambda x: _two_atom(0.0, 2.0 / 3.0, x)),
    # additive: centered two-atom measures
    "F3": dict(domain=(0.4, 1.0), normalization="centered",
               rule=lambda x: _two_atom(-x / 2.0, 2.0 / 3.0, x)),
    "F4": dict(domain=(0.4, 1.0), normalization="centered",
               rule=lambda x: _two_atom(-x, 0.5, x)),
    # multiplicative: positive two-atom measures with unit mean
    "F5": dict(domain=(1.4, 3.0), normalization="unit_mean",
               rule=lambda x: _two_atom(3.0 / (2.0 + x), 2.0 / 3.0, 3.0 * x / (2.0 + x))),
    "F6": dict(domain=(1.4, 3.0), normalization="unit_mean",
               rule=lambda x: _two_atom(2.0 / (1.0 + x), 0.5, 2.0 * x / (1.0 + x))),
}


def builtin_family(family_id: str) -> ParametricFamily:
    """Instantiate one of the built-in families F1..F6."""
    try:
        spec = BUILTIN_FAMILIES[family_id]
    except KeyError:
        raise KeyError(
            f"unknown family {family_id!r}; available: {sorted(BUILTIN_FAMILIES)}"
        ) from None
    return ParametricFamily(family_id, spec["domain"], spec["rule"], spec["normalization"])
