"""Synthetic ensembles: free sums/products under Haar conjugation, and
i.i.d. scalar convolution samples for the classical case.

All randomness flows from one 64-bit seed; each conjugating matrix gets its
own child stream so individual factors are reproducible in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EigensolveFailed, NonPositiveMeasure
from .measure import AtomicMeasure, EmpiricalSpectrum

ENSEMBLE_KINDS = ("additive", "multiplicative", "classical")


@dataclass(frozen=True)
class EnsembleSpec:
    """What to sample: factor measures, matrix dimension, seed."""

    kind: str
    measures: tuple[AtomicMeasure, ...]
    dimension: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "measures", tuple(self.measures))
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"kind must be one of {ENSEMBLE_KINDS}, got {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if self.kind in ("additive", "multiplicative") and len(self.measures) < 2:
            raise ValueError(f"{self.kind} ensembles need at least two measures")
        if self.kind == "multiplicative":
            for m in self.measures:
                if np.any(m.locations <= 0):
                    raise NonPositiveMeasure(
                        "multiplicative factors must be positive definite"
                    )


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent, reproducible child generator for one matrix/measure."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def haar_orthogonal(N: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via sign-corrected QR.

    Absorbing the signs of R's diagonal into Q removes the bias of plain
    QR and makes the distribution exactly Haar.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    A = rng.standard_normal((N, N))
    Q, R = np.linalg.qr(A)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def spectrum_matrix(m: AtomicMeasure, N: int) -> np.ndarray:
    """Diagonal of the N x N discretization of an atomic measure.

    Atom multiplicities come from largest-remainder rounding of w_i * N, so
    counts always sum to N and weights are preserved to O(1/N). Entries are
    returned sorted ascending.
    """
    k = len(m)
    if N < k:
        raise ValueError(f"N={N} smaller than the number of atoms {k}")
    exact = m.weights * N
    base = np.floor(exact).astype(int)
    residue = N - int(base.sum())
    # ties broken by atom index: stable sort on descending fractional part
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:residue]] += 1
    return np.repeat(m.locations, base)


def sample_additive(spec: EnsembleSpec) -> EmpiricalSpectrum:
    """Eigenvalues of A_1 + Q_2 A_2 Q_2^T + ... with independent Haar Q_k."""
    if spec.kind != "additive":
        raise ValueError(f"expected additive spec, got {spec.kind!r}")
    N = spec.dimension
    d1 = spectrum_matrix(spec.measures[0], N)
    C = np.diag(d1).astype(float)
    for k, mk in enumerate(spec.measures[1:], start=2):
        dk = spectrum_matrix(mk, N)
        Q = haar_orthogonal(N, stream_rng(spec.seed, k))
        C += (Q * dk) @ Q.T
    return EmpiricalSpectrum(_eigvalsh(C))


def sample_multiplicative(spec: EnsembleSpec) -> EmpiricalSpectrum:
    """Eigenvalues of sqrt(A_1) Q_2 sqrt(A_2) ... A_n ... sqrt(A_2) Q_2^T sqrt(A_1).

    Built recursively from the innermost factor outward; every layer
    conjugates by a fresh Haar matrix and re-scales by the entrywise square
    root of the next diagonal factor.
    """
    if spec.kind != "multiplicative":
        raise ValueError(f"expected multiplicative spec, got {spec.kind!r}")
    N = spec.dimension
    diags = [spectrum_matrix(m, N) for m in spec.measures]
    B = np.diag(diags[-1]).astype(float)
    for i in range(len(diags) - 2, -1, -1):
        Q = haar_orthogonal(N, stream_rng(spec.seed, i + 2))
        sq = np.sqrt(diags[i])
        B = (sq[:, None] * (Q @ B @ Q.T)) * sq[None, :]
    vals = _eigvalsh(B)
    if vals[0] <= 0:
        raise EigensolveFailed(
            f"multiplicative spectrum has nonpositive eigenvalue {vals[0]!r}"
        )
    return EmpiricalSpectrum(vals)


def sample_classical(
    measures: Sequence[AtomicMeasure], count: int, rng: np.random.Generator
) -> EmpiricalSpectrum:
    """count i.i.d. draws of Y_1 + ... + Y_n with Y_k ~ measures[k].

    Each factor is sampled by inverse-CDF lookup on its atom weights.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    total = np.zeros(count)
    for m in measures:
        cdf = np.cumsum(m.weights)
        cdf[-1] = 1.0  # guard roundoff so searchsorted never overruns
        idx = np.searchsorted(cdf, rng.random(count), side="right")
        total += m.locations[idx]
    return EmpiricalSpectrum(total)


def sample_ensemble(spec: EnsembleSpec) -> EmpiricalSpectrum:
    """Dispatch on spec.kind; classical draws use child stream 1."""
    if spec.kind == "additive":
        return sample_additive(spec)
    if spec.kind == "multiplicative":
        return sample_multiplicative(spec)
    return sample_classical(spec.measures, spec.dimension, stream_rng(spec.seed, 1))


def _eigvalsh(C: np.ndarray) -> np.ndarray:
    C = 0.5 * (C + C.T)  # enforce exact symmetry before LAPACK
    try:
        return np.linalg.eigvalsh(C)
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailed(str(exc)) from exc
