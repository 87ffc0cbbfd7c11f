"""Eigenmatrix construction and ESPRIT-style sparse recovery.

Given a kernel G(z, x) analytic in x on an interval, the eigenmatrix M is
built so that the (normalized) kernel columns b_x are approximate
eigenvectors with eigenvalue x. Spike locations then fall out of the
shifted pencil of a Krylov data matrix, exactly as in ESPRIT, and weights
from a least-squares solve against the unnormalized columns.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateInterval,
    DegenerateTruncation,
    IllConditionedLS,
    KernelEvaluationFailed,
    NoClearGap,
    NormBoundUnreachable,
    RankDeficient,
    TooFewValid,
)
from .transform import Contour

THRESHOLD_LADDER = tuple(10.0 ** k for k in range(-14, -1))

DEFAULT_N_C = 32
DEFAULT_IM_TOL = 0.05
LS_COND_LIMIT = 1e12


def chebyshev_nodes(domain: tuple[float, float], n_c: int) -> np.ndarray:
    """Chebyshev points of the second kind mapped to the interval, ascending."""
    lo, hi = float(domain[0]), float(domain[1])
    if hi - lo < 1e-12:
        raise DegenerateInterval(f"interval [{lo}, {hi}] has zero width")
    if n_c < 2:
        raise ValueError("n_c must be >= 2")
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = mid + half * np.cos(np.pi * np.arange(n_c) / (n_c - 1))
    return nodes[::-1].copy()


class Kernel:
    """Kernel G(z, x) with a column evaluator over an ordered contour.

    ``column_fn(points, x)`` returns [G(z_j, x)]_j for the whole ordered
    contour at once; kernels built from branch-tracked logarithms need the
    full ordering, so the column is the primitive and pointwise ``eval`` is
    derived from it (principal branch for log-type kernels).
    """

    def __init__(
        self,
        domain: tuple[float, float],
        column_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None,
        point_fn: Optional[Callable[[complex, float], complex]] = None,
    ):
        if column_fn is None and point_fn is None:
            raise ValueError("kernel needs column_fn or point_fn")
        lo, hi = float(domain[0]), float(domain[1])
        if hi <= lo:
            raise DegenerateInterval(f"interval [{lo}, {hi}] has zero width")
        self.domain = (lo, hi)
        self._column_fn = column_fn
        self._point_fn = point_fn

    def column(self, points: np.ndarray, x: float) -> np.ndarray:
        if self._column_fn is not None:
            return np.asarray(self._column_fn(points, x), dtype=complex)
        return np.array([self._point_fn(z, x) for z in points], dtype=complex)

    def eval(self, z: complex, x: float) -> complex:
        if self._point_fn is not None:
            return complex(self._point_fn(z, x))
        return complex(self.column(np.array([z], dtype=complex), x)[0])


@dataclass(frozen=True, eq=False)
class EigenmatrixModel:
    """Eigenmatrix M with the grid and diagnostics of its construction."""

    contour: Contour
    cheb_nodes: np.ndarray
    bhat: np.ndarray
    M: np.ndarray
    threshold_used: float
    m_norm: float
    bhat_cond: float
    model_residual: float

    @property
    def n_z(self) -> int:
        return int(self.M.shape[0])

    @property
    def n_c(self) -> int:
        return int(self.cheb_nodes.size)

    def to_json(self) -> dict:
        def cpx(a):
            a = np.asarray(a)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "contour": {
                "kind": self.contour.kind,
                "points": cpx(self.contour.points),
                "radius": self.contour.radius,
                "xi_max": self.contour.xi_max,
                "eps_imag": self.contour.eps_imag,
            },
            "cheb_nodes": self.cheb_nodes.tolist(),
            "bhat": cpx(self.bhat),
            "M": cpx(self.M),
            "threshold_used": self.threshold_used,
            "m_norm": self.m_norm,
            "bhat_cond": self.bhat_cond,
            "model_residual": self.model_residual,
        }

    @classmethod
    def from_json(cls, obj) -> "EigenmatrixModel":
        if isinstance(obj, str):
            obj = json.loads(obj)

        def uncpx(a):
            a = np.asarray(a)
            return a[..., 0] + 1j * a[..., 1]

        c = obj["contour"]
        contour = Contour(
            c["kind"], uncpx(c["points"]),
            radius=c["radius"], xi_max=c["xi_max"], eps_imag=c["eps_imag"],
        )
        return cls(
            contour=contour,
            cheb_nodes=np.asarray(obj["cheb_nodes"], dtype=float),
            bhat=uncpx(obj["bhat"]),
            M=uncpx(obj["M"]),
            threshold_used=float(obj["threshold_used"]),
            m_norm=float(obj["m_norm"]),
            bhat_cond=float(obj["bhat_cond"]),
            model_residual=float(obj["model_residual"]),
        )


@dataclass(frozen=True, eq=False)
class RecoverySolution:
    """Recovered spike locations and weights with solve diagnostics."""

    locations: np.ndarray
    weights: np.ndarray
    ls_residual: float
    t_singular_values: np.ndarray
    rejected: list[tuple[complex, str]]
    max_weight_imag: float = 0.0

    def __post_init__(self):
        if np.any(np.diff(self.locations) < 0):
            raise ValueError("locations must be sorted ascending")
        if self.ls_residual < 0:
            raise ValueError("ls_residual must be >= 0")

    @property
    def n(self) -> int:
        return int(self.locations.size)


def build_model(
    kernel: Kernel,
    contour: Contour,
    n_c: int = DEFAULT_N_C,
    norm_bound: float = 0.0,
) -> EigenmatrixModel:
    """Assemble M = bhat @ diag(nodes) @ pinv(bhat) on a Chebyshev grid.

    The pseudoinverse drops singular values below tau * sigma_max; tau is
    the smallest rung of ``THRESHOLD_LADDER`` that keeps the operator norm
    of M at or below ``norm_bound``.
    """
    if norm_bound <= 0:
        raise ValueError("norm_bound must be positive")
    nodes = chebyshev_nodes(kernel.domain, n_c)
    cols = []
    for c in nodes:
        col = kernel.column(contour.points, c)
        if col.shape != contour.points.shape:
            raise KernelEvaluationFailed(
                f"kernel column at x={c} has shape {col.shape}, "
                f"expected {contour.points.shape}"
            )
        cols.append(col)
    B = np.column_stack(cols)
    if not np.all(np.isfinite(B)):
        raise KernelEvaluationFailed("kernel is not finite on contour x grid")
    norms = np.linalg.norm(B, axis=0)
    if np.any(norms == 0):
        raise KernelEvaluationFailed("kernel column vanished at a Chebyshev node")
    bhat = B / norms

    U, s, Vh = np.linalg.svd(bhat, full_matrices=False)
    bhat_cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf

    M = None
    threshold_used = m_norm = None
    for tau in THRESHOLD_LADDER:
        keep = s >= tau * s[0]
        r = int(keep.sum())
        if r == 0:
            continue
        pinv = (Vh[:r].conj().T / s[:r]) @ U[:, :r].conj().T
        cand = (bhat * nodes) @ pinv
        norm = float(np.linalg.norm(cand, 2))
        if norm <= norm_bound:
            M, threshold_used, m_norm = cand, tau, norm
            break
    if M is None:
        raise NormBoundUnreachable(
            f"norm of M exceeds {norm_bound} for every threshold in the ladder"
        )

    residual = float(np.abs(np.linalg.norm(M @ bhat - bhat * nodes, axis=0)).max())
    return EigenmatrixModel(
        contour=contour,
        cheb_nodes=nodes,
        bhat=bhat,
        M=M,
        threshold_used=threshold_used,
        m_norm=m_norm,
        bhat_cond=bhat_cond,
        model_residual=residual,
    )


def eigenpair_residual(model: EigenmatrixModel, kernel: Kernel, xs: Sequence[float]) -> float:
    """max over xs of ||M bhat_x - x bhat_x||, the off-grid eigenpair error."""
    worst = 0.0
    for x in xs:
        b = kernel.column(model.contour.points, float(x))
        b = b / np.linalg.norm(b)
        worst = max(worst, float(np.linalg.norm(model.M @ b - x * b)))
    return worst


def krylov_matrix(M: np.ndarray, u: np.ndarray, n_l: int) -> np.ndarray:
    """Columns u, Mu, ..., M^{n_l} u by repeated application."""
    if n_l < 1:
        raise ValueError("n_l must be >= 1")
    cols = np.empty((u.size, n_l + 1), dtype=complex)
    cols[:, 0] = u
    for j in range(1, n_l + 1):
        cols[:, j] = M @ cols[:, j - 1]
    return cols


def esprit_locations(
    T: np.ndarray,
    n: int,
    domain: tuple[float, float],
    im_tol: float = DEFAULT_IM_TOL,
) -> tuple[np.ndarray, list[tuple[complex, str]]]:
    """Spike locations as eigenvalues of the shifted pencil Z_H @ pinv(Z_L).

    Takes the rank-n truncated SVD of the Krylov matrix T, splits the top
    right-singular rows into the lagged pair (Z_L, Z_H), and keeps pencil
    eigenvalues whose imaginary part is below im_tol * width. Real parts
    are clamped to the domain and returned sorted ascending.
    """
    n_z, n_cols = T.shape
    n_l = n_cols - 1
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > min(n_z, n_l):
        raise ValueError(f"n={n} exceeds min(n_z, n_l) = {min(n_z, n_l)}")

    _, s, Vh = np.linalg.svd(T, full_matrices=False)
    usable = int((s > 1e-14 * s[0]).sum()) if s[0] > 0 else 0
    if usable < n:
        raise RankDeficient(
            f"only {usable} singular values above 1e-14*sigma_max, need {n}"
        )
    if len(s) > n and s[n - 1] - s[n] <= 16 * np.finfo(float).eps * s[0]:
        warnings.warn(
            f"sigma_{n} and sigma_{n+1} tie at machine precision; "
            "truncation order is ambiguous",
            DegenerateTruncation,
        )

    W = Vh[:n, :]
    Z_L, Z_H = W[:, :-1], W[:, 1:]
    pencil = Z_H @ np.linalg.pinv(Z_L)
    eigs = np.linalg.eigvals(pencil)

    lo, hi = domain
    width = hi - lo
    accepted, rejected = [], []
    for ev in eigs:
        if abs(ev.imag) <= im_tol * width:
            accepted.append(min(max(ev.real, lo), hi))
        else:
            rejected.append((complex(ev), f"|imag| {abs(ev.imag):.3e} > {im_tol * width:.3e}"))
    if len(accepted) < n:
        raise TooFewValid(
            f"{len(accepted)} of {n} pencil eigenvalues are near-real; "
            f"rejected: {rejected}"
        )
    return np.sort(np.array(accepted)), rejected


def solve_weights(
    kernel: Kernel,
    contour: Contour,
    locations: Sequence[float],
    u: np.ndarray,
    im_tol: float = DEFAULT_IM_TOL,
) -> tuple[np.ndarray, float, float]:
    """Least-squares weights against the unnormalized kernel columns.

    Returns (weights, ls_residual, max_weight_imag). Weights are cast to
    real; an imaginary residue above im_tol is reported through the third
    value rather than silently dropped.
    """
    locations = np.asarray(locations, dtype=float)
    if locations.size == 0:
        raise ValueError("need at least one location")
    A = np.column_stack([kernel.column(contour.points, x) for x in locations])
    cond = np.linalg.cond(A)
    if cond > LS_COND_LIMIT:
        raise IllConditionedLS(
            f"design matrix condition {cond:.3e} > {LS_COND_LIMIT:.0e} "
            "(nearly coincident locations?)"
        )
    w, *_ = np.linalg.lstsq(A, np.asarray(u, dtype=complex), rcond=None)
    ls_residual = float(np.linalg.norm(A @ w - u))
    max_imag = float(np.abs(w.imag).max())
    return w.real.copy(), ls_residual, max_imag


def estimate_spike_count(t_singular_values: Sequence[float], gap_factor: float = 1e3) -> int:
    """Model order from the largest consecutive singular-value ratio."""
    s = np.asarray(t_singular_values, dtype=float)
    if s.size == 0:
        raise ValueError("need at least one singular value")
    if np.any(np.diff(s) > 0):
        raise ValueError("singular values must be sorted descending")
    if s.size < 2:
        raise NoClearGap("need at least two singular values to locate a gap")
    with np.errstate(divide="ignore"):
        ratios = np.where(s[1:] > 0, s[:-1] / np.maximum(s[1:], 1e-300), np.inf)
    i = int(np.argmax(ratios))
    if ratios[i] < gap_factor:
        raise NoClearGap(
            f"largest singular-value ratio {ratios[i]:.3e} < gap factor {gap_factor:.0e}"
        )
    return i + 1
