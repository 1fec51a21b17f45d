"""The (truncated) complex Heisenberg group, its norms, and character Gram matrices.

Group elements are pairs (a, t) with a a finite complex coordinate vector and
t real, multiplied by (a,t)(a',t') = (a + a', t + t' + 2 Omega(a,a')) where
Omega(a,b) = Im<a,b> and <a,b> = sum_k a_k conj(b_k).  The group norm
N(a,t) = sqrt(sqrt(||a||^4 + t^2) + ||a||^2) combines the fourth-root
(Koranyi) norm with the horizontal norm ||a||, and d_N(g,h) = N(g h^{-1}) is
a right-invariant metric.  All statements are uniform in the truncation
dimension, so a configurable finite dimension loses no testable content.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAX_TRUNCATION",
    "HeisPoint",
    "heis_identity",
    "heis_mul",
    "heis_inv",
    "heis_norm",
    "heis_distance",
    "heis_distance_matrix",
    "sample_heis_points",
    "phi_lambda",
    "phi_lambda_gram",
]

MAX_TRUNCATION = 64


@dataclass(frozen=True)
class HeisPoint:
    """A group element (a, t); ``a`` is stored as an immutable complex tuple."""

    a: tuple
    t: float

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(complex(z) for z in self.a))
        object.__setattr__(self, "t", float(self.t))
        if len(self.a) > MAX_TRUNCATION:
            raise ValueError(f"truncation dimension above {MAX_TRUNCATION}")

    @property
    def dim(self) -> int:
        return len(self.a)

    def a_array(self) -> np.ndarray:
        return np.asarray(self.a, dtype=complex)


def heis_identity(dim: int) -> HeisPoint:
    return HeisPoint((0.0,) * dim, 0.0)


def _inner(a: np.ndarray, b: np.ndarray) -> complex:
    # <a, b> = sum_k a_k conj(b_k)
    return complex(np.vdot(b, a))


def _omega(a: np.ndarray, b: np.ndarray) -> float:
    return _inner(a, b).imag


def heis_mul(g: HeisPoint, h: HeisPoint) -> HeisPoint:
    """Group product (a,t)(a',t') = (a + a', t + t' + 2 Im<a, a'>)."""
    if g.dim != h.dim:
        raise ValueError(f"dimension mismatch: {g.dim} vs {h.dim}")
    ga, ha = g.a_array(), h.a_array()
    return HeisPoint(tuple(ga + ha), g.t + h.t + 2.0 * _omega(ga, ha))


def heis_inv(g: HeisPoint) -> HeisPoint:
    """Group inverse (-a, -t); the symplectic term vanishes on (a, -a)."""
    return HeisPoint(tuple(-z for z in g.a), -g.t)


def heis_norm(g: HeisPoint, which: str = "N") -> float:
    """Group norm N, the Koranyi norm N1, or the horizontal norm N2.

    N(a,t) = sqrt(sqrt(||a||^4 + t^2) + ||a||^2) satisfies
    N^2 = N1^2 + N2^2 with N1 = (||a||^4 + t^2)^(1/4) and N2 = ||a||.
    """
    na2 = float(np.real(np.vdot(g.a_array(), g.a_array())))
    if which == "N":
        return math.sqrt(math.sqrt(na2 * na2 + g.t * g.t) + na2)
    if which == "koranyi":
        return (na2 * na2 + g.t * g.t) ** 0.25
    if which == "horizontal":
        return math.sqrt(na2)
    raise ValueError(f"unknown norm {which!r}")


def heis_distance(g: HeisPoint, h: HeisPoint) -> float:
    """Right-invariant distance d_N(g, h) = N(g h^{-1})."""
    return heis_norm(heis_mul(g, heis_inv(h)))


def heis_distance_matrix(points) -> np.ndarray:
    pts = list(points)
    n = len(pts)
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = mat[j, i] = heis_distance(pts[i], pts[j])
    return mat


def sample_heis_points(
    count: int,
    dim: int,
    seed: int,
    t_range: tuple[float, float] = (-5.0, 5.0),
) -> list[HeisPoint]:
    """Seeded sample: unit complex Gaussian coordinates, uniform center part."""
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(count):
        a = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / math.sqrt(2.0)
        t = float(rng.uniform(*t_range))
        pts.append(HeisPoint(tuple(a), t))
    return pts


def phi_lambda(lam: float, g: HeisPoint) -> complex:
    """The character-weighted Gaussian exp(-|lam| ||a||^2 + i lam t)."""
    na2 = float(np.real(np.vdot(g.a_array(), g.a_array())))
    return complex(np.exp(-abs(lam) * na2 + 1j * lam * g.t))


def phi_lambda_gram(points, lam: float, ordering: str = "left_inverse"):
    """Gram matrix of the positive-type function over a point sample.

    ``ordering`` selects the group-difference convention: ``left_inverse``
    evaluates Phi(g_k^{-1} g_j) at entry (j, k), ``right_inverse`` evaluates
    Phi(g_j g_k^{-1}).  The two differ by the sign of the symplectic phase,
    which depends on inner-product conventions, so both are exposed.
    lam = 0 degenerates to the all-ones matrix and is flagged.
    """
    from .kernels import KernelMatrix

    pts = list(points)
    if ordering not in ("left_inverse", "right_inverse"):
        raise ValueError(f"unknown ordering {ordering!r}")
    n = len(pts)
    mat = np.empty((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            if ordering == "left_inverse":
                diff = heis_mul(heis_inv(pts[k]), pts[j])
            else:
                diff = heis_mul(pts[j], heis_inv(pts[k]))
            mat[j, k] = phi_lambda(lam, diff)
    return KernelMatrix(
        values=mat,
        kind="positive_type",
        meta={
            "lambda": float(lam),
            "ordering": ordering,
            "degenerate_all_ones": lam == 0.0,
            "n_points": n,
        },
    )
