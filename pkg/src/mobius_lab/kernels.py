"""Kernel positivity tests, the Hilbert-space embedding, and the norm integrals.

A symmetric zero-diagonal kernel is conditionally of negative type exactly
when its doubly-centered Gram matrix is negative semidefinite; such kernels
embed isometrically (after a square root) into a real Hilbert space via the
classical basepoint construction.  The module also verifies numerically the
closed form

    r^2 * integral sqrt|x| / (r^4 + (t-x)^2) dx  =  pi sqrt(sqrt(r^4+t^2) + r^2)

and the vanishing-smoothing limit (1 - F_eps)/eps -> closed form / pi, where
F_eps is the convolution of a Cauchy density with exp(-eps sqrt|.|).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

__all__ = [
    "KernelMatrix",
    "PsdReport",
    "CndReport",
    "check_cnd",
    "GnsEmbedding",
    "gns_embed",
    "IntegralReport",
    "integral_identity",
    "norm_integral_closed_form",
    "f_eps",
    "one_minus_f_over_eps",
    "CndLimitReport",
    "cnd_limit_check",
]

HERMITIAN_TOL = 1e-12
EIG_TOL_SCALE = 1e-8  # PSD/NSD decisions at this fraction of the spectral scale


@dataclass
class KernelMatrix:
    """A square kernel table with its symmetry status and eigenvalue tests."""

    values: np.ndarray
    kind: str = "positive_type"  # or "distance"
    meta: dict = field(default_factory=dict)
    hermitian: bool = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("kernel matrix must be square")
        scale = max(1.0, float(np.abs(self.values).max()))
        self.hermitian = bool(
            np.allclose(self.values, self.values.conj().T, atol=HERMITIAN_TOL * scale, rtol=0.0)
        )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def eigenvalues(self) -> np.ndarray:
        sym = 0.5 * (self.values + self.values.conj().T)
        return np.linalg.eigvalsh(sym)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def psd_report(self, tol_scale: float = EIG_TOL_SCALE) -> "PsdReport":
        smallest = self.min_eigenvalue()
        tol = tol_scale * self.n
        return PsdReport(smallest >= -tol, smallest, -tol)


@dataclass
class PsdReport:
    is_psd: bool
    min_eigenvalue: float
    threshold: float


@dataclass
class CndReport:
    is_cnd: bool
    max_centered_eigenvalue: float
    spectral_radius: float
    threshold: float
    centered_spectrum: np.ndarray


def _as_real_symmetric(K, zero_diag: bool = True) -> np.ndarray:
    values = K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    values = np.asarray(values)
    if np.iscomplexobj(values):
        if np.abs(values.imag).max() > HERMITIAN_TOL:
            raise ValueError("kernel must be real valued")
        values = values.real
    scale = max(1.0, float(np.abs(values).max()))
    if not np.allclose(values, values.T, atol=HERMITIAN_TOL * scale, rtol=0.0):
        raise ValueError("kernel must be symmetric")
    if zero_diag and np.abs(np.diag(values)).max() > HERMITIAN_TOL * scale:
        raise ValueError("kernel must have a zero diagonal")
    return 0.5 * (values + values.T)


def check_cnd(K, tol_scale: float = EIG_TOL_SCALE) -> CndReport:
    """Decide conditional negative type via the centered spectrum.

    The quadratic form on zero-sum coefficient vectors equals v' (P K P) v
    with P the centering projection, so the kernel is conditionally of
    negative type iff P K P is negative semidefinite.  The decision threshold
    is ``tol_scale`` times the centered spectral radius.
    """
    values = _as_real_symmetric(K)
    n = values.shape[0]
    P = np.eye(n) - np.full((n, n), 1.0 / n)
    centered = P @ values @ P
    spectrum = np.linalg.eigvalsh(0.5 * (centered + centered.T))
    radius = float(np.abs(spectrum).max()) if n else 0.0
    threshold = tol_scale * max(radius, 1e-300)
    max_eig = float(spectrum[-1])
    return CndReport(
        is_cnd=max_eig <= threshold,
        max_centered_eigenvalue=max_eig,
        spectral_radius=radius,
        threshold=threshold,
        centered_spectrum=spectrum,
    )


@dataclass
class GnsEmbedding:
    basepoint: int
    coordinates: np.ndarray  # one row per point; basepoint row is zero
    reconstruction_error: float  # max relative |dist^2 - K|
    clipped_mass: float  # most negative eigenvalue clipped, relative

    def pairwise_sq_dists(self) -> np.ndarray:
        X = self.coordinates
        sq = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
        return sq


def gns_embed(K, basepoint: int = 0, tol_scale: float = EIG_TOL_SCALE) -> GnsEmbedding:
    """Coordinates T with ||T(i) - T(j)||^2 = K(i,j) and T(basepoint) = 0.

    Builds the Gram form G_ij = (K(i,b) + K(j,b) - K(i,j)) / 2, clips any
    slightly negative eigenvalues (recorded), and returns the spectral
    coordinates.  Fails when the kernel is not conditionally of negative type
    beyond tolerance.
    """
    values = _as_real_symmetric(K)
    report = check_cnd(values, tol_scale=tol_scale)
    if not report.is_cnd:
        raise ValueError(
            "kernel is not conditionally of negative type "
            f"(max centered eigenvalue {report.max_centered_eigenvalue:g})"
        )
    n = values.shape[0]
    if not 0 <= basepoint < n:
        raise ValueError("basepoint index out of range")
    G = 0.5 * (values[:, [basepoint]] + values[[basepoint], :] - values)
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    scale = max(float(np.abs(w).max()), 1e-300)
    clipped = float(min(w.min(), 0.0)) / scale
    w = np.clip(w, 0.0, None)
    X = V * np.sqrt(w)
    X[basepoint] = 0.0
    sq = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    denom = max(float(np.abs(values).max()), 1e-300)
    rec = float(np.abs(sq - values).max()) / denom
    return GnsEmbedding(
        basepoint=basepoint,
        coordinates=X,
        reconstruction_error=rec,
        clipped_mass=abs(clipped),
    )


# ----------------------------------------------------------------------
# the norm integral and its smoothing limit
# ----------------------------------------------------------------------
def norm_integral_closed_form(r: float, t: float) -> float:
    """pi sqrt(sqrt(r^4 + t^2) + r^2)."""
    return math.pi * math.sqrt(math.sqrt(r**4 + t * t) + r * r)


def _lorentz_pair(y, s):
    return 1.0 / (1.0 + (s - y) ** 2) + 1.0 / (1.0 + (s + y) ** 2)


def _head_tail_quad(f, Y: float, limit: int, peaks=()):
    """Integrate f over [0, inf) = head [0, Y] via y = w^2 + tail via y = Y/u^2.

    The square-root substitution removes the endpoint derivative singularity
    at 0; the reciprocal-square substitution compactifies the slowly decaying
    tail to a smooth integrand on (0, 1].  ``peaks`` lists y-locations of
    sharp features (e.g. narrow Lorentzian spikes) handed to the adaptive
    scheme as break points.
    """
    breaks = sorted({math.sqrt(p) for p in peaks if 0.0 < p < Y}) or None
    head, head_err = quad(
        lambda w: 2.0 * w * f(w * w),
        0.0,
        math.sqrt(Y),
        limit=limit,
        epsabs=1e-13,
        epsrel=1e-12,
        points=breaks,
    )
    tail, tail_err = quad(
        lambda u: (2.0 * Y / u**3) * f(Y / (u * u)),
        0.0,
        1.0,
        limit=limit,
        epsabs=1e-13,
        epsrel=1e-12,
    )
    return head + tail, head_err + tail_err


@dataclass
class IntegralReport:
    lhs: float
    rhs: float
    rel_error: float
    quad_error: float
    s: float  # rescaled center coordinate t / r^2


def integral_identity(r: float, t: float, quadrature_budget: int = 2000) -> IntegralReport:
    """Check r^2 * integral sqrt|x|/(r^4 + (t-x)^2) dx against the closed form.

    After substituting x = r^2 y and s = t / r^2 the left side becomes
    r * integral_0^inf (1/(1+(s-y)^2) + 1/(1+(s+y)^2)) sqrt(y) dy, evaluated
    by adaptive quadrature with explicit endpoint and tail substitutions.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if quadrature_budget < 1000:
        raise ValueError("quadrature budget must be at least 1e3 nodes")
    limit = max(50, quadrature_budget // 21)  # 21-node panels per subinterval
    s = t / (r * r)
    Y = max(1e4, 100.0 * (1.0 + s * s))
    value, err = _head_tail_quad(
        lambda y: _lorentz_pair(y, s) * math.sqrt(y), Y, limit, peaks=(abs(s),)
    )
    lhs = r * value
    rhs = norm_integral_closed_form(r, t)
    rel = abs(lhs / rhs - 1.0)
    if err > 1e-6 * abs(rhs):
        raise RuntimeError(
            f"quadrature did not converge at the requested budget (error {err:g})"
        )
    return IntegralReport(lhs=lhs, rhs=rhs, rel_error=rel, quad_error=err, s=s)


def _cauchy(k: float, x):
    return (k / math.pi) / (k * k + x * x)


def one_minus_f_over_eps(
    a_norm: float, t: float, eps: float, quadrature_budget: int = 4000
) -> float:
    """(1 - F_eps)/eps computed directly as a single well-conditioned integral.

    F_eps is the convolution of the Cauchy density with scale ||a||^2 and
    exp(-eps sqrt|.|); since the density integrates to one, the difference
    quotient equals the convolution with psi(x) = (1 - exp(-eps sqrt|x|))/eps,
    which avoids the 1 - F cancellation at small eps.  The substitution
    x = t + k tan(theta) absorbs the Cauchy weight exactly, leaving the
    bounded smooth factor psi on a finite interval (with one derivative kink
    where x crosses zero, handed to the adaptive scheme as a break point).
    """
    if a_norm <= 0:
        raise ValueError("a_norm must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    k = a_norm * a_norm
    limit = max(50, quadrature_budget // 21)

    def integrand(theta):
        x = t + k * math.tan(theta)
        return -math.expm1(-eps * math.sqrt(abs(x))) / eps

    kink = math.atan(-t / k)
    value, err = quad(
        integrand,
        -math.pi / 2,
        math.pi / 2,
        limit=limit,
        epsabs=1e-13,
        epsrel=1e-12,
        points=[kink],
    )
    value /= math.pi
    err /= math.pi
    if err > 1e-9 * max(abs(value), 1.0):
        raise RuntimeError(
            f"quadrature did not converge at the requested budget (error {err:g})"
        )
    return value


def f_eps(a_norm: float, t: float, eps: float, quadrature_budget: int = 4000) -> float:
    """The smoothed positive-type value F_eps(a, t) itself."""
    return 1.0 - eps * one_minus_f_over_eps(a_norm, t, eps, quadrature_budget)


@dataclass
class CndLimitReport:
    eps: list[float]
    values: list[float]
    limit_estimate: float
    target: float

    def gaps(self) -> list[float]:
        return [abs(v - self.target) / self.target for v in self.values]


def cnd_limit_check(
    a_norm: float,
    t: float,
    eps_sequence: Sequence[float],
    quadrature_budget: int = 4000,
) -> CndLimitReport:
    """Tabulate (1 - F_eps)/eps along a vanishing smoothing sequence.

    The family increases monotonically to the closed form divided by pi,
    i.e. sqrt(sqrt(||a||^4 + t^2) + ||a||^2).  The limit estimate
    extrapolates the last two values linearly in eps * log(1/eps), the
    leading term of the convergence rate.
    """
    eps_sequence = list(eps_sequence)
    if any(e <= 0 for e in eps_sequence) or sorted(eps_sequence, reverse=True) != eps_sequence:
        raise ValueError("eps_sequence must be positive and decreasing")
    values = [
        one_minus_f_over_eps(a_norm, t, e, quadrature_budget) for e in eps_sequence
    ]
    target = norm_integral_closed_form(a_norm, t) / math.pi
    if len(values) >= 2:
        x0, x1 = (e * math.log(1.0 / e) if e < 1.0 else e for e in eps_sequence[-2:])
        v0, v1 = values[-2:]
        limit = v1 + (v1 - v0) * x1 / (x0 - x1) if x0 != x1 else v1
    else:
        limit = values[-1]
    return CndLimitReport(
        eps=eps_sequence, values=values, limit_estimate=limit, target=target
    )
