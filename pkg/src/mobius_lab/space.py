"""Extended metrics and quasimetrics on finite point sets.

A :class:`PointSpace` is a finite set of opaque point ids with a symmetric
distance table over the extended nonnegative reals.  At most one id may be a
designated *infinity point*, at infinite distance from every other point and
at distance zero from itself.  Distances are plain ``float`` values with
``math.inf`` playing the role of the single unsigned infinity of the
projectively extended line (``1/0 = inf``, ``1/inf = 0``).

Spaces are either *matrix-backed* (an explicit dense table) or
*coordinate-backed* (a coordinate array plus a p-norm, with distances computed
on demand).  The second form exists so that long 1-D point sets, e.g. an
integer segment with ten thousand points, never materialise an O(n^2) table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "INDETERMINATE",
    "MATRIX_LIMIT",
    "PointSpace",
    "Quadruple",
    "MetricViolation",
    "MetricReport",
    "KEstimate",
    "is_indeterminate",
    "cross_ratio",
    "verify_extended_metric",
    "chain_smooth",
    "estimate_quasimetric_k",
    "snowflake",
]

# Cross-ratio outcome for configurations where 0 and inf factors survive the
# omission rules (0*inf, 0/0, inf/inf).  Encoded as NaN so it poisons any
# downstream arithmetic instead of passing silently as a number.
INDETERMINATE = float("nan")

# Largest point count for which a dense distance table may be materialised.
MATRIX_LIMIT = 3000


def is_indeterminate(value: float) -> bool:
    """True when ``value`` is the indeterminate cross-ratio outcome."""
    return isinstance(value, float) and math.isnan(value)


class PointSpace:
    """A finite point set with an extended (quasi)metric.

    Parameters
    ----------
    ids:
        Point identifiers (strings; kept in order).
    dist:
        Optional dense symmetric distance table aligned with ``ids``.
    coords:
        Optional coordinate array (one row per id).  Used to compute
        distances when no table is given; the infinity point's row is
        ignored.
    p:
        Exponent of the p-norm used with ``coords`` (``math.inf`` allowed).
    metric_fn:
        Optional callable ``(u, v) -> float`` overriding the p-norm.
    infinity_point:
        Id of the designated point at infinity, if any.
    origin:
        Id of the designated origin (base point for separation gauges).
    quasimetric_K:
        Declared relaxation constant; ``None`` means the finite part is
        claimed to be an exact metric.
    meta:
        Free-form provenance dictionary (generator parameters, flags).
    """

    def __init__(
        self,
        ids: Sequence[str],
        dist: Optional[np.ndarray] = None,
        coords: Optional[np.ndarray] = None,
        p: float = 2.0,
        metric_fn: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
        infinity_point: Optional[str] = None,
        origin: Optional[str] = None,
        quasimetric_K: Optional[float] = None,
        meta: Optional[dict] = None,
    ):
        self.ids = [str(i) for i in ids]
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("point ids must be unique")
        self.index = {pid: k for k, pid in enumerate(self.ids)}
        if dist is None and coords is None:
            raise ValueError("need a distance table or coordinates")
        if dist is not None:
            dist = np.asarray(dist, dtype=float)
            if dist.shape != (len(self.ids), len(self.ids)):
                raise ValueError("distance table shape does not match ids")
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != len(self.ids):
                raise ValueError("coordinate rows do not match ids")
        self.dist = dist
        self.coords = coords
        self.p = float(p)
        self.metric_fn = metric_fn
        self.infinity_point = infinity_point
        self.origin = origin
        self.quasimetric_K = quasimetric_K
        self.meta = dict(meta or {})
        for named in (infinity_point, origin):
            if named is not None and named not in self.index:
                raise ValueError(f"unknown point id {named!r}")

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.ids)

    def finite_ids(self) -> list[str]:
        return [i for i in self.ids if i != self.infinity_point]

    def check_ids(self, *pids: str) -> None:
        for pid in pids:
            if pid not in self.index:
                raise ValueError(f"unknown point id {pid!r}")

    def d(self, a: str, b: str) -> float:
        """Distance between two ids, honouring the infinity-point axioms."""
        ia, ib = self.index[a], self.index[b]
        if a == b:
            return 0.0
        if self.infinity_point is not None and (
            a == self.infinity_point or b == self.infinity_point
        ):
            if self.dist is not None:
                return float(self.dist[ia, ib])
            return math.inf
        if self.dist is not None:
            return float(self.dist[ia, ib])
        return self._coord_dist(ia, ib)

    def _coord_dist(self, ia: int, ib: int) -> float:
        u, v = self.coords[ia], self.coords[ib]
        if self.metric_fn is not None:
            return float(self.metric_fn(u, v))
        diff = np.abs(u - v)
        if math.isinf(self.p):
            return float(diff.max())
        return float(np.sum(diff**self.p) ** (1.0 / self.p))

    def abs_to_origin(self, a: str) -> float:
        """Distance from the declared origin to ``a``."""
        if self.origin is None:
            raise ValueError("space has no origin")
        return self.d(self.origin, a)

    def matrix(self) -> np.ndarray:
        """Dense distance table (materialised and cached for coord spaces)."""
        if self.dist is not None:
            return self.dist
        if self.n > MATRIX_LIMIT:
            raise ValueError(
                f"refusing to materialise a {self.n}x{self.n} table; "
                "use per-pair distances"
            )
        fin = [k for k, pid in enumerate(self.ids) if pid != self.infinity_point]
        mat = np.full((self.n, self.n), math.inf)
        np.fill_diagonal(mat, 0.0)
        c = self.coords[fin]
        if self.metric_fn is not None:
            sub = np.array(
                [[self.metric_fn(u, v) for v in c] for u in c], dtype=float
            )
        else:
            diff = np.abs(c[:, None, :] - c[None, :, :])
            if math.isinf(self.p):
                sub = diff.max(axis=-1)
            else:
                sub = np.sum(diff**self.p, axis=-1) ** (1.0 / self.p)
        mat[np.ix_(fin, fin)] = sub
        self.dist = mat
        return mat

    # ------------------------------------------------------------------
    # derived spaces
    # ------------------------------------------------------------------
    def with_matrix(self, dist: np.ndarray, **overrides) -> "PointSpace":
        """Copy of this space backed by a new distance table."""
        kwargs = dict(
            ids=self.ids,
            dist=dist,
            infinity_point=self.infinity_point,
            origin=self.origin,
            quasimetric_K=self.quasimetric_K,
            meta=dict(self.meta),
        )
        kwargs.update(overrides)
        return PointSpace(**kwargs)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        tags = []
        if self.infinity_point is not None:
            tags.append(f"inf={self.infinity_point}")
        if self.origin is not None:
            tags.append(f"origin={self.origin}")
        return f"PointSpace(n={self.n}{', ' + ', '.join(tags) if tags else ''})"


@dataclass(frozen=True)
class Quadruple:
    """An ordered cross-ratio argument (x, y, z, w) with x != w and y != z."""

    x: str
    y: str
    z: str
    w: str

    def __post_init__(self):
        if self.x == self.w:
            raise ValueError("invalid quadruple: x == w")
        if self.y == self.z:
            raise ValueError("invalid quadruple: y == z")

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.x, self.y, self.z, self.w)


def cross_ratio(space: PointSpace, quad: Quadruple) -> float:
    """Cross ratio d(x,z) d(y,w) / (d(x,w) d(y,z)) with infinity conventions.

    Returns 0 whenever x == z or y == w, even if the infinity point is
    involved.  Otherwise every factor containing the infinity point is
    omitted, e.g. ``[x, y, z, *] = d(x,z) / d(y,z)``.  Configurations where
    both a zero and an infinite factor survive the omission evaluate to
    :data:`INDETERMINATE`.
    """
    x, y, z, w = quad.as_tuple()
    space.check_ids(x, y, z, w)
    if x == z or y == w:
        return 0.0
    num_pairs = [(x, z), (y, w)]
    den_pairs = [(x, w), (y, z)]
    star = space.infinity_point
    if star is not None:
        num_pairs = [pr for pr in num_pairs if star not in pr]
        den_pairs = [pr for pr in den_pairs if star not in pr]
    num = [space.d(a, b) for a, b in num_pairs]
    den = [space.d(a, b) for a, b in den_pairs]
    # Projective evaluation: a zero denominator factor acts like an infinite
    # numerator factor and vice versa.
    zero_like = sum(v == 0.0 for v in num) + sum(math.isinf(v) for v in den)
    inf_like = sum(math.isinf(v) for v in num) + sum(v == 0.0 for v in den)
    if zero_like and inf_like:
        return INDETERMINATE
    if inf_like:
        return math.inf
    if zero_like:
        return 0.0
    return math.prod(num) / math.prod(den)


# ----------------------------------------------------------------------
# axiom verification
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class MetricViolation:
    kind: str
    points: tuple[str, ...]
    detail: str


@dataclass
class MetricReport:
    ok: bool
    violations: list[MetricViolation]
    tolerance: float

    def by_kind(self, kind: str) -> list[MetricViolation]:
        return [v for v in self.violations if v.kind == kind]


def _axiom_tolerance(mat: np.ndarray) -> float:
    finite = mat[np.isfinite(mat)]
    scale = float(finite.max()) if finite.size else 1.0
    return 1e-12 * max(scale, 1.0)


def verify_extended_metric(space: PointSpace) -> MetricReport:
    """Check the extended-metric axioms and report every violation.

    Verifies the zero diagonal, symmetry, the infinity-point axioms (at most
    one point at infinite distance from all others, infinite entries nowhere
    else), and, when no ``quasimetric_K`` is declared, every triangle
    inequality on the finite part.  Comparisons use an absolute tolerance of
    1e-12 scaled by the largest finite entry.
    """
    mat = space.matrix()
    ids = space.ids
    tol = _axiom_tolerance(mat)
    violations: list[MetricViolation] = []

    for k, pid in enumerate(ids):
        if abs(mat[k, k]) > tol:
            violations.append(
                MetricViolation("diagonal", (pid,), f"d(x,x) = {mat[k, k]!r}")
            )
    asym = np.argwhere(~np.isclose(mat, mat.T, rtol=0.0, atol=tol, equal_nan=True))
    for i, j in asym:
        if i < j:
            violations.append(
                MetricViolation(
                    "symmetry",
                    (ids[i], ids[j]),
                    f"d = {mat[i, j]!r} but transposed {mat[j, i]!r}",
                )
            )

    star = space.infinity_point
    fin = [k for k, pid in enumerate(ids) if pid != star]
    if star is not None:
        s = space.index[star]
        for k in fin:
            if not math.isinf(mat[s, k]):
                violations.append(
                    MetricViolation(
                        "infinity_axiom",
                        (star, ids[k]),
                        f"finite distance {mat[s, k]!r} to the infinity point",
                    )
                )
    sub = mat[np.ix_(fin, fin)]
    bad_inf = np.argwhere(np.isinf(sub))
    for i, j in bad_inf:
        if i < j:
            violations.append(
                MetricViolation(
                    "infinity_axiom",
                    (ids[fin[i]], ids[fin[j]]),
                    "infinite distance between points not declared at infinity",
                )
            )

    if space.quasimetric_K is None and not bad_inf.size:
        # d(i,k) <= d(i,j) + d(j,k) for all j, vectorised one mid-point at a time.
        for j in range(len(fin)):
            slack = sub - (sub[:, j][:, None] + sub[j, :][None, :])
            bad = np.argwhere(slack > tol)
            for i, k in bad:
                if i < k and i != j and k != j:
                    violations.append(
                        MetricViolation(
                            "triangle",
                            (ids[fin[i]], ids[fin[j]], ids[fin[k]]),
                            f"d(x,z) exceeds d(x,y)+d(y,z) by {slack[i, k]!r}",
                        )
                    )
    return MetricReport(ok=not violations, violations=violations, tolerance=tol)


# ----------------------------------------------------------------------
# transforms of the distance table
# ----------------------------------------------------------------------
def chain_smooth(space: PointSpace) -> PointSpace:
    """Replace d by the largest chain-subadditive minorant d-hat.

    d-hat(x,y) is the infimum over finite chains x = x0, ..., xk = y of the
    summed step lengths, i.e. all-pairs shortest paths on the complete
    weighted graph of the finite part.  The output satisfies every triangle
    inequality exactly and d-hat <= d pointwise; the infinity point (if any)
    is carried over unchanged.
    """
    from scipy.sparse.csgraph import floyd_warshall

    mat = space.matrix()
    fin = [k for k, pid in enumerate(space.ids) if pid != space.infinity_point]
    sub = mat[np.ix_(fin, fin)]
    if np.isinf(sub).any():
        raise ValueError("chain smoothing requires finite distances between finite points")
    smooth = floyd_warshall(sub, directed=False)
    out = mat.copy()
    out[np.ix_(fin, fin)] = smooth
    meta = dict(space.meta)
    meta["chain_smoothed"] = True
    return space.with_matrix(out, quasimetric_K=None, meta=meta)


@dataclass
class KEstimate:
    """Empirical quasimetric constant from the smoothing construction."""

    K_est: float
    max_ratio: float
    worst_pair: tuple[str, str]

    def certifies(self, declared_K: float) -> bool:
        """A valid declared constant can never fall below the estimate."""
        return declared_K**2 >= self.max_ratio - 1e-12


def estimate_quasimetric_k(space: PointSpace) -> KEstimate:
    """Estimate the relaxation constant as sqrt(max d/d-hat).

    For any valid constant K the sandwich d/K^2 <= d-hat <= d holds, so the
    observed max ratio lower-bounds K^2.
    """
    smooth = chain_smooth(space)
    mat, hat = space.matrix(), smooth.matrix()
    fin = [k for k, pid in enumerate(space.ids) if pid != space.infinity_point]
    worst, pair = 1.0, (space.ids[fin[0]], space.ids[fin[0]])
    for a in range(len(fin)):
        for b in range(a + 1, len(fin)):
            i, j = fin[a], fin[b]
            if hat[i, j] > 0:
                r = mat[i, j] / hat[i, j]
                if r > worst:
                    worst, pair = r, (space.ids[i], space.ids[j])
    return KEstimate(K_est=math.sqrt(worst), max_ratio=worst, worst_pair=pair)


def snowflake(space: PointSpace, alpha: float) -> PointSpace:
    """Raise every distance to the power alpha in (0, 1].

    Concave powers of a metric are metrics, so the output is again an exact
    metric; the infinity point is preserved (inf**alpha = inf).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if space.quasimetric_K is not None:
        raise ValueError("snowflake requires an exact metric, not a declared quasimetric")
    mat = space.matrix()
    out = mat**alpha
    meta = dict(space.meta)
    meta["snowflake_alpha"] = float(alpha)
    return space.with_matrix(out, meta=meta)
