"""Finite-scale stand-ins for large- and small-scale limit spaces.

Limits along rescaled sequences d/lambda_n (large scale) or lambda_n * d
(small scale) are represented here only through their testable finite-index
content: rescaled distance panels, the exact per-index identities tying the
Cayley transform to the rescalings, eventual-separation diagnostics along
trajectories, the constructive annulus witness, minimal-scale realization,
and induced three-point (quasisymmetry) checks across scales.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Optional, Sequence

import numpy as np

from .space import PointSpace
from .transforms import PointMap, cayley_transform, inverse_cayley_transform
from .gauges import EmptySampleError, Gauge, ModulusEnvelope, is_separated, monotone_envelope

__all__ = [
    "Trajectory",
    "parse_trajectory",
    "eventual_separation",
    "SeparationReport",
    "RescaledPanel",
    "rescaled_panel",
    "ConeIdentityReport",
    "cone_identity_check",
    "AnnulusError",
    "AnnulusReport",
    "annulus_witness",
    "ScaleRealization",
    "scale_realization",
    "QsReport",
    "induced_qs_check",
]


# ----------------------------------------------------------------------
# trajectories
# ----------------------------------------------------------------------
POINT_FORMULAS = {
    # closed-form index -> coordinate on the real line
    "linear": lambda n, a=1.0, b=0.0: a * n + b,
    "affine_log": lambda n, a=1.0, b=1.0, c=0.0: a * n + b * np.log(n) + c,
    "constant": lambda n, c=0.0: np.full_like(np.asarray(n, dtype=float), c),
}

SCALE_FORMULAS = {
    "linear": lambda n, a=1.0: a * np.asarray(n, dtype=float),
    "power": lambda n, a=1.0, b=1.0: a * np.asarray(n, dtype=float) ** b,
    "const": lambda n, c=1.0: np.full_like(np.asarray(n, dtype=float), c),
}


@dataclass
class Trajectory:
    """A sequence of points x_n with declared rescaling factors lambda_n."""

    indices: np.ndarray
    points: np.ndarray  # (k,) scalars or (k, d) coordinates
    scales: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(1))
    name: str = ""

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.scales = np.asarray(self.scales, dtype=float)
        self.origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("indices must be strictly increasing")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        if len(self.points) != len(self.indices) or len(self.scales) != len(self.indices):
            raise ValueError("indices, points and scales must have equal length")

    @classmethod
    def from_formula(
        cls,
        formula: str,
        indices,
        scale: str = "linear",
        params: Optional[dict] = None,
        scale_params: Optional[dict] = None,
        origin=0.0,
        name: str = "",
    ) -> "Trajectory":
        idx = np.asarray(indices, dtype=np.int64)
        pts = POINT_FORMULAS[formula](idx.astype(float), **(params or {}))
        lam = SCALE_FORMULAS[scale](idx, **(scale_params or {}))
        return cls(idx, pts, lam, origin=origin, name=name or formula)

    def radii(self) -> np.ndarray:
        """Distances |x_n| to the trajectory origin."""
        return np.linalg.norm(self.points - self.origin[None, :], axis=1)

    def witness_bound(self) -> float:
        """Smallest M with |x_n| <= M lambda_n on the recorded indices."""
        return float(np.max(self.radii() / self.scales))


_SPEC_RE = re.compile(r"^gen:(\w+)\((.*)\)$")


def parse_trajectory(spec: str, indices, scale_spec: str = "lambda:linear()", origin=0.0) -> Trajectory:
    """Parse ``gen:<formula>(k=v, ...)`` with scales ``lambda:<formula>(...)``."""

    def split_kv(body: str) -> dict:
        out = {}
        for part in body.split(","):
            part = part.strip()
            if not part:
                continue
            key, _, val = part.partition("=")
            out[key.strip()] = float(val)
        return out

    m = _SPEC_RE.match(spec.strip())
    if not m:
        raise ValueError(f"bad trajectory spec {spec!r}")
    formula, body = m.group(1), m.group(2)
    sm = re.match(r"^lambda:(\w+)\((.*)\)$", scale_spec.strip())
    if not sm:
        raise ValueError(f"bad scale spec {scale_spec!r}")
    return Trajectory.from_formula(
        formula,
        indices,
        scale=sm.group(1),
        params=split_kv(body),
        scale_params=split_kv(sm.group(2)),
        origin=origin,
        name=spec,
    )


@dataclass
class SeparationReport:
    first_separated_index: Optional[int]
    separated_fraction: float
    n_indices: int


def eventual_separation(t1: Trajectory, t2: Trajectory, gauge: Gauge) -> SeparationReport:
    """Per-index separation d(x_n, y_n) > u(|x_n| + |y_n|) along two trajectories.

    Reports the first recorded index from which separation holds at every
    later recorded index, and the overall separated fraction.
    """
    if not np.array_equal(t1.indices, t2.indices):
        raise ValueError("trajectories must share their index set")
    if not np.allclose(t1.scales, t2.scales):
        raise ValueError("trajectories must share their scales")
    if not np.allclose(t1.origin, t2.origin):
        raise ValueError("trajectories must share their origin")
    dists = np.linalg.norm(t1.points - t2.points, axis=1)
    sep = dists > np.asarray(gauge(t1.radii() + t2.radii()))
    frac = float(np.mean(sep))
    if not sep[-1]:
        first = None
    else:
        bad = np.nonzero(~sep)[0]
        first = int(t1.indices[0]) if bad.size == 0 else int(t1.indices[bad[-1] + 1])
    return SeparationReport(first, frac, len(sep))


# ----------------------------------------------------------------------
# rescaled panels and the transform identities
# ----------------------------------------------------------------------
@dataclass
class RescaledPanel:
    base: PointSpace
    ids: list[str]
    scale: float
    mode: str  # "cone" (d / lambda) or "tangent" (lambda * d)
    panel: np.ndarray

    def as_point_space(self) -> PointSpace:
        star = self.base.infinity_point if self.base.infinity_point in self.ids else None
        origin = self.base.origin if self.base.origin in self.ids else None
        return PointSpace(
            self.ids,
            dist=self.panel,
            infinity_point=star,
            origin=origin,
            quasimetric_K=self.base.quasimetric_K,
            meta={"rescaled_from": self.mode, "scale": self.scale},
        )


def rescaled_panel(
    space: PointSpace,
    sample: Sequence[str],
    lam: float,
    mode: str = "cone",
) -> RescaledPanel:
    """Distance panel d/lambda (cone mode) or lambda*d (tangent mode)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if mode not in ("cone", "tangent"):
        raise ValueError(f"unknown mode {mode!r}")
    sample = list(sample)
    if not sample:
        raise ValueError("empty sample")
    space.check_ids(*sample)
    k = len(sample)
    panel = np.empty((k, k))
    for i in range(k):
        panel[i, i] = 0.0
        for j in range(i + 1, k):
            d = space.d(sample[i], sample[j])
            panel[i, j] = panel[j, i] = d / lam if mode == "cone" else lam * d
    return RescaledPanel(space, sample, float(lam), mode, panel)


@dataclass
class ConeIdentityReport:
    max_rel_error: float
    n_checked: int
    worst: Optional[tuple] = None


def _rel_err(lhs: float, rhs: float) -> float:
    if lhs == rhs:
        return 0.0
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def cone_identity_check(
    space: PointSpace,
    p: str,
    lam: float,
    sample: Optional[Sequence[str]] = None,
    include_inverse: bool = True,
) -> ConeIdentityReport:
    """Exact per-index identities between rescalings and the Cayley transforms.

    With q the infinity point of the base space, checks for sampled x, y != p:

    1. d_p(q, x)/lam == 1/(lam * d(p, x)),
    2. d_p(x, y)/lam == (lam * d(x,y)) / ((lam * d(x,p)) (lam * d(p,y))),
    3. (inverse direction, at the origin o) lam * d^o(q, x) == 1/((1 + d(o,x))/lam),

    where d_p and d^o are the implemented transforms.  All three hold up to
    floating rounding; the report carries the worst relative error.
    """
    if space.infinity_point is None:
        raise ValueError("the base space needs an infinity point")
    space.check_ids(p)
    if p == space.infinity_point:
        raise ValueError("p must be finite")
    star = space.infinity_point
    ids = [i for i in (sample or space.finite_ids()) if i not in (p, star)]
    transformed = cayley_transform(space, p)
    worst, worst_case, checked = 0.0, None, 0

    for x in ids:
        lhs = transformed.d(star, x) / lam
        rhs = 1.0 / (lam * space.d(p, x))
        err = _rel_err(lhs, rhs)
        checked += 1
        if err > worst:
            worst, worst_case = err, ("point", x, lhs, rhs)
    for x, y in combinations(ids, 2):
        lhs = transformed.d(x, y) / lam
        rhs = (lam * space.d(x, y)) / ((lam * space.d(x, p)) * (lam * space.d(p, y)))
        err = _rel_err(lhs, rhs)
        checked += 1
        if err > worst:
            worst, worst_case = err, ("pair", (x, y), lhs, rhs)

    if include_inverse and space.origin is not None and space.origin != star:
        o = space.origin
        bounded = inverse_cayley_transform(space, o)
        for x in ids:
            lhs = lam * bounded.d(star, x)
            rhs = 1.0 / ((1.0 + space.d(o, x)) / lam)
            err = _rel_err(lhs, rhs)
            checked += 1
            if err > worst:
                worst, worst_case = err, ("inverse", x, lhs, rhs)
    return ConeIdentityReport(worst, checked, worst_case)


# ----------------------------------------------------------------------
# annulus witness
# ----------------------------------------------------------------------
class AnnulusError(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class AnnulusReport:
    status: str  # "already_separated" | "witness"
    witness: Optional[str]
    inner: float
    outer: float
    chain: list[str]
    sep_xw: Optional[bool]
    sep_yw: Optional[bool]


def _neighbors_within(space: PointSpace, ids: list[str], radius: float):
    """Neighbor oracle on the finite part: ids within a strict radius."""
    if space.dist is None and space.metric_fn is None:
        from scipy.spatial import cKDTree

        idx = [space.index[i] for i in ids]
        coords = space.coords[idx]
        if math.isinf(space.p):
            tree = cKDTree(coords, boxsize=None)
            p_norm = np.inf
        else:
            tree = cKDTree(coords)
            p_norm = space.p
        def query(k: int) -> list[int]:
            hits = tree.query_ball_point(coords[k], radius, p=p_norm)
            return [h for h in hits if h != k]
        return query
    mat = space.matrix()
    idx = [space.index[i] for i in ids]
    sub = mat[np.ix_(idx, idx)]
    def query(k: int) -> list[int]:
        return [int(j) for j in np.nonzero(sub[k] < radius)[0] if j != k]
    return query


def _chain_between(space: PointSpace, start: str, goal: str, step_bound: float) -> list[str]:
    """Breadth-first chain from start to goal with every step < step_bound."""
    ids = space.finite_ids()
    pos = {pid: k for k, pid in enumerate(ids)}
    neighbors = _neighbors_within(space, ids, step_bound)
    src, dst = pos[start], pos[goal]
    parent = {src: -1}
    frontier = [src]
    while frontier and dst not in parent:
        nxt = []
        for u in frontier:
            for v in neighbors(u):
                if v not in parent:
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    if dst not in parent:
        return []
    path = [dst]
    while parent[path[-1]] != -1:
        path.append(parent[path[-1]])
    return [ids[k] for k in reversed(path)]


def annulus_witness(
    space: PointSpace,
    x: str,
    y: str,
    u: Gauge,
    v: Gauge,
    q: Optional[str] = None,
) -> AnnulusReport:
    """Construct a third point separated from both ends of an unseparated pair.

    If x, y are already u-separated the first alternative is reported.
    Otherwise the annulus A = { w : 2 u(4|y|) < d(w, y) <= 2 u(4|y|) + v(|y|) }
    is crossed by any chain from the origin to y whose steps stay below
    v(|y|); the first chain point landing in A is returned together with both
    separation checks.  The exact radii of the constructive argument are
    used, with no tuned constants.
    """
    q = q or space.origin
    if q is None:
        raise ValueError("annulus construction requires an origin")
    space.check_ids(x, y, q)
    if is_separated(space, u, x, y):
        return AnnulusReport("already_separated", None, math.nan, math.nan, [], None, None)
    abs_y = space.d(q, y)
    inner = 2.0 * float(u(4.0 * abs_y))
    outer = inner + float(v(abs_y))
    if not outer < abs_y:
        raise AnnulusError("precondition scale too small")
    chain = _chain_between(space, q, y, float(v(abs_y)))
    if not chain:
        raise AnnulusError("annulus empty on sample")
    witness = None
    for w in chain:
        dwy = space.d(w, y)
        if inner < dwy <= outer:
            witness = w
            break
    if witness is None:
        raise AnnulusError("annulus empty on sample")
    return AnnulusReport(
        status="witness",
        witness=witness,
        inner=inner,
        outer=outer,
        chain=chain,
        sep_xw=is_separated(space, u, x, witness),
        sep_yw=is_separated(space, u, y, witness),
    )


# ----------------------------------------------------------------------
# scale realization
# ----------------------------------------------------------------------
@dataclass
class ScaleRealization:
    z: str
    abs_z: float
    ratio: float
    bound: float
    bound_asserted: bool
    bound_holds: bool
    warning: Optional[str] = None


def scale_realization(
    space: PointSpace,
    lam: float,
    v: Gauge,
    eps: float = 0.0,
    chained_cert=None,
) -> ScaleRealization:
    """Realise a rescaling factor as a point norm, up to a gauge-sized gap.

    Picks an eps-minimal point z outside the ball of radius lam around the
    origin and certifies 1 - v(|z|)/|z| <= lam/|z| <= 1.  The lower bound
    relies on chainedness at v; without a certificate it is reported but not
    asserted.
    """
    if space.origin is None:
        raise ValueError("scale realization requires an origin")
    radii = [(space.abs_to_origin(i), i) for i in space.finite_ids() if i != space.origin]
    outside = [(r, i) for r, i in radii if r >= lam]
    if not outside:
        raise ValueError("no point outside the ball")
    r_min = min(r for r, _ in outside)
    candidates = sorted(i for r, i in outside if r <= r_min + eps)
    z = candidates[0]
    abs_z = space.abs_to_origin(z)
    ratio = lam / abs_z
    bound = 1.0 - float(v(abs_z)) / abs_z
    asserted = bool(chained_cert is not None and getattr(chained_cert, "chained", False))
    warning = None
    if not asserted:
        warning = "chainedness certificate absent; lower bound reported but not asserted"
    return ScaleRealization(
        z=z,
        abs_z=abs_z,
        ratio=ratio,
        bound=bound,
        bound_asserted=asserted,
        bound_holds=bound <= ratio + eps + 1e-12,
        warning=warning,
    )


# ----------------------------------------------------------------------
# induced three-point checks across scales
# ----------------------------------------------------------------------
@dataclass
class ScalePanelReport:
    scale: float
    n_triples: int
    envelope: ModulusEnvelope


@dataclass
class QsReport:
    per_scale: list[ScalePanelReport]
    drifts: list[float]
    max_drift: float


def _sample_triples(ids: list[str], budget: int, seed: int):
    n = len(ids)
    total = n * (n - 1) * (n - 2)
    if total <= budget:
        yield from permutations(ids, 3)
        return
    rng = np.random.default_rng(seed)
    seen = set()
    produced = 0
    while produced < budget:
        trip = tuple(int(t) for t in rng.choice(n, size=3, replace=False))
        if trip in seen:
            continue
        seen.add(trip)
        produced += 1
        yield tuple(ids[t] for t in trip)


def induced_qs_check(
    point_map: PointMap,
    gauge: Gauge,
    scales: Sequence[float],
    sample_budget: int,
    seed: int = 0,
    ball_factor: float = 2.0,
) -> QsReport:
    """Three-point distortion envelopes at a ladder of scales.

    At each scale lambda, triples are drawn from the ball |x| <= ball_factor
    * lambda, restricted to pairwise gauge-separated points, and the ratio
    pair (d(x,y)/d(x,w), d(x',y')/d(x',w')) is recorded (the rescaling
    cancels in the ratios, so panel and base values agree).  Envelopes are
    fitted per scale and the drift is their sup-distance on the shared
    support; stabilising drift is the finite-scale signal that the map
    descends to the limits.
    """
    src, dst = point_map.source, point_map.target
    if src.origin is None:
        raise ValueError("source space needs an origin")
    reports = []
    for lam in scales:
        eligible = [
            i for i in src.finite_ids() if src.abs_to_origin(i) <= ball_factor * lam
        ]
        pairs = []
        for xx, yy, ww in _sample_triples(eligible, sample_budget, seed):
            if not (
                is_separated(src, gauge, xx, yy)
                and is_separated(src, gauge, xx, ww)
                and is_separated(src, gauge, yy, ww)
            ):
                continue
            dxw = src.d(xx, ww)
            dxw_img = dst.d(point_map(xx), point_map(ww))
            if dxw == 0.0 or dxw_img == 0.0:
                continue
            r_s = src.d(xx, yy) / dxw
            r_t = dst.d(point_map(xx), point_map(yy)) / dxw_img
            if math.isfinite(r_s) and math.isfinite(r_t):
                pairs.append((r_s, r_t))
        if not pairs:
            raise EmptySampleError(f"no separated triples at scale {lam:g}")
        reports.append(
            ScalePanelReport(float(lam), len(pairs), monotone_envelope(pairs))
        )
    drifts = []
    for a, b in zip(reports, reports[1:]):
        lo = max(a.envelope.samples[0, 0], b.envelope.samples[0, 0])
        hi = min(a.envelope.samples[-1, 0], b.envelope.samples[-1, 0])
        if not lo < hi:
            drifts.append(math.nan)
            continue
        # piecewise-linear envelopes: the sup sits at a breakpoint of either
        grid = np.concatenate(
            [a.envelope.samples[:, 0], b.envelope.samples[:, 0], [lo, hi]]
        )
        grid = grid[(grid >= lo) & (grid <= hi)]
        drifts.append(float(np.max(np.abs(a.envelope(grid) - b.envelope(grid)))))
    finite = [d for d in drifts if not math.isnan(d)]
    return QsReport(reports, drifts, max(finite) if finite else math.nan)
