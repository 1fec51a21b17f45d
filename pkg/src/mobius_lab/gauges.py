"""Separation gauges, distortion envelopes, chainedness, and SBE constants.

A gauge is a nondecreasing, sublinearly growing scale function u(r); two
points are u-separated when their distance exceeds u of their combined
distance to the origin.  Admissibility is certified on a finite geometric
checkpoint grid rather than proven symbolically, since gauges may be
user-supplied tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .space import PointSpace, Quadruple, cross_ratio
from .transforms import PointMap, sample_quadruples

__all__ = [
    "Gauge",
    "parse_gauge",
    "GaugeCertificate",
    "check_gauge",
    "is_separated",
    "EmptySampleError",
    "ModulusEnvelope",
    "monotone_envelope",
    "am_envelope",
    "ChainedReport",
    "check_asymptotically_chained",
    "witness_chain",
    "SbeConstants",
    "SbeGaugeResult",
    "sbe_to_am",
]


class EmptySampleError(RuntimeError):
    """No admissible configurations at the requested gauge/scale."""


@dataclass(frozen=True)
class Gauge:
    """Scale function of one of four kinds.

    log:   r -> c * log(n0 + r)
    pow:   r -> c * r**beta
    const: r -> c
    table: linear interpolation through sorted samples, constant beyond
    """

    kind: str
    c: float = 1.0
    n0: float = 1.0
    beta: float = 0.5
    xs: Optional[tuple] = None
    ys: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("log", "pow", "const", "table"):
            raise ValueError(f"unknown gauge kind {self.kind!r}")
        if self.kind == "table":
            if not self.xs or not self.ys or len(self.xs) != len(self.ys):
                raise ValueError("table gauge needs matching xs/ys samples")
            if list(self.xs) != sorted(self.xs):
                raise ValueError("table gauge samples must be sorted by r")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "log":
            out = self.c * np.log(self.n0 + r)
        elif self.kind == "pow":
            out = self.c * np.power(r, self.beta)
        elif self.kind == "const":
            out = np.full_like(r, self.c)
        else:
            out = np.interp(r, self.xs, self.ys)
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "Gauge":
        """The gauge multiplied pointwise by a nonnegative factor."""
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        if self.kind == "table":
            return Gauge("table", xs=self.xs, ys=tuple(factor * y for y in self.ys))
        return Gauge(self.kind, c=self.c * factor, n0=self.n0, beta=self.beta)

    def describe(self) -> str:
        if self.kind == "log":
            return f"log:{self.c:g},{self.n0:g}"
        if self.kind == "pow":
            return f"pow:{self.c:g},{self.beta:g}"
        if self.kind == "const":
            return f"const:{self.c:g}"
        return f"table:<{len(self.xs)} samples>"


def parse_gauge(spec: str) -> Gauge:
    """Parse the gauge grammar log:c,n0 | pow:c,beta | const:c | table:<path>."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind == "log":
        c, n0 = (float(v) for v in rest.split(","))
        return Gauge("log", c=c, n0=n0)
    if kind == "pow":
        c, beta = (float(v) for v in rest.split(","))
        return Gauge("pow", c=c, beta=beta)
    if kind == "const":
        return Gauge("const", c=float(rest))
    if kind == "table":
        data = np.loadtxt(rest, delimiter=",", ndmin=2)
        order = np.argsort(data[:, 0])
        return Gauge("table", xs=tuple(data[order, 0]), ys=tuple(data[order, 1]))
    raise ValueError(f"unknown gauge spec {spec!r}")


@dataclass
class GaugeCertificate:
    admissible: bool
    checked_up_to: float
    checkpoints: np.ndarray
    values: np.ndarray
    ratios: np.ndarray
    failures: list[str] = field(default_factory=list)


def check_gauge(
    gauge: Gauge,
    r_max: float,
    threshold: float = 0.05,
    n_checkpoints: int = 25,
) -> GaugeCertificate:
    """Certify nondecreasing sublinear growth on a geometric grid up to r_max.

    The gauge fails when any checked value is negative or decreasing, when
    u(r)/r at the largest checkpoint is not below the threshold, or when the
    ratios are nondecreasing across the top three checkpoints.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    grid = np.geomspace(max(r_max * 1e-6, 1e-9), r_max, n_checkpoints)
    values = np.asarray(gauge(grid), dtype=float)
    ratios = values / grid
    failures = []
    if np.any(values < -1e-12):
        failures.append("negative values on the checked range")
    if np.any(np.diff(values) < -1e-12 * max(1.0, float(np.abs(values).max()))):
        failures.append("not nondecreasing on the checked range")
    if not ratios[-1] < threshold:
        failures.append(
            f"u(r)/r = {ratios[-1]:g} at r = {r_max:g} is not below {threshold:g}"
        )
    top = ratios[-3:]
    if not (top[0] > top[1] > top[2]):
        failures.append("u(r)/r is nondecreasing across the top three checkpoints")
    return GaugeCertificate(
        admissible=not failures,
        checked_up_to=float(r_max),
        checkpoints=grid,
        values=values,
        ratios=ratios,
        failures=failures,
    )


# ----------------------------------------------------------------------
# separation predicate
# ----------------------------------------------------------------------
def is_separated(space: PointSpace, gauge: Gauge, x: str, y: str) -> bool:
    """True iff d(x,y) > u(|x| + |y|) with |.| the distance to the origin.

    Separation is evaluated at the space's infinity point (apply a Cayley
    transform first to separate at a finite point); any point is separated
    from the infinity point by convention.
    """
    space.check_ids(x, y)
    if space.origin is None:
        raise ValueError("separation requires a declared origin")
    if space.infinity_point is not None and (
        x == space.infinity_point or y == space.infinity_point
    ):
        return True
    return space.d(x, y) > gauge(space.abs_to_origin(x) + space.abs_to_origin(y))


# ----------------------------------------------------------------------
# empirical distortion envelopes
# ----------------------------------------------------------------------
@dataclass
class ModulusEnvelope:
    """Sorted (source CR, image CR) samples with their least monotone majorant."""

    samples: np.ndarray  # shape (k, 2), sorted by source value
    envelope_t: np.ndarray  # running max of image values
    violations: list[tuple[float, float]]
    vanishes_at_zero: bool
    small_s: float
    min_image: float

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def __call__(self, s):
        """Evaluate the envelope by linear interpolation of the running max,
        clamped to the first/last value outside the sampled range."""
        s = np.asarray(s, dtype=float)
        out = np.interp(s, self.samples[:, 0], self.envelope_t)
        return float(out) if out.ndim == 0 else out


def monotone_envelope(
    pairs: Sequence[tuple[float, float]],
    small_s: float = 1e-2,
    min_image: float = 0.5,
) -> ModulusEnvelope:
    """Least nondecreasing upper bound of the sample, extended by the last value.

    Pairs with a small source value but an image value bounded away from zero
    are collected as violations of the vanishing-at-zero requirement.
    """
    if not len(pairs):
        raise EmptySampleError("no sample pairs to build an envelope from")
    arr = np.asarray(sorted(pairs), dtype=float)
    env = np.maximum.accumulate(arr[:, 1])
    violations = [
        (float(s), float(t)) for s, t in arr if s <= small_s and t >= min_image
    ]
    return ModulusEnvelope(
        samples=arr,
        envelope_t=env,
        violations=violations,
        vanishes_at_zero=not violations,
        small_s=small_s,
        min_image=min_image,
    )


def am_envelope(
    point_map: PointMap,
    gauge: Gauge,
    sample_budget: int,
    seed: int = 0,
    small_s: float = 1e-2,
    min_image: float = 0.5,
) -> ModulusEnvelope:
    """Empirical distortion envelope over gauge-separated quadruples.

    Samples quadruples whose four points are pairwise separated by the gauge
    at the source's infinity point, records (source CR, image CR) pairs with
    both values finite, and builds the least monotone upper envelope.  The
    budget bounds the number of candidate quadruples examined.
    """
    src = point_map.source
    if src.origin is None or src.infinity_point is None:
        raise ValueError("source space needs an origin and an infinity point")
    pairs = []
    for quad in sample_quadruples(src.ids, sample_budget, seed=seed):
        pts = quad.as_tuple()
        if not all(is_separated(src, gauge, a, b) for a, b in combinations(pts, 2)):
            continue
        s = cross_ratio(src, quad)
        if not (math.isfinite(s) and s >= 0):
            continue
        try:
            image = Quadruple(*(point_map(i) for i in pts))
        except ValueError:
            continue
        t = cross_ratio(point_map.target, image)
        if not (math.isfinite(t) and t >= 0):
            continue
        pairs.append((s, t))
    if not pairs:
        raise EmptySampleError("no separated quadruples at this gauge/scale")
    return monotone_envelope(pairs, small_s=small_s, min_image=min_image)


# ----------------------------------------------------------------------
# asymptotic chainedness
# ----------------------------------------------------------------------
@dataclass
class ChainedReport:
    chained: bool
    worst_pair: Optional[tuple[str, str]]
    worst_margin: float
    n_pairs: int
    witness_chains: dict


def _bottleneck_tree(space: PointSpace):
    """Minimum spanning tree of the finite part as an adjacency list.

    The heaviest edge on the tree path between two points equals the optimal
    chain bottleneck (the smallest possible maximal step over all chains).
    """
    from scipy.sparse.csgraph import minimum_spanning_tree

    fin = space.finite_ids()
    idx = [space.index[i] for i in fin]
    sub = space.matrix()[np.ix_(idx, idx)].copy()
    # scipy treats exact zeros as missing edges; degenerate duplicate points
    # get a tiny positive weight instead so they stay connected.
    off = ~np.eye(len(fin), dtype=bool)
    sub[off & (sub == 0.0)] = 1e-300
    tree = minimum_spanning_tree(sub).tocoo()
    adj: dict[int, list[tuple[int, float]]] = {k: [] for k in range(len(fin))}
    for i, j, wgt in zip(tree.row, tree.col, tree.data):
        adj[int(i)].append((int(j), float(wgt)))
        adj[int(j)].append((int(i), float(wgt)))
    return fin, adj


def _tree_paths_from(adj, root: int, n: int):
    """Bottleneck value and parent pointer for every node, from one root."""
    bottleneck = np.full(n, math.inf)
    parent = np.full(n, -1, dtype=int)
    bottleneck[root] = 0.0
    stack = [root]
    seen = {root}
    while stack:
        u = stack.pop()
        for v, w in adj[u]:
            if v not in seen:
                seen.add(v)
                parent[v] = u
                bottleneck[v] = max(bottleneck[u], w)
                stack.append(v)
    return bottleneck, parent


def check_asymptotically_chained(space: PointSpace, gauge: Gauge) -> ChainedReport:
    """Decide, for every finite pair, whether a chain with steps below the
    gauge threshold v(|x| + |y|) joins them.

    Uses the minimum-spanning-tree bottleneck: the smallest achievable
    maximal step between two points is the heaviest edge on their tree path,
    so a pair is chained iff that bottleneck stays below its threshold.
    The returned witness chain realises the optimal bottleneck for the worst
    pair.
    """
    if space.origin is None:
        raise ValueError("chainedness requires a declared origin")
    fin, adj = _bottleneck_tree(space)
    n = len(fin)
    radii = np.array([space.abs_to_origin(i) for i in fin])
    worst_margin, worst_pair = math.inf, None
    parents = {}
    bottlenecks = {}
    for a in range(n):
        bn, par = _tree_paths_from(adj, a, n)
        bottlenecks[a] = bn
        parents[a] = par
    n_pairs = 0
    for a in range(n):
        thresholds = np.asarray(gauge(radii[a] + radii))
        for b in range(a + 1, n):
            n_pairs += 1
            margin = float(thresholds[b] - bottlenecks[a][b])
            if margin < worst_margin:
                worst_margin, worst_pair = margin, (a, b)
    tol = 1e-12
    chained = worst_margin > -tol
    witness_chains = {}
    if worst_pair is not None:
        a, b = worst_pair
        path = [b]
        while path[-1] != a:
            path.append(int(parents[a][path[-1]]))
        witness_chains[(fin[a], fin[b])] = [fin[k] for k in reversed(path)]
        worst_pair = (fin[a], fin[b])
    return ChainedReport(
        chained=bool(chained),
        worst_pair=worst_pair,
        worst_margin=worst_margin,
        n_pairs=n_pairs,
        witness_chains=witness_chains,
    )


def witness_chain(space: PointSpace, x: str, y: str) -> tuple[list[str], float]:
    """Optimal-bottleneck chain between two finite points and its max step."""
    fin, adj = _bottleneck_tree(space)
    pos = {pid: k for k, pid in enumerate(fin)}
    a, b = pos[x], pos[y]
    bn, par = _tree_paths_from(adj, a, len(fin))
    path = [b]
    while path[-1] != a:
        path.append(int(par[path[-1]]))
    return [fin[k] for k in reversed(path)], float(bn[b])


# ----------------------------------------------------------------------
# sublinear-Lipschitz constants
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class SbeConstants:
    """Constants of a sublinear-Lipschitz sandwich.

    The map satisfies
        c_lower * d - C_lower * u  <=  d(f., f.)  <=  c_upper * d + C_upper * u
    with u evaluated at |x| + |y|.
    """

    c_upper: float
    C_upper: float
    c_lower: float
    C_lower: float
    u: Gauge

    def __post_init__(self):
        if self.c_lower <= 0:
            raise ValueError("the lower Lipschitz constant must be positive")
        if min(self.c_upper, self.C_upper, self.C_lower) < 0:
            raise ValueError("constants must be nonnegative")


@dataclass
class SbeGaugeResult:
    v: Gauge
    D: float
    upper_factor: float
    lower_factor: float
    bilipschitz_all_scales: bool


def sbe_to_am(k: SbeConstants) -> SbeGaugeResult:
    """Separation gauge and bi-Lipschitz constant implied by SBE bounds.

    With v = 2 (C_lower / c_lower) u, any pair separated by v satisfies
    (1/D) d <= d(f., f.) <= D d for D = max(c_upper + C_upper c_lower /
    (2 C_lower), 2 / c_lower).  A vanishing sublinear term makes the map
    bi-Lipschitz at all scales with D = max(c_upper, 1 / c_lower).
    """
    if k.C_lower == 0.0:
        return SbeGaugeResult(
            v=k.u.scaled(0.0),
            D=max(k.c_upper, 1.0 / k.c_lower),
            upper_factor=k.c_upper,
            lower_factor=k.c_lower,
            bilipschitz_all_scales=True,
        )
    v = k.u.scaled(2.0 * k.C_lower / k.c_lower)
    upper = k.c_upper + k.C_upper * k.c_lower / (2.0 * k.C_lower)
    lower = k.c_lower / 2.0
    return SbeGaugeResult(
        v=v,
        D=max(upper, 2.0 / k.c_lower),
        upper_factor=upper,
        lower_factor=lower,
        bilipschitz_all_scales=False,
    )
