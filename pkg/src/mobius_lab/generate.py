"""Constructors for the built-in point spaces.

Covers coordinate grids (real line, l_p grids), word metrics on Cayley-graph
balls of three group families (Z^d, free groups, the discrete Heisenberg
group), spaces built from explicit coordinates, and the seeded random spaces
used throughout the experiments.
"""
from __future__ import annotations

import math
from collections import deque
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .space import PointSpace

__all__ = [
    "generate_space",
    "real_line_grid",
    "lp_grid",
    "word_metric",
    "from_coords",
    "add_infinity_point",
    "random_euclidean_space",
    "random_quasimetric_space",
]

INFINITY_ID = "*"

POINT_BUDGET = 200_000


def add_infinity_point(space: PointSpace, pid: str = INFINITY_ID) -> PointSpace:
    """Append a designated point at infinity to a space without one."""
    if space.infinity_point is not None:
        raise ValueError("space already has an infinity point")
    if pid in space.index:
        raise ValueError(f"id {pid!r} already in use")
    ids = space.ids + [pid]
    if space.dist is not None:
        mat = np.full((space.n + 1, space.n + 1), math.inf)
        mat[: space.n, : space.n] = space.dist
        mat[-1, -1] = 0.0
        return PointSpace(
            ids,
            dist=mat,
            infinity_point=pid,
            origin=space.origin,
            quasimetric_K=space.quasimetric_K,
            meta=dict(space.meta),
        )
    coords = np.vstack([space.coords, np.full((1, space.coords.shape[1]), np.nan)])
    return PointSpace(
        ids,
        coords=coords,
        p=space.p,
        metric_fn=space.metric_fn,
        infinity_point=pid,
        origin=space.origin,
        quasimetric_K=space.quasimetric_K,
        meta=dict(space.meta),
    )


def _unique_ids(values) -> list[str]:
    ids, seen = [], set()
    for k, v in enumerate(values):
        s = f"{v:g}" if isinstance(v, (int, float, np.integer, np.floating)) else str(v)
        if s in seen:
            s = f"{s}#{k}"
        seen.add(s)
        ids.append(s)
    return ids


def real_line_grid(
    n_points: int,
    step: float = 1.0,
    start: float = 0.0,
    with_infinity: bool = False,
    origin: Optional[str] = None,
) -> PointSpace:
    """Evenly spaced points on the real line, ids named by their coordinate."""
    if n_points < 1 or n_points > POINT_BUDGET:
        raise ValueError(f"n_points must be in [1, {POINT_BUDGET}]")
    xs = start + step * np.arange(n_points, dtype=float)
    ids = _unique_ids(xs)
    if origin is None and start == 0.0:
        origin = ids[0]
    space = PointSpace(ids, coords=xs[:, None], p=2.0, origin=origin,
                       meta={"kind": "real_line_grid", "step": step, "start": start})
    return add_infinity_point(space) if with_infinity else space


def lp_grid(
    p: float,
    dims: int,
    side: int,
    step: float = 1.0,
    with_infinity: bool = False,
) -> PointSpace:
    """The grid {0, ..., side-1}^dims with the l_p metric."""
    if side**dims > POINT_BUDGET:
        raise ValueError("grid exceeds the point budget")
    pts = np.array(list(product(range(side), repeat=dims)), dtype=float) * step
    ids = ["_".join(f"{int(c) if c == int(c) else c:g}" for c in row) for row in pts]
    space = PointSpace(ids, coords=pts, p=p, origin=ids[0],
                       meta={"kind": "lp_grid", "p": p, "dims": dims, "side": side})
    return add_infinity_point(space) if with_infinity else space


def from_coords(
    coords,
    p: float = 2.0,
    ids: Optional[Sequence[str]] = None,
    metric_fn=None,
    origin: Optional[str] = None,
    with_infinity: bool = False,
) -> PointSpace:
    """Space over explicit coordinates with a p-norm (or custom) metric."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    if ids is None:
        ids = (
            _unique_ids(coords[:, 0])
            if coords.shape[1] == 1
            else [f"p{k}" for k in range(coords.shape[0])]
        )
    space = PointSpace(list(ids), coords=coords, p=p, metric_fn=metric_fn,
                       origin=origin, meta={"kind": "from_coords", "p": p})
    return add_infinity_point(space) if with_infinity else space


# ----------------------------------------------------------------------
# word metrics on Cayley-graph balls
# ----------------------------------------------------------------------
def _zd_generators(d: int):
    gens = []
    for j in range(d):
        for sign in (1, -1):
            e = [0] * d
            e[j] = sign
            gens.append(tuple(e))
    return gens


def _zd_mul(g, h):
    return tuple(a + b for a, b in zip(g, h))


def _free_mul(word, gen):
    # gen is +k / -k for generator k>=1; reduce against the last letter
    if word and word[-1] == -gen:
        return word[:-1]
    return word + (gen,)


def _heis_mul(g, h):
    # upper-triangular integer matrices: (x, y, z)*(x', y', z') adds x*y' to z
    return (g[0] + h[0], g[1] + h[1], g[2] + h[2] + g[0] * h[1])


def word_metric(
    group: str,
    radius: int,
    rank: int = 1,
    with_infinity: bool = False,
) -> PointSpace:
    """BFS ball of the Cayley graph with exact within-ball word distances.

    ``group`` is one of ``"Zd"`` (rank = dimension, generators the signed
    unit vectors), ``"free"`` (free group of the given rank), or
    ``"heisenberg_Z"`` (discrete Heisenberg group on the two standard
    generators and their inverses).  Distances are graph distances computed
    inside the generated ball; for pairs near the boundary these may exceed
    the true word distance, which is flagged in the metadata.
    """
    if group == "Zd":
        identity = tuple([0] * rank)
        gens = _zd_generators(rank)
        mul = _zd_mul
        boundary_clipped = False  # l1 geodesics stay inside the ball
    elif group == "free":
        identity = ()
        gens = [g for k in range(1, rank + 1) for g in (k, -k)]
        mul = _free_mul
        boundary_clipped = False  # geodesics pass through common prefixes
    elif group == "heisenberg_Z":
        identity = (0, 0, 0)
        gens = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]
        mul = _heis_mul
        boundary_clipped = True
    else:
        raise ValueError(f"unknown group family {group!r}")

    # BFS ball around the identity
    order = {identity: 0}
    elems = [identity]
    queue = deque([identity])
    while queue:
        g = queue.popleft()
        if order[g] >= radius:
            continue
        for s in gens:
            h = mul(g, s)
            if h not in order:
                order[h] = order[g] + 1
                elems.append(h)
                queue.append(h)
                if len(elems) > POINT_BUDGET:
                    raise ValueError("radius too large for the point budget")

    idx = {g: k for k, g in enumerate(elems)}
    adj = [[] for _ in elems]
    for g, k in idx.items():
        for s in gens:
            h = mul(g, s)
            if h in idx:
                adj[k].append(idx[h])

    n = len(elems)
    mat = np.full((n, n), math.inf)
    for src in range(n):
        dist = np.full(n, -1, dtype=int)
        dist[src] = 0
        q = deque([src])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
        mat[src] = dist
    mat[mat < 0] = math.inf

    def label(g):
        if group == "free":
            return "".join(
                (chr(ord("a") + abs(k) - 1) + ("'" if k < 0 else "")) for k in g
            ) or "e"
        return "(" + ",".join(str(c) for c in g) + ")"

    ids = [label(g) for g in elems]
    space = PointSpace(
        ids,
        dist=mat,
        origin=ids[0],
        meta={
            "kind": "word_metric",
            "group": group,
            "rank": rank,
            "radius": radius,
            "boundary_clipped": boundary_clipped,
            "word_length": {ids[idx[g]]: order[g] for g in elems},
        },
    )
    return add_infinity_point(space) if with_infinity else space


# ----------------------------------------------------------------------
# dispatcher used by the CLI ``gen`` subcommand
# ----------------------------------------------------------------------
def generate_space(kind: str, params: dict) -> PointSpace:
    """Build a space by kind name; see the individual constructors."""
    params = dict(params)
    if kind == "real_line_grid":
        return real_line_grid(
            int(params.pop("n_points")),
            step=float(params.pop("step", 1.0)),
            start=float(params.pop("start", 0.0)),
            with_infinity=bool(params.pop("with_infinity", False)),
            origin=params.pop("origin", None),
        )
    if kind == "lp_grid":
        return lp_grid(
            float(params.pop("p")),
            int(params.pop("dims")),
            int(params.pop("side")),
            step=float(params.pop("step", 1.0)),
            with_infinity=bool(params.pop("with_infinity", False)),
        )
    if kind == "word_metric":
        return word_metric(
            str(params.pop("group")),
            int(params.pop("radius")),
            rank=int(params.pop("rank", 1)),
            with_infinity=bool(params.pop("with_infinity", False)),
        )
    if kind == "from_coords":
        return from_coords(
            params.pop("coords"),
            p=float(params.pop("p", 2.0)),
            ids=params.pop("ids", None),
            origin=params.pop("origin", None),
            with_infinity=bool(params.pop("with_infinity", False)),
        )
    raise ValueError(f"unknown space kind {kind!r}")


# ----------------------------------------------------------------------
# seeded random corpora
# ----------------------------------------------------------------------
def random_euclidean_space(
    n_points: int,
    dim: int = 3,
    seed: int = 0,
    scale: float = 10.0,
    with_infinity: bool = False,
    origin_at_first: bool = True,
) -> PointSpace:
    """Random Gaussian point cloud with the Euclidean metric (exact metric)."""
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_points, dim)) * scale
    ids = [f"p{k}" for k in range(n_points)]
    diff = pts[:, None, :] - pts[None, :, :]
    mat = np.sqrt((diff**2).sum(-1))
    space = PointSpace(
        ids,
        dist=mat,
        coords=pts,
        origin=ids[0] if origin_at_first else None,
        meta={"kind": "random_euclidean", "seed": seed, "dim": dim},
    )
    return add_infinity_point(space) if with_infinity else space


def random_quasimetric_space(
    n_points: int,
    K: float,
    dim: int = 3,
    seed: int = 0,
    scale: float = 10.0,
) -> PointSpace:
    """Random quasimetric d = rho * s with rho Euclidean and s in [1/K, K].

    The multiplicative noise is symmetric, so the declared constant ``K`` is
    valid by construction.
    """
    if K < 1.0:
        raise ValueError("K must be >= 1")
    base = random_euclidean_space(n_points, dim=dim, seed=seed, scale=scale)
    rng = np.random.default_rng(seed + 101)
    log_s = rng.uniform(-math.log(K), math.log(K), size=(n_points, n_points))
    log_s = np.triu(log_s, 1)
    s = np.exp(log_s + log_s.T)
    np.fill_diagonal(s, 1.0)
    mat = base.matrix() * s
    return PointSpace(
        base.ids,
        dist=mat,
        quasimetric_K=float(K),
        meta={"kind": "random_quasimetric", "seed": seed, "K": K},
    )
