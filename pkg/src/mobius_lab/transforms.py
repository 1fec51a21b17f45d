"""Cayley-type metric transforms and the Moebius defect of point maps.

The metric Cayley transform at a finite point p sends p to infinity by
d_p(x,y) = d(x,y) / (d(x,p) d(p,y)); the inverse transform at a finite point
q bounds an unbounded space by d^q(x,y) = d(x,y) / ((1+d(x,q))(1+d(y,q))),
turning the old infinity point into a regular point.  Both preserve every
cross ratio exactly, which the defect measurement below quantifies for
arbitrary maps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .space import PointSpace, Quadruple, cross_ratio, estimate_quasimetric_k

__all__ = [
    "PointMap",
    "cayley_transform",
    "inverse_cayley_transform",
    "count_quadruples",
    "sample_quadruples",
    "DefectReport",
    "moebius_defect",
]


@dataclass
class PointMap:
    """A total assignment of source point ids to target point ids."""

    source: PointSpace
    target: PointSpace
    assignment: dict

    def __post_init__(self):
        missing = [i for i in self.source.ids if i not in self.assignment]
        if missing:
            raise ValueError(f"map not total; missing {missing[:5]}")
        bad = [v for v in self.assignment.values() if v not in self.target.index]
        if bad:
            raise ValueError(f"map hits unknown target ids {bad[:5]}")

    def __call__(self, pid: str) -> str:
        return self.assignment[pid]

    @classmethod
    def identity(cls, source: PointSpace, target: Optional[PointSpace] = None) -> "PointMap":
        """Identity assignment; target defaults to the source itself."""
        target = source if target is None else target
        return cls(source, target, {i: i for i in source.ids})

    def inverse(self) -> "PointMap":
        inv = {}
        for src, dst in self.assignment.items():
            if dst in inv:
                raise ValueError("map is not injective; cannot invert")
            inv[dst] = src
        return PointMap(self.target, self.source, inv)


def _estimated_k(space: PointSpace) -> Optional[float]:
    # The transforms generally leave the exact-metric class, so the output is
    # certified only as a quasimetric with an empirical constant.
    try:
        return estimate_quasimetric_k(space).K_est
    except ValueError:
        return None


def cayley_transform(space: PointSpace, p: str) -> PointSpace:
    """Invert the metric at the finite point p, which becomes infinity.

    On the remaining points d_p(x,y) = d(x,y)/(d(x,p) d(p,y)); a previously
    declared infinity point becomes a regular point at d_p(x,*) = 1/d(x,p).
    The output's relaxation constant is re-estimated, never assumed.
    """
    space.check_ids(p)
    if p == space.infinity_point:
        raise ValueError("cannot take the Cayley transform at the infinity point")
    mat = space.matrix()
    ip = space.index[p]
    v = mat[:, ip].copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        out = mat / np.outer(v, v)
    if space.infinity_point is not None:
        istar = space.index[space.infinity_point]
        with np.errstate(divide="ignore"):
            row = 1.0 / v
        out[istar, :] = row
        out[:, istar] = row
        out[istar, istar] = 0.0
    out[ip, :] = math.inf
    out[:, ip] = math.inf
    np.fill_diagonal(out, 0.0)
    meta = dict(space.meta)
    meta["k_status"] = "estimated"
    result = space.with_matrix(out, infinity_point=p, quasimetric_K=None, meta=meta)
    result.quasimetric_K = _estimated_k(result)
    return result


def inverse_cayley_transform(space: PointSpace, q: str) -> PointSpace:
    """Bound the space at the finite point q; infinity becomes a regular point.

    d^q(x,y) = d(x,y)/((1+d(x,q))(1+d(y,q))) on the former finite part and
    d^q(x,*) = 1/(1+d(x,q)); the output has no infinity point and every
    distance is bounded.  The relaxation constant is re-estimated.
    """
    if space.infinity_point is None:
        raise ValueError("inverse Cayley transform requires an infinity point")
    space.check_ids(q)
    if q == space.infinity_point:
        raise ValueError("q must be a finite point")
    mat = space.matrix()
    iq = space.index[q]
    istar = space.index[space.infinity_point]
    g = 1.0 / (1.0 + mat[:, iq])
    g[istar] = 1.0  # placeholder; the star row is set explicitly below
    out = mat * np.outer(g, g)
    out[istar, :] = g
    out[:, istar] = g
    out[istar, istar] = 0.0
    np.fill_diagonal(out, 0.0)
    meta = dict(space.meta)
    meta["k_status"] = "estimated"
    meta["former_infinity"] = space.infinity_point
    result = space.with_matrix(out, infinity_point=None, quasimetric_K=None, meta=meta)
    result.quasimetric_K = _estimated_k(result)
    return result


# ----------------------------------------------------------------------
# quadruple sampling
# ----------------------------------------------------------------------
def count_quadruples(n: int) -> int:
    """Number of ordered quadruples of four distinct points."""
    if n < 4:
        return 0
    return n * (n - 1) * (n - 2) * (n - 3)


def _decode_quadruple(ids: list, code: int) -> Quadruple:
    n = len(ids)
    rest = list(range(n))
    picks = []
    for radix in (n, n - 1, n - 2, n - 3):
        code, r = divmod(code, radix)
        picks.append(rest.pop(r))
    x, y, z, w = (ids[k] for k in picks)
    return Quadruple(x, y, z, w)


def sample_quadruples(ids, budget: int, seed: int = 0) -> Iterator[Quadruple]:
    """Deterministic quadruples of distinct points: exhaustive when the count
    fits the budget, otherwise seeded uniform sampling without replacement."""
    ids = list(ids)
    total = count_quadruples(len(ids))
    if total == 0:
        return
    if total <= budget:
        for code in range(total):
            yield _decode_quadruple(ids, code)
        return
    rng = np.random.default_rng(seed)
    seen = set()
    produced = 0
    while produced < budget:
        code = int(rng.integers(total))
        if code in seen:
            continue
        seen.add(code)
        produced += 1
        yield _decode_quadruple(ids, code)


@dataclass
class DefectReport:
    defect: Optional[float]
    worst_quadruple: Optional[Quadruple]
    n_admissible: int
    n_sampled: int
    status: str  # "ok" | "no admissible quadruple"


def moebius_defect(point_map: PointMap, sample_budget: int, seed: int = 0) -> DefectReport:
    """Worst log-distortion of cross ratios over sampled quadruples.

    Only quadruples whose source and image cross ratios are both positive and
    finite contribute; the defect is sup |log CR_image - log CR_source|, zero
    exactly for Moebius maps.  Ties are broken lexicographically on the
    quadruple ids so runs are reproducible.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    best: Optional[float] = None
    worst_quad: Optional[Quadruple] = None
    n_adm = n_sampled = 0
    for quad in sample_quadruples(point_map.source.ids, sample_budget, seed=seed):
        n_sampled += 1
        s = cross_ratio(point_map.source, quad)
        if not (0.0 < s < math.inf):
            continue
        try:
            image = Quadruple(*(point_map(i) for i in quad.as_tuple()))
        except ValueError:
            continue
        t = cross_ratio(point_map.target, image)
        if not (0.0 < t < math.inf):
            continue
        n_adm += 1
        dev = abs(math.log(t) - math.log(s))
        if (
            best is None
            or dev > best
            or (dev == best and quad.as_tuple() < worst_quad.as_tuple())
        ):
            best, worst_quad = dev, quad
    if n_adm == 0:
        return DefectReport(None, None, 0, n_sampled, "no admissible quadruple")
    return DefectReport(best, worst_quad, n_adm, n_sampled, "ok")
