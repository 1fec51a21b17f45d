"""Desk-scale toolkit for cross-ratio geometry.

Extended metrics and quasimetrics on finite point sets, Cayley-type metric
transforms, separation gauges and empirical distortion envelopes,
finite-scale rescaled panels for large- and small-scale limits, Heisenberg
group kernels with their Hilbert-space embedding, and metric cotype / Enflo
type estimation.
"""

from .space import (
    INDETERMINATE,
    PointSpace,
    Quadruple,
    MetricReport,
    chain_smooth,
    cross_ratio,
    estimate_quasimetric_k,
    is_indeterminate,
    snowflake,
    verify_extended_metric,
)
from .generate import (
    add_infinity_point,
    from_coords,
    generate_space,
    lp_grid,
    random_euclidean_space,
    random_quasimetric_space,
    real_line_grid,
    word_metric,
)
from .spaceio import load_point_map, load_space, save_point_map, save_space
from .transforms import (
    DefectReport,
    PointMap,
    cayley_transform,
    inverse_cayley_transform,
    moebius_defect,
    sample_quadruples,
)

__version__ = "0.1.0"
