"""Bergman kernels, Fubini-Study currents and random zeros on the projective line.

Sections of ``O(p)`` are polynomials of degree at most ``p`` on the affine
chart; metrics are given by weights ``W`` with ``|1|_h = exp(-W)``.  The
Fubini-Study form is normalized to total mass one.
"""

from .geometry import (
    Chart,
    GridMeasure,
    TestFunction,
    default_family,
    fs_measure,
    fs_volume_density,
    integrate,
    measure_distance,
    point_measure,
)
from .weights import (
    Bump,
    Cone,
    Equilibrium,
    FubiniStudy,
    LogPole,
    MetricSchedule,
    Quadratic,
    ScheduleError,
    build_schedule,
    c3_norm,
    curvature,
    schedule_from_spec,
    BUILTIN_SCHEDULES,
    weight_from_spec,
)
from .bergman import (
    ConditioningError,
    KernelField,
    OrthoBasis,
    bergman_kernel,
    bfs2_residual,
    fubini_study_current,
    gram_matrix,
)
from .random_zeros import (
    EnsembleSpec,
    ZeroSample,
    empirical_measure,
    expected_log_sphere,
    find_zeros,
    sample_section,
    y_statistic,
    zeros_from_basis,
)
from .asymptotics import (
    BoundReport,
    ConvergenceTable,
    convergence_suite,
    e_function,
    envelope_functions,
    kernel_ratio_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "Chart",
    "GridMeasure",
    "TestFunction",
    "default_family",
    "fs_measure",
    "fs_volume_density",
    "integrate",
    "measure_distance",
    "point_measure",
    "Bump",
    "Cone",
    "Equilibrium",
    "FubiniStudy",
    "LogPole",
    "MetricSchedule",
    "Quadratic",
    "ScheduleError",
    "build_schedule",
    "c3_norm",
    "curvature",
    "schedule_from_spec",
    "BUILTIN_SCHEDULES",
    "weight_from_spec",
    "ConditioningError",
    "KernelField",
    "OrthoBasis",
    "bergman_kernel",
    "bfs2_residual",
    "fubini_study_current",
    "gram_matrix",
    "EnsembleSpec",
    "ZeroSample",
    "empirical_measure",
    "expected_log_sphere",
    "find_zeros",
    "sample_section",
    "y_statistic",
    "zeros_from_basis",
    "BoundReport",
    "ConvergenceTable",
    "convergence_suite",
    "e_function",
    "envelope_functions",
    "kernel_ratio_certificate",
]
