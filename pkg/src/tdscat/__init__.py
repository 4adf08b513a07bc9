"""Time-domain acoustic scattering: forward synthesis and direct sampling
reconstruction of point-like and extended sound-soft scatterers."""

from ._kernels import HAVE_NUMBA, active_backend
from .bie import BieParams, SolverError, synth_bie_2d
from .forward import (
    NoiseSpec,
    ScatteredDataSet,
    ScattererConfig,
    add_noise,
    synth_point_model,
)
from .geometry import (
    BoundaryCurve,
    SamplingGrid,
    SurfaceGeometry,
    check_separation,
    make_boundary,
    make_circle_sensors,
    make_fibonacci_sphere_sensors,
    make_sampling_grid,
)
from .greenfn import (
    MediumSpec,
    greens2d_conv,
    greens3d_conv,
    greens_conv,
    point_scatter_response,
    sample_greens_conv,
    sample_point_response,
)
from .indicator import (
    INDICATOR_NAMES,
    IndicatorError,
    IndicatorField,
    SweepWorkspace,
    data_self_norm,
    discrete_conv,
    indicator_i1,
    indicator_i1prime,
    indicator_i2,
    indicator_i3,
    local_maxima,
    sweep,
    time_source_norm,
)
from .signal import SignalSpec, TimeGrid, eval_signal, sample_signal

__version__ = "0.1.0"
