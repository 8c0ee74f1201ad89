"""
wgmbench: forward model and analysis toolkit for strain-tunable
whispering-gallery-mode microspheres.
"""

from .coupling import CouplerConfig, coupling_rate, dip_depth, loaded_q, rates_from_dip, steady_state_dip
from .errors import (
    CalibrationError,
    CapabilityError,
    DomainError,
    FitError,
    ScenarioError,
    SchemaError,
    SolverError,
    WGMError,
)
from .resonance import solve_resonance, solve_size_parameter
from .scenario import Scenario, builtin_scenario
from .spectra import (
    DipLine,
    ScanSeries,
    ScanTrace,
    ScanWindow,
    TwoModeCoupling,
    avoided_crossing,
    doublet_frequencies,
    synthesize_pzt_series,
    synthesize_trace,
)
from .sphere import (
    ModeId,
    ModeResonance,
    Polarization,
    SphereGeometry,
    free_spectral_range,
    max_angular_momentum,
    mode_volume_estimate,
    q_from_attenuation,
    q_from_linewidth,
    size_parameter,
)
from .tuning import DeviceGeometry, TuningParameters, pzt_chain, strain_for_one_fsr

__version__ = "0.1.0"
