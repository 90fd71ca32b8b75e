"""OFDM MIMO integrated sensing and communication toolkit.

Simulates scenes with angularly and range-spread ray-cluster targets,
estimates their direction/angular-spread (truncated subspace spectra) and
distance/range-spread (delay-profile thresholding), and synthesizes transmit
beamformers that maximize radar illumination under per-user rate floors.
"""

from .scene import (
    SPEED_OF_LIGHT,
    ArrayConfig,
    ClusterTarget,
    DownlinkUser,
    OfdmConfig,
    RayRealization,
    ReceivedFrame,
    ScenarioConfig,
    downlink_channel,
    radar_channel,
    sample_rays,
    simulate_frame,
    steering_vector,
    transmit_symbols,
)
from .spread_model import (
    char_uniform,
    d_diag,
    d_tilde_diag,
    j_approx,
    j_exact,
    phi_matrix,
    phi_tilde_matrix,
)
from .angle_est import (
    AngleEstimate,
    CovarianceEstimate,
    SearchGrid,
    SpreadSpectrum,
    SubspaceSplit,
    cms_spectrum,
    denoise,
    estimate_angles,
    sample_covariance,
    select_rank,
    subspace_split,
    tms_approx_spectrum,
    tms_spectrum,
)
from .range_est import (
    NormalizedSeries,
    RangeEstimate,
    RangeProfile,
    conditional_reference,
    estimate_range,
    extract_range,
    normalize_received,
    range_profile,
)
from .beamform import (
    BeamformerSolution,
    RadarObjective,
    achieved_rate,
    achieved_sinr,
    beampattern,
    candidate_beamformer,
    radar_objective,
    radar_snr,
    solve_beamformer,
)
from .harness import (
    RmseRow,
    RmseTable,
    RunSetup,
    SweepSpec,
    TrialResult,
    load_run,
    load_scenario,
    load_sweep,
    noise_var_for_snr,
    run_sweep,
    run_trial,
)

__version__ = "0.1.0"
