"""Entanglement-assisted absorption spectroscopy: Gaussian-state models,
photon statistics, classical bounds, receivers and Monte-Carlo recognition."""

__version__ = "0.1.0"

from .gaussian_core import (  # noqa: E402
    ChannelEnv, DomainError, Gain, NonPhysicalStateError, SourceParams, TwoModeState,
    nulling_gain, opa_apply, qcb, return_state, tmsv_state,
)
from .photon_stats import JointPhotonPMF, joint_pmf_eval, joint_pmf_table  # noqa: E402
from .spectra_io import TransmissivityPattern, builtin_pattern, kpeak_patterns  # noqa: E402
from .simulation import ErrorEstimate, ExperimentConfig, estimate_error  # noqa: E402
