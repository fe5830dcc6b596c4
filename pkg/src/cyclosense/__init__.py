"""Cyclic-spectrum recovery of multiband signals from sub-Nyquist samples."""

from .correlation import CorrelationTensor, SpectralFrames, shifted_correlation, spectral_frames
from .detect import (
    DetectionReport,
    PeakSet,
    TransmissionEstimate,
    detect_transmissions,
    energy_detect_baseline,
    energy_estimate_report,
    preprocess,
    single_cycle_detect,
    threshold_peaks,
)
from .harness import ExperimentConfig, MetricsTable, emit_results, run_monte_carlo, run_roc
from .pipeline import PipelineResult, grid_nmse, nyquist_reference_grid, run_recovery
from .recovery import (
    RecoveredSlices,
    SelectionLayout,
    StructuredOperator,
    SupportSet,
    build_operator,
    complementary_set,
    ctf_reduce,
    recover_psd,
    recover_slices,
    sbr2_bisection,
    selection_layout,
    structured_omp,
)
from .sampler import (
    ChannelSamples,
    MulticosetConfig,
    MwcConfig,
    SensingMatrix,
    min_rate_bounds,
    multicoset_matrix,
    mwc_matrix,
    simulate_sampling,
    slice_index_offsets,
    spark_lower_check,
)
from .signals import (
    DiamondSet,
    NyquistSignal,
    SignalConfig,
    TransmissionSpec,
    compose_signal,
    synthesize_transmission,
    theoretical_features,
    theoretical_support,
)
from .spectrum import CyclicSpectrumGrid, assemble, index_map, profile_at_zero_f

__version__ = "0.1.0"

__all__ = [
    "CorrelationTensor",
    "SpectralFrames",
    "shifted_correlation",
    "spectral_frames",
    "DetectionReport",
    "PeakSet",
    "TransmissionEstimate",
    "detect_transmissions",
    "energy_detect_baseline",
    "energy_estimate_report",
    "preprocess",
    "single_cycle_detect",
    "threshold_peaks",
    "ExperimentConfig",
    "MetricsTable",
    "emit_results",
    "run_monte_carlo",
    "run_roc",
    "PipelineResult",
    "grid_nmse",
    "nyquist_reference_grid",
    "run_recovery",
    "RecoveredSlices",
    "SelectionLayout",
    "StructuredOperator",
    "SupportSet",
    "build_operator",
    "complementary_set",
    "ctf_reduce",
    "recover_psd",
    "recover_slices",
    "sbr2_bisection",
    "selection_layout",
    "structured_omp",
    "ChannelSamples",
    "MulticosetConfig",
    "MwcConfig",
    "SensingMatrix",
    "min_rate_bounds",
    "multicoset_matrix",
    "mwc_matrix",
    "simulate_sampling",
    "slice_index_offsets",
    "spark_lower_check",
    "DiamondSet",
    "NyquistSignal",
    "SignalConfig",
    "TransmissionSpec",
    "compose_signal",
    "synthesize_transmission",
    "theoretical_features",
    "theoretical_support",
    "CyclicSpectrumGrid",
    "assemble",
    "index_map",
    "profile_at_zero_f",
    "__version__",
]
