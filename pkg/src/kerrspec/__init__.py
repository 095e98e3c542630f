"""Resonance fluorescence of a driven, damped collective Kerr mode.

Simulates the steady-state emission spectrum of the mode, transforms it
through a thin-film absorption model into the spectrum observable outside
the structure, fits model parameters to measured spectra, and tests a
power series of fits for steady-state superfluorescence.
"""

from .collective import (
    MultiModeParams,
    SFReport,
    collective_reduce,
    oracle_multimode_steady,
    random_phases,
    sf_ratio,
)
from .dynamics import (
    Liouvillian,
    TruncationReport,
    build_liouvillian,
    converge_truncation,
    propagate,
    propagator,
    steady_state,
    truncation_scan,
    unvec,
    validate_density_matrix,
    vec,
)
from .fock import (
    CollectiveModelParams,
    annihilation,
    coherent_state,
    creation,
    expectation,
    hamiltonian,
    number_operator,
)
from .fitting import (
    FitConfig,
    FitResult,
    fit,
    format_fit_report,
    load_spectrum,
    model_spectrum,
    objective,
    read_fit_report,
    simulate_spectra,
)
from .medium import MediumParams, absorption, absorption_values, output_spectrum, susceptibility
from .spectra import (
    DETECTOR_FWHM_DEFAULT,
    CorrelationSeries,
    SpectrumSeries,
    asymmetry_functional,
    default_delta_grid,
    incoherent_spectrum,
    incoherent_spectrum_values,
    internal_spectrum_with_rayleigh,
    lorentzian,
    spectrum_from_correlation,
    two_time_correlation,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "CollectiveModelParams",
    "CorrelationSeries",
    "DETECTOR_FWHM_DEFAULT",
    "FitConfig",
    "FitResult",
    "Liouvillian",
    "MediumParams",
    "MultiModeParams",
    "SFReport",
    "SpectrumSeries",
    "TruncationReport",
    "absorption",
    "absorption_values",
    "annihilation",
    "asymmetry_functional",
    "build_liouvillian",
    "coherent_state",
    "collective_reduce",
    "converge_truncation",
    "creation",
    "default_delta_grid",
    "errors",
    "expectation",
    "fit",
    "format_fit_report",
    "hamiltonian",
    "incoherent_spectrum",
    "incoherent_spectrum_values",
    "internal_spectrum_with_rayleigh",
    "load_spectrum",
    "lorentzian",
    "model_spectrum",
    "number_operator",
    "objective",
    "oracle_multimode_steady",
    "output_spectrum",
    "propagate",
    "propagator",
    "random_phases",
    "read_fit_report",
    "sf_ratio",
    "simulate_spectra",
    "spectrum_from_correlation",
    "steady_state",
    "susceptibility",
    "truncation_scan",
    "two_time_correlation",
    "unvec",
    "validate_density_matrix",
    "vec",
]
