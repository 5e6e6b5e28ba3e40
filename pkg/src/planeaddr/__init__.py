"""Simulation and analysis toolkit for plane-selective addressing of atoms in 3D tweezer arrays."""
from .core import (
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    NumericalFailure,
    PlaneAddrError,
    TrapParams,
    TruncationWarning,
    fwhm_to_sigma,
    sigma_to_fwhm,
    thermal_weights,
    to_angular,
)
from .fockdyn import (
    DetuningNoise,
    HS1Pulse,
    SpinMotionState,
    SquarePulse,
    build_hamiltonian,
    evolve,
    hs1_fidelity_mc,
    pi_pulse_fidelity_mc,
    sideband_rabi,
)
from .lineshape import LineModel, SpectrumTrace, convolve_gaussian, fwhm, steady_state_spectrum, synth_triple_lorentzian
from .fields import ArrayGeometry, FieldConfig, field_magnitude, plane_sensitivity, site_detuning_map, zeeman_shift
from .budget import NoiseBudget, ionization_rate, per_source_infidelity, quadrature_total
from .crosstalk import AddressingScenario, crosstalk_error, distance_sweep, plane_spectrum
from .hologram import OpticsParams, SiteWeights, SlmGrid, elementary_phase, homogenize, propagate, superpose, verify_spots
from .inference import (
    RBDecayRegressor,
    ShelvedRabiParams,
    ShelvedRabiRegressor,
    excitation_fidelity,
    fit_shelved_rabi,
    init_population,
    pumping_markov,
    rb_decay_fit,
    repump_fidelity,
    shelved_rabi_model,
)

__version__ = "0.1.0"
