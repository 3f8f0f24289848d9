//! Pulse-level simulation of an NV-center electron spin hyperfine-coupled to a
//! single ¹³C nucleus: spin Hamiltonian and level scheme, selective MW/RF pulses
//! with decoherence, a small pulse-sequence language, canned experiments (Rabi,
//! Hahn echo, CROT gate, gate endurance), density-matrix tomography and a
//! stochastic optical readout model.
//!
//! Units: energies and frequencies in MHz, times in µs, fields in mT.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod noise;
pub mod pulse;
pub mod readout;
pub mod sequence;
pub mod spin_model;
pub mod state;
pub mod tomography;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use experiments::{InputState, Setup};
pub use linalg::{Operator, C64};
pub use noise::{free_evolution, Ensemble, Frame, NoiseParams};
pub use pulse::{
    apply_pulse_with_noise, evolve, pulse_propagator, rabi_trace, EnsembleState, PulseSpec,
    PulseTarget, RabiTrace,
};
pub use spin_model::{
    build_hamiltonian, build_spin_operators, calibrate_field, eigenlevels, transition_table,
    Channel, EnergyLevels, Level, MsBranch, SpinSystemParams, Transition, TransitionTable,
};
pub use readout::{ReadoutParams, ShotResult};
pub use sequence::{ParseDiagnostic, SequenceProgram};
pub use state::DensityMatrix;
pub use tomography::{fidelity, FidelityReport, TomographyRecord};
