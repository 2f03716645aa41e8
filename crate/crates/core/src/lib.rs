//! Reconstruction of a bottom profile from free-surface observations for two
//! regularised dispersive shallow-water models on the periodic domain
//! `[0, 2 pi)`.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instance used by the CLI and tests.

// negated comparisons are how NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod inversion;
pub mod observer;
pub mod pipeline;
pub mod scalar;
pub mod spectral;

pub use diagnostics::{
    conserved_monitors, energy_lower_bound_constant, fit_decay_rate, linear_error_energy, saturation_window,
    EnergyReport, Monitor,
};
pub use dynamics::{
    hamiltonian, profile, rk4_step, simulate, stokes_initial_condition, swe_rhs, BottomProfile, Nonlinearity,
    Operators, ProfileKind, ShallowWater, State,
};
pub use error::{Error, Result};
pub use inversion::{
    assemble_operator, assemble_rhs, eigenspectrum, error_metrics, eta_t_stencil, objective_value,
    solve_reconstruction, ErrorMetrics, ReconstructionReport, Snapshot, SnapshotSeries, SolveOptions,
};
pub use observer::{
    observer_rhs, params_for_decay, Observer, run_observer_coupled, run_observer_replay, MeasurementStream, ObserverParams,
    ObserverRun, ObserverSnapshot, RunSetup,
};
pub use pipeline::{
    choose_pipeline_params, observer_setup, reconstruct_coupled, reconstruct_coupled_from, reconstruct_from_snapshots,
    reconstruct_from_stream, reconstruct_from_stream_with, run_length, PipelineConfig, PipelineOutcome,
};
pub use scalar::Real;
pub use spectral::{
    apply_multiplier, apply_table, dealias, multiplier_omega2, multiplier_p, Field, Grid, ModelKind, ModelSpec, Symbol,
    SymbolTable,
};

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type State64 = State<f64>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type BottomProfile64 = BottomProfile<f64>;
