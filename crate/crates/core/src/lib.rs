//! Delayed coherent feedback on a cavity with one emitter: analytic series,
//! a delay-equation integrator, an explicit-reservoir reference, the
//! two-time correlator hierarchy and its many-photon closure.

pub mod analytic;
pub mod continuum;
pub mod dde;
pub mod factorized;
pub mod hierarchy;
pub mod metrics;
pub mod model;
pub mod presets;

pub use num_complex::Complex64;

pub use analytic::{
    empty_cavity_photon_number, jcm_ground_amplitude, mirror_emitter_amplitude, AnalyticError,
};
pub use continuum::{
    build_modes, build_modes_with, ContinuumError, CouplingProfile, ModeGrid, ModeSpec,
};
pub use dde::{
    integrate, integrate_with_drive, jcm_system, mirror_system, DdeError, DdeSolution,
    LinearDdeSystem,
};
pub use factorized::{run_factorized, FactorizedError, FactorizedRun};
pub use hierarchy::{HierarchyError, HierarchyOptions, HierarchyRun, InitialState, RhsVariant};
pub use metrics::{deviation, Deviation, MetricError};
pub use model::{gamma_tau, validate, ComplexTrajectory, ModelError, ModelParams, TimeGrid};
pub use presets::Regime;
