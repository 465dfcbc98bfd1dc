//! Resolvent analysis of linearly forced periodic orbits on a time-spectral
//! collocation grid.
//!
//! The operator `i omega_f I - J_block + omega0 (D (x) I)` couples the
//! collocation points of a periodic envelope through a spectral
//! differentiation matrix; its inverse against an input map gives the
//! amplification of harmonic or quasi-periodic forcing. On top of the dense
//! core the crate provides:
//!
//! - orbit computation ([`baseflow`]): Newton with an integral phase
//!   condition for self-oscillating systems, analytic plane waves for the
//!   complex Ginzburg-Landau model;
//! - the neutral/adjoint characteristic pair and its modulated ladder
//!   ([`floquet`]);
//! - the projected (transverse) formulation for self-oscillating systems,
//!   where the exactly resonant phase direction is removed by an oblique
//!   projector and the leading singular triplet is found matrix-free
//!   ([`transverse`]);
//! - an equivalent harmonic (frequency-domain) assembly for cross checks
//!   ([`harmonic`]);
//! - time-domain validation by direct integration ([`validation`]).
//!
//! Stacking convention everywhere: collocation-major, entry `j*n + i` is
//! state component `i` at collocation point `j`.

pub mod baseflow;
pub mod error;
pub mod floquet;
pub mod grid;
pub mod harmonic;
pub mod linalg;
pub mod resolvent;
pub mod system;
pub mod transverse;
pub mod validation;

pub use baseflow::{
    cgl_plane_wave, collocation_residual, orbit_initial_guess, solve_orbit_newton, solve_vdp_orbit,
    trivial_base_flow, BaseFlow, BaseFlowRecord,
};
pub use error::{Result, TsrError};
pub use floquet::{
    adjoint_mode, eigen_ladder_check, floquet_ladders, floquet_pair, modulated_mode,
    neutral_mode, FloquetPair, FloquetPairRecord, LadderSummary,
};
pub use grid::{build_diff_matrix, centered_dft_matrix, dft_matrix, SpectralGrid};
pub use harmonic::{
    assemble_hr, convergence_study, dft_periodic_coeffs, equivalence_check, hr_gain,
    jacobian_fourier_coeffs, ts_to_hr_map, ConvergenceReport, EquivalenceReport, HrOperator,
};
pub use resolvent::{
    assemble_tsr, classical_resolvent_gain, normalize_modes, reconstruct_time_signal,
    solve_full_resolvent, InputMode, QuasiPeriodicSignal, ResolventSolution, TsrOperator, Variant,
};
pub use system::{cgl_system, mathieu_system, vdp_system, CglParams, MathieuParams, SystemModel, VdpParams};
pub use transverse::{
    apply_projector, build_fd_preconditioner, drift_coefficient, phase_drift_rate,
    projected_resolvent_action, reconstruct_from_transverse, reconstructed_gain, transverse_svd,
    FdPreconditioner, ObliqueProjector, TransverseSolveConfig,
};
pub use validation::{
    forcing_envelope, integrate, integrate_forced_envelope, measure_gain,
    nonlinear_perturbation_check, projected_forcing_envelope, stroboscopic_drift,
    stroboscopic_series, synthesize_forcing, transverse_component, ForcingEnvelope,
    GainMeasurement, IntegrationResult, MeasureOpts, OdeOptions, StroboSample,
};
