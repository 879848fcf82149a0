//! Coherent and measurement-based feedback for two-level atoms in front of a
//! mirror-terminated waveguide.

pub mod dde;
pub mod error;
pub mod graph;
pub mod laplace;
pub mod network;
pub mod one_excitation;
pub mod open_system;
pub mod oracle;
pub mod sme;
pub mod two_excitation;

pub use num_complex::Complex64 as C64;

pub use dde::{integrate_dde, integrate_dde_forced, sample_history, AmplitudeTrajectory, HistoryBuffer};
pub use error::{Error, Result};
pub use network::{
    build_one_excitation_system, build_single_delay_matrices, build_two_excitation_pair_system,
    build_two_excitation_pair_system_with, coupling_coefficient, effective_rates, AtomSpec, DelaySystem, DelayTerm,
    DerivedRates, NetworkSpec, PairKernel,
};
pub use one_excitation::{
    characteristic_matrix, final_value_consensus_check, real_form_matrices, segment_one_analytic,
    simulate_one_excitation, OneExcitationRun,
};
pub use graph::{
    amplitude_consensus_metric, consensus_metric, reached_consensus, snapshot_one_excitation, snapshot_two_excitation,
    GraphSnapshot, CONSENSUS_TOLERANCE,
};
pub use open_system::{
    integrate_bloch, integrate_feedback_mean, integrate_lindblad, lindblad_step, steady_sigma_z,
    steady_sigma_z_feedback, BlochTrajectory, BlochVector, DriveParams, FeedbackParams,
};
pub use oracle::{compare_oracle_dde, schrodinger_one_excitation, KGrid, OracleRun};
pub use sme::{
    convergence_time, homodyne_record, predicted_fluctuation, run_ensemble, run_trajectory, sme_step, EnsembleRun,
    EnsembleStats, NoiseStream, SmeOptions, SmeScheme, Trajectory, TrajectoryState,
};
pub use two_excitation::{
    simulate_pair_amplitudes, simulate_single_photon_component, PairRun, PairState, SinglePhotonField,
};
