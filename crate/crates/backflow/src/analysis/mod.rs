//! Sweeps over the truncation order, eigenvector diagnostics, the analytic
//! trial-state bound, the classical Monte-Carlo check and the spectral window.

mod bounds;
mod classical;
mod eigvec;
mod sweep;
mod trial;

pub use bounds::{bounds_report, BoundsWindow, C_BM_ESTIMATE, C_BM_UPPER};
pub use classical::{classical_mc, wedge, ClassicalEstimate, Ensemble, McRng, PhaseSpaceEnsemble, CHUNK, MU};
pub use eigvec::{eigvec_distance, eigvec_profile, ProfilePoint, ProfileScale};
pub use sweep::{
    read_sweep_csv, spectrum_sweep, sweep_pair, write_sweep_csv, MonotonicityViolation, SpectrumSweep, SweepRecord,
    SweepRow, SweepSetup, SWEEP_CSV_HEADER, SWEEP_CSV_VERSION,
};
pub use trial::{
    chebyshev_u, g_kernel, s_and_k, s_function, trial_state_bound, trial_state_expectation, SkConstants,
    TrialResult, TrialState, TRIAL_TOL,
};
