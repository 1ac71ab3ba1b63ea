//! Numerical study of embedded eigenvalues of half-line Schrödinger
//! operators `-u'' + V u = k^2 u` with Coulomb-type potential decay
//! `limsup x |V(x)| = a`.
//!
//! The crate integrates the modified Pruefer form of the equation with
//! event-aware adaptive stepping ([`pruefer`]), synthesizes the
//! sign-flipping feedback potential whose solution decays like
//! `x^{-a/(k pi)}` ([`potential::PotentialSpec::FeedbackSign`]),
//! estimates decay exponents and renders eigenvalue verdicts against the
//! threshold `lambda = 4a^2/pi^2` ([`analysis`]), and cross-checks
//! everything against an independent fixed-step solver for the original
//! second-order equation ([`oracle`]).

pub mod analysis;
pub mod error;
pub mod io;
pub mod oracle;
pub mod potential;
pub mod pruefer;
mod rk;

pub use analysis::{
    fit_decay, fit_decay_samples, lower_envelope_check, max_eigenvalue_bound, per_period_integral,
    verdict, weighted_sin_integral, DecayFit, EigenvalueVerdict, OscillationReport, Verdict,
    WeightedSinIntegral,
};
pub use error::{Error, Result};
pub use io::{
    format_g17, read_trajectory_csv, write_events_csv, write_trajectory_csv, ImportedTrajectory,
};
pub use oracle::{
    cross_check, integrate_direct, l2_tail_pruefer, l2_tail_wave, Discrepancy, WaveSample,
    WaveTrajectory,
};
pub use potential::{
    estimate_envelope, export_table, import_table, sgn, tabulate, EnvelopeEstimate, Interp,
    PotentialSpec, Table,
};
pub use pruefer::{
    detect_crossings, from_wavefunction, integrate, pruefer_rhs, to_wavefunction, Crossing, Event,
    EventKind, IntegratorConfig, PrueferState, Sample, Termination, Trajectory,
};
