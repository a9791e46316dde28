//! Behavioral modeling of RF power amplifiers whose characteristics drift
//! with slowly varying input power, plus identification, model-quality
//! metrics, and digital predistortion built on those models.
//!
//! The central object is the [`ltmodel::LtModel`]: a linear-in-parameters
//! nonlinear basis (memory polynomial, generalized memory polynomial, or
//! pruned Volterra) whose parameter vector varies linearly with one or more
//! low-pass-filtered power states. Identification alternates closed-form
//! least squares for the linear parameters with damped Gauss-Newton steps for
//! the state-filter poles and zeros.

pub mod basis;
pub mod dpd;
pub mod error;
pub mod ident;
pub mod ltmodel;
pub mod metrics;
pub mod pasim;
pub mod signal;
pub mod state;
pub mod twotone;

pub use basis::{BasisKind, BasisMatrix, BasisSpec};
pub use dpd::{fit_inverse, predistort, run_dpd_loop, DpdConfig, DpdOutcome, DpdSession};
pub use error::{Error, Result};
pub use ident::{fit, solve_theta, FitConfig, FitReport};
pub use ltmodel::{load_model, save_model, LtModel};
pub use metrics::{acepr_db, acpr_db, block_nmse, nmse_db, welch_psd};
pub use pasim::{default_doherty_like, mismatched_doherty_like, SyntheticPa};
pub use signal::{generate_bursty, generate_two_tone, read_iq, write_iq, BurstProfile, IqSignal};
pub use state::{compute_state, effective_memory, frequency_response, StateFilter};
pub use twotone::{
    extract_tone_magnitudes, fit_initial_filter, response_from_measurements, solve_static_params,
    SampledResponse, TwoToneMeasurement,
};
