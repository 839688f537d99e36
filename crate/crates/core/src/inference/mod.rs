//! Truncated test factors, the simplified PBR protocol, the adaptive SNR
//! estimator and p-value conversions.

mod pbr;
mod sigma;
mod snr;
mod truncation;

pub use pbr::{optimize_weights, BlockReport, PbrRun, PbrState, DEFAULT_BLOCK_SIZE};
pub use sigma::{logp_to_sigma, sigma_to_logp};
pub use snr::{estimate_snr, SnrEstimate, SnrState};
pub use truncation::{
    balance_shift, choose_truncation, make_candidates, make_test_factor, per_setting_stats, TestFactor,
    Truncated, TruncationParams, DEFAULT_W_FRACTIONS,
};
