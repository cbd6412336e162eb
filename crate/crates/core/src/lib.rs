//! Asymptotic key-rate analysis for continuous-variable QKD with
//! photon subtraction at the receiver.
//!
//! The crate is layered bottom-up:
//!
//! * [`coeffs`]: Fock-basis expansion coefficients and post-selection
//!   probabilities.
//! * [`covariance`]: closed-form covariance elements of the post-selected
//!   state and of the conventional (no subtraction) protocol.
//! * [`gausinfo`]: symplectic spectra, entropies and Holevo information of
//!   Gaussian surrogates.
//! * [`protocol`]: parameters and the key-rate formula.
//! * [`optimize`]: modulation optimization and maximum-distance search.
//! * [`oracle`]: an independent brute-force Fock-space simulator used to
//!   validate all of the above.

pub mod coeffs;
pub mod covariance;
pub mod error;
pub mod gausinfo;
pub mod optimize;
pub mod oracle;
pub mod protocol;
pub mod verify;

pub use error::{Error, Result};
pub use protocol::{
    key_rate, key_rate_vs_distance, DetEffPlacement, KeyRateResult, ProtocolParams,
    SubtractionMode,
};
