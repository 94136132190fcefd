//! Numerical models for photonic device-independent twin-field QKD.
//!
//! Two protocols are covered. In the *1-photon* protocol both parties pump a
//! two-mode squeezed vacuum (TMSV) source and send one arm to a central
//! station (Charlie) whose single click heralds a shared photon. In the
//! *2-photon* protocol Alice keeps the TMSV while Bob splits a heralded single
//! photon between his lab and the channel.
//!
//! Module map:
//! - [`fock_oracle`]: brute-force truncated Fock-space simulator used to check
//!   every closed form.
//! - [`sources`]: heralding probabilities and heralded density matrices.
//! - [`measurement`]: displacement + on/off detector statistics and the
//!   behaviour table p(a,b|x,y).
//! - [`bell`]: CHSH value, its optimization and threshold searches.
//! - [`keyrate`]: asymptotic rates with noisy preprocessing and distance sweeps.
//! - [`finite_key`]: tangent min-tradeoff functions and finite-size rates.
//! - [`optim`]: the derivative-free optimizers behind the searches.
//! - [`validation`]: the oracle-versus-closed-form test harness.

pub mod bell;
pub mod error;
pub mod finite_key;
pub mod fock_oracle;
pub mod keyrate;
pub mod measurement;
pub mod optim;
pub mod sources;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64;
