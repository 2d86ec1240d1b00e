//! Factor-BART vector autoregression.
//!
//! A Bayesian VAR whose departures from linearity load on a few latent
//! factors, each with a sum-of-trees conditional mean in the lagged data:
//!
//! ```text
//! y_t = A x_t + Lambda_f f_t + Lambda_q q_t + eta_t,   eta_t ~ N(0, Omega)
//! f_t = mu(x_t) + w_t,                                  w_t ~ N(0, V_f)
//! q_t ~ N(0, V_q)
//! ```
//!
//! The crate covers Gibbs estimation ([`gibbs`]), synthetic data
//! ([`dgp`]), density forecasting and scoring ([`forecast`]), structural
//! impulse responses ([`structural`]) and data preparation ([`data`]).

pub mod bart;
pub mod data;
pub mod dgp;
pub mod error;
pub mod forecast;
pub mod gibbs;
pub mod horseshoe;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod structural;

pub use error::{Error, Result};
