//! Streaming approximate message passing.
//!
//! Inference engines for generalized linear models ([`glm_amp`]) and
//! Gaussian-mixture clustering ([`lowrank`]) that process data in
//! mini-batches, carrying the posterior forward as an effective prior, together
//! with the deterministic theory that predicts their behaviour: state evolution
//! ([`state_evolution`]) and the replica mutual information ([`replica`]).
//!
//! ```
//! use miniamp_core::denoisers::PriorSpec;
//! use miniamp_core::state_evolution::{se_offline, SeOptions};
//! use miniamp_core::denoisers::ChannelSpec;
//!
//! let prior = PriorSpec::gauss_bernoulli(0.3).unwrap();
//! let channel = ChannelSpec::gaussian(1e-8).unwrap();
//! let traj = se_offline(&prior, &channel, 2.0, &SeOptions::default()).unwrap();
//! assert!(traj.final_mse() < 1e-7);
//! ```

pub mod denoisers;
pub mod error;
pub mod glm_amp;
pub mod lowrank;
pub mod quadrature;
pub mod replica;
pub mod special;
pub mod state_evolution;
pub mod synthetic;

pub use error::{Error, Result};
