//! Rate-splitting multiple access over doubly-dispersive MIMO-OFDM channels
//! with a cluster-based hybrid SIC receiver and hybrid analog/digital
//! precoding.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod precoder_pso;
pub mod precoder_wmmse;
pub mod qcqp;
pub mod receiver;
pub mod rsma_model;

pub use error::{Error, Result};
