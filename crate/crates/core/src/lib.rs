pub mod baselines;
pub mod belief;
pub mod config;
pub mod cousins;
pub mod error;
pub mod harness;
pub mod joint;
pub mod mdp;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod wireless;

pub use error::{Error, Result};
