pub mod cli;
pub mod env;
pub mod error;
pub mod eval;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod problem;
pub mod seed;
pub mod synth;
pub mod timewindow;
pub mod workers;

pub use error::{Error, Result};
