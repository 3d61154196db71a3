//! Recursive online estimation for time-varying ARCH processes.

pub mod anre;
pub mod cli;
pub mod curves;
pub mod experiments;
pub mod inference;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod simulator;
pub mod stats;
