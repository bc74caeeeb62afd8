//! Simulation and training toolkit for studying communication-efficient
//! distributed SGD: synthetic objectives, compressors, a logical-switch
//! network simulator, collective schedules, mixing topologies, trainers and
//! an experiment harness.

pub mod collectives;
pub mod compression;
pub mod error;
pub mod harness;
pub mod netsim;
pub mod objective;
pub mod rng;
pub mod sampling;
pub mod time;
pub mod topology;
pub mod trainers;
pub mod vecops;

pub use error::{Error, Result};
pub use time::SimTime;
pub use vecops::ParamVector;
