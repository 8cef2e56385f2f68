//! Random walks on oriented honeycomb lattices.

pub mod cli;
pub mod embedded;
pub mod environment;
pub mod experiments;
pub mod lattice_walk;
pub mod oracle;
pub mod output;
pub mod rng;
pub mod skeleton;
pub mod stats;
