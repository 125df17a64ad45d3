//! Configuration and orchestration behind the `symspec` binary.

pub mod config;
pub mod run;

pub use config::Config;
pub use run::{run, Manifest};
