//! Run I/O: the RNG, config files, feature tables and run traces.

pub mod config_file;
pub mod feature_table;
pub mod rng;
pub mod trace;
