//! Matrix persistence, run configuration and the command-line front end.

pub mod cli;
pub mod config;
pub mod csv_matrix;
pub mod matrix_file;

pub use csv_matrix::{parse_csv_matrix, read_csv_matrix, write_csv_matrix};
pub use matrix_file::{decode_matrix, encode_matrix, read_matrix, write_matrix};
pub use config::{DataSource, RunConfig, SynthSource};
pub use cli::cli_main;
