//! Scenario parsing and sweep execution behind the `qkd-tha` binary.

pub mod config;
pub mod presets;
pub mod run;

pub use config::{Document, Plan, Variant};
pub use presets::Preset;
pub use run::{execute, write_csv, Row};
