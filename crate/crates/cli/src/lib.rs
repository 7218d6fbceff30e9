//! Building blocks of the `franson-sec` binary: sweep specifications and
//! presets, the closed-form verification grid, and atomic output writing.

pub mod output;
pub mod sweep;
pub mod verify;

/// Version tag written into every CSV and JSON output.
pub const SCHEMA_VERSION: u32 = 1;
