//! Library surface of the evaluation CLI: file ingestion, report
//! envelopes, and SVG emission. The binary in `main.rs` is a thin
//! dispatcher over these modules.

pub mod io;
pub mod report;
pub mod svg;
