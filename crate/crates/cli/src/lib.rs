//! Library surface of the `msgldm` binary: run configuration, subcommand
//! implementations, the SVG writer, and the property-verification suite.

pub mod commands;
pub mod config;
pub mod svg;
pub mod verify;
