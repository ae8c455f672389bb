//! Library side of the `anchordt` command-line tool: configuration files, run
//! manifests, SVG output and the command implementations.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;
