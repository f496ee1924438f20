//! IO companion for the flow engine: run configurations, binary snapshots,
//! CSV diagnostics, manifests, and the subcommand implementations behind the
//! `g2flow` binary.

pub mod commands;
pub mod config;
pub mod formats;
pub mod manifest;
