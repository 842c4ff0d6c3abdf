//! IO, file formats and command implementations for the maskpad CLI.

pub mod commands;
pub mod config;
pub mod report;
pub mod storage;
