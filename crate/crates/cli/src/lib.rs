//! Library half of the `gard` command-line tool.

pub mod config;
