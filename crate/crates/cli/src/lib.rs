//! Library side of the `fadogate` command-line tool.

pub mod commands;
pub mod manifest;
pub mod synth;
