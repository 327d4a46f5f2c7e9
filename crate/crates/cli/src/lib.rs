//! Specification language, exporters and report rendering for the msgsynth
//! command line.

pub mod dot;
pub mod parser;
pub mod printer;
