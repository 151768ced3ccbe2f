pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod types;

