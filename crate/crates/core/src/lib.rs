pub mod model;
pub mod llm;
pub mod vertex;
pub mod embed;
pub mod learn;
pub mod eval;
pub mod dataset;
pub mod answer;
pub mod expert;
pub mod synth;
pub mod stac;
pub mod graph;
pub mod config;
pub mod workspace;
pub mod pipeline;
