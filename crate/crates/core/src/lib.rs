pub mod cli;
pub mod complexity;
pub mod engine;
pub mod evaluation;
pub mod metrics;
pub mod space;
pub mod strategies;
