//! Software-in-the-loop evaluation of generated driving-function controllers.

pub mod config;
pub mod episode;
pub mod function;
pub mod generation;
pub mod oracle;
pub mod orchestrator;
pub mod protocol;
pub mod report;
pub mod sandbox;
pub mod scenario;
pub mod sim;
