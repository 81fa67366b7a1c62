pub mod contract;
pub mod error;
pub mod harness;
pub mod node;
pub mod simnet;
pub mod tables;
pub mod types;
