pub mod agents;
pub mod bench;
pub mod engine;
pub mod fixtures;
pub mod graph;
pub mod registry;
pub mod tools;
