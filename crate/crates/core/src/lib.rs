pub mod dialect;
pub mod engine;
pub mod ingest;
pub mod model;
pub mod validate;
pub mod convert;
pub mod mdp;
pub mod prism;
