pub mod geometry;
pub mod extraction;
pub mod render;
pub mod simenv;
pub mod policy;
pub mod datasets;
pub mod predictor;
pub mod orchestrator;
pub mod service;
pub mod corpus;
