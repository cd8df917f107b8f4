//! Furniture layout synthesis and repair for rectangular rooms.
//!
//! A planner groups assets and derives placement rules, a designer proposes
//! poses group by group, an evaluator flags semantic and physical problems,
//! and two disentangled refinement tools fix them: a feedback-driven semantic
//! refiner and a deterministic grid-matching physical refiner.

pub mod agents;
pub mod catalog;
pub mod config;
pub mod gen;
pub mod geometry;
pub mod grid_refine;
pub mod metrics;
pub mod orchestrator;
pub mod relations;
pub mod render;
pub mod scene;
