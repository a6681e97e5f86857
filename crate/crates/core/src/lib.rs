//! Evolution of multi-stage heuristics with coordinator/coder LLM agents.
//!
//! An algorithm is split into N components, each a heuristic made of K stage
//! fragments. Candidates are designed stage by stage against intermediate
//! execution feedback (Stagewise-Design) or in one shot from references
//! (Global-Explore, Global-Enhance), evaluated out of process, and kept in a
//! top-M population.

pub mod agents;
pub mod bo;
pub mod config;
pub mod engine;
pub mod harness;
pub mod persist;
pub mod placement;
pub mod population;
pub mod report;
pub mod runner;
pub mod sandbox;
