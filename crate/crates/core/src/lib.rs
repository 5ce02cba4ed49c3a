//! Finite-volume mini-LES toolkit: numerical-dissipation budgets, index-quality
//! error estimators and a single octree adaptation cycle driven by them.

pub mod adapt;
pub mod budget;
pub mod commands;
pub mod config;
pub mod error;
pub mod estimators;
pub mod io;
pub mod mesh;
pub mod pipeline;
pub mod report;
pub mod sgs;
pub mod solver;
pub mod stats;
pub mod vec3;

pub use error::{Error, Result};
