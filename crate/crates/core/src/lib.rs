//! Graph-structured conic optimization for battery sizing co-design of
//! offshore wind interconnections.

pub mod conic;
pub mod exec;
pub mod graph;
pub mod grid;
pub mod mib;
pub mod pareto;
