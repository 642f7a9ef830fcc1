//! Store-Forward networks, the Proportional Scheduler and BackPressure on
//! multi-hop switch networks.
//!
//! The crate computes the product-form stationary quantities of FIFO-routed
//! Store-Forward networks (normalizing constant, allocation, stationary law,
//! mean queue lengths and route delays), solves the proportional-fair
//! allocation, simulates all three policies, and checks the structural
//! results (balance, independence, large-deviation rate) numerically.

pub mod analysis;
pub mod catalog;
pub mod config;
pub mod error;
pub mod graph;
mod lp;
pub mod network;
pub mod phi;
pub mod propfair;
pub mod sim;
pub mod state;
pub mod stats;
pub mod storeforward;

pub use error::{Error, Result};
pub use graph::InterferenceGraph;
pub use network::{compute_loads, Capacity, CapacityPolytope, LoadProfile, NetworkSpec, Route, Schedule};
pub use phi::{phi_bruteforce, PhiCache};
pub use propfair::{decompose_mean, pf_solve, pf_solve_weighted, sf_pf_gap, PfSolution, ScheduleDistribution};
pub use state::{Allocation, FifoContents, NetworkState, PoolOccupancy, QueueVector};
