//! MPPI-IPDDP trajectory optimization.
//!
//! A sampling-based coarse search (MPPI) finds a collision-free path, ball
//! corridors are inflated around it, and an interior-point DDP solver
//! smooths the path inside the corridors. The loop repeats until the
//! controls stop changing.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Stage loops index states, controls and corridors by the same `t`.
#![allow(clippy::needless_range_loop)]

pub mod constraint;
pub mod corridor;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod geom;
pub mod ipddp;
pub mod mppi;
pub mod planner;
pub mod scenario;
pub mod vi;

pub use error::{Error, Result};
pub use nalgebra;
