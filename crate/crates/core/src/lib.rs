//! Temporal parallelization of finite-horizon optimal control.
//!
//! Dynamic programming and the linear quadratic tracker are written as
//! associative scans over per-step elements, so the backward value-function
//! pass and the forward trajectory pass both run in logarithmic combine depth.

pub mod bench;
pub mod finite_dp;
pub mod lqt;
pub mod nonlinear;
pub mod scan;
