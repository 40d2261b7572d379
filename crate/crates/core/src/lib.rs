//! Multi-agent occupancy forecasting, costmap construction and bandwidth-light trajectory
//! exchange, with a deterministic bird's-eye-view simulator and evaluation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod exchange;
pub mod forecast;
pub mod geometry;
pub mod grid;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
