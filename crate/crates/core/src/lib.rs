//! Value-based order dispatch under nonstationary demand.
//!
//! * [`env`]: synthetic grid-cell dispatch environment producing transition tuples.
//! * [`valuation`]: value tables, DP and TD policy evaluation, Q-values.
//! * [`transfer`]: concordance penalty against a source value table and its
//!   subgradient solver.
//! * [`dispatch`]: per-window Kuhn-Munkres matching of drivers to orders.
//! * [`gpi`]: day-by-day policy iteration and the five compared policies.
//! * [`scenario`] and [`harness`]: config files, experiment grids and CSV output.

pub mod dispatch;
pub mod env;
pub mod error;
pub mod gpi;
pub mod harness;
pub mod scenario;
pub mod transfer;
pub mod valuation;

pub use error::{Error, Result};
