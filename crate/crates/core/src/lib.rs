//! Panel convergence toolkit: relative transition paths, the log-t
//! convergence test, convergence-club clustering with merging and
//! transition tests, binary probit estimation, and a synthetic-panel lab.

pub mod error;
pub mod clustering;
#[doc(hidden)]
pub mod float_repr;
pub mod logt;
pub mod panel;
pub mod probit;
pub mod simlab;

pub use error::{Error, Result};
