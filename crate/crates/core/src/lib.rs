//! Panel-econometrics engine for estimating research-funding effects with
//! constructed instrumental variables: panel assembly, topic modeling,
//! instrument construction, 2SLS estimation, a diagnostics battery,
//! robustness checks, and a synthetic-data oracle.

pub mod design;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod instruments;
pub mod linalg;
pub mod panel;
pub mod report;
pub mod robustness;
pub mod synthgen;
pub mod topics;

pub use error::{Error, Result};
