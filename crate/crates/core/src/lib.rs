//! NORTA scenario generation and out-of-sample testing for two-stage
//! flood-hardening stochastic programs with DC power-flow recourse.

pub mod cli;
pub mod error;
pub mod grid;
pub mod lp;
pub mod norta;
pub mod quadrature;
pub mod scenario;
pub mod stats;
pub mod twostage;

pub use error::{Error, Result};
pub use norta::NortaModel;
pub use scenario::ScenarioSet;
pub use stats::{CorrelationMatrix, EmpiricalMarginal};
