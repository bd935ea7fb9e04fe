//! Comparison solvers: forward tree search and a local placement solver.

pub mod local_nlp;
pub mod mbts;

pub use local_nlp::{local_nlp_place, LocalNlpConfig, LocalNlpError};
pub use mbts::{mbts_solve, MbtsBudget, MbtsOutcome, MBTS_C};
