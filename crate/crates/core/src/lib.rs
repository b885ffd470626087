//! PQ Index sparsity measurement and sparsity-informed adaptive pruning.
//!
//! The crate is organised bottom-up:
//!
//! * [`sparsity`] holds the pure numerical kernel: norms, the PQ Index, the
//!   Gini Index, the retention bound and the six-axiom property auditor.
//! * [`nn`] is a minimal dense network with a masked SGD trainer.
//! * [`pruning`] owns masks, pruning scopes and the iterative algorithms
//!   (One Shot, Lottery Ticket, SAP).
//! * [`data`] provides datasets and run-record persistence.
//! * [`harness`] binds configuration files to experiment runs and reports.

pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod pruning;
pub mod sparsity;

pub use error::{Error, Result};
