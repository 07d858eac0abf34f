//! k-support norm regularized linear prediction.
//!
//! The k-support norm is the gauge of the convex hull of all k-sparse
//! vectors with unit l2 norm. It interpolates between l1 (`k = 1`) and l2
//! (`k = d`) and is never more than a factor `sqrt(2)` away from the
//! corresponding elastic-net norm.
//!
//! - [`norms`]: exact norm and dual-norm evaluation.
//! - [`prox`]: proximity operators, including the squared k-support norm.
//! - [`solver`]: accelerated proximal gradient for squared loss.
//! - [`data`]: datasets, file readers, splits and the synthetic generator.
//! - [`selection`]: grid search, metrics and the replicated experiment.
//!
//! ```
//! use ksupport::norms::{ksup_norm, ksup_dual_norm};
//!
//! let w = [2.0, 1.0, 1.0];
//! let b = ksup_norm(&w, 2).unwrap();
//! assert_eq!(b.r, 1);
//! assert!((b.value - 8f64.sqrt()).abs() < 1e-12);
//! assert!((ksup_dual_norm(&[3.0, 2.0, 1.0], 2).unwrap() - 13f64.sqrt()).abs() < 1e-12);
//! ```

pub mod data;
pub mod design;
pub mod error;
pub mod exec;
pub mod fmt;
pub mod norms;
pub mod prox;
pub mod selection;
pub mod solver;

pub use error::{Error, Result};
