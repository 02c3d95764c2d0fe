//! Global and extremum sensitivity analysis of black-box models with
//! polynomial chaos expansions.
//!
//! The crate is organised bottom-up:
//!
//! * [`orthobasis`]: orthonormal univariate families, Gauss rules, multi-index
//!   sets and design matrices.
//! * [`pce`]: least-squares surrogates, moments and coefficient-based Sobol'
//!   indices.
//! * [`ridge`]: subspace estimation, ridge fits and lifting of ridge
//!   coefficients to the full-space basis.
//! * [`skewness`]: third-moment sensitivity indices.
//! * [`extremum`]: Monte Carlo filtering and extremum Sobol' indices under the
//!   correlated measure of the filtered samples.
//! * [`sparse`]: least angle regression and the adaptive sparse fit.
//! * [`qmc`]: Sobol' low-discrepancy points and pick-freeze estimators.
//! * [`bench`]: the benchmark models used throughout the tests.

pub mod bench;
pub mod error;
pub mod extremum;
pub mod linalg;
pub mod model;
pub mod orthobasis;
pub mod pce;
pub mod qmc;
pub mod report;
pub mod ridge;
pub mod sampling;
pub mod skewness;
pub mod sparse;
pub mod subset;

pub use error::{Error, Result};
pub use model::{FnModel, Model};
pub use orthobasis::{IndexSet, IndexScheme, MarginalFamily, MultiIndex, QuadratureRule};
pub use pce::{SampleSet, Surrogate};
pub use report::{ReportKind, SensitivityReport};
pub use subset::Subset;
