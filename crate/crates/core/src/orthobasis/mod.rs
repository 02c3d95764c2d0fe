//! Orthonormal polynomial families, Gauss rules, multi-index sets and
//! polynomial design matrices.
//!
//! Every family is handled in standardized coordinates internally: uniform
//! marginals are mapped affinely to `[-1, 1]` (Legendre), Gaussian marginals
//! to `N(0, 1)` (probabilists' Hermite). All public inputs and outputs are in
//! physical units.

mod design;
mod family;
mod index_set;
mod quadrature;

pub use design::{design_matrix, BasisEvaluator};
pub use family::MarginalFamily;
pub use index_set::{IndexScheme, IndexSet, MultiIndex, DEFAULT_SIZE_CAP};
pub use quadrature::{gauss_rule, tensor_rule, tensor_rule_capped, QuadratureRule};
pub(crate) use family::{std_normal_cdf, std_normal_pdf};
pub(crate) use quadrature::gauss_rule_std;
