//! Special functions, log-space combinatorics, quadrature and optimizers
//! shared by the model code.

pub mod optimize;
pub mod quadrature;
pub mod search;
pub mod special;
pub mod transform;

pub use optimize::{find_root, minimize_scalar, minimize_simplex, SimplexOptions, SimplexResult};
pub use quadrature::{gauss_hermite, Quadrature, QuadratureRule, RuleKind};
pub use special::{
    ln_choose, ln_std_normal_cdf, log_binomial_pmf, log_sum_exp, std_normal_cdf,
    std_normal_quantile,
};
