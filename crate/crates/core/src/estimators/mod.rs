//! Attribution estimators over a [`SetFunctionCache`](crate::masking::SetFunctionCache).
//!
//! * [`exact_shapley`] enumerates every coalition.
//! * [`permutation_estimate`] averages marginal contributions over sampled
//!   feature orderings.
//! * [`kernel_shap_solve`] fits the additive model by weighted least squares
//!   under the Shapley kernel, with the two infinite-weight coalitions
//!   turned into equality constraints.
//! * [`lime_baseline_solve`] is the same regression under an exponential
//!   proximity kernel, kept as a baseline.

mod exact;
mod explanation;
mod lasso;
mod linalg;
mod permutation;
mod regression;
mod sampling;

pub use exact::{exact_shapley, exact_shapley_capped, DEFAULT_EXACT_CAP};
pub use explanation::{default_feature_names, Explanation};
pub use permutation::permutation_estimate;
pub use regression::{
    kernel_shap_solve, lime_baseline_solve, lime_default_width, Regularization, RegressionRow,
    RegressionSystem, LASSO_PATH_LEN, LASSO_TOLERANCE,
};
pub use sampling::{sample_coalitions, CoalitionSample, SampledCoalition};

use crate::error::{Error, Result};

/// Weight of a coalition under the Shapley kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWeight {
    Finite(f64),
    /// Empty and full coalitions; handled as hard constraints.
    Infinite,
}

impl KernelWeight {
    pub fn finite(self) -> Option<f64> {
        match self {
            KernelWeight::Finite(w) => Some(w),
            KernelWeight::Infinite => None,
        }
    }
}

/// `(M - 1) / (C(M, s) · s · (M - s))`, infinite at `s ∈ {0, M}`.
pub fn shapley_kernel_weight(m: usize, s: usize) -> Result<KernelWeight> {
    if m == 0 {
        return Err(Error::Domain("kernel weight needs at least one feature".into()));
    }
    if s > m {
        return Err(Error::Domain(format!("coalition size {s} exceeds {m} features")));
    }
    if s == 0 || s == m {
        return Ok(KernelWeight::Infinite);
    }
    let denom = binomial(m, s) * (s * (m - s)) as f64;
    Ok(KernelWeight::Finite((m - 1) as f64 / denom))
}

/// `C(n, k)` in floating point, computed from `min(k, n - k)` so that the
/// result is bit-identical for `k` and `n - k`.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 1..=k {
        c = c * (n - k + i) as f64 / i as f64;
    }
    c.round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_weight_examples() {
        assert_eq!(shapley_kernel_weight(4, 1).unwrap(), KernelWeight::Finite(0.25));
        assert_eq!(shapley_kernel_weight(2, 1).unwrap(), KernelWeight::Finite(0.5));
        assert_eq!(shapley_kernel_weight(5, 0).unwrap(), KernelWeight::Infinite);
        assert_eq!(shapley_kernel_weight(5, 5).unwrap(), KernelWeight::Infinite);
    }

    #[test]
    fn kernel_weight_domain() {
        assert!(matches!(shapley_kernel_weight(3, 4), Err(Error::Domain(_))));
        assert!(matches!(shapley_kernel_weight(0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(12, 6), 924.0);
        assert_eq!(binomial(64, 32), binomial(64, 32));
    }
}
