use rayon::prelude::*;

use super::{binomial, Explanation};
use crate::error::{Error, Result};
use crate::masking::{Coalition, SetFunctionCache};
use crate::model::Predict;

/// Largest feature count enumerated by default (`2^20` coalitions).
pub const DEFAULT_EXACT_CAP: usize = 20;

pub fn exact_shapley<P: Predict>(cache: &SetFunctionCache<P>) -> Result<Explanation> {
    exact_shapley_capped(cache, DEFAULT_EXACT_CAP)
}

/// Exact Shapley values by summing weighted marginal contributions over all
/// `2^M` coalitions.
pub fn exact_shapley_capped<P: Predict>(cache: &SetFunctionCache<P>, cap: usize) -> Result<Explanation> {
    let m = cache.n_players();
    if m > cap || m > 30 {
        return Err(Error::BudgetRefused {
            features: m,
            cap: cap.min(30),
        });
    }
    let n_masks = 1u64 << m;
    let values: Vec<f64> = (0..n_masks)
        .into_par_iter()
        .map(|mask| cache.value(&Coalition::from_mask(m, mask)))
        .collect();

    // |S|!(M-|S|-1)!/M! = 1 / (M · C(M-1, |S|))
    let weights: Vec<f64> = (0..m)
        .map(|s| 1.0 / (m as f64 * binomial(m - 1, s)))
        .collect();

    let phi = (0..m)
        .map(|i| {
            let bit = 1u64 << i;
            let mut acc = 0.0;
            for mask in 0..n_masks {
                if mask & bit == 0 {
                    let delta = values[(mask | bit) as usize] - values[mask as usize];
                    if delta != 0.0 {
                        acc += weights[mask.count_ones() as usize] * delta;
                    }
                }
            }
            acc
        })
        .collect();

    Ok(Explanation::new(values[0], phi, "exact", cache.evaluations(), 0))
}
