//! Local surrogate fits of the additive model `g(z) = φ0 + Σ φ_i z_i`.
//!
//! Under the Shapley kernel the empty and full coalitions carry infinite
//! weight. They are not added as rows; instead `φ0 = f_x(∅)` is fixed and
//! one attribution is eliminated through `Σ φ = f(x) − φ0`, which leaves an
//! ordinary weighted least squares problem in the remaining attributions.

use super::lasso::{coordinate_descent, Quadratic};
use super::linalg::NormalEquations;
use super::{CoalitionSample, Explanation};
use crate::error::{Error, Result};
use crate::masking::{Coalition, SetFunctionCache};
use crate::model::Predict;

/// Number of penalties tried when the lasso penalty is chosen automatically.
pub const LASSO_PATH_LEN: usize = 5;
/// Coordinate descent stops once no coefficient moves more than this.
pub const LASSO_TOLERANCE: f64 = 1e-9;

const LASSO_MAX_SWEEPS: usize = 100_000;
/// Cross-validation folds used to score penalties.
const LASSO_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    None,
    /// L1 support selection then an unpenalized refit on the support.
    /// `None` picks the penalty on held-out coalitions.
    DebiasedLasso(Option<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    pub coalition: Coalition,
    pub value: f64,
    pub weight: f64,
    pub count: u32,
}

/// Observed coalition values together with the two eliminated constraints.
#[derive(Debug, Clone)]
pub struct RegressionSystem {
    n_players: usize,
    rows: Vec<RegressionRow>,
    base_value: f64,
    full_value: f64,
}

impl RegressionSystem {
    pub fn build<P: Predict>(cache: &SetFunctionCache<P>, sample: &CoalitionSample) -> Result<Self> {
        let m = cache.n_players();
        if sample.n_players != m {
            return Err(Error::InputShape {
                what: "coalition sample",
                expected: m,
                actual: sample.n_players,
            });
        }
        for e in &sample.entries {
            let size = e.coalition.size();
            if e.coalition.len() != m {
                return Err(Error::InputShape {
                    what: "coalition",
                    expected: m,
                    actual: e.coalition.len(),
                });
            }
            if size == 0 || size == m {
                return Err(Error::Domain(
                    "empty and full coalitions are constraints, not regression rows".into(),
                ));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::Domain(format!("coalition weight {} is not positive", e.weight)));
            }
        }
        let coalitions: Vec<Coalition> = sample.coalitions().cloned().collect();
        cache.prefill(&coalitions);
        let base_value = cache.empty_value();
        let full_value = cache.full_value();
        let rows = sample
            .entries
            .iter()
            .map(|e| RegressionRow {
                coalition: e.coalition.clone(),
                value: cache.value(&e.coalition),
                weight: e.weight,
                count: e.count,
            })
            .collect();
        Ok(RegressionSystem {
            n_players: m,
            rows,
            base_value,
            full_value,
        })
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn rows(&self) -> &[RegressionRow] {
        &self.rows
    }

    pub fn base_value(&self) -> f64 {
        self.base_value
    }

    pub fn full_value(&self) -> f64 {
        self.full_value
    }

    /// Unpenalized constrained fit over all features; the last feature is
    /// the eliminated one.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let support: Vec<usize> = (0..self.n_players).collect();
        self.solve_on_support(&support, |_| true)
    }

    /// Constrained fit with attributions outside `support` pinned to zero.
    /// The last support index absorbs the efficiency constraint.
    fn solve_on_support(&self, support: &[usize], use_row: impl Fn(usize) -> bool) -> Result<Vec<f64>> {
        let m = self.n_players;
        let delta = self.full_value - self.base_value;
        let mut phi = vec![0.0; m];
        let Some((&last, free)) = support.split_last() else {
            return Ok(phi);
        };
        if free.is_empty() {
            phi[last] = delta;
            return Ok(phi);
        }
        let mut ne = NormalEquations::new(free.len());
        let mut x = vec![0.0; free.len()];
        for (k, row) in self.rows.iter().enumerate() {
            if !use_row(k) {
                continue;
            }
            let z_last = indicator(&row.coalition, last);
            for (slot, &j) in x.iter_mut().zip(free) {
                *slot = indicator(&row.coalition, j) - z_last;
            }
            let target = row.value - self.base_value - z_last * delta;
            ne.add_row(&x, target, row.weight);
        }
        let beta = ne.solve().map_err(|dependent| Error::SingularSystem {
            columns: dependent.into_iter().map(|c| free[c]).collect(),
        })?;
        let mut rest = delta;
        for (&j, b) in free.iter().zip(beta) {
            phi[j] = b;
            rest -= b;
        }
        phi[last] = rest;
        Ok(phi)
    }

    /// Debiased lasso: select a support with an L1 penalty, then refit.
    /// Returns the attributions and the penalty used.
    pub fn solve_debiased_lasso(&self, lambda: Option<f64>) -> Result<(Vec<f64>, f64)> {
        let lambda = match lambda {
            Some(l) if l.is_finite() && l >= 0.0 => l,
            Some(l) => return Err(Error::Domain(format!("lasso penalty {l} must be non-negative"))),
            None => self.choose_lambda(),
        };
        let q = self.selection_quadratic(|_| true);
        let mut beta = vec![0.0; self.n_players];
        coordinate_descent(&q, lambda, &mut beta, LASSO_TOLERANCE, LASSO_MAX_SWEEPS);
        let support = support_of(&beta, &q);
        Ok((self.solve_on_support(&support, |_| true)?, lambda))
    }

    /// Penalty path `λ_max · 10^{-k/2}`, `k = 1..=5`.
    pub fn lambda_path(&self) -> Vec<f64> {
        let lmax = self.selection_quadratic(|_| true).lambda_max();
        (1..=LASSO_PATH_LEN)
            .map(|k| lmax * 10f64.powf(-(k as f64) / 2.0))
            .collect()
    }

    /// Cross-validated penalty: rows are split into `LASSO_FOLDS` folds by
    /// complement pair, each fold is scored by the weighted mean squared
    /// error of the refit, and the largest penalty whose mean score is
    /// within one standard error of the best is taken. The standard error
    /// carries a finite-population correction for the share of non-trivial
    /// coalitions observed, so a fully enumerated system takes the best score.
    fn choose_lambda(&self) -> f64 {
        let path = self.lambda_path();
        let fallback = path[LASSO_PATH_LEN / 2];
        let ranks = self.pair_ranks();
        let mut scores: Vec<Vec<f64>> = vec![Vec::new(); path.len()];
        for fold in 0..LASSO_FOLDS {
            let held: Vec<bool> = ranks.iter().map(|r| r % LASSO_FOLDS == fold).collect();
            if held.iter().all(|&h| h) || held.iter().all(|&h| !h) {
                continue;
            }
            let held_weight: f64 = self
                .rows
                .iter()
                .zip(&held)
                .filter(|(_, &h)| h)
                .map(|(r, _)| r.weight)
                .sum();
            let q = self.selection_quadratic(|k| !held[k]);
            let mut beta = vec![0.0; self.n_players];
            let mut fold_scores = Vec::with_capacity(path.len());
            for &lambda in &path {
                coordinate_descent(&q, lambda, &mut beta, LASSO_TOLERANCE, LASSO_MAX_SWEEPS);
                let support = support_of(&beta, &q);
                match self.solve_on_support(&support, |k| !held[k]) {
                    Ok(phi) => fold_scores.push(self.weighted_loss(&phi, |k| held[k]) / held_weight),
                    Err(_) => break,
                }
            }
            // A fold whose refit is singular at some penalty cannot score the path.
            if fold_scores.len() == path.len() {
                for (s, v) in scores.iter_mut().zip(fold_scores) {
                    s.push(v);
                }
            }
        }
        let folds = scores[0].len();
        if folds == 0 {
            return fallback;
        }
        let stats: Vec<(f64, f64)> = scores
            .iter()
            .map(|s| {
                let n = s.len() as f64;
                let mean = s.iter().sum::<f64>() / n;
                let var = if s.len() > 1 {
                    s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (mean, (var / n).sqrt())
            })
            .collect();
        let mut best = 0;
        for (i, st) in stats.iter().enumerate() {
            if st.0 < stats[best].0 {
                best = i;
            }
        }
        let threshold = stats[best].0 + stats[best].1 * self.finite_population_correction();
        let chosen = stats.iter().position(|st| st.0 <= threshold).unwrap_or(best);
        path[chosen]
    }

    /// `√((N − n) / (N − 1))` for `n` distinct observed coalitions out of the
    /// `N = 2^M − 2` non-trivial ones.
    fn finite_population_correction(&self) -> f64 {
        if self.n_players >= 64 {
            return 1.0;
        }
        let total = ((1u64 << self.n_players) - 2) as f64;
        if total <= 1.0 {
            return 0.0;
        }
        let seen = self.rows.len() as f64;
        ((total - seen).max(0.0) / (total - 1.0)).sqrt()
    }

    /// First-appearance rank of each row's complement pair.
    fn pair_ranks(&self) -> Vec<usize> {
        use std::collections::HashMap;
        let mut rank: HashMap<Coalition, usize> = HashMap::new();
        self.rows
            .iter()
            .map(|row| {
                let comp = row.coalition.complement();
                let key = if comp < row.coalition { comp } else { row.coalition.clone() };
                let next = rank.len();
                *rank.entry(key).or_insert(next)
            })
            .collect()
    }

    fn weighted_loss(&self, phi: &[f64], use_row: impl Fn(usize) -> bool) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .filter(|(k, _)| use_row(*k))
            .map(|(_, row)| {
                let pred = row
                    .coalition
                    .ones()
                    .fold(self.base_value, |acc, j| acc + phi[j]);
                row.weight * (row.value - pred).powi(2)
            })
            .sum()
    }

    /// Quadratic for support selection. Each row enters twice, as
    /// `z → f_x(z) − φ0` and as `z − 1 → f_x(z) − f(x)`, so the efficiency
    /// constraint is respected without singling out one feature.
    fn selection_quadratic(&self, use_row: impl Fn(usize) -> bool) -> Quadratic {
        let n = self.n_players;
        let delta = self.full_value - self.base_value;
        let mut gram = vec![0.0; n * n];
        let mut cross = vec![0.0; n];
        let mut total = 0.0;
        let mut ones = Vec::with_capacity(n);
        let mut zeros = Vec::with_capacity(n);
        for (k, row) in self.rows.iter().enumerate() {
            if !use_row(k) {
                continue;
            }
            ones.clear();
            zeros.clear();
            for j in 0..n {
                if row.coalition.get(j) {
                    ones.push(j);
                } else {
                    zeros.push(j);
                }
            }
            let w = row.weight;
            let y = row.value - self.base_value;
            // (z − 1)(z − 1)ᵀ is the outer product of the complement, and
            // (z − 1)(y − Δ) = complement · (Δ − y).
            for (set, target) in [(&ones, y), (&zeros, delta - y)] {
                for &a in set.iter() {
                    cross[a] += w * target;
                    let g = &mut gram[a * n..(a + 1) * n];
                    for &b in set.iter() {
                        g[b] += w;
                    }
                }
            }
            total += 2.0 * w;
        }
        if total > 0.0 {
            gram.iter_mut().for_each(|g| *g /= total);
            cross.iter_mut().for_each(|c| *c /= total);
        }
        Quadratic { n, gram, cross }
    }
}

fn indicator(z: &Coalition, j: usize) -> f64 {
    if z.get(j) {
        1.0
    } else {
        0.0
    }
}

/// Non-zero coefficients; an empty selection falls back to the first
/// feature to enter the lasso path.
fn support_of(beta: &[f64], q: &Quadratic) -> Vec<usize> {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if !support.is_empty() {
        return support;
    }
    let mut best = 0;
    for j in 1..q.cross.len() {
        if q.cross[j].abs() > q.cross[best].abs() {
            best = j;
        }
    }
    if q.cross.is_empty() {
        Vec::new()
    } else {
        vec![best]
    }
}

/// Shapley-kernel regression estimate from a set of coalitions.
pub fn kernel_shap_solve<P: Predict>(
    cache: &SetFunctionCache<P>,
    sample: &CoalitionSample,
    regularization: Regularization,
) -> Result<Explanation> {
    if sample.is_empty() && cache.n_players() > 1 {
        return Err(Error::Domain("kernel regression needs at least one coalition".into()));
    }
    let system = RegressionSystem::build(cache, sample)?;
    let (phi, name, lambda) = match regularization {
        Regularization::None => (system.solve()?, "kernel", None),
        Regularization::DebiasedLasso(l) => {
            let (phi, lambda) = system.solve_debiased_lasso(l)?;
            (phi, "kernel-lasso", Some(lambda))
        }
    };
    let mut e = Explanation::new(system.base_value(), phi, name, cache.evaluations(), sample.seed);
    e.lambda = lambda;
    Ok(e)
}

/// Default exponential-kernel width, `0.75 · √M`.
pub fn lime_default_width(m: usize) -> f64 {
    0.75 * (m as f64).sqrt()
}

/// Weighted least squares with LIME's exponential kernel
/// `exp(−d(z)² / σ²)`, `d(z)` the number of absent features. The intercept
/// is free and no efficiency constraint is applied.
pub fn lime_baseline_solve<P: Predict>(
    cache: &SetFunctionCache<P>,
    sample: &CoalitionSample,
    kernel_width: f64,
) -> Result<Explanation> {
    if !(kernel_width > 0.0) || !kernel_width.is_finite() {
        return Err(Error::Domain(format!("kernel width {kernel_width} must be positive")));
    }
    if sample.is_empty() {
        return Err(Error::Domain("LIME regression needs at least one coalition".into()));
    }
    let system = RegressionSystem::build(cache, sample)?;
    let m = system.n_players();
    let mut ne = NormalEquations::new(m + 1);
    let mut x = vec![0.0; m + 1];
    x[0] = 1.0;
    for row in system.rows() {
        for j in 0..m {
            x[j + 1] = indicator(&row.coalition, j);
        }
        let d = (m - row.coalition.size()) as f64;
        let w = row.count as f64 * (-(d * d) / (kernel_width * kernel_width)).exp();
        ne.add_row(&x, row.value, w);
    }
    let beta = ne.solve().map_err(|dependent| Error::SingularSystem {
        columns: dependent.into_iter().filter(|&c| c > 0).map(|c| c - 1).collect(),
    })?;
    let mut e = Explanation::new(beta[0], beta[1..].to_vec(), "lime", cache.evaluations(), sample.seed);
    e.kernel_width = Some(kernel_width);
    Ok(e)
}
