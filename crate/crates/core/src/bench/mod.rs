//! Convergence benchmark: estimator accuracy against the number of model
//! evaluations, summarized over seeded replicates by mean and 10th/90th
//! percentiles.

mod generate;
mod plot;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

pub use generate::{
    generate_scenario_inputs, generate_scenario_model, ScenarioKind, SCENARIO_BACKGROUND_ROWS,
};

use crate::error::{Error, Result};
use crate::estimators::{
    exact_shapley, kernel_shap_solve, lime_baseline_solve, lime_default_width,
    permutation_estimate, sample_coalitions, Regularization, DEFAULT_EXACT_CAP,
};
use crate::masking::{BackgroundSet, FeatureGrouping, SetFunctionCache};
use crate::model::{load_model, FeatureVector, Model, Predict};

pub const DEFAULT_BUDGETS: [usize; 6] = [32, 64, 128, 256, 512, 1024];
pub const FAST_BUDGETS: [usize; 5] = [64, 128, 256, 512, 1024];
pub const DEFAULT_REPLICATES: usize = 200;
pub const FAST_REPLICATES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BenchEstimator {
    KernelLasso,
    Permutation,
    Lime,
}

impl BenchEstimator {
    pub const ALL: [BenchEstimator; 3] = [
        BenchEstimator::KernelLasso,
        BenchEstimator::Permutation,
        BenchEstimator::Lime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchEstimator::KernelLasso => "kernel-lasso",
            BenchEstimator::Permutation => "permutation",
            BenchEstimator::Lime => "lime",
        }
    }
}

impl fmt::Display for BenchEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct BenchScenario {
    pub name: String,
    pub model: Model,
    pub instance: FeatureVector,
    pub background: BackgroundSet,
    pub tracked: Vec<usize>,
    pub budgets: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl BenchScenario {
    /// A generated scenario with default budgets and replicates; `fast`
    /// trades fidelity for runtime.
    pub fn builtin(kind: ScenarioKind, seed: u64, fast: bool) -> Result<Self> {
        let model = generate_scenario_model(kind, seed)?;
        let (instance, background) = generate_scenario_inputs(kind, seed);
        let (budgets, replicates) = if fast {
            (FAST_BUDGETS.to_vec(), FAST_REPLICATES)
        } else {
            (DEFAULT_BUDGETS.to_vec(), DEFAULT_REPLICATES)
        };
        let s = BenchScenario {
            name: kind.to_string(),
            model,
            instance,
            background,
            tracked: kind.default_tracked(),
            budgets,
            replicates,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    /// Parses a scenario file. `model` is a built-in scenario name or
    /// `{"file": path}`, resolved against `base_dir`. Omitted fields take the
    /// built-in defaults; instance and background are generated from the
    /// seed for built-in models and required otherwise.
    pub fn from_json(document: &str, base_dir: &Path, fast: bool) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum ModelSpec {
            Builtin(String),
            File { file: PathBuf },
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            model: ModelSpec,
            instance: Option<Vec<f64>>,
            background: Option<Vec<Vec<f64>>>,
            tracked: Option<Vec<usize>>,
            budgets: Option<Vec<usize>>,
            replicates: Option<usize>,
            seed: Option<u64>,
        }
        let doc: Doc = serde_json::from_str(document)?;
        let seed = doc.seed.unwrap_or(0);
        let mut s = match doc.model {
            ModelSpec::Builtin(name) => {
                let kind: ScenarioKind = name.parse().map_err(|_| {
                    Error::InputDomain(format!("unknown built-in scenario model `{name}`"))
                })?;
                BenchScenario::builtin(kind, seed, fast)?
            }
            ModelSpec::File { file } => {
                let path = base_dir.join(file);
                let model = load_model(&fs::read_to_string(&path)?)?;
                let (Some(instance), Some(background)) = (&doc.instance, &doc.background) else {
                    return Err(Error::InputDomain(
                        "scenarios with a model file need `instance` and `background`".into(),
                    ));
                };
                let instance = FeatureVector::new(instance.clone())?;
                let background = BackgroundSet::new(
                    background
                        .iter()
                        .map(|r| FeatureVector::new(r.clone()))
                        .collect::<Result<_>>()?,
                )?;
                let p = model.n_features();
                BenchScenario {
                    name: path
                        .file_stem()
                        .map_or("custom".into(), |s| s.to_string_lossy().into_owned()),
                    model,
                    instance,
                    background,
                    tracked: (0..p.min(3)).collect(),
                    budgets: if fast { FAST_BUDGETS.to_vec() } else { DEFAULT_BUDGETS.to_vec() },
                    replicates: if fast { FAST_REPLICATES } else { DEFAULT_REPLICATES },
                    seed,
                }
            }
        };
        if let Some(x) = doc.instance {
            s.instance = FeatureVector::new(x)?;
        }
        if let Some(rows) = doc.background {
            s.background =
                BackgroundSet::new(rows.into_iter().map(FeatureVector::new).collect::<Result<_>>()?)?;
        }
        if let Some(t) = doc.tracked {
            s.tracked = t;
        }
        if let Some(b) = doc.budgets {
            s.budgets = b;
        }
        if let Some(r) = doc.replicates {
            s.replicates = r;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.model.n_features();
        if self.instance.len() != p || self.background.n_features() != p {
            return Err(Error::InputShape {
                what: "scenario inputs",
                expected: p,
                actual: if self.instance.len() != p {
                    self.instance.len()
                } else {
                    self.background.n_features()
                },
            });
        }
        if self.budgets.is_empty() || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InputDomain("budgets must be non-empty and strictly increasing".into()));
        }
        if self.replicates < 2 {
            return Err(Error::InputDomain("at least two replicates are needed".into()));
        }
        if self.tracked.is_empty() {
            return Err(Error::InputDomain("no tracked features".into()));
        }
        if let Some(&t) = self.tracked.iter().find(|&&t| t >= p) {
            return Err(Error::InputDomain(format!("tracked feature {t} out of range for {p}")));
        }
        Ok(())
    }

    /// Per-replicate seeds derived from the scenario seed.
    pub fn replicate_seeds(&self) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2);
        (0..self.replicates).map(|_| rng.random()).collect()
    }
}

/// Summary of one (estimator, feature, budget) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub estimator: BenchEstimator,
    pub feature: usize,
    pub budget: usize,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
    pub truth: f64,
    /// Largest number of distinct evaluations any replicate consumed.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub estimator: BenchEstimator,
    pub budget: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub tracked: Vec<usize>,
    pub budgets: Vec<usize>,
    pub replicates: usize,
    /// Exact attributions for every feature.
    pub truth: Vec<f64>,
    pub cells: Vec<CellStats>,
    pub skipped: Vec<SkippedCell>,
}

impl ConvergenceReport {
    pub fn cell(&self, estimator: BenchEstimator, feature: usize, budget: usize) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.feature == feature && c.budget == budget)
    }

    /// Cells for the largest budget at which the estimator ran.
    pub fn top_cell(&self, estimator: BenchEstimator, feature: usize) -> Option<&CellStats> {
        self.cells
            .iter()
            .filter(|c| c.estimator == estimator && c.feature == feature)
            .max_by_key(|c| c.budget)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,feature,budget,mean,p10,p90,truth\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.estimator, c.feature, c.budget, c.mean, c.p10, c.p90, c.truth
            ));
        }
        out
    }
}

/// Exact attributions, using the tree structure to avoid enumerating
/// features no split references.
pub fn ground_truth(model: &Model, instance: &FeatureVector, background: &BackgroundSet) -> Result<Vec<f64>> {
    let p = model.n_features();
    if p <= DEFAULT_EXACT_CAP {
        let cache = SetFunctionCache::singletons(model, instance.clone(), background.clone())?;
        return Ok(exact_shapley(&cache)?.phi);
    }
    let Model::TreeEnsemble(trees) = model else {
        return Err(Error::BudgetRefused {
            features: p,
            cap: DEFAULT_EXACT_CAP,
        });
    };
    let used: Vec<usize> = trees.used_features().into_iter().collect();
    // Unused features form one extra group, which is a dummy player.
    let unused: Vec<usize> = (0..p).filter(|i| !used.contains(i)).collect();
    let mut groups: Vec<Vec<usize>> = used.iter().map(|&i| vec![i]).collect();
    if !unused.is_empty() {
        groups.push(unused);
    }
    if groups.len() > DEFAULT_EXACT_CAP {
        return Err(Error::BudgetRefused {
            features: groups.len(),
            cap: DEFAULT_EXACT_CAP,
        });
    }
    let grouping = FeatureGrouping::new(groups, p)?;
    let cache = SetFunctionCache::new(model, instance.clone(), background.clone(), grouping)?;
    let grouped = exact_shapley(&cache)?.phi;
    let mut phi = vec![0.0; p];
    for (g, &i) in used.iter().enumerate() {
        phi[i] = grouped[g];
    }
    Ok(phi)
}

/// One replicate: attributions and distinct evaluations, or `None` when the
/// budget is below what the estimator needs.
fn run_replicate(
    estimator: BenchEstimator,
    scenario: &BenchScenario,
    budget: usize,
    seed: u64,
) -> Result<Option<(Vec<f64>, usize)>> {
    let cache = SetFunctionCache::singletons(
        &scenario.model,
        scenario.instance.clone(),
        scenario.background.clone(),
    )?;
    let m = cache.n_players();
    let e = match estimator {
        BenchEstimator::KernelLasso | BenchEstimator::Lime => {
            // Two evaluations go to the empty and full coalitions.
            if budget < 4 {
                return Ok(None);
            }
            let sample = sample_coalitions(m, budget - 2, seed)?;
            if estimator == BenchEstimator::KernelLasso {
                kernel_shap_solve(&cache, &sample, Regularization::DebiasedLasso(None))?
            } else {
                lime_baseline_solve(&cache, &sample, lime_default_width(m))?
            }
        }
        BenchEstimator::Permutation => {
            // Each ordering costs at most M − 1 evaluations beyond the two endpoints.
            let n = budget.saturating_sub(2) / (m.max(2) - 1);
            if n == 0 {
                return Ok(None);
            }
            permutation_estimate(&cache, n, seed)?
        }
    };
    Ok(Some((e.phi, e.budget)))
}

/// Runs every estimator at every budget for every replicate seed.
pub fn run_convergence(scenario: &BenchScenario) -> Result<ConvergenceReport> {
    scenario.validate()?;
    let truth = ground_truth(&scenario.model, &scenario.instance, &scenario.background)?;
    let seeds = scenario.replicate_seeds();
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for estimator in BenchEstimator::ALL {
        for &budget in &scenario.budgets {
            let runs: Vec<Result<Option<(Vec<f64>, usize)>>> = seeds
                .par_iter()
                .map(|&seed| run_replicate(estimator, scenario, budget, seed))
                .collect();
            let mut results = Vec::with_capacity(runs.len());
            let mut failure = None;
            for run in runs {
                match run {
                    Ok(Some(r)) => results.push(r),
                    Ok(None) => {
                        failure = Some("budget below estimator minimum".to_string());
                        break;
                    }
                    Err(e @ Error::SingularSystem { .. }) => {
                        failure = Some(format!("replicate failed: {e}"));
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if let Some(reason) = failure {
                skipped.push(SkippedCell {
                    estimator,
                    budget,
                    reason,
                });
                continue;
            }
            let evaluations = results.iter().map(|(_, n)| *n).max().unwrap_or(0);
            for &feature in &scenario.tracked {
                let values: Vec<f64> = results.iter().map(|(phi, _)| phi[feature]).collect();
                cells.push(CellStats {
                    estimator,
                    feature,
                    budget,
                    mean: mean(&values),
                    p10: percentile(&values, 0.10),
                    p90: percentile(&values, 0.90),
                    truth: truth[feature],
                    evaluations,
                });
            }
        }
    }
    Ok(ConvergenceReport {
        scenario: scenario.name.clone(),
        tracked: scenario.tracked.clone(),
        budgets: scenario.budgets.clone(),
        replicates: scenario.replicates,
        truth,
        cells,
        skipped,
    })
}

/// Writes `report.csv` and one `feature_<i>.svg` per tracked feature into
/// `dir`, returning the paths written.
pub fn export_report(report: &ConvergenceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, report.to_csv())?;
    written.push(csv_path);
    for &feature in &report.tracked {
        let path = dir.join(format!("feature_{feature}.svg"));
        fs::write(&path, plot::render_convergence_plot(report, feature))?;
        written.push(path);
    }
    Ok(written)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linearly interpolated percentile of an unsorted sample, `q ∈ [0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnalyticExpr, AnalyticModel};

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..11).map(f64::from).rev().collect();
        assert_eq!(percentile(&v, 0.1), 1.0);
        assert_eq!(percentile(&v, 0.9), 9.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.5), 1.5);
        assert_eq!(percentile(&[3.0], 0.9), 3.0);
    }

    #[test]
    fn scenario_validation() {
        let mut s = BenchScenario::builtin(ScenarioKind::Dense10, 0, true).unwrap();
        s.budgets = vec![64, 64];
        assert!(s.validate().is_err());
        s.budgets = vec![64];
        s.replicates = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn sparse_truth_is_zero_off_support() {
        let s = BenchScenario::builtin(ScenarioKind::Sparse3of100, 1, true).unwrap();
        let truth = ground_truth(&s.model, &s.instance, &s.background).unwrap();
        assert!(truth[3..].iter().all(|&v| v == 0.0));
        assert!(truth[..3].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn small_model_with_enumerable_orderings_has_no_spread() {
        let model: Model = AnalyticModel::new(3, AnalyticExpr::Max, vec![0, 1]).unwrap().into();
        let s = BenchScenario {
            name: "max3".into(),
            model,
            instance: FeatureVector::new(vec![1.0, 3.0, 2.0]).unwrap(),
            background: BackgroundSet::new(vec![
                FeatureVector::new(vec![0.0, 0.0, 0.0]).unwrap(),
                FeatureVector::new(vec![2.0, 1.0, 0.5]).unwrap(),
            ])
            .unwrap(),
            tracked: vec![0, 1, 2],
            budgets: vec![8, 16],
            replicates: 5,
            seed: 3,
        };
        let r = run_convergence(&s).unwrap();
        for f in 0..3 {
            // 16 evaluations buy 7 orderings ≥ 3! = 6, so every ordering is used.
            let c = r.cell(BenchEstimator::Permutation, f, 16).unwrap();
            assert_eq!(c.p10, c.p90);
            assert!((c.mean - r.truth[f]).abs() < 1e-12);
            let k = r.cell(BenchEstimator::KernelLasso, f, 16).unwrap();
            assert!((k.mean - r.truth[f]).abs() < 1e-6);
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let s = BenchScenario {
            budgets: vec![64, 128],
            replicates: 3,
            ..BenchScenario::builtin(ScenarioKind::Dense10, 0, true).unwrap()
        };
        let r = run_convergence(&s).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("estimator,feature,budget,mean,p10,p90,truth"));
        assert_eq!(lines.count(), 3 * 3 * 2);
    }
}
