use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An additive explanation of one prediction: `f(x) ≈ base_value + Σ phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub feature_names: Vec<String>,
    pub estimator: String,
    /// Distinct set-function evaluations consumed.
    pub budget: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Explanation {
    pub fn new(base_value: f64, phi: Vec<f64>, estimator: &str, budget: usize, seed: u64) -> Self {
        let feature_names = default_feature_names(phi.len());
        Explanation {
            base_value,
            phi,
            feature_names,
            estimator: estimator.to_string(),
            budget,
            seed,
            kernel_width: None,
            lambda: None,
        }
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.phi.len(), "one name per attribution");
        self.feature_names = names;
        self
    }

    pub fn n_features(&self) -> usize {
        self.phi.len()
    }

    /// `base_value + Σ phi`, summed left to right.
    pub fn output(&self) -> f64 {
        self.phi.iter().fold(self.base_value, |acc, p| acc + p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("explanations always serialize")
    }

    pub fn from_json(document: &str) -> Result<Self> {
        let e: Explanation = serde_json::from_str(document)?;
        if e.feature_names.len() != e.phi.len() {
            return Err(Error::InputShape {
                what: "feature_names",
                expected: e.phi.len(),
                actual: e.feature_names.len(),
            });
        }
        Ok(e)
    }
}

pub fn default_feature_names(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("x{i}")).collect()
}
