use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::BackgroundSet;
use crate::model::{FeatureVector, Model, Node, Tree, TreeEnsemble};

/// Background rows drawn for the built-in scenarios.
pub const SCENARIO_BACKGROUND_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Depth-6 tree splitting on all of 10 features.
    Dense10,
    /// Depth-4 tree splitting only on features 0, 1, 2 of 100.
    Sparse3of100,
}

impl ScenarioKind {
    pub fn n_features(self) -> usize {
        match self {
            ScenarioKind::Dense10 => 10,
            ScenarioKind::Sparse3of100 => 100,
        }
    }

    fn depth(self) -> usize {
        match self {
            ScenarioKind::Dense10 => 6,
            ScenarioKind::Sparse3of100 => 4,
        }
    }

    fn split_features(self) -> usize {
        match self {
            ScenarioKind::Dense10 => 10,
            ScenarioKind::Sparse3of100 => 3,
        }
    }

    /// Tracked features: three leading features for the dense tree; two used
    /// and one unused feature for the sparse tree.
    pub fn default_tracked(self) -> Vec<usize> {
        match self {
            ScenarioKind::Dense10 => vec![0, 1, 2],
            ScenarioKind::Sparse3of100 => vec![0, 1, 3],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Dense10 => "dense10",
            ScenarioKind::Sparse3of100 => "sparse3of100",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense10" => Ok(ScenarioKind::Dense10),
            "sparse3of100" => Ok(ScenarioKind::Sparse3of100),
            other => Err(Error::Domain(format!(
                "unknown scenario `{other}` (expected dense10 or sparse3of100)"
            ))),
        }
    }
}

/// A single complete binary tree of the scenario's depth. Every split
/// feature appears at least once; the first internal nodes in breadth-first
/// order receive a shuffled copy of the split features, the rest are drawn
/// uniformly. Thresholds lie in `[0.1, 0.9)` and leaves in `[-1, 1)`.
pub fn generate_scenario_model(kind: ScenarioKind, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = kind.depth();
    let n_split = kind.split_features();
    let internal = (1usize << depth) - 1;
    let leaves = 1usize << depth;

    let mut features: Vec<usize> = (0..n_split).collect();
    features.shuffle(&mut rng);
    features.extend((n_split..internal).map(|_| rng.random_range(0..n_split)));

    let mut nodes = Vec::with_capacity(internal + leaves);
    for (i, &feature) in features.iter().enumerate() {
        nodes.push(Node::Split {
            feature,
            threshold: rng.random_range(0.1..0.9),
            left: 2 * i + 1,
            right: 2 * i + 2,
        });
    }
    for _ in 0..leaves {
        nodes.push(Node::Leaf(rng.random_range(-1.0..1.0)));
    }
    let tree = Tree::new(nodes, kind.n_features())?;
    Ok(TreeEnsemble::new(kind.n_features(), 0.0, vec![tree])?.into())
}

/// Instance and background rows drawn uniformly from `[0, 1)`.
pub fn generate_scenario_inputs(kind: ScenarioKind, seed: u64) -> (FeatureVector, BackgroundSet) {
    // Separate stream from the model so the two can be regenerated independently.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let p = kind.n_features();
    let row = |rng: &mut ChaCha8Rng| {
        FeatureVector::new((0..p).map(|_| rng.random::<f64>()).collect()).expect("finite draws")
    };
    let x = row(&mut rng);
    let rows = (0..SCENARIO_BACKGROUND_ROWS).map(|_| row(&mut rng)).collect();
    (x, BackgroundSet::new(rows).expect("non-empty background"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split_features(model: &Model) -> std::collections::BTreeSet<usize> {
        match model {
            Model::TreeEnsemble(t) => t.used_features(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn dense_tree_uses_every_feature() {
        for seed in 0..5 {
            let m = generate_scenario_model(ScenarioKind::Dense10, seed).unwrap();
            assert_eq!(split_features(&m), (0..10).collect());
        }
    }

    #[test]
    fn sparse_tree_uses_three_features() {
        for seed in 0..5 {
            let m = generate_scenario_model(ScenarioKind::Sparse3of100, seed).unwrap();
            assert_eq!(split_features(&m), [0, 1, 2].into_iter().collect());
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_scenario_model(ScenarioKind::Dense10, 3).unwrap();
        let b = generate_scenario_model(ScenarioKind::Dense10, 3).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.to_json(), generate_scenario_model(ScenarioKind::Dense10, 4).unwrap().to_json());
    }

    #[test]
    fn unknown_kind_is_a_domain_error() {
        assert!(matches!("dense11".parse::<ScenarioKind>(), Err(Error::Domain(_))));
    }
}
