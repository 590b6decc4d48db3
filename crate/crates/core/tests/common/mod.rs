#![allow(dead_code)]

use esv::model::{Node, Tree, TreeEnsemble};
use esv::{BackgroundSet, FeatureVector, Model};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Tree nodes in preorder, evaluated independently of the library.
#[derive(Debug, Clone)]
pub struct RawTree(pub Vec<Node>);

impl RawTree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.0[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn random(rng: &mut ChaCha8Rng, features: &[usize], depth: usize) -> Self {
        let mut nodes = Vec::new();
        grow(rng, features, depth, &mut nodes);
        RawTree(nodes)
    }

    /// Same tree with features `i` and `j` exchanged.
    pub fn swapped(&self, i: usize, j: usize) -> Self {
        RawTree(
            self.0
                .iter()
                .map(|n| match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => Node::Split {
                        feature: if feature == i {
                            j
                        } else if feature == j {
                            i
                        } else {
                            feature
                        },
                        threshold,
                        left,
                        right,
                    },
                    leaf => leaf,
                })
                .collect(),
        )
    }
}

fn grow(rng: &mut ChaCha8Rng, features: &[usize], depth: usize, nodes: &mut Vec<Node>) -> usize {
    let idx = nodes.len();
    if depth == 0 || features.is_empty() || rng.random_bool(0.15) {
        nodes.push(Node::Leaf(rng.random_range(-1.0..1.0)));
        return idx;
    }
    nodes.push(Node::Leaf(0.0));
    let feature = features[rng.random_range(0..features.len())];
    let threshold = rng.random_range(0.05..0.95);
    let left = grow(rng, features, depth - 1, nodes);
    let right = grow(rng, features, depth - 1, nodes);
    nodes[idx] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    idx
}

#[derive(Debug, Clone)]
pub struct RawEnsemble {
    pub n_features: usize,
    pub base: f64,
    pub trees: Vec<RawTree>,
}

impl RawEnsemble {
    pub fn random(rng: &mut ChaCha8Rng, n_features: usize, features: &[usize], n_trees: usize) -> Self {
        let trees = (0..n_trees)
            .map(|_| {
                let depth = rng.random_range(1..=4);
                RawTree::random(rng, features, depth)
            })
            .collect();
        RawEnsemble {
            n_features,
            base: rng.random_range(-0.5..0.5),
            trees,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn to_model(&self) -> Model {
        let trees = self
            .trees
            .iter()
            .map(|t| Tree::new(t.0.clone(), self.n_features).unwrap())
            .collect();
        Model::TreeEnsemble(TreeEnsemble::new(self.n_features, self.base, trees).unwrap())
    }
}

pub fn uniform_row(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(0.0..1.0)).collect()
}

pub fn feature_vector(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec()).unwrap()
}

pub fn background(rows: &[Vec<f64>]) -> BackgroundSet {
    BackgroundSet::new(rows.iter().map(|r| feature_vector(r)).collect()).unwrap()
}

/// Shapley values of `E_b f(x_S, b_rest)` by enumerating every subset with
/// the factorial weights `|S|!(M-|S|-1)!/M!`.
pub fn brute_force_shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], rows: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let m = x.len();
    assert!(m <= 16);
    let value = |mask: usize| -> f64 {
        let mut total = 0.0;
        for b in rows {
            let z: Vec<f64> = (0..m).map(|i| if mask >> i & 1 == 1 { x[i] } else { b[i] }).collect();
            total += f(&z);
        }
        total / rows.len() as f64
    };
    let values: Vec<f64> = (0..1usize << m).map(value).collect();
    let fact: Vec<f64> = (0..=m).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    let phi = (0..m)
        .map(|i| {
            let mut s = 0.0;
            for mask in 0..1usize << m {
                if mask >> i & 1 == 1 {
                    continue;
                }
                let k = mask.count_ones() as usize;
                s += fact[k] * fact[m - k - 1] / fact[m] * (values[mask | 1 << i] - values[mask]);
            }
            s
        })
        .collect();
    (values[0], phi)
}

/// Largest coordinate-wise absolute difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
