//! Black-box model evaluation.
//!
//! Everything the explainers need from a model is the [`Predict`] trait: a
//! fixed input width and a deterministic scalar output. The bundled [`Model`]
//! covers the three kinds that can be loaded from a JSON model file.

use std::collections::BTreeSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite real-valued input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(pub(crate) Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InputDomain("feature vector must not be empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InputDomain(format!(
                "feature {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        FeatureVector(vec![0.0; len.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// A deterministic scalar function of a fixed-width input.
///
/// Implementations must be pure: the same input always produces the same
/// bits, and concurrent calls are allowed.
pub trait Predict: Send + Sync {
    fn n_features(&self) -> usize;

    /// Evaluates the model. `x.len()` equals `n_features()`; callers that
    /// cannot guarantee this go through [`evaluate`].
    fn predict(&self, x: &[f64]) -> f64;
}

impl<P: Predict + ?Sized> Predict for &P {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }
}

/// Checked evaluation of a model on one input.
pub fn evaluate<P: Predict + ?Sized>(model: &P, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_features() {
        return Err(Error::InputShape {
            what: "model input",
            expected: model.n_features(),
            actual: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InputDomain(format!("input feature {i} is not finite")));
    }
    Ok(model.predict(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidModel("linear model needs at least one weight".into()));
        }
        if !weights.iter().all(|w| w.is_finite()) || !intercept.is_finite() {
            return Err(Error::InvalidModel("linear model parameters must be finite".into()));
        }
        Ok(LinearModel { weights, intercept })
    }
}

impl Predict for LinearModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// A binary decision tree stored as a node array with node 0 as the root.
/// Inputs go left when `x[feature] < threshold` and right otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn new(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidModel("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            if seen[idx] {
                return Err(Error::InvalidModel(format!(
                    "node {idx} is reachable along more than one path"
                )));
            }
            seen[idx] = true;
            match nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features {
                        return Err(Error::InvalidModel(format!(
                            "node {idx} splits on feature {feature} but the model has {n_features}"
                        )));
                    }
                    if threshold.is_nan() {
                        return Err(Error::InvalidModel(format!("node {idx} has a NaN threshold")));
                    }
                    for child in [left, right] {
                        if child >= nodes.len() {
                            return Err(Error::InvalidModel(format!(
                                "node {idx} references missing child {child}"
                            )));
                        }
                        stack.push(child);
                    }
                }
                Node::Leaf(v) => {
                    if !v.is_finite() {
                        return Err(Error::InvalidModel(format!("leaf {idx} is not finite")));
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidModel(format!("node {orphan} is unreachable from the root")));
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[feature] < threshold { left } else { right },
                Node::Leaf(v) => return v,
            }
        }
    }

    /// Root-to-leaf paths as `(leaf value, [(feature, threshold, went_left)])`.
    pub fn leaf_paths(&self) -> Vec<(f64, Vec<(usize, f64, bool)>)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((idx, path)) = stack.pop() {
            match self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let mut l = path.clone();
                    l.push((feature, threshold, true));
                    let mut r = path;
                    r.push((feature, threshold, false));
                    stack.push((right, r));
                    stack.push((left, l));
                }
                Node::Leaf(v) => out.push((v, path)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    n_features: usize,
    pub base_score: f64,
    trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn new(n_features: usize, base_score: f64, trees: Vec<Tree>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidModel("n_features must be at least 1".into()));
        }
        if !base_score.is_finite() {
            return Err(Error::InvalidModel("base_score must be finite".into()));
        }
        for (i, tree) in trees.iter().enumerate() {
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    if *feature >= n_features {
                        return Err(Error::InvalidModel(format!(
                            "tree {i} splits on feature {feature} but the model has {n_features}"
                        )));
                    }
                }
            }
        }
        Ok(TreeEnsemble {
            n_features,
            base_score,
            trees,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Feature indices referenced by at least one split.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .collect()
    }
}

impl Predict for TreeEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyticExpr {
    Max,
    Product,
    Sum,
}

/// A closed catalog of small analytic functions used as test cases.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticModel {
    n_features: usize,
    expr: AnalyticExpr,
    args: Vec<usize>,
}

impl AnalyticModel {
    pub fn new(n_features: usize, expr: AnalyticExpr, args: Vec<usize>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidModel("n_features must be at least 1".into()));
        }
        match expr {
            AnalyticExpr::Max | AnalyticExpr::Product if args.len() != 2 => {
                return Err(Error::InvalidModel(format!(
                    "{expr:?} takes exactly two arguments, got {}",
                    args.len()
                )))
            }
            AnalyticExpr::Sum if args.is_empty() => {
                return Err(Error::InvalidModel("sum needs at least one argument".into()))
            }
            _ => {}
        }
        if let Some(a) = args.iter().find(|&&a| a >= n_features) {
            return Err(Error::InvalidModel(format!(
                "argument {a} out of range for {n_features} features"
            )));
        }
        Ok(AnalyticModel {
            n_features,
            expr,
            args,
        })
    }

    pub fn expr(&self) -> AnalyticExpr {
        self.expr
    }

    pub fn args(&self) -> &[usize] {
        &self.args
    }
}

impl Predict for AnalyticModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> f64 {
        match self.expr {
            AnalyticExpr::Max => x[self.args[0]].max(x[self.args[1]]),
            AnalyticExpr::Product => x[self.args[0]] * x[self.args[1]],
            AnalyticExpr::Sum => self.args.iter().map(|&a| x[a]).sum(),
        }
    }
}

/// Any model that can be described by a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    TreeEnsemble(TreeEnsemble),
    Analytic(AnalyticModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::TreeEnsemble(_) => "tree_ensemble",
            Model::Analytic(_) => "analytic",
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument::from(self);
        serde_json::to_string_pretty(&doc).expect("model documents always serialize")
    }
}

impl Predict for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features(),
            Model::TreeEnsemble(m) => m.n_features(),
            Model::Analytic(m) => m.n_features(),
        }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::TreeEnsemble(m) => m.predict(x),
            Model::Analytic(m) => m.predict(x),
        }
    }
}

impl From<LinearModel> for Model {
    fn from(m: LinearModel) -> Self {
        Model::Linear(m)
    }
}

impl From<TreeEnsemble> for Model {
    fn from(m: TreeEnsemble) -> Self {
        Model::TreeEnsemble(m)
    }
}

impl From<AnalyticModel> for Model {
    fn from(m: AnalyticModel) -> Self {
        Model::Analytic(m)
    }
}

// ---------------------------------------------------------------------------
// Model file schema

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: f64,
    },
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    nodes: Vec<NodeDoc>,
}

#[derive(Deserialize)]
struct LinearDoc {
    n_features: usize,
    weights: Vec<f64>,
    intercept: f64,
}

#[derive(Deserialize)]
struct TreeEnsembleDoc {
    n_features: usize,
    base_score: f64,
    trees: Vec<TreeDoc>,
}

#[derive(Deserialize)]
struct AnalyticDoc {
    n_features: usize,
    expr: AnalyticExpr,
    args: Vec<usize>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelDocument {
    Linear {
        n_features: usize,
        weights: Vec<f64>,
        intercept: f64,
    },
    TreeEnsemble {
        n_features: usize,
        base_score: f64,
        trees: Vec<TreeDoc>,
    },
    Analytic {
        n_features: usize,
        expr: AnalyticExpr,
        args: Vec<usize>,
    },
}

impl From<&Model> for ModelDocument {
    fn from(model: &Model) -> Self {
        match model {
            Model::Linear(m) => ModelDocument::Linear {
                n_features: m.n_features(),
                weights: m.weights.clone(),
                intercept: m.intercept,
            },
            Model::TreeEnsemble(m) => ModelDocument::TreeEnsemble {
                n_features: m.n_features,
                base_score: m.base_score,
                trees: m
                    .trees
                    .iter()
                    .map(|t| TreeDoc {
                        nodes: t
                            .nodes
                            .iter()
                            .map(|n| match *n {
                                Node::Split {
                                    feature,
                                    threshold,
                                    left,
                                    right,
                                } => NodeDoc::Split {
                                    feature,
                                    threshold,
                                    left,
                                    right,
                                },
                                Node::Leaf(leaf) => NodeDoc::Leaf { leaf },
                            })
                            .collect(),
                    })
                    .collect(),
            },
            Model::Analytic(m) => ModelDocument::Analytic {
                n_features: m.n_features,
                expr: m.expr,
                args: m.args.clone(),
            },
        }
    }
}

/// Parses a model file.
pub fn load_model(document: &str) -> Result<Model> {
    let value: serde_json::Value = serde_json::from_str(document)?;
    let kind = match value.get("kind") {
        Some(serde_json::Value::String(kind)) => kind.as_str(),
        Some(_) => return Err(Error::parse("field `kind` must be a string")),
        None => return Err(Error::parse("missing field `kind`")),
    };
    match kind {
        "linear" => {
            let doc: LinearDoc = serde_json::from_str(document)?;
            check_width("weights", doc.n_features, doc.weights.len())?;
            Ok(LinearModel::new(doc.weights, doc.intercept)?.into())
        }
        "tree_ensemble" => {
            let doc: TreeEnsembleDoc = serde_json::from_str(document)?;
            let trees = doc
                .trees
                .into_iter()
                .enumerate()
                .map(|(i, t)| {
                    let nodes = t
                        .nodes
                        .into_iter()
                        .map(|n| match n {
                            NodeDoc::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            },
                            NodeDoc::Leaf { leaf } => Node::Leaf(leaf),
                        })
                        .collect();
                    Tree::new(nodes, doc.n_features)
                        .map_err(|e| Error::InvalidModel(format!("tree {i}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TreeEnsemble::new(doc.n_features, doc.base_score, trees)?.into())
        }
        "analytic" => {
            let doc: AnalyticDoc = serde_json::from_str(document)?;
            Ok(AnalyticModel::new(doc.n_features, doc.expr, doc.args)?.into())
        }
        other => Err(Error::UnsupportedModel(other.to_string())),
    }
}

fn check_width(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::InputShape {
            what,
            expected,
            actual,
        })
    }
}
