//! Reference-based attribution on small compositional functions, compared
//! against exact Expectation Shapley values with the reference as the only
//! background row.
//!
//! Contributions are propagated forward: every node carries one
//! contribution per input, summing to its activation difference from the
//! reference. Linear nodes combine parent contributions with their weights,
//! sum nodes add them, and a max node passes on the contributions of the
//! parent that attains the maximum at `x`, rescaled to the node's own
//! difference (ties share equally).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{exact_shapley_capped, Explanation, DEFAULT_EXACT_CAP};
use crate::masking::{BackgroundSet, SetFunctionCache};
use crate::model::{FeatureVector, Predict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Input,
    Linear,
    Max,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagNode {
    pub op: Op,
    #[serde(default)]
    pub parents: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub bias: f64,
}

/// A topologically ordered function of its `input` nodes; the `k`-th input
/// node reads `x[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DagDocument", into = "DagDocument")]
pub struct MicroDag {
    nodes: Vec<DagNode>,
    output: usize,
    input_slot: Vec<Option<usize>>,
    n_inputs: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DagDocument {
    nodes: Vec<DagNode>,
    output: usize,
}

impl TryFrom<DagDocument> for MicroDag {
    type Error = Error;

    fn try_from(doc: DagDocument) -> Result<Self> {
        MicroDag::new(doc.nodes, doc.output)
    }
}

impl From<MicroDag> for DagDocument {
    fn from(d: MicroDag) -> Self {
        DagDocument {
            nodes: d.nodes,
            output: d.output,
        }
    }
}

impl MicroDag {
    pub fn new(nodes: Vec<DagNode>, output: usize) -> Result<Self> {
        let structure = |msg: String| Err(Error::Structure(msg));
        if output >= nodes.len() {
            return structure(format!("output node {output} does not exist ({} nodes)", nodes.len()));
        }
        let mut input_slot = Vec::with_capacity(nodes.len());
        let mut n_inputs = 0;
        for (i, node) in nodes.iter().enumerate() {
            if let Some(&p) = node.parents.iter().find(|&&p| p >= i) {
                return structure(format!("node {i} has parent {p}, which does not precede it"));
            }
            if !node.bias.is_finite() || node.weights.iter().any(|w| !w.is_finite()) {
                return structure(format!("node {i} has a non-finite weight or bias"));
            }
            if node.op != Op::Linear && (!node.weights.is_empty() || node.bias != 0.0) {
                return structure(format!("only linear nodes take weights or a bias (node {i})"));
            }
            match node.op {
                Op::Input if !node.parents.is_empty() => {
                    return structure(format!("input node {i} has parents"));
                }
                Op::Linear if node.parents.is_empty() || node.weights.len() != node.parents.len() => {
                    return structure(format!(
                        "linear node {i} needs one weight per parent and at least one parent"
                    ));
                }
                Op::Max if node.parents.len() != 2 => {
                    return structure(format!("max node {i} needs exactly two parents"));
                }
                Op::Sum if node.parents.is_empty() => {
                    return structure(format!("sum node {i} has no parents"));
                }
                _ => {}
            }
            if node.op == Op::Input {
                input_slot.push(Some(n_inputs));
                n_inputs += 1;
            } else {
                input_slot.push(None);
            }
        }
        if n_inputs == 0 {
            return structure("dag has no input nodes".into());
        }
        Ok(MicroDag {
            nodes,
            output,
            input_slot,
            n_inputs,
        })
    }

    pub fn from_json(document: &str) -> Result<Self> {
        let doc: DagDocument = serde_json::from_str(document)?;
        MicroDag::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dags always serialize")
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn has_max(&self) -> bool {
        self.nodes.iter().any(|n| n.op == Op::Max)
    }

    /// Activations of every node.
    pub fn activations(&self, x: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match node.op {
                Op::Input => x[self.input_slot[i].expect("input node")],
                Op::Linear => node.bias + node.parents.iter().zip(&node.weights).map(|(&p, w)| w * a[p]).sum::<f64>(),
                Op::Max => a[node.parents[0]].max(a[node.parents[1]]),
                Op::Sum => node.parents.iter().map(|&p| a[p]).sum(),
            };
            a.push(v);
        }
        a
    }

    /// Input indices that node `i` depends on.
    fn input_ancestors(&self, i: usize) -> BTreeSet<usize> {
        let mut found = BTreeSet::new();
        let mut stack = vec![i];
        let mut seen = vec![false; self.nodes.len()];
        while let Some(k) = stack.pop() {
            if std::mem::replace(&mut seen[k], true) {
                continue;
            }
            if let Some(slot) = self.input_slot[k] {
                found.insert(slot);
            }
            stack.extend(&self.nodes[k].parents);
        }
        found
    }

    fn check_input(&self, what: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.n_inputs {
            return Err(Error::InputShape {
                what,
                expected: self.n_inputs,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

impl Predict for MicroDag {
    fn n_features(&self) -> usize {
        self.n_inputs
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.activations(x)[self.output]
    }
}

/// Per-input contributions relative to a reference input.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionVector {
    pub contributions: Vec<f64>,
    pub reference: FeatureVector,
    pub output: f64,
    pub reference_output: f64,
}

impl ContributionVector {
    /// `f(x) − f(x⁰) − Σ C`, zero up to rounding.
    pub fn residual(&self) -> f64 {
        self.output - self.reference_output - self.contributions.iter().sum::<f64>()
    }
}

pub fn deeplift_attribute(dag: &MicroDag, x: &FeatureVector, reference: &FeatureVector) -> Result<ContributionVector> {
    dag.check_input("instance", x)?;
    dag.check_input("reference", reference)?;
    let a = dag.activations(x);
    let a0 = dag.activations(reference);
    let n = dag.n_inputs;
    let mut contrib: Vec<Vec<f64>> = Vec::with_capacity(dag.nodes.len());
    for (i, node) in dag.nodes.iter().enumerate() {
        let mut c = vec![0.0; n];
        match node.op {
            Op::Input => {
                let slot = dag.input_slot[i].expect("input node");
                c[slot] = a[i] - a0[i];
            }
            Op::Linear => {
                for (&p, w) in node.parents.iter().zip(&node.weights) {
                    for (ci, cp) in c.iter_mut().zip(&contrib[p]) {
                        *ci += w * cp;
                    }
                }
            }
            Op::Sum => {
                for &p in &node.parents {
                    for (ci, cp) in c.iter_mut().zip(&contrib[p]) {
                        *ci += cp;
                    }
                }
            }
            Op::Max => {
                let (l, r) = (node.parents[0], node.parents[1]);
                let winners: Vec<usize> = if a[l] == a[r] {
                    vec![l, r]
                } else if a[l] > a[r] {
                    vec![l]
                } else {
                    vec![r]
                };
                let dy = a[i] - a0[i];
                let share = dy / winners.len() as f64;
                for p in winners {
                    let dp = a[p] - a0[p];
                    if dp != 0.0 {
                        for (ci, cp) in c.iter_mut().zip(&contrib[p]) {
                            *ci += share / dp * cp;
                        }
                    } else if share != 0.0 {
                        // The winner did not move; its inputs share the change.
                        let anc = dag.input_ancestors(p);
                        let each = share / anc.len() as f64;
                        for j in anc {
                            c[j] += each;
                        }
                    }
                }
            }
        }
        contrib.push(c);
    }
    Ok(ContributionVector {
        contributions: contrib.swap_remove(dag.output),
        reference: reference.clone(),
        output: a[dag.output],
        reference_output: a0[dag.output],
    })
}

/// Exact attributions of the whole dag with `reference` as the sole
/// background row.
pub fn es_attribute_dag(dag: &MicroDag, x: &FeatureVector, reference: &FeatureVector) -> Result<Explanation> {
    dag.check_input("instance", x)?;
    dag.check_input("reference", reference)?;
    let background = BackgroundSet::new(vec![reference.clone()])?;
    let cache = SetFunctionCache::singletons(dag, x.clone(), background)?;
    exact_shapley_capped(&cache, DEFAULT_EXACT_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub input: usize,
    pub deeplift: f64,
    pub es: f64,
    /// `deeplift − es`.
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// `f(x) − f(x⁰)`.
    pub delta: f64,
    pub deeplift_sum: f64,
    pub es_sum: f64,
    /// The reference is all zeros, the setting of relevance propagation.
    pub zero_reference: bool,
}

impl ComparisonReport {
    /// The rows as a JSON array.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows always serialize")
    }

    /// Largest deviation of either column's sum from `f(x) − f(x⁰)`.
    pub fn residual(&self) -> f64 {
        (self.deeplift_sum - self.delta).abs().max((self.es_sum - self.delta).abs())
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:>6} {:>14} {:>14} {:>14}\n", "input", "deeplift", "es", "diff");
        for r in &self.rows {
            s.push_str(&format!("{:>6} {:>14.6} {:>14.6} {:>14.6}\n", r.input, r.deeplift, r.es, r.diff));
        }
        s.push_str(&format!(
            "{:>6} {:>14.6} {:>14.6}   f(x) - f(ref) = {:.6}\n",
            "sum", self.deeplift_sum, self.es_sum, self.delta
        ));
        s
    }
}

pub fn compare_rules(dag: &MicroDag, x: &FeatureVector, reference: &FeatureVector) -> Result<ComparisonReport> {
    let c = deeplift_attribute(dag, x, reference)?;
    let es = es_attribute_dag(dag, x, reference)?;
    let rows: Vec<ComparisonRow> = c
        .contributions
        .iter()
        .zip(&es.phi)
        .enumerate()
        .map(|(input, (&deeplift, &es))| ComparisonRow {
            input,
            deeplift,
            es,
            diff: deeplift - es,
        })
        .collect();
    Ok(ComparisonReport {
        delta: c.output - c.reference_output,
        deeplift_sum: c.contributions.iter().sum(),
        es_sum: es.phi.iter().sum(),
        zero_reference: reference.iter().all(|&v| v == 0.0),
        rows,
    })
}
