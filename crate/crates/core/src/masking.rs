//! The interpretable input space: coalitions of feature groups, and the
//! expectation-based set function over a background dataset.

use std::collections::HashMap;
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{FeatureVector, Predict};

/// A binary presence vector over `M` interpretable features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    len: usize,
    words: Vec<u64>,
}

impl Coalition {
    pub fn empty(len: usize) -> Self {
        Coalition {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut c = Coalition::empty(len);
        for w in &mut c.words {
            *w = u64::MAX;
        }
        c.clear_tail();
        c
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut c = Coalition::empty(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            c.set(i, b);
        }
        c
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Coalition::empty(len);
        for i in indices {
            c.set(i, true);
        }
        c
    }

    /// Bit `i` of `mask` becomes feature `i`. Requires `len <= 64`.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        assert!(len <= 64, "mask coalitions are limited to 64 features");
        let mut c = Coalition::empty(len);
        if len > 0 {
            c.words[0] = mask;
            c.clear_tail();
        }
        c
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, on: bool) {
        assert!(i < self.len, "bit {i} out of range for coalition of {}", self.len);
        let bit = 1u64 << (i % 64);
        if on {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn with(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.set(i, true);
        c
    }

    /// Number of present features, `|z|`.
    pub fn size(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        let mut c = Coalition {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        c.clear_tail();
        c
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

/// A partition of the original feature indices into `M` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGrouping {
    groups: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

impl FeatureGrouping {
    pub fn new(groups: Vec<Vec<usize>>, n_features: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InputDomain("grouping over zero features".into()));
        }
        let mut owner = vec![usize::MAX; n_features];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InputDomain(format!("group {g} is empty")));
            }
            for &i in members {
                if i >= n_features {
                    return Err(Error::InputDomain(format!(
                        "group {g} references feature {i} but there are {n_features}"
                    )));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::InputDomain(format!(
                        "feature {i} appears in groups {} and {g}",
                        owner[i]
                    )));
                }
                owner[i] = g;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InputDomain(format!("feature {i} is not in any group")));
        }
        Ok(FeatureGrouping { groups, owner })
    }

    pub fn singletons(n_features: usize) -> Self {
        FeatureGrouping {
            groups: (0..n_features).map(|i| vec![i]).collect(),
            owner: (0..n_features).collect(),
        }
    }

    /// Parses `{"groups": [[int, ...], ...]}`.
    pub fn from_json(document: &str, n_features: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            groups: Vec<Vec<usize>>,
        }
        let doc: Doc = serde_json::from_str(document)?;
        FeatureGrouping::new(doc.groups, n_features)
    }

    /// Number of interpretable features `M`.
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Number of original features `P`.
    pub fn n_features(&self) -> usize {
        self.owner.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// The group containing original feature `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.owner[i]
    }

    /// Display names for the groups, joining member names with `+`.
    pub fn names(&self, feature_names: &[String]) -> Vec<String> {
        self.groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&i| {
                        feature_names
                            .get(i)
                            .cloned()
                            .unwrap_or_else(|| format!("x{i}"))
                    })
                    .collect::<Vec<_>>()
                    .join("+")
            })
            .collect()
    }
}

/// Rows standing in for "missing" feature values, equally weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<FeatureVector>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<FeatureVector>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InputDomain("background set needs at least one row".into()));
        };
        let width = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::InputShape {
                what: "background row",
                expected: width,
                actual: bad.len(),
            });
        }
        Ok(BackgroundSet { rows })
    }

    /// A single reference row.
    pub fn reference(row: FeatureVector) -> Self {
        BackgroundSet { rows: vec![row] }
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let k = self.rows.len() as f64;
        let mut m = vec![0.0; self.n_features()];
        for r in &self.rows {
            for (acc, v) in m.iter_mut().zip(r.iter()) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= k);
        m
    }
}

/// A numeric CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

impl Table {
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let values = record
                .iter()
                .enumerate()
                .map(|(col, field)| {
                    field.parse::<f64>().map_err(|_| Error::Parse {
                        message: format!("`{field}` is not a number"),
                        line,
                        column: col + 1,
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != names.len() {
                return Err(Error::Parse {
                    message: format!("expected {} fields, found {}", names.len(), values.len()),
                    line,
                    column: 0,
                });
            }
            let row = FeatureVector::new(values).map_err(|e| Error::Parse {
                message: e.to_string(),
                line,
                column: 0,
            })?;
            rows.push(row);
        }
        Ok(Table { names, rows })
    }
}

/// Builds the model input for coalition `z`: features in present groups are
/// taken from `x`, the rest from the background row `b`.
pub fn compose(
    x: &[f64],
    z: &Coalition,
    b: &[f64],
    grouping: &FeatureGrouping,
) -> Result<FeatureVector> {
    let p = grouping.n_features();
    for (what, len, expected) in [
        ("instance", x.len(), p),
        ("background row", b.len(), p),
        ("coalition", z.len(), grouping.n_groups()),
    ] {
        if len != expected {
            return Err(Error::InputShape {
                what,
                expected,
                actual: len,
            });
        }
    }
    let mut out = vec![0.0; p];
    compose_into(x, z, b, grouping, &mut out);
    Ok(FeatureVector(out))
}

fn compose_into(x: &[f64], z: &Coalition, b: &[f64], grouping: &FeatureGrouping, out: &mut [f64]) {
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = if z.get(grouping.owner[i]) { x[i] } else { b[i] };
    }
}

/// Memoized `f_x(S)`: the mean model output over background rows with the
/// features outside `S` replaced.
///
/// The memo is shared between threads; a racing recomputation stores the
/// same bits, so the first insert wins and later ones are discarded.
pub struct SetFunctionCache<P> {
    model: P,
    instance: FeatureVector,
    grouping: FeatureGrouping,
    background: BackgroundSet,
    memo: RwLock<HashMap<Coalition, f64>>,
    misses: AtomicUsize,
}

impl<P: Predict> SetFunctionCache<P> {
    pub fn new(
        model: P,
        instance: FeatureVector,
        background: BackgroundSet,
        grouping: FeatureGrouping,
    ) -> Result<Self> {
        let p = model.n_features();
        for (what, actual) in [
            ("instance", instance.len()),
            ("background row", background.n_features()),
            ("grouping", grouping.n_features()),
        ] {
            if actual != p {
                return Err(Error::InputShape {
                    what,
                    expected: p,
                    actual,
                });
            }
        }
        Ok(SetFunctionCache {
            model,
            instance,
            grouping,
            background,
            memo: RwLock::new(HashMap::new()),
            misses: AtomicUsize::new(0),
        })
    }

    /// Cache with one interpretable feature per input feature.
    pub fn singletons(model: P, instance: FeatureVector, background: BackgroundSet) -> Result<Self> {
        let p = model.n_features();
        Self::new(model, instance, background, FeatureGrouping::singletons(p))
    }

    pub fn model(&self) -> &P {
        &self.model
    }

    pub fn instance(&self) -> &FeatureVector {
        &self.instance
    }

    pub fn grouping(&self) -> &FeatureGrouping {
        &self.grouping
    }

    pub fn background(&self) -> &BackgroundSet {
        &self.background
    }

    /// Number of interpretable features `M`.
    pub fn n_players(&self) -> usize {
        self.grouping.n_groups()
    }

    /// Distinct coalitions evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Checked `f_x(S)` for a coalition.
    pub fn set_value(&self, z: &Coalition) -> Result<f64> {
        if z.len() != self.n_players() {
            return Err(Error::InputShape {
                what: "coalition",
                expected: self.n_players(),
                actual: z.len(),
            });
        }
        Ok(self.value(z))
    }

    pub(crate) fn value(&self, z: &Coalition) -> f64 {
        if let Some(&v) = self.memo.read().expect("memo lock poisoned").get(z) {
            return v;
        }
        let v = self.compute(z);
        let mut memo = self.memo.write().expect("memo lock poisoned");
        *memo.entry(z.clone()).or_insert_with(|| {
            self.misses.fetch_add(1, Ordering::Relaxed);
            v
        })
    }

    /// `f(x)`, the value of the full coalition.
    pub fn full_value(&self) -> f64 {
        self.value(&Coalition::full(self.n_players()))
    }

    /// `f_x(∅)`, the mean background prediction.
    pub fn empty_value(&self) -> f64 {
        self.value(&Coalition::empty(self.n_players()))
    }

    /// Evaluates many coalitions in parallel, filling the memo.
    pub fn prefill(&self, coalitions: &[Coalition]) {
        coalitions.par_iter().for_each(|z| {
            self.value(z);
        });
    }

    fn compute(&self, z: &Coalition) -> f64 {
        let rows = self.background.rows();
        let mut input = vec![0.0; self.instance.len()];
        let mut outputs = Vec::with_capacity(rows.len());
        for b in rows {
            compose_into(&self.instance, z, b, &self.grouping, &mut input);
            outputs.push(self.model.predict(&input));
        }
        // Identical outputs (e.g. the full coalition) return that value
        // untouched so endpoint identities hold bit-for-bit.
        if outputs.iter().all(|v| v.to_bits() == outputs[0].to_bits()) {
            return outputs[0];
        }
        outputs.iter().sum::<f64>() / outputs.len() as f64
    }
}
