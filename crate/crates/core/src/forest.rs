//! Binary random forest over texture descriptors: pathological vs. non-pathological.
//!
//! Trees are fully grown CART trees with Gini splits on a random subset of
//! features per node. Each tree trains on a subsample of the rows; the rows it
//! never saw are kept as its out-of-bag set.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::texture::{FeatureRecord, FeatureVector};

pub const DEFAULT_TREES: usize = 70;
pub const DEFAULT_BAG_FRACTION: f64 = 0.6;
pub const MODEL_FORMAT: &str = "lungseg-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    /// `T_n`: soft tissue or other non-lung structure.
    NonPathological,
    /// `T_p`: abnormal lung missed by the initial segmentation.
    Pathological,
}

impl Class {
    pub fn from_label(label: u8) -> Option<Class> {
        match label {
            0 => Some(Class::NonPathological),
            1 => Some(Class::Pathological),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        self as u8
    }

    fn idx(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    features: Vec<Vec<T>>,
    labels: Vec<Class>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(features: Vec<Vec<T>>, labels: Vec<Class>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::Input("feature rows are empty".into()));
            }
            for (i, row) in features.iter().enumerate() {
                if row.len() != d {
                    return Err(Error::Input(format!(
                        "row {i} has {} features, expected {d}",
                        row.len()
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Input(format!("row {i} has a non-finite feature")));
                }
            }
        }
        Ok(Self { features, labels })
    }

    /// Labelled rows of a feature CSV; unlabelled rows are an error.
    pub fn from_records(records: &[FeatureRecord<T>]) -> Result<Self> {
        let mut features = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let label = r
                .label
                .and_then(Class::from_label)
                .ok_or_else(|| Error::Input(format!("record {i} has no 0/1 label")))?;
            features.push(r.features.as_slice().to_vec());
            labels.push(label);
        }
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for l in &self.labels {
            c[l.idx()] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Fraction of the training rows each tree is grown on.
    pub bag_fraction: f64,
    /// Draw the bag with replacement instead of subsampling.
    pub bootstrap: bool,
    /// Candidate features per node; `None` means `round(sqrt(d))`.
    pub max_features: Option<usize>,
    pub rng_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            bag_fraction: DEFAULT_BAG_FRACTION,
            bootstrap: false,
            max_features: None,
            rng_seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::param("rf-trees", "must be >= 1"));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(Error::param(
                "rf-bag-fraction",
                format!("must lie in (0, 1], got {}", self.bag_fraction),
            ));
        }
        if self.max_features == Some(0) {
            return Err(Error::param("rf-max-features", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: u32,
        right: u32,
    },
    /// Training row counts per class, indexed by [`Class`].
    Leaf { votes: [u32; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    /// Majority class of the reached leaf; ties go to `Pathological`.
    pub fn vote(&self, x: &[T]) -> Class {
        let mut n = 0usize;
        loop {
            match &self.nodes[n] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    n = if x[*feature] <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { votes } => {
                    return if votes[1] >= votes[0] {
                        Class::Pathological
                    } else {
                        Class::NonPathological
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], n: usize) -> usize {
            match &nodes[n] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<T> {
    pub format: String,
    pub version: u32,
    pub n_features: usize,
    pub n_train_rows: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree<T>>,
    /// Per tree, ascending indices of the training rows left out of its bag.
    pub oob: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: Class,
    /// Fraction of trees voting `Pathological`.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobReport {
    /// `None` when no row was out of bag for any tree.
    pub accuracy: Option<f64>,
    pub evaluated: usize,
    /// Rows every tree trained on.
    pub skipped: usize,
}

struct Builder<'a, T> {
    x: &'a [Vec<T>],
    y: &'a [Class],
    mtry: usize,
    nodes: Vec<Node<T>>,
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c[0] as f64 / n, c[1] as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

impl<T: Scalar> Builder<'_, T> {
    fn counts(&self, rows: &[u32]) -> [usize; 2] {
        let mut c = [0; 2];
        for &r in rows {
            c[self.y[r as usize].idx()] += 1;
        }
        c
    }

    /// Best (weighted impurity, threshold, left count) for one feature, rows sorted in place.
    fn best_for_feature(&self, rows: &mut [u32], f: usize, total: [usize; 2]) -> Option<(f64, T, usize)> {
        let x = self.x;
        rows.sort_by(|&a, &b| x[a as usize][f].partial_cmp(&x[b as usize][f]).unwrap().then(a.cmp(&b)));
        let n = rows.len();
        let mut left = [0usize; 2];
        let mut best: Option<(f64, T, usize)> = None;
        for k in 0..n - 1 {
            left[self.y[rows[k] as usize].idx()] += 1;
            let (a, b) = (x[rows[k] as usize][f], x[rows[k + 1] as usize][f]);
            if a == b {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let imp = (nl * gini(left) + nr * gini(right)) / n as f64;
            if best.is_none_or(|(bi, _, _)| imp < bi) {
                let mid = a + (b - a) / T::of(2.0);
                // midpoint can round up to b for adjacent floats
                let thr = if mid < b { mid } else { a };
                best = Some((imp, thr, k + 1));
            }
        }
        best
    }

    /// Orders equally good splits by what they do to the rows, not by feature
    /// position: first the sorted left-child rows, then the column's values,
    /// then the index. Column permutations and monotone column transforms thus
    /// pick splits with the same partition.
    fn tie_key(&self, rows: &[u32], f: usize, thr: T) -> (Vec<u32>, Vec<T>, usize) {
        let x = self.x;
        let mut left: Vec<u32> = rows.iter().copied().filter(|&r| x[r as usize][f] <= thr).collect();
        left.sort_unstable();
        let mut sorted = rows.to_vec();
        sorted.sort_unstable();
        let column = sorted.iter().map(|&r| x[r as usize][f]).collect();
        (left, column, f)
    }

    fn grow(&mut self, rows: &mut [u32], rng: &mut ChaCha8Rng) -> u32 {
        let id = self.nodes.len() as u32;
        let counts = self.counts(rows);
        self.nodes.push(Node::Leaf {
            votes: [counts[0] as u32, counts[1] as u32],
        });
        if rows.len() < 2 || counts[0] == 0 || counts[1] == 0 {
            return id;
        }

        let d = self.x[0].len();
        // random candidate order; the first mtry are tried, the rest only if none of those splits
        let order: Vec<usize> = index::sample(rng, d, d).into_vec();
        let mut best: Option<(f64, usize, T)> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some((imp, thr, _)) = self.best_for_feature(rows, f, counts) {
                let better = match best {
                    None => true,
                    Some((bi, bf, bt)) => {
                        imp < bi || (imp == bi && self.tie_key(rows, f, thr) < self.tie_key(rows, bf, bt))
                    }
                };
                if better {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };

        let x = self.x;
        rows.sort_by_key(|&r| (!(x[r as usize][feature] <= threshold), r));
        let n_left = rows.iter().filter(|&&r| x[r as usize][feature] <= threshold).count();
        let (l, r) = rows.split_at_mut(n_left);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id as usize] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Trains a forest. Deterministic for a fixed `params.rng_seed`, whatever the thread count.
pub fn train<T: Scalar>(data: &TrainingSet<T>, params: &ForestParams) -> Result<ForestModel<T>> {
    params.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::Training(format!("need at least 2 rows, got {n}")));
    }
    let [neg, pos] = data.class_counts();
    if pos == 0 {
        return Err(Error::Training("no rows of class Pathological (T_p)".into()));
    }
    if neg == 0 {
        return Err(Error::Training("no rows of class NonPathological (T_n)".into()));
    }
    let d = data.n_features();
    let mtry = params
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().round() as usize).max(1))
        .min(d);
    let bag_size = ((params.bag_fraction * n as f64).ceil() as usize).clamp(1, n);

    let grown: Vec<(Tree<T>, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.rng_seed, t);
            let mut in_bag = vec![false; n];
            let mut rows: Vec<u32> = if params.bootstrap {
                (0..bag_size).map(|_| rng.random_range(0..n) as u32).collect()
            } else {
                index::sample(&mut rng, n, bag_size)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect()
            };
            for &r in &rows {
                in_bag[r as usize] = true;
            }
            let mut b = Builder {
                x: &data.features,
                y: &data.labels,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(&mut rows, &mut rng);
            let oob = (0..n as u32).filter(|&r| !in_bag[r as usize]).collect();
            (Tree { nodes: b.nodes }, oob)
        })
        .collect();

    let (trees, oob) = grown.into_iter().unzip();
    Ok(ForestModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        n_features: d,
        n_train_rows: n,
        params: *params,
        trees,
        oob,
    })
}

impl<T: Scalar> ForestModel<T> {
    fn check_row(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Input(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature value".into()));
        }
        Ok(())
    }

    /// Score is the fraction of trees voting `Pathological`; the label is
    /// `Pathological` iff `score >= threshold`.
    pub fn predict_row(&self, x: &[T], threshold: f64) -> Result<Prediction> {
        self.check_row(x)?;
        let votes = self.trees.iter().filter(|t| t.vote(x) == Class::Pathological).count();
        let score = votes as f64 / self.trees.len() as f64;
        Ok(Prediction {
            class: if score >= threshold {
                Class::Pathological
            } else {
                Class::NonPathological
            },
            score,
        })
    }

    pub fn predict(&self, fv: &FeatureVector<T>) -> Result<Prediction> {
        self.predict_row(fv.as_slice(), 0.5)
    }

    /// Accuracy of out-of-bag majority votes on the rows the model was trained on.
    pub fn oob_accuracy(&self, data: &TrainingSet<T>) -> Result<OobReport> {
        if data.len() != self.n_train_rows {
            return Err(Error::Input(format!(
                "model was trained on {} rows, got {}",
                self.n_train_rows,
                data.len()
            )));
        }
        let mut votes = vec![[0usize; 2]; data.len()];
        for (tree, oob) in self.trees.iter().zip(&self.oob) {
            for &r in oob {
                votes[r as usize][tree.vote(&data.features[r as usize]).idx()] += 1;
            }
        }
        let (mut correct, mut evaluated) = (0usize, 0usize);
        for (v, &label) in votes.iter().zip(&data.labels) {
            if v[0] + v[1] == 0 {
                continue;
            }
            evaluated += 1;
            let pred = if v[1] >= v[0] {
                Class::Pathological
            } else {
                Class::NonPathological
            };
            correct += (pred == label) as usize;
        }
        Ok(OobReport {
            accuracy: (evaluated > 0).then(|| correct as f64 / evaluated as f64),
            evaluated,
            skipped: data.len() - evaluated,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Internal(format!("serializing model: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Format {
            field: "model",
            message: e.to_string(),
        })?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Format {
                field: "format",
                message: format!("expected {MODEL_FORMAT:?}, found {:?}", m.format),
            });
        }
        if m.version != MODEL_VERSION {
            return Err(Error::Format {
                field: "version",
                message: format!("unsupported model version {}", m.version),
            });
        }
        if m.trees.is_empty() || m.trees.iter().any(|t| t.nodes.is_empty()) {
            return Err(Error::Format {
                field: "trees",
                message: "model has an empty tree list or an empty tree".into(),
            });
        }
        for t in &m.trees {
            for node in &t.nodes {
                if let Node::Split {
                    feature, left, right, ..
                } = node
                {
                    if *feature >= m.n_features || *left as usize >= t.nodes.len() || *right as usize >= t.nodes.len() {
                        return Err(Error::Format {
                            field: "trees",
                            message: "split node refers outside the tree".into(),
                        });
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
