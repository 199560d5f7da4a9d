//! CART trees and bootstrap forests used as surrogates, plus extraction of
//! every node's hyperrectangle as a candidate rule.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{LabeledDataset, Outputs};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{BlackBoxModel, ModelKind, Prediction};
use crate::rule::Rule;
use crate::schema::FeatureSchema;

/// A binary tree over encoded inputs. `x[split_dim] ≤ threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode<P = Prediction> {
    Internal {
        split_dim: usize,
        threshold: f64,
        left: Box<TreeNode<P>>,
        right: Box<TreeNode<P>>,
    },
    Leaf {
        prediction: P,
        /// Share of the growth sample that reached this leaf.
        fraction: f64,
    },
}

impl<P> TreeNode<P> {
    pub fn leaf(prediction: P, fraction: f64) -> Self {
        TreeNode::Leaf { prediction, fraction }
    }

    pub fn split(split_dim: usize, threshold: f64, left: Self, right: Self) -> Self {
        TreeNode::Internal {
            split_dim,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// The leaf reached by `x`.
    pub fn route(&self, x: &[f64]) -> &TreeNode<P> {
        let mut node = self;
        while let TreeNode::Internal {
            split_dim,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*split_dim] <= *threshold { left } else { right };
        }
        node
    }

    pub fn predict(&self, x: &[f64]) -> &P {
        match self.route(x) {
            TreeNode::Leaf { prediction, .. } => prediction,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    /// Leaf prediction together with the leaf's hyperrectangle.
    pub fn predict_with_box(&self, x: &[f64]) -> (&P, Rule) {
        let mut bounds = Rule::universal(x.len());
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return (prediction, bounds),
                TreeNode::Internal {
                    split_dim,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*split_dim] <= *threshold {
                        bounds.tighten_upper(*split_dim, *threshold);
                        node = left;
                    } else {
                        bounds.tighten_lower(*split_dim, *threshold);
                        node = right;
                    }
                }
            }
        }
    }

    /// Hyperrectangle of every node in depth-first preorder.
    pub fn node_boxes(&self, dim: usize) -> Vec<Rule> {
        let mut out = Vec::new();
        self.walk(Rule::universal(dim), &mut |_, r| out.push(r.clone()));
        out
    }

    /// `(hyperrectangle, prediction, fraction)` of every leaf, left to right.
    pub fn leaves(&self, dim: usize) -> Vec<(Rule, &P, f64)> {
        let mut out = Vec::new();
        self.walk(Rule::universal(dim), &mut |node, r| {
            if let TreeNode::Leaf {
                prediction,
                fraction,
            } = node
            {
                out.push((r.clone(), prediction, *fraction));
            }
        });
        out
    }

    fn walk<'a>(&'a self, bounds: Rule, visit: &mut impl FnMut(&'a TreeNode<P>, &Rule)) {
        visit(self, &bounds);
        if let TreeNode::Internal {
            split_dim,
            threshold,
            left,
            right,
        } = self
        {
            let mut lb = bounds.clone();
            lb.tighten_upper(*split_dim, *threshold);
            left.walk(lb, visit);
            let mut rb = bounds;
            rb.tighten_lower(*split_dim, *threshold);
            right.walk(rb, visit);
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        2 * self.leaf_count() - 1
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Every `(split_dim, threshold)` pair in preorder.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        fn go<P>(node: &TreeNode<P>, out: &mut Vec<(usize, f64)>) {
            if let TreeNode::Internal {
                split_dim,
                threshold,
                left,
                right,
            } = node
            {
                out.push((*split_dim, *threshold));
                go(left, out);
                go(right, out);
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    pub fn map<Q>(self, f: &mut impl FnMut(P) -> Q) -> TreeNode<Q> {
        match self {
            TreeNode::Leaf {
                prediction,
                fraction,
            } => TreeNode::Leaf {
                prediction: f(prediction),
                fraction,
            },
            TreeNode::Internal {
                split_dim,
                threshold,
                left,
                right,
            } => {
                let left = left.map(f);
                let right = right.map(f);
                TreeNode::split(split_dim, threshold, left, right)
            }
        }
    }
}

/// Options for [`grow_labels`].
#[derive(Clone, Copy, Debug)]
pub struct GrowOptions<'a> {
    /// Smallest number of samples either child of a split may receive.
    pub min_leaf: usize,
    /// When set, the only thresholds considered for each dimension.
    pub whitelist: Option<&'a [Vec<f64>]>,
    /// Keep splitting impure nodes even when no split lowers impurity.
    pub to_purity: bool,
}

/// Smallest sample count a node may hold for minimum fraction `rho` of `n`.
pub fn min_leaf_size(rho: f64, n: usize) -> usize {
    ((rho * n as f64 - 1e-9).ceil() as usize).max(1)
}

#[derive(Clone, Copy)]
enum Targets<'a> {
    Classes { ids: &'a [usize], k: usize },
    Values(&'a [f64]),
}

#[derive(Clone, Copy, Debug)]
enum LeafValue {
    Class(usize),
    Mean(f64),
}

struct Grower<'a> {
    rows: &'a [&'a [f64]],
    targets: Targets<'a>,
    opts: GrowOptions<'a>,
    total: usize,
}

/// Class histogram or running moments of a sample set.
#[derive(Clone)]
enum Stats {
    Counts(Vec<usize>, usize),
    Moments { n: usize, sum: f64, sumsq: f64, shift: f64 },
}

impl Stats {
    fn empty(targets: Targets<'_>, shift: f64) -> Self {
        match targets {
            Targets::Classes { k, .. } => Stats::Counts(vec![0; k], 0),
            Targets::Values(_) => Stats::Moments {
                n: 0,
                sum: 0.0,
                sumsq: 0.0,
                shift,
            },
        }
    }

    fn add(&mut self, targets: Targets<'_>, i: usize) {
        match (self, targets) {
            (Stats::Counts(c, n), Targets::Classes { ids, .. }) => {
                c[ids[i]] += 1;
                *n += 1;
            }
            (Stats::Moments { n, sum, sumsq, shift }, Targets::Values(v)) => {
                let y = v[i] - *shift;
                *n += 1;
                *sum += y;
                *sumsq += y * y;
            }
            _ => unreachable!(),
        }
    }

    fn remove(&mut self, targets: Targets<'_>, i: usize) {
        match (self, targets) {
            (Stats::Counts(c, n), Targets::Classes { ids, .. }) => {
                c[ids[i]] -= 1;
                *n -= 1;
            }
            (Stats::Moments { n, sum, sumsq, shift }, Targets::Values(v)) => {
                let y = v[i] - *shift;
                *n -= 1;
                *sum -= y;
                *sumsq -= y * y;
            }
            _ => unreachable!(),
        }
    }

    /// Sample count times impurity (Gini or variance).
    fn weighted_impurity(&self) -> f64 {
        match self {
            Stats::Counts(c, n) => {
                if *n == 0 {
                    return 0.0;
                }
                let sq: f64 = c.iter().map(|&k| (k * k) as f64).sum();
                *n as f64 - sq / *n as f64
            }
            Stats::Moments { n, sum, sumsq, .. } => {
                if *n == 0 {
                    0.0
                } else {
                    (sumsq - sum * sum / *n as f64).max(0.0)
                }
            }
        }
    }
}

struct Split {
    dim: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn grow(&self, idx: Vec<usize>) -> TreeNode<LeafValue> {
        let fraction = idx.len() as f64 / self.total as f64;
        let value = self.leaf_value(&idx);
        if self.is_pure(&idx) {
            return TreeNode::leaf(value, fraction);
        }
        let parent = self.stats_of(&idx).weighted_impurity();
        let Some(best) = self.best_split(&idx) else {
            return TreeNode::leaf(value, fraction);
        };
        let tol = 1e-12 * parent.max(1.0);
        if best.score >= parent - tol && !self.opts.to_purity {
            return TreeNode::leaf(value, fraction);
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.rows[i][best.dim] <= best.threshold);
        TreeNode::split(best.dim, best.threshold, self.grow(l), self.grow(r))
    }

    fn shift_of(&self, idx: &[usize]) -> f64 {
        match self.targets {
            Targets::Values(v) => idx.first().map_or(0.0, |&i| v[i]),
            Targets::Classes { .. } => 0.0,
        }
    }

    fn stats_of(&self, idx: &[usize]) -> Stats {
        let mut s = Stats::empty(self.targets, self.shift_of(idx));
        for &i in idx {
            s.add(self.targets, i);
        }
        s
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match self.targets {
            Targets::Classes { ids, .. } => idx.iter().all(|&i| ids[i] == ids[idx[0]]),
            Targets::Values(v) => idx.iter().all(|&i| v[i] == v[idx[0]]),
        }
    }

    fn leaf_value(&self, idx: &[usize]) -> LeafValue {
        match self.targets {
            Targets::Classes { ids, k } => {
                let mut c = vec![0usize; k];
                for &i in idx {
                    c[ids[i]] += 1;
                }
                // max_by_key keeps the last maximum, so scan in reverse for the lowest index
                let best = (0..k).rev().max_by_key(|&j| c[j]).unwrap_or(0);
                LeafValue::Class(best)
            }
            Targets::Values(v) => {
                LeafValue::Mean(idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64)
            }
        }
    }

    fn best_split(&self, idx: &[usize]) -> Option<Split> {
        let n = idx.len();
        let min_leaf = self.opts.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let dim = self.rows[idx[0]].len();
        let total = self.stats_of(idx);
        let mut best: Option<Split> = None;
        let mut order = idx.to_vec();
        for d in 0..dim {
            order.sort_by(|&a, &b| self.rows[a][d].total_cmp(&self.rows[b][d]));
            let xs: Vec<f64> = order.iter().map(|&i| self.rows[i][d]).collect();
            let candidates = self.candidates(d, &xs);
            let mut left = Stats::empty(self.targets, self.shift_of(idx));
            let mut right = total.clone();
            let mut k = 0;
            for (t, cut) in candidates {
                if cut < min_leaf || n - cut < min_leaf {
                    continue;
                }
                while k < cut {
                    left.add(self.targets, order[k]);
                    right.remove(self.targets, order[k]);
                    k += 1;
                }
                let score = left.weighted_impurity() + right.weighted_impurity();
                let better = match &best {
                    None => true,
                    Some(b) => score < b.score - 1e-12 * b.score.abs().max(1.0),
                };
                if better {
                    best = Some(Split {
                        dim: d,
                        threshold: t,
                        score,
                    });
                }
            }
        }
        best
    }

    /// `(threshold, rows going left)` pairs for sorted column values `xs`,
    /// ascending in both, one per distinct partition.
    fn candidates(&self, d: usize, xs: &[f64]) -> Vec<(f64, usize)> {
        let n = xs.len();
        match self.opts.whitelist {
            Some(w) => {
                let mut out: Vec<(f64, usize)> = Vec::new();
                for &t in &w[d] {
                    let cut = xs.partition_point(|&x| x <= t);
                    if cut == 0 || cut == n || out.last().is_some_and(|&(_, c)| c == cut) {
                        continue;
                    }
                    out.push((t, cut));
                }
                out
            }
            None => (1..n)
                .filter(|&i| xs[i - 1] < xs[i])
                .map(|i| (midpoint(xs[i - 1], xs[i]), i))
                .collect(),
        }
    }
}

/// A threshold `t` with `a ≤ t < b`, halfway when representable.
fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t >= b || !t.is_finite() {
        a
    } else {
        t
    }
}

fn sorted_whitelist(whitelist: Option<&[Vec<f64>]>, dim: usize) -> Result<Option<Vec<Vec<f64>>>> {
    let Some(w) = whitelist else { return Ok(None) };
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: w.len(),
        });
    }
    let mut out = Vec::with_capacity(dim);
    for ts in w {
        if ts.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("whitelist thresholds must be finite".into()));
        }
        let mut ts = ts.clone();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        out.push(ts);
    }
    Ok(Some(out))
}

/// Grows a classification tree whose leaves carry class indices.
pub fn grow_labels(rows: &[&[f64]], labels: &[usize], opts: GrowOptions<'_>) -> Result<TreeNode<usize>> {
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let dim = rows[0].len();
    let whitelist = sorted_whitelist(opts.whitelist, dim)?;
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let g = Grower {
        rows,
        targets: Targets::Classes { ids: labels, k },
        opts: GrowOptions {
            whitelist: whitelist.as_deref(),
            ..opts
        },
        total: rows.len(),
    };
    Ok(g.grow((0..rows.len()).collect()).map(&mut |v| match v {
        LeafValue::Class(c) => c,
        LeafValue::Mean(_) => unreachable!(),
    }))
}

fn grow_on(rows: &[&[f64]], outputs: &Outputs, opts: GrowOptions<'_>) -> TreeNode {
    let (targets, classes) = match outputs {
        Outputs::Classes { classes, ids } => (
            Targets::Classes {
                ids,
                k: classes.len(),
            },
            Some(classes),
        ),
        Outputs::Values(v) => (Targets::Values(v), None),
    };
    let g = Grower {
        rows,
        targets,
        opts,
        total: rows.len(),
    };
    g.grow((0..rows.len()).collect()).map(&mut |v| match v {
        LeafValue::Class(c) => Prediction::Class(classes.unwrap()[c].clone()),
        LeafValue::Mean(m) => Prediction::Value(m),
    })
}

/// Greedy CART on a labeled dataset: Gini impurity for classes, variance for
/// values.
///
/// No split may leave a child with fewer than `ceil(rho·N)` rows. With a
/// whitelist only those thresholds are tried; otherwise midpoints between
/// consecutive distinct values. Equal-impurity splits go to the lowest
/// dimension, then the lowest threshold.
pub fn grow_tree(
    labeled: &LabeledDataset,
    rho: f64,
    whitelist: Option<&[Vec<f64>]>,
    grow_to_purity: bool,
) -> Result<TreeNode> {
    if labeled.is_empty() {
        return Err(Error::EmptyData);
    }
    check_rho(rho)?;
    let whitelist = sorted_whitelist(whitelist, labeled.data.dim())?;
    let rows: Vec<&[f64]> = labeled.data.rows().collect();
    let min_leaf = if grow_to_purity {
        1
    } else {
        min_leaf_size(rho, rows.len())
    };
    Ok(grow_on(
        &rows,
        &labeled.outputs,
        GrowOptions {
            min_leaf,
            whitelist: whitelist.as_deref(),
            to_purity: grow_to_purity,
        },
    ))
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("rho must lie in (0, 1], got {rho}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub rho: f64,
    pub trees: usize,
    pub seed: u64,
}

impl SurrogateConfig {
    pub fn bootstrap(&self) -> bool {
        self.trees >= 2
    }
}

/// One tree on the full data, or a bootstrap forest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub config: SurrogateConfig,
    pub kind: ModelKind,
    pub dim: usize,
    pub trees: Vec<TreeNode>,
}

/// Grows `trees` surrogate trees. Tree `t` of a forest is grown on an
/// `N`-row bootstrap sample drawn with seed `seed + t`.
pub fn grow_forest(
    labeled: &LabeledDataset,
    trees: usize,
    rho: f64,
    seed: u64,
    exec: Execution,
) -> Result<Surrogate> {
    if labeled.is_empty() {
        return Err(Error::EmptyData);
    }
    if trees == 0 {
        return Err(Error::InvalidConfig("tree count must be at least 1".into()));
    }
    check_rho(rho)?;
    let n = labeled.len();
    let all_rows: Vec<&[f64]> = labeled.data.rows().collect();
    let opts = GrowOptions {
        min_leaf: min_leaf_size(rho, n),
        whitelist: None,
        to_purity: false,
    };
    let grown = exec::map_range(exec, trees, |t| {
        if trees == 1 {
            return grow_on(&all_rows, &labeled.outputs, opts);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let rows: Vec<&[f64]> = sample.iter().map(|&i| all_rows[i]).collect();
        grow_on(&rows, &labeled.outputs.select(&sample), opts)
    });
    Ok(Surrogate {
        config: SurrogateConfig { rho, trees, seed },
        kind: labeled.kind(),
        dim: labeled.data.dim(),
        trees: grown,
    })
}

impl Surrogate {
    /// Majority vote over trees (ties to the smallest label), or the mean.
    pub fn predict_value(&self, x: &[f64]) -> Prediction {
        match self.kind {
            ModelKind::Regressor => {
                let sum: f64 = self
                    .trees
                    .iter()
                    .map(|t| match t.predict(x) {
                        Prediction::Value(v) => *v,
                        Prediction::Class(_) => f64::NAN,
                    })
                    .sum();
                Prediction::Value(sum / self.trees.len() as f64)
            }
            ModelKind::Classifier => {
                let mut votes: BTreeMap<String, usize> = BTreeMap::new();
                for t in &self.trees {
                    *votes.entry(t.predict(x).to_string()).or_default() += 1;
                }
                let top = votes.values().copied().max().unwrap_or(0);
                let label = votes.into_iter().find(|&(_, v)| v == top).unwrap().0;
                Prediction::Class(label)
            }
        }
    }

    /// Total leaves over all trees.
    pub fn leaf_count(&self) -> usize {
        self.trees.iter().map(TreeNode::leaf_count).sum()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("surrogate serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl BlackBoxModel for Surrogate {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn predict(&self, x: &[f64]) -> std::result::Result<Prediction, String> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            }
            .to_string());
        }
        Ok(self.predict_value(x))
    }
}

/// Every node of every tree as a simplified rule, in (tree, preorder) order.
pub fn extract_rules(surrogate: &Surrogate, schema: &FeatureSchema) -> Result<Vec<Rule>> {
    let dim = schema.dim();
    if surrogate.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: surrogate.dim,
        });
    }
    surrogate
        .trees
        .iter()
        .flat_map(|t| t.node_boxes(dim))
        .map(|r| r.simplify(schema))
        .collect()
}
