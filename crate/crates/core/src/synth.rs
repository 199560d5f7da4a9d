//! Seeded synthetic datasets with built-in tree models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, LabeledDataset};
use crate::error::Result;
use crate::exec::Execution;
use crate::grid::DataRange;
use crate::model::{label_with_model, BlackBoxModel, ModelKind, Prediction};
use crate::schema::{Feature, FeatureSchema};
use crate::surrogate::{Surrogate, SurrogateConfig, TreeNode};
use crate::target::TargetSpec;

fn class(c: &str) -> TreeNode {
    TreeNode::leaf(Prediction::Class(c.into()), 0.0)
}

fn value(v: f64) -> TreeNode {
    TreeNode::leaf(Prediction::Value(v), 0.0)
}

fn wrap(kind: ModelKind, dim: usize, tree: TreeNode) -> Surrogate {
    Surrogate {
        config: SurrogateConfig {
            rho: 1.0,
            trees: 1,
            seed: 0,
        },
        kind,
        dim,
        trees: vec![tree],
    }
}

/// Two Gaussian clusters in the plane, centred at `(-2, -2)` and `(2, 2)`.
pub fn cluster_points(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.5).expect("valid normal");
    let rows = (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { -2.0 } else { 2.0 };
            vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]
        })
        .collect();
    Dataset::new(FeatureSchema::numerical(2)?, rows)
}

/// A fixed depth-3 classifier over the cluster plane with classes `red` and
/// `blue`.
pub fn cluster_classifier() -> Surrogate {
    let tree = TreeNode::split(
        0,
        0.0,
        TreeNode::split(1, 1.5, class("red"), class("blue")),
        TreeNode::split(
            1,
            -1.0,
            class("red"),
            TreeNode::split(0, 3.5, class("blue"), class("red")),
        ),
    );
    wrap(ModelKind::Classifier, 2, tree)
}

pub fn cluster_target() -> TargetSpec {
    TargetSpec::classes(["blue"])
}

pub fn two_clusters(n: usize, seed: u64) -> Result<LabeledDataset> {
    label_with_model(&cluster_points(n, seed)?, &cluster_classifier(), Execution::Sequential)
}

/// The cluster classifier with every `1/period`-th point (by a hash of its
/// coordinates) flipped to the other class.
pub struct NoisyClassifier {
    pub base: Surrogate,
    pub period: u64,
}

impl BlackBoxModel for NoisyClassifier {
    fn kind(&self) -> ModelKind {
        ModelKind::Classifier
    }

    fn predict(&self, x: &[f64]) -> std::result::Result<Prediction, String> {
        let y = self.base.predict(x)?;
        let h = x
            .iter()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, v| (h ^ v.to_bits()).wrapping_mul(0x100_0000_01b3));
        if h % self.period != 0 {
            return Ok(y);
        }
        Ok(Prediction::Class(
            if y == Prediction::Class("red".into()) { "blue" } else { "red" }.into(),
        ))
    }
}

pub fn noisy_clusters(n: usize, seed: u64, period: u64) -> Result<LabeledDataset> {
    let model = NoisyClassifier {
        base: cluster_classifier(),
        period,
    };
    label_with_model(&cluster_points(n, seed)?, &model, Execution::Sequential)
}

/// Uniform points on `[0, 10] × [-1, 1]`.
pub fn signal_points(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(-1.0..1.0)])
        .collect();
    Dataset::new(FeatureSchema::numerical(2)?, rows)
}

/// A step regression tree driven by the first input, with a small second-input
/// offset on the top step.
pub fn signal_regressor() -> Surrogate {
    let tree = TreeNode::split(
        0,
        3.0,
        value(1.0),
        TreeNode::split(
            0,
            6.0,
            value(4.0),
            TreeNode::split(1, 0.0, value(7.5), value(8.5)),
        ),
    );
    wrap(ModelKind::Regressor, 2, tree)
}

pub fn regression_signal(n: usize, seed: u64) -> Result<LabeledDataset> {
    label_with_model(&signal_points(n, seed)?, &signal_regressor(), Execution::Sequential)
}

pub fn mixed_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        Feature::numerical("x"),
        Feature::categorical("color", ["red", "green", "blue", "yellow"]),
    ])
    .expect("valid schema")
}

/// One numerical input on `[0, 10]` and a uniformly drawn colour.
pub fn mixed_points(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let mut x = vec![rng.random_range(0.0..10.0), 0.0, 0.0, 0.0, 0.0];
            x[1 + rng.random_range(0..4)] = 1.0;
            x
        })
        .collect();
    Dataset::new(mixed_schema(), rows)
}

/// `yes` for red with x > 4, blue with x > 6, or any colour with x > 8.
pub fn mixed_classifier() -> Surrogate {
    let tree = TreeNode::split(
        0,
        8.0,
        TreeNode::split(
            1,
            0.5,
            TreeNode::split(
                3,
                0.5,
                class("no"),
                TreeNode::split(0, 6.0, class("no"), class("yes")),
            ),
            TreeNode::split(0, 4.0, class("no"), class("yes")),
        ),
        class("yes"),
    );
    wrap(ModelKind::Classifier, 5, tree)
}

pub fn mixed(n: usize, seed: u64) -> Result<LabeledDataset> {
    label_with_model(&mixed_points(n, seed)?, &mixed_classifier(), Execution::Sequential)
}

/// Uniformly drawn one-hot valid inputs, numerical dimensions spanning the
/// data range widened by `margin` on both sides.
pub fn sample_inputs(schema: &FeatureSchema, range: &DataRange, n: usize, margin: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut x = vec![0.0; schema.dim()];
            let mut d = 0;
            while d < schema.dim() {
                match schema.group_of(d) {
                    Some(g) => {
                        x[g.dims.start + rng.random_range(0..g.dims.len())] = 1.0;
                        d = g.dims.end;
                    }
                    None => {
                        x[d] = rng.random_range(range.min[d] - margin..=range.max[d] + margin);
                        d += 1;
                    }
                }
            }
            x
        })
        .collect()
}
