pub mod data;
pub mod engine;
pub mod evaluation;
pub mod error;
pub mod exec;
pub mod grid;
pub mod model;
pub mod percentile;
pub mod render;
pub mod rule;
pub mod schema;
pub mod surrogate;
pub mod synth;
pub mod target;

pub use data::{Dataset, LabeledDataset, Outputs};
pub use engine::{
    fit_from_rules,
    cre_brute_force, fit, CandidatePool, CrexConfig, Explanation, ModelFile, ModelSet, RuleModel,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{label_with_model, BlackBoxModel, FnModel, ModelKind, Prediction, ProcessModel};
pub use percentile::PercentileTable;
pub use rule::{Rule, RuleStats, CATEGORICAL_BOUND};
pub use schema::{Feature, FeatureSchema};
pub use surrogate::{extract_rules, grow_forest, grow_tree, Surrogate, TreeNode};
pub use target::TargetSpec;
