//! Rule and metarule learning on top of a surrogate, and lookup-based
//! explanation.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledDataset, Outputs};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{self, Grid, DEFAULT_CELL_LIMIT};
use crate::model::{ModelKind, Prediction};
use crate::rule::{Rule, RuleStats};
use crate::schema::FeatureSchema;
use crate::surrogate::{self, GrowOptions, Surrogate, TreeNode};
use crate::target::TargetSpec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrexConfig {
    /// Minimum feasibility of a rule.
    pub rho: f64,
    /// Minimum accuracy of a rule.
    pub tau: f64,
    /// Surrogate tree count.
    pub trees: usize,
    pub target: TargetSpec,
    pub cell_limit: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl CrexConfig {
    pub fn new(target: TargetSpec) -> Self {
        CrexConfig {
            rho: 0.02,
            tau: 0.9,
            trees: 1,
            target,
            cell_limit: DEFAULT_CELL_LIMIT,
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn trees(mut self, trees: usize) -> Self {
        self.trees = trees;
        self
    }

    pub fn cell_limit(mut self, cell_limit: usize) -> Self {
        self.cell_limit = cell_limit;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_target(&self, target: TargetSpec) -> Self {
        CrexConfig {
            target,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit("rho", self.rho)?;
        unit("tau", self.tau)?;
        if self.trees == 0 {
            return Err(Error::InvalidConfig("tree count must be at least 1".into()));
        }
        if self.cell_limit == 0 {
            return Err(Error::InvalidConfig("cell limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// Index of the lowest-cost rule for `x`, ties to the lowest index.
pub fn cre_argmin(x: &[f64], rules: &[Rule], feasibility: &[f64]) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, (r, &f)) in rules.iter().zip(feasibility).enumerate() {
        let cost = r.count_changes(x) as f64 - f;
        if cost < best_cost {
            best = i;
            best_cost = cost;
        }
    }
    best
}

/// Exhaustive counterfactual rule search: argmin of `changes − feasibility`.
pub fn cre_brute_force(x: &[f64], maximal: &[Rule], data: &Dataset) -> usize {
    let feas: Vec<f64> = maximal.iter().map(|r| r.feasibility(data)).collect();
    cre_argmin(x, maximal, &feas)
}

/// Positions of the maximal valid rules among `candidates`.
///
/// A candidate is valid when its stats pass `rho` and `tau`. Exact duplicates
/// keep their first occurrence, and a valid candidate is dropped when it is a
/// categorical-aware strict subset of another valid candidate.
pub fn maximal_indices(
    candidates: &[Rule],
    stats: &[RuleStats],
    schema: &FeatureSchema,
    rho: f64,
    tau: f64,
    exec: Execution,
) -> Result<Vec<usize>> {
    let mut seen = HashSet::new();
    let valid: Vec<usize> = (0..candidates.len())
        .filter(|&i| stats[i].is_valid(rho, tau))
        .filter(|&i| seen.insert(candidates[i].key()))
        .collect();
    for &i in &valid {
        candidates[i].check_well_formed(schema)?;
    }
    let hats: Vec<Vec<f64>> = valid
        .iter()
        .map(|&i| candidates[i].hat_upper(schema))
        .collect();
    let strict_subset = |a: usize, b: usize| {
        let (ra, rb) = (&candidates[valid[a]], &candidates[valid[b]]);
        let (ua, ub) = (&hats[a], &hats[b]);
        let nested = (0..ra.dim())
            .all(|d| rb.lower()[d] <= ra.lower()[d] && ua[d] <= ub[d]);
        nested && (ra.lower() != rb.lower() || ua != ub)
    };
    let keep = exec::map_range(exec, valid.len(), |a| {
        !(0..valid.len()).any(|b| b != a && strict_subset(a, b))
    });
    let out: Vec<usize> = valid
        .iter()
        .zip(keep)
        .filter_map(|(&i, k)| k.then_some(i))
        .collect();
    if out.is_empty() {
        Err(Error::NoValidRules)
    } else {
        Ok(out)
    }
}

/// The maximal valid rules among `candidates`, in candidate order.
pub fn maximal_valid_rules(
    candidates: &[Rule],
    labeled: &LabeledDataset,
    config: &CrexConfig,
) -> Result<Vec<Rule>> {
    let mask = labeled.target_mask(&config.target)?;
    let stats = exec::map(config.execution, candidates, |r| r.stats(&labeled.data, &mask));
    let idx = maximal_indices(
        candidates,
        &stats,
        labeled.data.schema(),
        config.rho,
        config.tau,
        config.execution,
    )?;
    Ok(idx.into_iter().map(|i| candidates[i].clone()).collect())
}

/// Labels every cell with the optimal rule of its prototype.
pub fn assign_optimal_rules(grid: &mut Grid, maximal: &[Rule], feasibility: &[f64], exec: Execution) {
    let labels = exec::map(exec, &grid.cells, |c| cre_argmin(&c.prototype, maximal, feasibility));
    for (c, l) in grid.cells.iter_mut().zip(labels) {
        c.optimal_rule = Some(l);
    }
}

/// Grows a pure classification tree over the cell prototypes, splitting only
/// at rule bounds.
pub fn grow_metarule_tree(grid: &Grid, maximal: &[Rule]) -> Result<TreeNode<usize>> {
    let rows: Vec<&[f64]> = grid.cells.iter().map(|c| c.prototype.as_slice()).collect();
    let labels: Vec<usize> = grid
        .cells
        .iter()
        .map(|c| c.optimal_rule.ok_or_else(|| Error::ImpossibleCell("unlabeled cell".into())))
        .collect::<Result<_>>()?;
    let whitelist = grid::finite_bounds(maximal, grid.dim);
    surrogate::grow_labels(
        &rows,
        &labels,
        GrowOptions {
            min_leaf: 1,
            whitelist: Some(&whitelist),
            to_purity: true,
        },
    )
}

/// A grown surrogate and its candidate rules, reusable across targets.
pub struct CandidatePool<'a> {
    labeled: &'a LabeledDataset,
    surrogate: Surrogate,
    candidates: Vec<Rule>,
    fingerprint: String,
}

impl<'a> CandidatePool<'a> {
    pub fn grow(labeled: &'a LabeledDataset, config: &CrexConfig) -> Result<Self> {
        config.validate()?;
        let surrogate = surrogate::grow_forest(
            labeled,
            config.trees,
            config.rho,
            config.seed,
            config.execution,
        )?;
        let candidates = surrogate::extract_rules(&surrogate, labeled.data.schema())?;
        let fingerprint = surrogate.fingerprint();
        Ok(CandidatePool {
            labeled,
            surrogate,
            candidates,
            fingerprint,
        })
    }

    pub fn surrogate(&self) -> &Surrogate {
        &self.surrogate
    }

    pub fn candidates(&self) -> &[Rule] {
        &self.candidates
    }

    /// Runs rule selection, gridding, cell labeling and metarule growth for
    /// `config.target` and `config.tau` on the cached candidates.
    pub fn refit_target(&self, config: &CrexConfig) -> Result<RuleModel> {
        config.validate()?;
        let sc = &self.surrogate.config;
        if (sc.rho, sc.trees, sc.seed) != (config.rho, config.trees, config.seed) {
            return Err(Error::InvalidConfig(
                "rho, trees and seed must match the grown surrogate".into(),
            ));
        }
        config.target.validate(self.labeled.kind())?;
        let exec = config.execution;
        let data = &self.labeled.data;
        let schema = data.schema();
        let mask = self.labeled.target_mask(&config.target)?;

        let stats = exec::map(exec, &self.candidates, |r| r.stats(data, &mask));
        let idx = maximal_indices(&self.candidates, &stats, schema, config.rho, config.tau, exec)?;
        let maximal = idx
            .iter()
            .map(|&i| StoredRule {
                bounds: self.candidates[i].clone(),
                stats: stats[i],
            })
            .collect();
        assemble(
            maximal,
            self.labeled,
            config,
            self.fingerprint.clone(),
            self.candidates.len(),
        )
    }
}

/// Steps shared by every fitting path once the maximal rules are known.
fn assemble(
    rules: Vec<StoredRule>,
    labeled: &LabeledDataset,
    config: &CrexConfig,
    fingerprint: String,
    candidate_count: usize,
) -> Result<RuleModel> {
    let exec = config.execution;
    let data = &labeled.data;
    let schema = data.schema();
    let maximal: Vec<Rule> = rules.iter().map(|r| r.bounds.clone()).collect();
    let feasibility: Vec<f64> = rules.iter().map(|r| r.stats.feasibility).collect();

    let mut grid = grid::build_grid(&maximal, schema, config.cell_limit)?;
    grid.fill_prototypes(data, exec)?;
    assign_optimal_rules(&mut grid, &maximal, &feasibility, exec);
    let metarule_tree = grow_metarule_tree(&grid, &maximal)?;

    Ok(RuleModel {
        format_version: FORMAT_VERSION,
        schema: schema.clone(),
        config: config.clone(),
        rules,
        metarule_tree,
        provenance: Provenance {
            surrogate_sha256: fingerprint,
            candidate_count,
            cell_count: grid.cells.len(),
            training_rows: data.len(),
        },
    })
}

/// Builds a model from an explicit list of maximal rules, skipping the
/// surrogate. Rules keep their order, which is also the tie-break order.
pub fn fit_from_rules(maximal: Vec<Rule>, labeled: &LabeledDataset, config: &CrexConfig) -> Result<RuleModel> {
    config.validate()?;
    if maximal.is_empty() {
        return Err(Error::NoValidRules);
    }
    let schema = labeled.data.schema();
    for r in &maximal {
        r.check_well_formed(schema)?;
    }
    let mask = labeled.target_mask(&config.target)?;
    let count = maximal.len();
    let rules = maximal
        .into_iter()
        .map(|r| StoredRule {
            stats: r.stats(&labeled.data, &mask),
            bounds: r,
        })
        .collect();
    assemble(rules, labeled, config, String::new(), count)
}

/// Grows the surrogate and learns rules and metarules for `config.target`.
pub fn fit(labeled: &LabeledDataset, config: &CrexConfig) -> Result<RuleModel> {
    CandidatePool::grow(labeled, config)?.refit_target(config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredRule {
    pub bounds: Rule,
    pub stats: RuleStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub surrogate_sha256: String,
    pub candidate_count: usize,
    pub cell_count: usize,
    pub training_rows: usize,
}

/// Fitted maximal rules plus the metarule tree that indexes them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleModel {
    pub format_version: u32,
    pub schema: FeatureSchema,
    pub config: CrexConfig,
    pub rules: Vec<StoredRule>,
    pub metarule_tree: TreeNode<usize>,
    pub provenance: Provenance,
}

/// A local counterfactual explanation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub rule_index: usize,
    pub rule: Rule,
    pub metarule: Rule,
    /// Dimensions the instance must change.
    pub change_dims: Vec<usize>,
    /// Constrained dimensions the instance already satisfies.
    pub keep_dims: Vec<usize>,
    pub instance: Vec<f64>,
}

impl Explanation {
    pub fn new(rule_index: usize, rule: Rule, metarule: Rule, instance: &[f64]) -> Self {
        let change_dims = rule.violated_dims(instance);
        let keep_dims = rule
            .bounded_dims()
            .into_iter()
            .filter(|d| !change_dims.contains(d))
            .collect();
        Explanation {
            rule_index,
            rule,
            metarule,
            change_dims,
            keep_dims,
            instance: instance.to_vec(),
        }
    }

    /// True when the instance already lies in the rule.
    pub fn satisfied(&self) -> bool {
        self.change_dims.is_empty()
    }
}

impl RuleModel {
    pub fn rule(&self, i: usize) -> &Rule {
        &self.rules[i].bounds
    }

    pub fn rule_list(&self) -> Vec<Rule> {
        self.rules.iter().map(|r| r.bounds.clone()).collect()
    }

    pub fn feasibilities(&self) -> Vec<f64> {
        self.rules.iter().map(|r| r.stats.feasibility).collect()
    }

    pub fn kind(&self) -> ModelKind {
        match self.config.target {
            TargetSpec::ClassSet { .. } => ModelKind::Classifier,
            _ => ModelKind::Regressor,
        }
    }

    /// Leaf hyperrectangles of the metarule tree with their rule indices.
    pub fn metarules(&self) -> Vec<(Rule, usize)> {
        self.metarule_tree
            .leaves(self.schema.dim())
            .into_iter()
            .map(|(r, &i, _)| (r.simplify(&self.schema).unwrap_or(r), i))
            .collect()
    }

    pub fn metarule_count(&self) -> usize {
        self.metarule_tree.leaf_count()
    }

    /// Optimal rule by exhaustive search with stored training feasibilities.
    pub fn brute_force(&self, x: &[f64]) -> usize {
        cre_argmin(x, &self.rule_list(), &self.feasibilities())
    }

    pub fn explain(&self, x: &[f64]) -> Result<Explanation> {
        self.schema.check_row(x, 0)?;
        let (&i, leaf) = self.metarule_tree.predict_with_box(x);
        let metarule = leaf.simplify(&self.schema).unwrap_or(leaf);
        Ok(Explanation::new(i, self.rule(i).clone(), metarule, x))
    }

    /// Explains every row, in order.
    pub fn explain_batch(&self, data: &Dataset, exec: Execution) -> Result<Vec<Explanation>> {
        exec::try_map_range(exec, data.len(), |i| {
            self.explain(data.row(i)).map_err(|e| match e {
                Error::InvalidRow { reason, .. } => Error::InvalidRow { row: i, reason },
                other => other,
            })
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RuleModel = serde_json::from_str(s)?;
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        for r in &self.rules {
            r.bounds.check_well_formed(&self.schema)?;
        }
        if self.rules.is_empty() {
            return Err(Error::NoValidRules);
        }
        Ok(())
    }
}

/// How a set of models is chosen between at explain time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Dispatch {
    /// `models[i]` targets every class except `labels[i]`.
    Untargeted { labels: Vec<String> },
    /// `models[0]` targets `(mu, ∞)` for outputs at most `mu`; `models[1]`
    /// targets `(−∞, mu]` for outputs above it.
    Regression { mu: f64 },
}

/// Several rule models sharing one surrogate, selected by the model output
/// at the instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub format_version: u32,
    pub dispatch: Dispatch,
    pub models: Vec<RuleModel>,
}

impl ModelSet {
    pub fn fit_untargeted(labeled: &LabeledDataset, config: &CrexConfig) -> Result<Self> {
        let Outputs::Classes { classes, .. } = &labeled.outputs else {
            return Err(Error::TypeMismatch(
                "untargeted explanations need a classifier".into(),
            ));
        };
        if classes.len() < 2 {
            return Err(Error::InvalidConfig(
                "untargeted explanations need at least two classes".into(),
            ));
        }
        let pool = CandidatePool::grow(labeled, config)?;
        let models = classes
            .iter()
            .map(|y| {
                let target = TargetSpec::classes(classes.iter().filter(|c| *c != y).cloned());
                pool.refit_target(&config.with_target(target))
            })
            .collect::<Result<_>>()?;
        Ok(ModelSet {
            format_version: FORMAT_VERSION,
            dispatch: Dispatch::Untargeted {
                labels: classes.clone(),
            },
            models,
        })
    }

    /// Fits low-to-high and high-to-low models around `mu`, by default the
    /// mean training output.
    pub fn fit_regression(labeled: &LabeledDataset, config: &CrexConfig, mu: Option<f64>) -> Result<Self> {
        let Some(mean) = labeled.outputs.mean() else {
            return Err(Error::TypeMismatch(
                "regression targets need numeric outputs".into(),
            ));
        };
        let mu = mu.unwrap_or(mean);
        let pool = CandidatePool::grow(labeled, config)?;
        let models = [TargetSpec::above(mu), TargetSpec::at_most(mu)]
            .into_iter()
            .map(|t| pool.refit_target(&config.with_target(t)))
            .collect::<Result<_>>()?;
        Ok(ModelSet {
            format_version: FORMAT_VERSION,
            dispatch: Dispatch::Regression { mu },
            models,
        })
    }

    /// The model whose target excludes `y0`.
    pub fn select(&self, y0: &Prediction) -> Result<&RuleModel> {
        match (&self.dispatch, y0) {
            (Dispatch::Untargeted { labels }, Prediction::Class(c)) => labels
                .iter()
                .position(|l| l == c)
                .map(|i| &self.models[i])
                .ok_or_else(|| Error::InvalidConfig(format!("unknown class `{c}`"))),
            (Dispatch::Regression { mu }, Prediction::Value(v)) => {
                Ok(&self.models[usize::from(*v > *mu)])
            }
            _ => Err(Error::TypeMismatch(
                "model output does not match the model set".into(),
            )),
        }
    }

    pub fn explain(&self, x: &[f64], y0: &Prediction) -> Result<Explanation> {
        self.select(y0)?.explain(x)
    }
}

/// Either model artifact as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
#[allow(clippy::large_enum_variant)]
pub enum ModelFile {
    Set(ModelSet),
    Single(RuleModel),
}

impl ModelFile {
    pub fn schema(&self) -> &FeatureSchema {
        match self {
            ModelFile::Single(m) => &m.schema,
            ModelFile::Set(s) => &s.models[0].schema,
        }
    }

    pub fn models(&self) -> Vec<&RuleModel> {
        match self {
            ModelFile::Single(m) => vec![m],
            ModelFile::Set(s) => s.models.iter().collect(),
        }
    }

    /// Picks the model for an instance whose model output is `y0`, which is
    /// only required for model sets.
    pub fn select(&self, y0: Option<&Prediction>) -> Result<&RuleModel> {
        match (self, y0) {
            (ModelFile::Single(m), _) => Ok(m),
            (ModelFile::Set(s), Some(y)) => s.select(y),
            (ModelFile::Set(_), None) => Err(Error::InvalidConfig(
                "this model file needs the model output of each instance".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        for m in f.models() {
            m.check()?;
        }
        if let ModelFile::Set(s) = &f {
            if s.format_version != FORMAT_VERSION || s.models.is_empty() {
                return Err(Error::InvalidConfig("malformed model set".into()));
            }
        }
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::CATEGORICAL_BOUND;
    use crate::schema::Feature;
    use proptest::prelude::*;

    fn stats(feas: f64, acc: f64) -> RuleStats {
        RuleStats {
            feasibility: feas,
            accuracy: acc,
            complexity: 0,
            support: 0,
        }
    }

    #[test]
    fn config_validation() {
        let c = CrexConfig::new(TargetSpec::classes(["a"]));
        assert!(c.validate().is_ok());
        assert!(c.clone().tau(1.5).validate().is_err());
        assert!(c.clone().rho(0.0).validate().is_err());
        assert!(c.clone().trees(0).validate().is_err());
        assert!(c.cell_limit(0).validate().is_err());
    }

    #[test]
    fn maximality_drops_subsets() {
        let s = FeatureSchema::numerical(1).unwrap();
        let a = Rule::universal(1).with_lower(0, 1.0).with_upper(0, 2.0);
        let b = Rule::universal(1).with_lower(0, 0.0).with_upper(0, 3.0);
        let idx = maximal_indices(
            &[a.clone(), b.clone(), b.clone()],
            &[stats(0.5, 1.0), stats(0.6, 1.0), stats(0.6, 1.0)],
            &s,
            0.1,
            0.9,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(idx, vec![1]);
        // the superset fails tau, so the subset survives
        let idx = maximal_indices(
            &[a, b],
            &[stats(0.5, 1.0), stats(0.6, 0.5)],
            &s,
            0.1,
            0.9,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn no_valid_rules() {
        let s = FeatureSchema::numerical(1).unwrap();
        assert!(matches!(
            maximal_indices(&[Rule::universal(1)], &[stats(1.0, 0.5)], &s, 0.1, 0.9, Execution::Sequential),
            Err(Error::NoValidRules)
        ));
    }

    #[test]
    fn categorical_maximality() {
        let s = FeatureSchema::new(vec![Feature::categorical("c", ["a", "b", "c"])]).unwrap();
        let hot = Rule::universal(3).with_lower(0, CATEGORICAL_BOUND);
        let cold = Rule::universal(3).with_upper(1, CATEGORICAL_BOUND);
        let idx = maximal_indices(
            &[hot, cold],
            &[stats(0.3, 1.0), stats(0.6, 1.0)],
            &s,
            0.1,
            0.9,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(idx, vec![1]);
    }

    #[test]
    fn brute_force_ties_and_feasibility() {
        let d = Dataset::new(
            FeatureSchema::numerical(1).unwrap(),
            (0..10).map(|i| vec![f64::from(i)]).collect(),
        )
        .unwrap();
        let r = Rule::universal(1).with_lower(0, 5.5);
        assert_eq!(cre_brute_force(&[0.0], std::slice::from_ref(&r), &d), 0);
        // equal changes, feasibility 0.4 beats 0.2
        let small = Rule::universal(1).with_lower(0, 7.5);
        let big = Rule::universal(1).with_lower(0, 5.5);
        assert_eq!(cre_brute_force(&[0.0], &[small.clone(), big.clone()], &d), 1);
        // exact tie goes to the lower index
        assert_eq!(cre_brute_force(&[0.0], &[big.clone(), big], &d), 0);
    }

    fn two_blob(seed: u64) -> LabeledDataset {
        crate::synth::two_clusters(200, seed).unwrap()
    }

    #[test]
    fn fit_stores_valid_rules_and_is_deterministic() {
        let l = two_blob(1);
        let target = crate::synth::cluster_target();
        let c = CrexConfig::new(target).rho(0.1).tau(0.9);
        let m = fit(&l, &c).unwrap();
        let mask = l.target_mask(&c.target).unwrap();
        for r in &m.rules {
            let s = r.bounds.stats(&l.data, &mask);
            assert!(s.is_valid(0.1, 0.9));
            assert_eq!(s, r.stats);
        }
        let again = fit(&l, &c.clone().execution(Execution::Sequential)).unwrap();
        assert_eq!(m.to_json().unwrap(), again.to_json().unwrap());
        let back = RuleModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn refit_requires_same_surrogate() {
        let l = two_blob(2);
        let c = CrexConfig::new(crate::synth::cluster_target()).rho(0.1);
        let pool = CandidatePool::grow(&l, &c).unwrap();
        assert!(pool.refit_target(&c.clone().rho(0.2)).is_err());
        assert!(pool.refit_target(&c.clone().tau(0.8)).is_ok());
    }

    #[test]
    fn model_set_dispatch() {
        let l = two_blob(3);
        let c = CrexConfig::new(crate::synth::cluster_target()).rho(0.1);
        let set = ModelSet::fit_untargeted(&l, &c).unwrap();
        let Dispatch::Untargeted { labels } = &set.dispatch else { panic!() };
        for (i, y) in labels.iter().enumerate() {
            let m = set.select(&Prediction::Class(y.clone())).unwrap();
            assert_eq!(m, &set.models[i]);
            let TargetSpec::ClassSet { labels: t } = &m.config.target else { panic!() };
            assert!(!t.contains(y));
        }
        let file = ModelFile::Set(set);
        assert_eq!(ModelFile::from_json(&file.to_json().unwrap()).unwrap(), file);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn explain_matches_oracle(seed in 0u64..1000, pts in prop::collection::vec((-6.0..6.0f64, -6.0..6.0f64), 50)) {
            let l = two_blob(seed);
            let c = CrexConfig::new(crate::synth::cluster_target()).rho(0.1).tau(0.9);
            let Ok(m) = fit(&l, &c) else { return Ok(()) };
            let rules = m.rule_list();
            for (a, b) in pts {
                let x = [a, b];
                let e = m.explain(&x).unwrap();
                prop_assert_eq!(e.rule_index, cre_brute_force(&x, &rules, &l.data));
                prop_assert!(e.metarule.covers(&x));
            }
        }
    }
}
