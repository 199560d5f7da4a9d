//! Desiderata metrics on held-out data, counterfactual distance and a
//! cross-validation harness with CSV/JSON reports.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledDataset};
use crate::engine::{fit, CrexConfig, ModelFile, ModelSet, RuleModel};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{label_with_model, BlackBoxModel, ModelKind};
use crate::percentile::PercentileTable;
use crate::rule::{GroupForm, Rule};
use crate::schema::FeatureSchema;
use crate::target::TargetSpec;

/// Scores for one explained test instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Row index in the test set.
    pub row: usize,
    /// Which model of a model set produced the rule (0 for single models).
    pub model: usize,
    pub rule: usize,
    pub accuracy: f64,
    pub feasibility: f64,
    pub sparsity: usize,
    pub complexity: usize,
    pub distance: f64,
    pub explain_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub accuracy: f64,
    pub feasibility: f64,
    pub sparsity: f64,
    pub complexity: f64,
    pub distance: f64,
    pub consistency: f64,
    pub fit_seconds: f64,
    pub explain_seconds: f64,
}

impl Means {
    fn average(items: &[&Means]) -> Means {
        let n = items.len().max(1) as f64;
        let avg = |f: fn(&Means) -> f64| items.iter().map(|m| f(m)).sum::<f64>() / n;
        Means {
            accuracy: avg(|m| m.accuracy),
            feasibility: avg(|m| m.feasibility),
            sparsity: avg(|m| m.sparsity),
            complexity: avg(|m| m.complexity),
            distance: avg(|m| m.distance),
            consistency: avg(|m| m.consistency),
            fit_seconds: avg(|m| m.fit_seconds),
            explain_seconds: avg(|m| m.explain_seconds),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instances: usize,
    pub unique_rules: usize,
    /// Rules available to the explainer, summed over models.
    pub maximal_rules: usize,
    #[serde(flatten)]
    pub means: Means,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesiderataReport {
    pub records: Vec<InstanceRecord>,
    pub aggregate: Aggregate,
}

impl DesiderataReport {
    fn from_records(records: Vec<InstanceRecord>, maximal_rules: usize) -> Self {
        let n = records.len() as f64;
        let mean = |f: fn(&InstanceRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let unique: BTreeSet<(usize, usize)> = records.iter().map(|r| (r.model, r.rule)).collect();
        let means = Means {
            accuracy: mean(|r| r.accuracy),
            feasibility: mean(|r| r.feasibility),
            sparsity: mean(|r| r.sparsity as f64),
            complexity: mean(|r| r.complexity as f64),
            distance: mean(|r| r.distance),
            consistency: unique.len() as f64 / n,
            fit_seconds: 0.0,
            explain_seconds: mean(|r| r.explain_seconds),
        };
        DesiderataReport {
            aggregate: Aggregate {
                instances: records.len(),
                unique_rules: unique.len(),
                maximal_rules,
                means,
            },
            records,
        }
    }

    pub fn with_fit_seconds(mut self, secs: f64) -> Self {
        self.aggregate.means.fit_seconds = secs;
        self
    }

    /// Per-instance records as CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Aggregates as pretty JSON.
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), &self.aggregate)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// The point of the rule's closure nearest to `x`, moving each violated
/// dimension to its nearest bound. A violated open lower bound `l` moves to
/// the next representable value above `l`. A one-hot group that must change
/// moves to the rule's hot category, or to the nearest allowed category by
/// index.
pub fn closest_point(x: &[f64], rule: &Rule, schema: &FeatureSchema) -> Vec<f64> {
    let mut out = x.to_vec();
    let (lo, hi) = (rule.lower(), rule.upper());
    let violated = rule.violated_dims(x);
    let mut d = 0;
    while d < x.len() {
        if let Some(g) = schema.group_of(d) {
            let dims = g.dims.clone();
            if violated.iter().any(|k| dims.contains(k)) {
                let current = schema.hot_dim(x, &g).unwrap_or(dims.start);
                let to = match rule.group_form(&g) {
                    Ok(GroupForm::Hot(h)) => h,
                    Ok(GroupForm::Cold(cold)) => dims
                        .clone()
                        .filter(|k| !cold.contains(k))
                        .min_by_key(|&k| (k.abs_diff(current), k))
                        .unwrap_or(current),
                    _ => current,
                };
                for k in dims.clone() {
                    out[k] = if k == to { 1.0 } else { 0.0 };
                }
            }
            d = dims.end;
        } else {
            if x[d] <= lo[d] {
                out[d] = lo[d].next_up();
            } else if x[d] > hi[d] {
                out[d] = hi[d];
            }
            d += 1;
        }
    }
    out
}

/// Total percentile shift between `x` and its closest point in `rule`.
pub fn counterfactual_distance(x: &[f64], rule: &Rule, schema: &FeatureSchema, table: &PercentileTable) -> f64 {
    let y = closest_point(x, rule, schema);
    (0..x.len())
        .filter(|&d| x[d] != y[d])
        .map(|d| (table.percentile(d, y[d]) - table.percentile(d, x[d])).abs())
        .sum()
}

/// Target on the opposite side of the mean output from `x0_output`.
pub fn make_regression_target(labeled: &LabeledDataset, x0_output: f64) -> Result<TargetSpec> {
    let mu = labeled
        .outputs
        .mean()
        .ok_or_else(|| Error::TypeMismatch("regression targets need numeric outputs".into()))?;
    Ok(if x0_output <= mu {
        TargetSpec::above(mu)
    } else {
        TargetSpec::at_most(mu)
    })
}

fn score(
    model: &RuleModel,
    model_id: usize,
    test: &LabeledDataset,
    mask: &[bool],
    row: usize,
    table: &PercentileTable,
) -> Result<InstanceRecord> {
    let x = test.data.row(row);
    let start = Instant::now();
    let e = model.explain(x)?;
    let explain_seconds = start.elapsed().as_secs_f64();
    let stats = e.rule.stats(&test.data, mask);
    Ok(InstanceRecord {
        row,
        model: model_id,
        rule: e.rule_index,
        accuracy: stats.accuracy,
        feasibility: stats.feasibility,
        sparsity: e.change_dims.len(),
        complexity: stats.complexity,
        distance: counterfactual_distance(x, &e.rule, test.data.schema(), table),
        explain_seconds,
    })
}

/// Explains every test row whose output is outside `target` and scores the
/// returned rules on the test set.
pub fn evaluate(
    model: &RuleModel,
    test: &LabeledDataset,
    target: &TargetSpec,
    table: &PercentileTable,
) -> Result<DesiderataReport> {
    let mask = test.target_mask(target)?;
    let rows: Vec<usize> = (0..test.len()).filter(|&i| !mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let records = rows
        .into_iter()
        .map(|i| score(model, 0, test, &mask, i, table))
        .collect::<Result<_>>()?;
    Ok(DesiderataReport::from_records(records, model.rules.len()))
}

/// Explains every test row with the member model selected by its output.
/// Regression sets score against targets built from the test mean.
pub fn evaluate_set(set: &ModelSet, test: &LabeledDataset, table: &PercentileTable) -> Result<DesiderataReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let targets: Vec<TargetSpec> = set.models.iter().map(|m| m.config.target.clone()).collect();
    let masks = targets
        .iter()
        .map(|t| test.target_mask(t))
        .collect::<Result<Vec<_>>>()?;
    let records = (0..test.len())
        .map(|i| {
            let y = test.outputs.get(i);
            let m = set.select(&y)?;
            let id = set.models.iter().position(|c| std::ptr::eq(c, m)).unwrap_or(0);
            score(m, id, test, &masks[id], i, table)
        })
        .collect::<Result<_>>()?;
    let maximal = set.models.iter().map(|m| m.rules.len()).sum();
    Ok(DesiderataReport::from_records(records, maximal))
}

/// Evaluates a stored artifact. Single models need the target they were fit
/// for, which is read from their config.
pub fn evaluate_file(file: &ModelFile, test: &LabeledDataset, table: &PercentileTable) -> Result<DesiderataReport> {
    match file {
        ModelFile::Single(m) => evaluate(m, test, &m.config.target, table),
        ModelFile::Set(s) => evaluate_set(s, test, table),
    }
}

/// What each fold fits.
#[derive(Clone, Debug, PartialEq)]
pub enum Goal {
    /// One model for `config.target`.
    Fixed,
    /// One model per class, each targeting every other class.
    Untargeted,
    /// Low-to-high and high-to-low models around the test-fold mean output.
    RegressionHalves,
}

/// Shuffled fold membership: fold `k` holds the shuffled positions `i` with
/// `i % folds == k`, sorted.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || n < folds {
        return Err(Error::TooFewRows { rows: n, folds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (i, &row) in order.iter().enumerate() {
        out[i % folds].push(row);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Labels `data` with `model`, then fits on each training partition and
/// evaluates on the held-out one. Reports come back in fold order.
pub fn cross_validate(
    data: &Dataset,
    model: &dyn BlackBoxModel,
    config: &CrexConfig,
    folds: usize,
    seed: u64,
) -> Result<Vec<DesiderataReport>> {
    let goal = match model.kind() {
        ModelKind::Classifier => Goal::Fixed,
        ModelKind::Regressor => Goal::RegressionHalves,
    };
    cross_validate_with(data, model, config, &goal, folds, seed)
}

pub fn cross_validate_with(
    data: &Dataset,
    model: &dyn BlackBoxModel,
    config: &CrexConfig,
    goal: &Goal,
    folds: usize,
    seed: u64,
) -> Result<Vec<DesiderataReport>> {
    fold_assignment(data.len(), folds, seed)?;
    let labeled = label_with_model(data, model, config.execution)?;
    cross_validate_labeled(&labeled, config, goal, folds, seed)
}

/// Cross-validation on rows whose model outputs are already known.
pub fn cross_validate_labeled(
    labeled: &LabeledDataset,
    config: &CrexConfig,
    goal: &Goal,
    folds: usize,
    seed: u64,
) -> Result<Vec<DesiderataReport>> {
    let parts = fold_assignment(labeled.len(), folds, seed)?;
    exec::try_map_range(config.execution, folds, |k| {
        let test_rows = &parts[k];
        let train_rows: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, p)| p.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let train = labeled.select(&train_rows)?;
        let test = labeled.select(test_rows)?;
        let table = PercentileTable::fit(&train.data);
        let start = Instant::now();
        let report = match goal {
            Goal::Fixed => {
                let m = fit(&train, config)?;
                let secs = start.elapsed().as_secs_f64();
                evaluate(&m, &test, &config.target, &table)?.with_fit_seconds(secs)
            }
            Goal::Untargeted => {
                let set = ModelSet::fit_untargeted(&train, config)?;
                let secs = start.elapsed().as_secs_f64();
                evaluate_set(&set, &test, &table)?.with_fit_seconds(secs)
            }
            Goal::RegressionHalves => {
                let mu = test
                    .outputs
                    .mean()
                    .ok_or_else(|| Error::TypeMismatch("regression targets need numeric outputs".into()))?;
                let set = ModelSet::fit_regression(&train, config, Some(mu))?;
                let secs = start.elapsed().as_secs_f64();
                evaluate_set(&set, &test, &table)?.with_fit_seconds(secs)
            }
        };
        Ok(report)
    })
}

/// Aggregates across folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<Aggregate>,
    pub mean: Means,
}

impl CvSummary {
    pub fn new(reports: &[DesiderataReport]) -> Self {
        let means: Vec<&Means> = reports.iter().map(|r| &r.aggregate.means).collect();
        CvSummary {
            folds: reports.iter().map(|r| r.aggregate.clone()).collect(),
            mean: Means::average(&means),
        }
    }
}

/// Writes `fold_<k>.csv` and `fold_<k>.json` per fold plus `summary.json`.
pub fn write_reports(dir: impl AsRef<Path>, reports: &[DesiderataReport]) -> Result<CvSummary> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, r) in reports.iter().enumerate() {
        r.write_csv(dir.join(format!("fold_{k}.csv")))?;
        r.write_json(dir.join(format!("fold_{k}.json")))?;
    }
    let summary = CvSummary::new(reports);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Outputs;
    use crate::schema::Feature;
    use crate::synth;
    use proptest::prelude::*;

    fn line(xs: &[f64], labels: &[&str]) -> LabeledDataset {
        let d = Dataset::new(FeatureSchema::numerical(1).unwrap(), xs.iter().map(|&x| vec![x]).collect()).unwrap();
        LabeledDataset::new(d, Outputs::from_labels(labels.iter().copied())).unwrap()
    }

    #[test]
    fn one_rule_over_hundred_rows() {
        let xs: Vec<f64> = (0..200).map(f64::from).collect();
        let labels: Vec<&str> = (0..200).map(|i| if i < 100 { "r" } else { "b" }).collect();
        let l = line(&xs, &labels);
        let config = CrexConfig::new(TargetSpec::classes(["b"])).rho(0.1);
        let m = crate::engine::fit_from_rules(vec![Rule::universal(1).with_lower(0, 99.5)], &l, &config).unwrap();
        let table = PercentileTable::fit(&l.data);
        let r = evaluate(&m, &l, &config.target, &table).unwrap();
        assert_eq!(r.aggregate.instances, 100);
        assert_eq!(r.aggregate.means.consistency, 0.01);
        assert_eq!(r.aggregate.means.sparsity, 1.0);
        assert_eq!(r.aggregate.means.accuracy, 1.0);
    }

    #[test]
    fn marginal_fallback_on_empty_support() {
        let xs: Vec<f64> = (0..8).map(f64::from).collect();
        let labels = ["r", "r", "r", "b", "r", "r", "b", "r"];
        let l = line(&xs, &labels);
        let target = TargetSpec::classes(["b"]);
        let config = CrexConfig::new(target.clone()).rho(0.01);
        let m = crate::engine::fit_from_rules(vec![Rule::universal(1).with_lower(0, 2.5)], &l, &config).unwrap();
        let test = line(&[0.0, 1.0, 2.0, 1.5], &["r", "r", "b", "r"]);
        let table = PercentileTable::fit(&l.data);
        let r = evaluate(&m, &test, &target, &table).unwrap();
        assert!(r.records.iter().all(|rec| rec.accuracy == 0.25 && rec.feasibility == 0.0));
    }

    #[test]
    fn empty_explananda() {
        let l = line(&[0.0, 1.0], &["b", "b"]);
        let target = TargetSpec::classes(["b"]);
        let m = crate::engine::fit_from_rules(vec![Rule::universal(1)], &l, &CrexConfig::new(target.clone())).unwrap();
        let table = PercentileTable::fit(&l.data);
        assert!(matches!(evaluate(&m, &l, &target, &table), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn distance_examples() {
        // training column 0..100, so percentile(v) = (floor(v) + 1) / 100
        let xs: Vec<f64> = (0..100).map(f64::from).collect();
        let d = Dataset::new(FeatureSchema::numerical(1).unwrap(), xs.iter().map(|&x| vec![x]).collect()).unwrap();
        let t = PercentileTable::fit(&d);
        let s = d.schema();
        let rule = Rule::universal(1).with_lower(0, 39.0);
        assert_eq!(counterfactual_distance(&[50.0], &rule, s, &t), 0.0);
        let got = counterfactual_distance(&[29.0], &rule, s, &t);
        // nearest point by scanning a fine grid above the bound
        let brute = (1..=1000)
            .map(|k| 39.0 + f64::from(k) * 1e-3)
            .filter(|&v| rule.covers(&[v]))
            .map(|v| (t.percentile(0, v) - t.percentile(0, 29.0)).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((got - 0.1).abs() < 1e-12, "{got}");
        assert_eq!(got, brute);
    }

    #[test]
    fn categorical_flip_costs_two() {
        let s = FeatureSchema::new(vec![Feature::categorical("c", ["a", "b", "c"])]).unwrap();
        let d = Dataset::new(s.clone(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let t = PercentileTable::fit(&d);
        let hot_c = Rule::universal(3).with_lower(2, 0.5);
        assert_eq!(counterfactual_distance(&[1.0, 0.0, 0.0], &hot_c, &s, &t), 2.0);
        let not_a_or_b = Rule::universal(3).with_upper(0, 0.5);
        assert_eq!(closest_point(&[1.0, 0.0, 0.0], &not_a_or_b, &s), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn regression_targets() {
        let d = Dataset::new(FeatureSchema::numerical(1).unwrap(), vec![vec![0.0], vec![1.0]]).unwrap();
        let l = LabeledDataset::new(d, Outputs::Values(vec![0.0, 10.0])).unwrap();
        assert_eq!(make_regression_target(&l, 3.0).unwrap(), TargetSpec::above(5.0));
        assert_eq!(make_regression_target(&l, 7.0).unwrap(), TargetSpec::at_most(5.0));
        assert_eq!(make_regression_target(&l, 5.0).unwrap(), TargetSpec::above(5.0));
    }

    #[test]
    fn folds_partition() {
        let f = fold_assignment(100, 10, 3).unwrap();
        assert!(f.iter().all(|p| p.len() == 10));
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(f, fold_assignment(100, 10, 3).unwrap());
        assert_ne!(f, fold_assignment(100, 10, 4).unwrap());
        assert!(matches!(fold_assignment(5, 10, 0), Err(Error::TooFewRows { rows: 5, folds: 10 })));
        assert!(fold_assignment(5, 1, 0).is_err());
    }

    #[test]
    fn cross_validation_on_clusters() {
        let data = synth::cluster_points(300, 1).unwrap();
        let config = CrexConfig::new(synth::cluster_target()).rho(0.05);
        let model = synth::cluster_classifier();
        let reports = cross_validate(&data, &model, &config, 3, 9).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().map(|r| r.aggregate.instances).sum::<usize>() > 0);
        for r in &reports {
            assert!(r.aggregate.unique_rules <= r.aggregate.maximal_rules);
            assert!(r.aggregate.means.consistency > 0.0 && r.aggregate.means.consistency <= 1.0);
        }
        let again = cross_validate(&data, &model, &config.clone().execution(exec::Execution::Sequential), 3, 9).unwrap();
        let strip = |rs: &[DesiderataReport]| -> Vec<Vec<(usize, usize, usize)>> {
            rs.iter().map(|r| r.records.iter().map(|x| (x.row, x.rule, x.sparsity)).collect()).collect()
        };
        assert_eq!(strip(&reports), strip(&again));

        let dir = tempfile::tempdir().unwrap();
        let summary = write_reports(dir.path(), &reports).unwrap();
        assert_eq!(summary.folds.len(), 3);
        for k in 0..3 {
            assert!(dir.path().join(format!("fold_{k}.csv")).exists());
            assert!(dir.path().join(format!("fold_{k}.json")).exists());
        }
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn regression_cross_validation() {
        let data = synth::signal_points(300, 2).unwrap();
        let config = CrexConfig::new(TargetSpec::above(0.0)).rho(0.05);
        let reports = cross_validate(&data, &synth::signal_regressor(), &config, 3, 0).unwrap();
        for r in &reports {
            assert!(r.records.iter().all(|x| x.model < 2));
        }
    }

    proptest! {
        #[test]
        fn distance_properties(xs in prop::collection::vec(-50.0..50.0f64, 5..40),
                               lo in prop::option::of(-60.0..60.0f64), w in prop::option::of(0.5..40.0f64),
                               x in -70.0..70.0f64) {
            let d = Dataset::new(FeatureSchema::numerical(1).unwrap(), xs.iter().map(|&v| vec![v]).collect()).unwrap();
            let t = PercentileTable::fit(&d);
            let mut rule = Rule::universal(1);
            if let Some(l) = lo { rule = rule.with_lower(0, l); }
            if let (Some(l), Some(w)) = (lo, w) { rule = rule.with_upper(0, l + w); }
            let dist = counterfactual_distance(&[x], &rule, d.schema(), &t);
            prop_assert!(dist >= 0.0);
            if rule.covers(&[x]) { prop_assert_eq!(dist, 0.0); }
            let cp = closest_point(&[x], &rule, d.schema());
            prop_assert!(rule.covers(&cp));

            // doubling every raw value is strictly monotone and exact in floating point
            let d2 = Dataset::new(FeatureSchema::numerical(1).unwrap(), xs.iter().map(|&v| vec![2.0 * v]).collect()).unwrap();
            let t2 = PercentileTable::fit(&d2);
            let mut r2 = Rule::universal(1);
            if let Some(l) = lo { r2 = r2.with_lower(0, 2.0 * l); }
            if let (Some(l), Some(w)) = (lo, w) { r2 = r2.with_upper(0, 2.0 * (l + w)); }
            prop_assert_eq!(counterfactual_distance(&[2.0 * x], &r2, d2.schema(), &t2), dist);
        }

        #[test]
        fn regression_halves_complement(vals in prop::collection::vec(-100.0..100.0f64, 1..20), y in -120.0..120.0f64) {
            let d = Dataset::new(FeatureSchema::numerical(1).unwrap(), vals.iter().map(|_| vec![0.0]).collect()).unwrap();
            let l = LabeledDataset::new(d, Outputs::Values(vals.clone())).unwrap();
            let t = make_regression_target(&l, y).unwrap();
            // the target never contains the starting output
            prop_assert!(!t.matches_value(y).unwrap());
        }
    }
}
