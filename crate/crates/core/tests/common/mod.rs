#![allow(dead_code)]

use rand::Rng;
use tcrex::data::Outputs;
use tcrex::grid::DataRange;
use tcrex::{fit_from_rules, CrexConfig, Dataset, FeatureSchema, LabeledDataset, Rule, RuleModel, TargetSpec};

/// Two overlapping rules on a 10 × 5 grid of points: `green` = {x1 > 3, x2 > 5}
/// covers 14 points, `orange` = {1 < x1 ≤ 3, x2 ≤ 5} covers 6.
pub fn toy() -> (LabeledDataset, Vec<Rule>) {
    let mut rows = Vec::new();
    for i in 0..10 {
        for j in 0..5 {
            rows.push(vec![0.5 + f64::from(i), 1.0 + 2.0 * f64::from(j)]);
        }
    }
    let green = Rule::universal(2).with_lower(0, 3.0).with_lower(1, 5.0);
    let orange = Rule::universal(2).with_lower(0, 1.0).with_upper(0, 3.0).with_upper(1, 5.0);
    let labels: Vec<&str> = rows
        .iter()
        .map(|x| if green.covers(x) || orange.covers(x) { "approved" } else { "denied" })
        .collect();
    let data = Dataset::new(FeatureSchema::numerical(2).unwrap(), rows).unwrap();
    let labeled = LabeledDataset::new(data, Outputs::from_labels(labels)).unwrap();
    (labeled, vec![green, orange])
}

pub fn toy_config() -> CrexConfig {
    CrexConfig::new(TargetSpec::classes(["approved"])).rho(0.1)
}

pub fn toy_model() -> RuleModel {
    let (labeled, rules) = toy();
    fit_from_rules(rules, &labeled, &toy_config()).unwrap()
}

/// A uniform one-hot valid point of `b`, with infinite numerical ends cut at
/// the data range widened by `margin`. `None` when the box admits no one-hot
/// assignment.
pub fn sample_in_box(
    b: &Rule,
    schema: &FeatureSchema,
    range: &DataRange,
    margin: f64,
    rng: &mut impl Rng,
) -> Option<Vec<f64>> {
    let mut x = vec![0.0; schema.dim()];
    let mut d = 0;
    while d < schema.dim() {
        if let Some(g) = schema.group_of(d) {
            let allowed: Vec<usize> = g
                .dims
                .clone()
                .filter(|&h| g.dims.clone().all(|k| {
                    let v = if k == h { 1.0 } else { 0.0 };
                    b.lower()[k] < v && v <= b.upper()[k]
                }))
                .collect();
            if allowed.is_empty() {
                return None;
            }
            x[allowed[rng.random_range(0..allowed.len())]] = 1.0;
            d = g.dims.end;
        } else {
            let (l, u) = (b.lower()[d], b.upper()[d]);
            let a = if l.is_finite() { l } else { range.min[d].min(u) - margin - 1.0 };
            let z = if u.is_finite() { u } else { range.max[d].max(l) + margin + 1.0 };
            // (a, z]: reflect a draw from [0, 1)
            let v = loop {
                let v = a + (z - a) * (1.0 - rng.random::<f64>());
                if v > a && v <= z {
                    break v;
                }
            };
            x[d] = v;
            d += 1;
        }
    }
    Some(x)
}
