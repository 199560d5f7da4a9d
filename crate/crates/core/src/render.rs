//! Text renderings of explanations, rule summaries and metarule trees.
//!
//! Bounds print in shortest round-trip form, so rendered explanations can be
//! parsed back into the exact rule they came from ([`parse_explanation`]).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{Explanation, RuleModel};
use crate::error::{Error, Result};
use crate::rule::{GroupForm, Rule, CATEGORICAL_BOUND};
use crate::schema::{Feature, FeatureSchema};
use crate::surrogate::TreeNode;

/// A rule's constraint on one original feature.
#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    Interval { lower: f64, upper: f64 },
    Is(String),
    NotIn(Vec<String>),
}

impl Condition {
    /// Phrase for a value the feature must move into.
    pub fn target_text(&self) -> String {
        match self {
            Condition::Interval { lower, upper } => interval_text(*lower, *upper),
            Condition::Is(c) => c.clone(),
            Condition::NotIn(cs) => format!("away from {{{}}}", cs.join(", ")),
        }
    }

    /// Phrase for a value the feature already has.
    pub fn state_text(&self) -> String {
        match self {
            Condition::Interval { lower, upper } if lower.is_finite() && upper.is_finite() => {
                format!("in {}", interval_text(*lower, *upper))
            }
            Condition::Interval { lower, upper } => interval_text(*lower, *upper),
            Condition::Is(c) => format!("= {c}"),
            Condition::NotIn(cs) => format!("not in {{{}}}", cs.join(", ")),
        }
    }
}

fn interval_text(l: f64, u: f64) -> String {
    match (l.is_finite(), u.is_finite()) {
        (true, true) => format!("({l}, {u}]"),
        (true, false) => format!("> {l}"),
        (false, true) => format!("≤ {u}"),
        (false, false) => "any value".into(),
    }
}

/// The constraint `rule` places on feature `f`, if any.
pub fn feature_condition(rule: &Rule, schema: &FeatureSchema, f: usize) -> Option<Condition> {
    let dims = schema.feature_dims(f);
    match &schema.features()[f] {
        Feature::Numerical { .. } => {
            let d = dims.start;
            let (l, u) = (rule.lower()[d], rule.upper()[d]);
            (l.is_finite() || u.is_finite()).then_some(Condition::Interval { lower: l, upper: u })
        }
        Feature::Categorical { categories, .. } => {
            let g = schema.group_of(dims.start)?;
            match rule.group_form(&g).ok()? {
                GroupForm::Free => None,
                GroupForm::Hot(d) => Some(Condition::Is(categories[d - dims.start].clone())),
                GroupForm::Cold(ds) => Some(Condition::NotIn(
                    ds.iter().map(|&d| categories[d - dims.start].clone()).collect(),
                )),
            }
        }
    }
}

/// Conjunction of every condition in `rule`, or `always` when it has none.
pub fn rule_text(rule: &Rule, schema: &FeatureSchema) -> String {
    let parts: Vec<String> = (0..schema.features().len())
        .filter_map(|f| {
            feature_condition(rule, schema, f)
                .map(|c| format!("{} {}", schema.features()[f].name(), c.state_text()))
        })
        .collect();
    if parts.is_empty() {
        "always".into()
    } else {
        parts.join(" and ")
    }
}

fn features_of(dims: &[usize], schema: &FeatureSchema) -> Vec<usize> {
    let mut fs: Vec<usize> = dims.iter().map(|&d| schema.feature_of(d)).collect();
    fs.dedup();
    fs
}

fn clauses(rule: &Rule, schema: &FeatureSchema, change: &[usize], keep: &[usize]) -> Vec<String> {
    let name = |f: usize| schema.features()[f].name().to_string();
    let mut out = Vec::new();
    for &f in change {
        if let Some(c) = feature_condition(rule, schema, f) {
            out.push(format!("change {} to {}", name(f), c.target_text()));
        }
    }
    for &f in keep {
        if let Some(c) = feature_condition(rule, schema, f) {
            out.push(format!("while keeping {} {}", name(f), c.state_text()));
        }
    }
    out
}

/// Multi-line text: a header naming the rule, then one clause per line.
pub fn render_explanation(e: &Explanation, schema: &FeatureSchema) -> String {
    let change = features_of(&e.change_dims, schema);
    let keep: Vec<usize> = features_of(&e.keep_dims, schema)
        .into_iter()
        .filter(|f| !change.contains(f))
        .collect();
    let mut s = format!("Rule R{}", e.rule_index + 1);
    if e.satisfied() {
        s.push_str(" (already satisfied)");
    }
    s.push('\n');
    for c in clauses(&e.rule, schema, &change, &keep) {
        let _ = writeln!(s, "  {c}");
    }
    s
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::MalformedRule(format!("bad number `{s}`")))
}

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("> ") {
        Ok((parse_number(rest)?, f64::INFINITY))
    } else if let Some(rest) = s.strip_prefix("≤ ") {
        Ok((f64::NEG_INFINITY, parse_number(rest)?))
    } else if let Some(body) = s.strip_prefix('(').and_then(|b| b.strip_suffix(']')) {
        let (a, b) = body
            .split_once(", ")
            .ok_or_else(|| Error::MalformedRule(format!("bad interval `{s}`")))?;
        Ok((parse_number(a)?, parse_number(b)?))
    } else {
        Err(Error::MalformedRule(format!("bad interval `{s}`")))
    }
}

fn parse_set(s: &str) -> Result<Vec<String>> {
    let body = s
        .trim()
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| Error::MalformedRule(format!("bad category set `{s}`")))?;
    Ok(body.split(", ").map(str::to_string).collect())
}

/// Recovers the rule of a [`render_explanation`] text.
pub fn parse_explanation(text: &str, schema: &FeatureSchema) -> Result<Rule> {
    let mut rule = Rule::universal(schema.dim());
    let mut names: Vec<(usize, &str)> = schema
        .features()
        .iter()
        .enumerate()
        .map(|(i, f)| (i, f.name()))
        .collect();
    // longest first so a name never matches a prefix of another
    names.sort_by_key(|(_, n)| std::cmp::Reverse(n.len()));
    for line in text.lines().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (changing, rest) = if let Some(r) = line.strip_prefix("change ") {
            (true, r)
        } else if let Some(r) = line.strip_prefix("while keeping ") {
            (false, r)
        } else {
            return Err(Error::MalformedRule(format!("unrecognised clause `{line}`")));
        };
        let (f, tail) = names
            .iter()
            .find_map(|&(i, n)| rest.strip_prefix(n).and_then(|t| t.strip_prefix(' ')).map(|t| (i, t)))
            .ok_or_else(|| Error::MalformedRule(format!("unknown feature in `{line}`")))?;
        let dims = schema.feature_dims(f);
        let category = |c: &str| -> Result<usize> {
            match &schema.features()[f] {
                Feature::Categorical { categories, .. } => categories
                    .iter()
                    .position(|k| k == c)
                    .map(|k| dims.start + k)
                    .ok_or_else(|| Error::MalformedRule(format!("unknown category `{c}`"))),
                Feature::Numerical { .. } => Err(Error::MalformedRule(format!("`{line}` names a numerical feature"))),
            }
        };
        let tail = if changing {
            tail.strip_prefix("to ")
                .ok_or_else(|| Error::MalformedRule(format!("expected `to` in `{line}`")))?
        } else {
            tail
        };
        if schema.features()[f].is_categorical() {
            if let Some(set) = tail.strip_prefix("away from ").or_else(|| tail.strip_prefix("not in ")) {
                for c in parse_set(set)? {
                    rule = rule.with_upper(category(&c)?, CATEGORICAL_BOUND);
                }
            } else {
                let c = tail.strip_prefix("= ").unwrap_or(tail);
                rule = rule.with_lower(category(c)?, CATEGORICAL_BOUND);
            }
        } else {
            let (l, u) = parse_interval(tail.strip_prefix("in ").unwrap_or(tail))?;
            rule = rule.with_lower(dims.start, l).with_upper(dims.start, u);
        }
    }
    Ok(rule)
}

/// Features that some point of `metarule` must change to satisfy `rule`.
///
/// A numerical feature counts when the metarule interval is not inside the
/// rule interval. A one-hot group counts when some category the metarule
/// allows is excluded by the rule.
pub fn worst_case_changes(rule: &Rule, metarule: &Rule, schema: &FeatureSchema) -> Vec<usize> {
    (0..schema.features().len())
        .filter(|&f| {
            let dims = schema.feature_dims(f);
            match schema.group_of(dims.start) {
                None => {
                    let d = dims.start;
                    metarule.lower()[d] < rule.lower()[d] || metarule.upper()[d] > rule.upper()[d]
                }
                Some(g) => {
                    let allowed = |r: &Rule, d: usize| match r.group_form(&g) {
                        Ok(GroupForm::Hot(h)) => h == d,
                        Ok(GroupForm::Cold(cs)) => !cs.contains(&d),
                        _ => true,
                    };
                    g.dims.clone().any(|d| allowed(metarule, d) && !allowed(rule, d))
                }
            }
        })
        .collect()
}

/// Largest number of features any point of `metarule` must change to satisfy
/// `rule`.
pub fn worst_case_sparsity(rule: &Rule, metarule: &Rule, schema: &FeatureSchema) -> usize {
    worst_case_changes(rule, metarule, schema).len()
}

fn stats_text(model: &RuleModel, i: usize) -> String {
    let s = &model.rules[i].stats;
    format!(
        "accuracy {:.3}, feasibility {:.3}, complexity {}",
        s.accuracy, s.feasibility, s.complexity
    )
}

/// Global textual summary: every rule with its stats, then one line per
/// metarule giving its region and the worst-case change/keep phrasing.
pub fn render_summary(model: &RuleModel) -> String {
    let schema = &model.schema;
    let metarules = model.metarules();
    let mut s = String::new();
    for i in 0..model.rules.len() {
        let rule = model.rule(i);
        let _ = writeln!(s, "R{}: {}", i + 1, rule_text(rule, schema));
        let _ = writeln!(s, "    ({})", stats_text(model, i));
        for (m, _) in metarules.iter().filter(|(_, j)| *j == i) {
            let change = worst_case_changes(rule, m, schema);
            let keep: Vec<usize> = (0..schema.features().len())
                .filter(|f| !change.contains(f))
                .collect();
            let mut parts = clauses(rule, schema, &change, &keep);
            if change.is_empty() {
                parts.insert(0, "no change needed".into());
            }
            let region = match rule_text(m, schema).as_str() {
                "always" => "everywhere".to_string(),
                cond => format!("if {cond}"),
            };
            let _ = writeln!(s, "  {region}: {}", parts.join(", "));
        }
    }
    s
}

fn split_text(schema: &FeatureSchema, d: usize, t: f64, left: bool) -> String {
    let f = schema.feature_of(d);
    let name = schema.features()[f].name();
    match &schema.features()[f] {
        Feature::Categorical { categories, .. } if t == CATEGORICAL_BOUND => {
            let c = &categories[d - schema.feature_dims(f).start];
            if left {
                format!("{name} ≠ {c}")
            } else {
                format!("{name} = {c}")
            }
        }
        _ if left => format!("{name} ≤ {t}"),
        _ => format!("{name} > {t}"),
    }
}

struct TreeRender<'a> {
    model: &'a RuleModel,
    sample: Option<&'a Dataset>,
    out: String,
}

impl TreeRender<'_> {
    fn leaf_text(&self, i: usize, bounds: &Rule, rows: &[usize]) -> String {
        let metarule = bounds.simplify(&self.model.schema).unwrap_or_else(|_| bounds.clone());
        let sparsity = worst_case_sparsity(self.model.rule(i), &metarule, &self.model.schema);
        let mut s = format!(
            "R{} [{}] sparsity {}",
            i + 1,
            stats_text(self.model, i),
            sparsity
        );
        if self.sample.is_some() {
            let _ = write!(s, " (n={})", rows.len());
        }
        s
    }

    fn node(&mut self, node: &TreeNode<usize>, bounds: Rule, rows: Vec<usize>, prefix: &str) {
        let TreeNode::Internal {
            split_dim,
            threshold,
            left,
            right,
        } = node
        else {
            return;
        };
        let (lr, rr): (Vec<usize>, Vec<usize>) = match self.sample {
            Some(data) => rows
                .iter()
                .partition(|&&r| data.row(r)[*split_dim] <= *threshold),
            None => (Vec::new(), Vec::new()),
        };
        let mut lb = bounds.clone();
        lb.tighten_upper(*split_dim, *threshold);
        let mut rb = bounds;
        rb.tighten_lower(*split_dim, *threshold);
        let mut children = vec![(left, lb, lr, true), (right, rb, rr, false)];
        if self.sample.is_some() {
            children.retain(|(_, _, rows, _)| !rows.is_empty());
        }
        let n = children.len();
        for (k, (child, cb, crows, is_left)) in children.into_iter().enumerate() {
            let last = k + 1 == n;
            let branch = if last { "`-- " } else { "+-- " };
            let cond = split_text(&self.model.schema, *split_dim, *threshold, is_left);
            match child.as_ref() {
                TreeNode::Leaf { prediction, .. } => {
                    let text = self.leaf_text(*prediction, &cb, &crows);
                    let _ = writeln!(self.out, "{prefix}{branch}{cond}: {text}");
                }
                TreeNode::Internal { .. } => {
                    let count = if self.sample.is_some() {
                        format!(" (n={})", crows.len())
                    } else {
                        String::new()
                    };
                    let _ = writeln!(self.out, "{prefix}{branch}{cond}{count}");
                    let next = format!("{prefix}{}", if last { "    " } else { "|   " });
                    self.node(child, cb, crows, &next);
                }
            }
        }
    }
}

/// ASCII tree of the metarules. With a sample, branches no sample row reaches
/// are dropped and row counts are shown.
pub fn render_metarule_tree(model: &RuleModel, sample: Option<&Dataset>) -> String {
    let tree = &model.metarule_tree;
    let dim = model.schema.dim();
    let rows: Vec<usize> = sample.map(|d| (0..d.len()).collect()).unwrap_or_default();
    let mut r = TreeRender {
        model,
        sample,
        out: String::new(),
    };
    match tree {
        TreeNode::Leaf { prediction, .. } => {
            let text = r.leaf_text(*prediction, &Rule::universal(dim), &rows);
            let _ = writeln!(r.out, "{text}");
        }
        TreeNode::Internal { .. } => {
            let reached = reached_leaves(model, sample);
            let distinct = {
                let mut v: Vec<usize> = reached.clone();
                v.sort_unstable();
                v.dedup();
                v.len()
            };
            let plural = |n: usize, word: &str| format!("{n} {word}{}", if n == 1 { "" } else { "s" });
            let _ = writeln!(
                r.out,
                "{} for {} (sparsity is the worst case within each metarule)",
                plural(reached.len(), "metarule"),
                plural(distinct, "distinct rule")
            );
            r.node(tree, Rule::universal(dim), rows, "");
        }
    }
    r.out
}

/// Rule index of every leaf that is kept in the rendering, left to right.
fn reached_leaves(model: &RuleModel, sample: Option<&Dataset>) -> Vec<usize> {
    let dim = model.schema.dim();
    model
        .metarule_tree
        .leaves(dim)
        .into_iter()
        .filter(|(b, _, _)| sample.is_none_or(|d| d.rows().any(|x| b.covers(x))))
        .map(|(_, &i, _)| i)
        .collect()
}

/// How often a feature appears in change and keep clauses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureUsage {
    pub feature: String,
    pub change: usize,
    pub keep: usize,
}

pub fn feature_usage_summary(explanations: &[Explanation], schema: &FeatureSchema) -> Vec<FeatureUsage> {
    let mut usage: Vec<FeatureUsage> = schema
        .features()
        .iter()
        .map(|f| FeatureUsage {
            feature: f.name().to_string(),
            change: 0,
            keep: 0,
        })
        .collect();
    for e in explanations {
        let change = features_of(&e.change_dims, schema);
        for &f in &change {
            usage[f].change += 1;
        }
        for f in features_of(&e.keep_dims, schema) {
            if !change.contains(&f) {
                usage[f].keep += 1;
            }
        }
    }
    usage
}

pub fn render_feature_usage(usage: &[FeatureUsage]) -> String {
    let width = usage.iter().map(|u| u.feature.chars().count()).max().unwrap_or(0).max(7);
    let mut s = format!("{:<width$}  change  keep\n", "feature");
    for u in usage {
        let _ = writeln!(s, "{:<width$}  {:>6}  {:>4}", u.feature, u.change, u.keep);
    }
    s
}
