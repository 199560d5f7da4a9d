//! Axis-aligned hyperrectangle rules.
//!
//! A rule holds a lower and upper bound per encoded dimension. Membership is
//! lower-open, upper-closed: `x ∈ R` iff `l_d < x_d ≤ u_d` for every `d`. This
//! matches tree routing (`x ≤ t` goes left) and makes [`Rule::changes`] the
//! exact count of dimensions where membership fails.
//!
//! One-hot groups use the sentinel [`CATEGORICAL_BOUND`]: a hot category has
//! `l = 0.5`, a cold category has `u = 0.5`, and every other bound in the
//! group is infinite.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, Group};
use crate::target::TargetSpec;

pub const CATEGORICAL_BOUND: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(with = "bounds_serde")]
    lower: Vec<f64>,
    #[serde(with = "bounds_serde")]
    upper: Vec<f64>,
}

/// Shape of a rule restricted to one categorical group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupForm {
    /// No bounds in the group.
    Free,
    /// Exactly this dimension must be hot.
    Hot(usize),
    /// None of these dimensions may be hot.
    Cold(Vec<usize>),
}

impl Rule {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (d, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY || u < l {
                return Err(Error::MalformedRule(format!(
                    "dimension {d} has bounds ({l}, {u}]"
                )));
            }
        }
        Ok(Rule { lower, upper })
    }

    /// The rule containing every point.
    pub fn universal(dim: usize) -> Self {
        Rule {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Raises the lower bound of `d` to `v` if that tightens it.
    pub fn tighten_lower(&mut self, d: usize, v: f64) {
        if v > self.lower[d] {
            self.lower[d] = v;
        }
    }

    /// Lowers the upper bound of `d` to `v` if that tightens it.
    pub fn tighten_upper(&mut self, d: usize, v: f64) {
        if v < self.upper[d] {
            self.upper[d] = v;
        }
    }

    pub fn with_lower(mut self, d: usize, v: f64) -> Self {
        self.lower[d] = v;
        self
    }

    pub fn with_upper(mut self, d: usize, v: f64) -> Self {
        self.upper[d] = v;
        self
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            })
        }
    }

    #[inline]
    fn violated(&self, d: usize, v: f64) -> bool {
        v <= self.lower[d] || self.upper[d] < v
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.covers(x))
    }

    /// [`contains`](Self::contains) without the length check.
    #[inline]
    pub fn covers(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        x.iter().enumerate().all(|(d, &v)| !self.violated(d, v))
    }

    /// Number of dimensions `x` violates.
    pub fn changes(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.count_changes(x))
    }

    #[inline]
    pub fn count_changes(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.dim());
        x.iter()
            .enumerate()
            .filter(|&(d, &v)| self.violated(d, v))
            .count()
    }

    pub fn violated_dims(&self, x: &[f64]) -> Vec<usize> {
        (0..self.dim()).filter(|&d| self.violated(d, x[d])).collect()
    }

    /// Dimensions with at least one finite bound.
    pub fn bounded_dims(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&d| self.lower[d].is_finite() || self.upper[d].is_finite())
            .collect()
    }

    pub fn support(&self, data: &Dataset) -> usize {
        data.rows().filter(|x| self.covers(x)).count()
    }

    pub fn feasibility(&self, data: &Dataset) -> f64 {
        self.support(data) as f64 / data.len() as f64
    }

    /// Fraction of contained rows whose output is in the target, falling back
    /// to the dataset-wide fraction when no row is contained.
    pub fn accuracy(&self, labeled: &LabeledDataset, target: &TargetSpec) -> Result<f64> {
        let mask = labeled.target_mask(target)?;
        Ok(self.accuracy_with_mask(&labeled.data, &mask))
    }

    pub fn accuracy_with_mask(&self, data: &Dataset, mask: &[bool]) -> f64 {
        let (inside, hits) = data
            .rows()
            .zip(mask)
            .filter(|(x, _)| self.covers(x))
            .fold((0usize, 0usize), |(n, h), (_, &m)| (n + 1, h + m as usize));
        if inside == 0 {
            mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64
        } else {
            hits as f64 / inside as f64
        }
    }

    pub fn stats(&self, data: &Dataset, mask: &[bool]) -> RuleStats {
        let support = self.support(data);
        RuleStats {
            feasibility: support as f64 / data.len() as f64,
            accuracy: self.accuracy_with_mask(data, mask),
            complexity: self.complexity(),
            support,
        }
    }

    /// `feasibility ≥ rho ∧ accuracy ≥ tau`.
    pub fn is_valid(
        &self,
        labeled: &LabeledDataset,
        target: &TargetSpec,
        rho: f64,
        tau: f64,
    ) -> Result<bool> {
        let mask = labeled.target_mask(target)?;
        Ok(self.stats(&labeled.data, &mask).is_valid(rho, tau))
    }

    /// `changes(x) − feasibility`.
    pub fn cost(&self, x: &[f64], data: &Dataset) -> Result<f64> {
        Ok(self.changes(x)? as f64 - self.feasibility(data))
    }

    /// Strict hyperrectangle subset: nested on every dimension and not equal.
    pub fn is_subset_of(&self, other: &Rule) -> bool {
        nested(&self.lower, &self.upper, &other.lower, &other.upper)
            && (self.lower != other.lower || self.upper != other.upper)
    }

    /// Strict subset after making one-hot groups' implicit cold bounds explicit.
    pub fn is_subset_of_categorical(&self, other: &Rule, schema: &FeatureSchema) -> Result<bool> {
        self.check_well_formed(schema)?;
        other.check_well_formed(schema)?;
        let a = self.hat_upper(schema);
        let b = other.hat_upper(schema);
        Ok(nested(&self.lower, &a, &other.lower, &b) && (self.lower != other.lower || a != b))
    }

    /// Upper bounds with every non-hot dimension of a one-hot group set to 0.5.
    pub fn hat_upper(&self, schema: &FeatureSchema) -> Vec<f64> {
        let mut u = self.upper.clone();
        for g in schema.groups() {
            for d in g.dims.clone() {
                if g.dims
                    .clone()
                    .any(|e| e != d && self.lower[e] == CATEGORICAL_BOUND)
                {
                    u[d] = CATEGORICAL_BOUND;
                }
            }
        }
        u
    }

    /// Count of finite lower and upper bounds.
    pub fn complexity(&self) -> usize {
        self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count()
    }

    pub fn group_form(&self, group: &Group<'_>) -> Result<GroupForm> {
        let mut hot = Vec::new();
        let mut cold = Vec::new();
        for d in group.dims.clone() {
            match (self.lower[d], self.upper[d]) {
                (l, u) if l == f64::NEG_INFINITY && u == f64::INFINITY => {}
                (l, u) if l == CATEGORICAL_BOUND && u == f64::INFINITY => hot.push(d),
                (l, u) if l == f64::NEG_INFINITY && u == CATEGORICAL_BOUND => cold.push(d),
                (l, u) => {
                    return Err(Error::MalformedRule(format!(
                        "group `{}` has bounds ({l}, {u}] on dimension {d}",
                        group.name
                    )))
                }
            }
        }
        match (hot.len(), cold.len()) {
            (0, 0) => Ok(GroupForm::Free),
            (1, 0) => Ok(GroupForm::Hot(hot[0])),
            (0, n) if n < group.dims.len() => Ok(GroupForm::Cold(cold)),
            _ => Err(Error::MalformedRule(format!(
                "group `{}` mixes or over-specifies hot and cold categories",
                group.name
            ))),
        }
    }

    pub fn check_well_formed(&self, schema: &FeatureSchema) -> Result<()> {
        if self.dim() != schema.dim() {
            return Err(Error::DimensionMismatch {
                expected: schema.dim(),
                found: self.dim(),
            });
        }
        for g in schema.groups() {
            self.group_form(&g)?;
        }
        Ok(())
    }

    pub fn is_well_formed(&self, schema: &FeatureSchema) -> bool {
        self.check_well_formed(schema).is_ok()
    }

    /// Restores categorical well-formedness without changing which one-hot
    /// valid inputs the rule contains.
    ///
    /// A hot category clears any cold bounds in its group, and an
    /// all-but-one-cold group becomes one-hot on the remaining category.
    pub fn simplify(&self, schema: &FeatureSchema) -> Result<Rule> {
        if self.dim() != schema.dim() {
            return Err(Error::DimensionMismatch {
                expected: schema.dim(),
                found: self.dim(),
            });
        }
        let mut out = self.clone();
        for g in schema.groups() {
            let irreparable = || Error::Irreparable {
                group: g.name.to_string(),
            };
            let mut hot = Vec::new();
            let mut cold = Vec::new();
            for d in g.dims.clone() {
                let (l, u) = (self.lower[d], self.upper[d]);
                // one-hot values are 0 or 1: l in [0, 1) demands 1, u in [0, 1) demands 0
                let wants_hot = if l < 0.0 {
                    false
                } else if l < 1.0 {
                    true
                } else {
                    return Err(irreparable());
                };
                let wants_cold = if u >= 1.0 {
                    false
                } else if u >= 0.0 {
                    true
                } else {
                    return Err(irreparable());
                };
                match (wants_hot, wants_cold) {
                    (true, true) => return Err(irreparable()),
                    (true, false) => hot.push(d),
                    (false, true) => cold.push(d),
                    (false, false) => {}
                }
            }
            let form = match (hot.len(), cold.len()) {
                (0, 0) => GroupForm::Free,
                (1, _) => GroupForm::Hot(hot[0]),
                (0, n) if n == g.dims.len() => return Err(irreparable()),
                (0, n) if n + 1 == g.dims.len() => {
                    GroupForm::Hot(g.dims.clone().find(|d| !cold.contains(d)).unwrap())
                }
                (0, _) => GroupForm::Cold(cold),
                _ => return Err(irreparable()),
            };
            for d in g.dims.clone() {
                out.lower[d] = f64::NEG_INFINITY;
                out.upper[d] = f64::INFINITY;
            }
            match form {
                GroupForm::Free => {}
                GroupForm::Hot(d) => out.lower[d] = CATEGORICAL_BOUND,
                GroupForm::Cold(ds) => {
                    for d in ds {
                        out.upper[d] = CATEGORICAL_BOUND;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Bit-exact identity key, used for deduplication.
    pub fn key(&self) -> Vec<u64> {
        self.lower
            .iter()
            .chain(&self.upper)
            .map(|v| v.to_bits())
            .collect()
    }
}

fn nested(la: &[f64], ua: &[f64], lb: &[f64], ub: &[f64]) -> bool {
    la.iter()
        .zip(ua)
        .zip(lb.iter().zip(ub))
        .all(|((&la, &ua), (&lb, &ub))| lb <= la && ua <= ub)
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = (0..self.dim())
            .filter_map(|d| match (self.lower[d].is_finite(), self.upper[d].is_finite()) {
                (false, false) => None,
                (true, false) => Some(format!("x[{d}] > {}", self.lower[d])),
                (false, true) => Some(format!("x[{d}] ≤ {}", self.upper[d])),
                (true, true) => Some(format!("{} < x[{d}] ≤ {}", self.lower[d], self.upper[d])),
            })
            .collect();
        if terms.is_empty() {
            f.write_str("true")
        } else {
            f.write_str(&terms.join(" ∧ "))
        }
    }
}

/// Training or evaluation statistics of one rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleStats {
    pub feasibility: f64,
    pub accuracy: f64,
    pub complexity: usize,
    pub support: usize,
}

impl RuleStats {
    pub fn is_valid(&self, rho: f64, tau: f64) -> bool {
        self.feasibility >= rho && self.accuracy >= tau
    }
}

/// Bounds as JSON arrays; infinities become the tokens `"-inf"` / `"+inf"`.
mod bounds_serde {
    use serde::de::Error as _;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Token(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            if x == f64::INFINITY {
                seq.serialize_element("+inf")?;
            } else if x == f64::NEG_INFINITY {
                seq.serialize_element("-inf")?;
            } else {
                seq.serialize_element(&x)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Num(x) => Ok(x),
                Repr::Token(t) => match t.as_str() {
                    "+inf" | "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    other => Err(D::Error::custom(format!("bad bound `{other}`"))),
                },
            })
            .collect()
    }
}
