//! Feature space declaration.
//!
//! A schema lists features in declaration order. Numerical features take one
//! encoded dimension each; a categorical feature with `k` categories expands
//! into a contiguous block of `k` one-hot dimensions, in declared category
//! order. That fixed order defines every dimension index used elsewhere.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Feature {
    Numerical { name: String },
    Categorical { name: String, categories: Vec<String> },
}

impl Feature {
    pub fn numerical(name: impl Into<String>) -> Self {
        Feature::Numerical { name: name.into() }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Feature::Categorical {
            name: name.into(),
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Feature::Numerical { name } | Feature::Categorical { name, .. } => name,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Feature::Numerical { .. } => 1,
            Feature::Categorical { categories, .. } => categories.len(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Feature::Categorical { .. })
    }
}

/// A one-hot block `S_c` of the encoded space.
#[derive(Clone, Debug)]
pub struct Group<'a> {
    /// Index of the feature in the schema.
    pub feature: usize,
    pub name: &'a str,
    pub categories: &'a [String],
    pub dims: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct FeatureSchema {
    features: Vec<Feature>,
    /// Start dimension of each feature, plus the total dimension at the end.
    offsets: Vec<usize>,
    dim_feature: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    features: Vec<Feature>,
}

impl TryFrom<SchemaDoc> for FeatureSchema {
    type Error = Error;

    fn try_from(doc: SchemaDoc) -> Result<Self> {
        FeatureSchema::new(doc.features)
    }
}

impl From<FeatureSchema> for SchemaDoc {
    fn from(schema: FeatureSchema) -> Self {
        SchemaDoc {
            features: schema.features,
        }
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidSchema("schema declares no features".into()));
        }
        let mut names = HashSet::new();
        for f in &features {
            if f.name().is_empty() {
                return Err(Error::InvalidSchema("empty feature name".into()));
            }
            if !names.insert(f.name()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate feature name `{}`",
                    f.name()
                )));
            }
            if let Feature::Categorical { name, categories } = f {
                if categories.is_empty() {
                    return Err(Error::InvalidSchema(format!(
                        "categorical feature `{name}` has no categories"
                    )));
                }
                let unique: HashSet<_> = categories.iter().collect();
                if unique.len() != categories.len() {
                    return Err(Error::InvalidSchema(format!(
                        "categorical feature `{name}` repeats a category"
                    )));
                }
            }
        }

        let mut offsets = Vec::with_capacity(features.len() + 1);
        let mut dim_feature = Vec::new();
        let mut next = 0;
        for (i, f) in features.iter().enumerate() {
            offsets.push(next);
            next += f.width();
            dim_feature.extend(std::iter::repeat_n(i, f.width()));
        }
        offsets.push(next);

        Ok(FeatureSchema {
            features,
            offsets,
            dim_feature,
        })
    }

    /// Schema of `n` numerical features named `x1..xn`.
    pub fn numerical(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|i| Feature::numerical(format!("x{i}"))).collect())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    /// Total encoded dimensionality `D`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn feature_dims(&self, feature: usize) -> Range<usize> {
        self.offsets[feature]..self.offsets[feature + 1]
    }

    /// Index of the feature owning encoded dimension `d`.
    pub fn feature_of(&self, d: usize) -> usize {
        self.dim_feature[d]
    }

    pub fn is_categorical_dim(&self, d: usize) -> bool {
        self.features[self.dim_feature[d]].is_categorical()
    }

    pub fn groups(&self) -> impl Iterator<Item = Group<'_>> + '_ {
        self.features.iter().enumerate().filter_map(|(i, f)| match f {
            Feature::Categorical { name, categories } => Some(Group {
                feature: i,
                name,
                categories,
                dims: self.feature_dims(i),
            }),
            Feature::Numerical { .. } => None,
        })
    }

    /// The group containing dimension `d`, if it is categorical.
    pub fn group_of(&self, d: usize) -> Option<Group<'_>> {
        let i = self.dim_feature[d];
        match &self.features[i] {
            Feature::Categorical { name, categories } => Some(Group {
                feature: i,
                name,
                categories,
                dims: self.feature_dims(i),
            }),
            Feature::Numerical { .. } => None,
        }
    }

    /// Human-readable name of one encoded dimension (`color=red` for one-hot dims).
    pub fn dim_label(&self, d: usize) -> String {
        let i = self.dim_feature[d];
        match &self.features[i] {
            Feature::Numerical { name } => name.clone(),
            Feature::Categorical { name, categories } => {
                format!("{name}={}", categories[d - self.offsets[i]])
            }
        }
    }

    /// Encodes one record given raw cell text per feature (declaration order).
    pub fn encode_record(&self, cells: &[&str], row: usize) -> Result<Vec<f64>> {
        if cells.len() != self.features.len() {
            return Err(Error::DimensionMismatch {
                expected: self.features.len(),
                found: cells.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        for (i, (f, cell)) in self.features.iter().zip(cells).enumerate() {
            let start = self.offsets[i];
            let cell = cell.trim();
            match f {
                Feature::Numerical { name } => {
                    let v: f64 = cell.parse().map_err(|_| Error::UnparsableNumber {
                        row,
                        column: name.clone(),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::UnparsableNumber {
                            row,
                            column: name.clone(),
                        });
                    }
                    out[start] = v;
                }
                Feature::Categorical { name, categories } => {
                    let k = categories.iter().position(|c| c == cell).ok_or_else(|| {
                        Error::UnknownCategory {
                            row,
                            column: name.clone(),
                            value: cell.to_string(),
                        }
                    })?;
                    out[start + k] = 1.0;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`encode_record`](Self::encode_record) for valid rows.
    pub fn decode_row(&self, x: &[f64]) -> Result<Vec<String>> {
        self.check_row(x, 0)?;
        Ok(self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let dims = self.feature_dims(i);
                match f {
                    Feature::Numerical { .. } => format!("{}", x[dims.start]),
                    Feature::Categorical { categories, .. } => {
                        let hot = dims.clone().position(|d| x[d] == 1.0).unwrap();
                        categories[hot].clone()
                    }
                }
            })
            .collect())
    }

    /// Checks length, finiteness and one-hot validity of an encoded row.
    pub fn check_row(&self, x: &[f64], row: usize) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if let Some(d) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRow {
                row,
                reason: format!("non-finite value in dimension {d}"),
            });
        }
        for g in self.groups() {
            let block = &x[g.dims.clone()];
            let ones = block.iter().filter(|&&v| v == 1.0).count();
            let zeros = block.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != block.len() {
                return Err(Error::InvalidRow {
                    row,
                    reason: format!("group `{}` is not one-hot", g.name),
                });
            }
        }
        Ok(())
    }

    /// Hot dimension of `group` in a valid row.
    pub fn hot_dim(&self, x: &[f64], group: &Group<'_>) -> Option<usize> {
        group.dims.clone().find(|&d| x[d] == 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> FeatureSchema {
        FeatureSchema::new(vec![
            Feature::numerical("x1"),
            Feature::categorical("color", ["blue", "red"]),
            Feature::numerical("x2"),
        ])
        .unwrap()
    }

    #[test]
    fn layout() {
        let s = mixed();
        assert_eq!(s.dim(), 4);
        assert_eq!(s.feature_dims(1), 1..3);
        assert_eq!(s.feature_of(2), 1);
        assert!(s.is_categorical_dim(1));
        assert!(!s.is_categorical_dim(3));
        assert_eq!(s.dim_label(2), "color=red");
        let groups: Vec<_> = s.groups().map(|g| g.dims).collect();
        assert_eq!(groups, vec![1..3]);
    }

    #[test]
    fn encode_one_hot() {
        let s = mixed();
        assert_eq!(
            s.encode_record(&["2.0", "red", "-1"], 0).unwrap(),
            vec![2.0, 0.0, 1.0, -1.0]
        );
        assert!(matches!(
            s.encode_record(&["2.0", "green", "0"], 4),
            Err(Error::UnknownCategory { row: 4, .. })
        ));
        assert!(matches!(
            s.encode_record(&["abc", "red", "0"], 1),
            Err(Error::UnparsableNumber { row: 1, .. })
        ));
    }

    #[test]
    fn decode_inverts_encode() {
        let s = mixed();
        let x = s.encode_record(&["0.25", "blue", "7"], 0).unwrap();
        assert_eq!(s.decode_row(&x).unwrap(), vec!["0.25", "blue", "7"]);
    }

    #[test]
    fn rejects_bad_schemas() {
        assert!(FeatureSchema::new(vec![]).is_err());
        assert!(
            FeatureSchema::new(vec![Feature::numerical("a"), Feature::numerical("a")]).is_err()
        );
        assert!(FeatureSchema::new(vec![Feature::categorical("c", ["x", "x"])]).is_err());
    }

    #[test]
    fn check_row_one_hot() {
        let s = mixed();
        assert!(s.check_row(&[0.0, 1.0, 0.0, 0.0], 0).is_ok());
        assert!(s.check_row(&[0.0, 1.0, 1.0, 0.0], 0).is_err());
        assert!(s.check_row(&[0.0, 0.0, 0.0, 0.0], 0).is_err());
        assert!(s.check_row(&[0.0, 0.5, 0.5, 0.0], 0).is_err());
        assert!(s.check_row(&[f64::NAN, 1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn json_roundtrip_recomputes_layout() {
        let s = mixed();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"type\":\"categorical\""));
        let back: FeatureSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
