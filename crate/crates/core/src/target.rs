use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelKind, Prediction};

/// The set of desired model outputs `Y*`.
///
/// Interval targets follow the half-line convention `(μ, ∞)` / `(−∞, μ]`, so a
/// regression output exactly at `μ` belongs to the lower half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    ClassSet { labels: BTreeSet<String> },
    /// `(threshold, ∞)`
    Above { threshold: f64 },
    /// `(−∞, threshold]`
    AtMost { threshold: f64 },
}

impl TargetSpec {
    pub fn classes<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        TargetSpec::ClassSet {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn above(threshold: f64) -> Self {
        TargetSpec::Above { threshold }
    }

    pub fn at_most(threshold: f64) -> Self {
        TargetSpec::AtMost { threshold }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        match (self, kind) {
            (TargetSpec::ClassSet { labels }, ModelKind::Classifier) => {
                if labels.is_empty() {
                    Err(Error::InvalidConfig("empty target class set".into()))
                } else {
                    Ok(())
                }
            }
            (TargetSpec::Above { threshold } | TargetSpec::AtMost { threshold }, ModelKind::Regressor) => {
                if threshold.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("interval target threshold must be finite".into()))
                }
            }
            (TargetSpec::ClassSet { .. }, ModelKind::Regressor) => Err(Error::TypeMismatch(
                "class-set target used with a regressor".into(),
            )),
            (_, ModelKind::Classifier) => Err(Error::TypeMismatch(
                "interval target used with a classifier".into(),
            )),
        }
    }

    /// Membership test `y ∈ Y*`.
    pub fn matches(&self, y: &Prediction) -> Result<bool> {
        match (self, y) {
            (TargetSpec::ClassSet { labels }, Prediction::Class(c)) => Ok(labels.contains(c)),
            (TargetSpec::Above { threshold }, Prediction::Value(v)) => Ok(*v > *threshold),
            (TargetSpec::AtMost { threshold }, Prediction::Value(v)) => Ok(*v <= *threshold),
            (TargetSpec::ClassSet { .. }, Prediction::Value(_)) => Err(Error::TypeMismatch(
                "numeric output tested against a class-set target".into(),
            )),
            (_, Prediction::Class(_)) => Err(Error::TypeMismatch(
                "class output tested against an interval target".into(),
            )),
        }
    }

    /// Membership test for a raw regression value.
    pub fn matches_value(&self, v: f64) -> Result<bool> {
        self.matches(&Prediction::Value(v))
    }
}

/// Free-function form of [`TargetSpec::matches`].
pub fn output_matches(y: &Prediction, target: &TargetSpec) -> Result<bool> {
    target.matches(y)
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::ClassSet { labels } => {
                let items: Vec<&str> = labels.iter().map(String::as_str).collect();
                write!(f, "{{{}}}", items.join(", "))
            }
            TargetSpec::Above { threshold } => write!(f, "({threshold}, ∞)"),
            TargetSpec::AtMost { threshold } => write!(f, "(-∞, {threshold}]"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_membership() {
        let t = TargetSpec::classes(["blue"]);
        assert!(t.matches(&Prediction::Class("blue".into())).unwrap());
        assert!(!t.matches(&Prediction::Class("red".into())).unwrap());
    }

    #[test]
    fn interval_boundary_goes_to_closed_side() {
        let mu = 5.0;
        assert!(!TargetSpec::above(mu).matches_value(mu).unwrap());
        assert!(TargetSpec::at_most(mu).matches_value(mu).unwrap());
        assert!(TargetSpec::above(mu).matches_value(mu + 1e-9).unwrap());
    }

    #[test]
    fn type_mismatch() {
        let t = TargetSpec::classes(["a"]);
        assert!(matches!(
            t.matches(&Prediction::Value(1.0)),
            Err(Error::TypeMismatch(_))
        ));
        assert!(TargetSpec::above(0.0)
            .matches(&Prediction::Class("a".into()))
            .is_err());
        assert!(t.validate(ModelKind::Regressor).is_err());
        assert!(TargetSpec::classes(Vec::<String>::new())
            .validate(ModelKind::Classifier)
            .is_err());
    }

    #[test]
    fn json_shape() {
        let t = TargetSpec::above(2.5);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"kind":"above","threshold":2.5}"#);
        assert_eq!(serde_json::from_str::<TargetSpec>(&s).unwrap(), t);
    }
}
