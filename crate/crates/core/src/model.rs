//! Black-box model adapters.
//!
//! The engine only ever calls [`BlackBoxModel::predict`] (or the batch form)
//! on encoded input vectors; nothing else about the model is assumed.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledDataset, Outputs};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Classifier,
    Regressor,
}

/// A single model output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Value(f64),
    Class(String),
}

impl std::fmt::Display for Prediction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prediction::Value(v) => write!(f, "{v}"),
            Prediction::Class(c) => f.write_str(c),
        }
    }
}

pub trait BlackBoxModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn predict(&self, x: &[f64]) -> std::result::Result<Prediction, String>;

    /// Whether `predict` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }

    /// Predicts every row in order. On failure returns the failing row index.
    fn predict_batch(&self, data: &Dataset) -> std::result::Result<Vec<Prediction>, (usize, String)> {
        data.rows()
            .enumerate()
            .map(|(i, x)| self.predict(x).map_err(|e| (i, e)))
            .collect()
    }
}

/// Labels every row of `data` with `model`.
pub fn label_with_model(
    data: &Dataset,
    model: &dyn BlackBoxModel,
    exec: Execution,
) -> Result<LabeledDataset> {
    let preds = if model.concurrent() {
        exec::try_map_range(exec, data.len(), |i| {
            model
                .predict(data.row(i))
                .map_err(|reason| Error::PredictionFailure { row: i, reason })
        })?
    } else {
        model
            .predict_batch(data)
            .map_err(|(row, reason)| Error::PredictionFailure { row, reason })?
    };
    let outputs = Outputs::from_predictions(preds, model.kind())?;
    LabeledDataset::new(data.clone(), outputs)
}

/// Wraps a closure as a model.
pub struct FnModel<F> {
    kind: ModelKind,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> std::result::Result<Prediction, String> + Send + Sync,
{
    pub fn new(kind: ModelKind, f: F) -> Self {
        FnModel { kind, f }
    }
}

impl FnModel<()> {
    pub fn classifier<G, S>(g: G) -> impl BlackBoxModel
    where
        G: Fn(&[f64]) -> S + Send + Sync,
        S: Into<String>,
    {
        FnModel::new(ModelKind::Classifier, move |x: &[f64]| {
            Ok(Prediction::Class(g(x).into()))
        })
    }

    pub fn regressor<G>(g: G) -> impl BlackBoxModel
    where
        G: Fn(&[f64]) -> f64 + Send + Sync,
    {
        FnModel::new(ModelKind::Regressor, move |x: &[f64]| Ok(Prediction::Value(g(x))))
    }
}

impl<F> BlackBoxModel for FnModel<F>
where
    F: Fn(&[f64]) -> std::result::Result<Prediction, String> + Send + Sync,
{
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn predict(&self, x: &[f64]) -> std::result::Result<Prediction, String> {
        (self.f)(x)
    }
}

/// A model served by an external program.
///
/// The program reads newline-delimited input vectors (`D` comma-separated
/// numbers per line) on stdin and writes one output token per line on stdout.
/// One process is spawned per batch.
#[derive(Clone, Debug)]
pub struct ProcessModel {
    program: String,
    args: Vec<String>,
    kind: ModelKind,
}

impl ProcessModel {
    pub fn new(program: impl Into<String>, args: Vec<String>, kind: ModelKind) -> Self {
        ProcessModel {
            program: program.into(),
            args,
            kind,
        }
    }

    /// Splits a shell-style command line on whitespace.
    pub fn from_command_line(cmd: &str, kind: ModelKind) -> Result<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty model command".into()))?;
        Ok(Self::new(program, parts.collect(), kind))
    }

    fn run(&self, rows: &[&[f64]]) -> std::result::Result<Vec<Prediction>, (usize, String)> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| (0, format!("cannot start `{}`: {e}", self.program)))?;

        let payload: String = rows
            .iter()
            .map(|r| {
                let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
                cells.join(",") + "\n"
            })
            .collect();
        let mut stdin = child.stdin.take().unwrap();
        // Feed stdin from a separate thread so a chatty child can't deadlock us.
        let writer = std::thread::spawn(move || stdin.write_all(payload.as_bytes()));

        let stdout = child.stdout.take().unwrap();
        let mut preds = Vec::with_capacity(rows.len());
        for line in BufReader::new(stdout).lines() {
            let line = line.map_err(|e| (preds.len(), e.to_string()))?;
            let token = line.trim();
            if token.is_empty() {
                continue;
            }
            let row = preds.len();
            preds.push(match self.kind {
                ModelKind::Classifier => Prediction::Class(token.to_string()),
                ModelKind::Regressor => Prediction::Value(
                    token
                        .parse()
                        .map_err(|_| (row, format!("non-numeric output `{token}`")))?,
                ),
            });
        }
        let _ = writer.join();
        let status = child.wait().map_err(|e| (preds.len(), e.to_string()))?;
        if !status.success() {
            return Err((preds.len().min(rows.len().saturating_sub(1)), format!("model exited with {status}")));
        }
        if preds.len() != rows.len() {
            return Err((
                preds.len().min(rows.len()),
                format!("expected {} outputs, got {}", rows.len(), preds.len()),
            ));
        }
        Ok(preds)
    }
}

impl BlackBoxModel for ProcessModel {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn predict(&self, x: &[f64]) -> std::result::Result<Prediction, String> {
        self.run(&[x]).map(|mut p| p.remove(0)).map_err(|(_, e)| e)
    }

    fn concurrent(&self) -> bool {
        false
    }

    fn predict_batch(&self, data: &Dataset) -> std::result::Result<Vec<Prediction>, (usize, String)> {
        let rows: Vec<&[f64]> = data.rows().collect();
        self.run(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;

    fn one_dim(xs: &[f64]) -> Dataset {
        Dataset::new(
            FeatureSchema::numerical(1).unwrap(),
            xs.iter().map(|&x| vec![x]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_model() {
        let m = FnModel::classifier(|_| "1");
        let l = label_with_model(&one_dim(&[0.0; 5]), &m, Execution::Parallel).unwrap();
        assert_eq!(l.outputs, Outputs::from_labels(["1"; 5]));
    }

    #[test]
    fn indicator_model() {
        let m = FnModel::classifier(|x| if x[0] > 0.0 { "1" } else { "0" });
        let l = label_with_model(&one_dim(&[-1.0, 2.0]), &m, Execution::Sequential).unwrap();
        assert_eq!(l.outputs, Outputs::from_labels(["0", "1"]));
    }

    #[test]
    fn failure_reports_row() {
        let m = FnModel::new(ModelKind::Regressor, |x: &[f64]| {
            if x[0] == 3.0 {
                Err("boom".to_string())
            } else {
                Ok(Prediction::Value(x[0]))
            }
        });
        let d = one_dim(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        for exec in [Execution::Sequential, Execution::Parallel] {
            assert!(matches!(
                label_with_model(&d, &m, exec),
                Err(Error::PredictionFailure { row: 3, .. })
            ));
        }
    }

    #[test]
    fn external_process_model() {
        let m = ProcessModel::new(
            "awk",
            vec!["-F,".into(), "{ print ($1 > 0) ? \"pos\" : \"neg\" }".into()],
            ModelKind::Classifier,
        );
        let d = one_dim(&[-1.0, 2.5, 0.0]);
        let l = label_with_model(&d, &m, Execution::Parallel).unwrap();
        assert_eq!(l.outputs, Outputs::from_labels(["neg", "pos", "neg"]));
        assert_eq!(m.predict(&[4.0]).unwrap(), Prediction::Class("pos".into()));
    }

    #[test]
    fn external_process_short_output() {
        let m = ProcessModel::new(
            "awk",
            vec!["-F,".into(), "NR < 3 { print $1 * 2 }".into()],
            ModelKind::Regressor,
        );
        let d = one_dim(&[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            label_with_model(&d, &m, Execution::Parallel),
            Err(Error::PredictionFailure { row: 2, .. })
        ));
    }
}
