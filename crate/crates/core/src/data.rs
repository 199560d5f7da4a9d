//! Encoded datasets, model outputs, and CSV ingestion.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelKind, Prediction};
use crate::schema::FeatureSchema;
use crate::target::TargetSpec;

/// `N` encoded rows over a schema. Rows are stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    values: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset, checking every row for length, finiteness and
    /// one-hot validity.
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::MissingData);
        }
        let mut values = Vec::with_capacity(rows.len() * schema.dim());
        for (i, row) in rows.iter().enumerate() {
            schema.check_row(row, i)?;
            values.extend_from_slice(row);
        }
        Ok(Dataset { schema, values })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.schema.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim())
    }

    pub fn column(&self, d: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[d])
    }

    /// `(min, max)` of dimension `d`.
    pub fn column_range(&self, d: usize) -> (f64, f64) {
        self.column(d)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::MissingData);
        }
        let mut values = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Ok(Dataset {
            schema: self.schema.clone(),
            values,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// Model outputs for every row of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Outputs {
    /// Class labels, stored as indices into the sorted label set.
    Classes { classes: Vec<String>, ids: Vec<usize> },
    Values(Vec<f64>),
}

impl Outputs {
    pub fn from_predictions(preds: Vec<Prediction>, kind: ModelKind) -> Result<Self> {
        match kind {
            ModelKind::Classifier => {
                let labels: Vec<String> = preds
                    .into_iter()
                    .map(|p| match p {
                        Prediction::Class(c) => Ok(c),
                        Prediction::Value(_) => Err(Error::TypeMismatch(
                            "classifier produced a numeric output".into(),
                        )),
                    })
                    .collect::<Result<_>>()?;
                Ok(Self::from_labels(labels))
            }
            ModelKind::Regressor => preds
                .into_iter()
                .map(|p| match p {
                    Prediction::Value(v) => Ok(v),
                    Prediction::Class(_) => Err(Error::TypeMismatch(
                        "regressor produced a class output".into(),
                    )),
                })
                .collect::<Result<Vec<_>>>()
                .map(Outputs::Values),
        }
    }

    pub fn from_labels<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(|s| s.as_ref().to_string()).collect();
        let classes: Vec<String> = labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ids = labels
            .iter()
            .map(|l| classes.binary_search(l).unwrap())
            .collect();
        Outputs::Classes { classes, ids }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Outputs::Classes { .. } => ModelKind::Classifier,
            Outputs::Values(_) => ModelKind::Regressor,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Outputs::Classes { ids, .. } => ids.len(),
            Outputs::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Prediction {
        match self {
            Outputs::Classes { classes, ids } => Prediction::Class(classes[ids[i]].clone()),
            Outputs::Values(v) => Prediction::Value(v[i]),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            Outputs::Classes { classes, ids } => Outputs::Classes {
                classes: classes.clone(),
                ids: indices.iter().map(|&i| ids[i]).collect(),
            },
            Outputs::Values(v) => Outputs::Values(indices.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            Outputs::Values(v) if !v.is_empty() => Some(v.iter().sum::<f64>() / v.len() as f64),
            _ => None,
        }
    }
}

/// `{(x, y = f(x))}` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    pub outputs: Outputs,
}

impl LabeledDataset {
    pub fn new(data: Dataset, outputs: Outputs) -> Result<Self> {
        if outputs.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: outputs.len(),
            });
        }
        Ok(LabeledDataset { data, outputs })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn kind(&self) -> ModelKind {
        self.outputs.kind()
    }

    /// Per-row flags `f(x_n) ∈ Y*`.
    pub fn target_mask(&self, target: &TargetSpec) -> Result<Vec<bool>> {
        match (&self.outputs, target) {
            (Outputs::Classes { classes, ids }, TargetSpec::ClassSet { labels }) => {
                let hit: Vec<bool> = classes.iter().map(|c| labels.contains(c)).collect();
                Ok(ids.iter().map(|&i| hit[i]).collect())
            }
            (Outputs::Values(v), _) => v.iter().map(|&y| target.matches_value(y)).collect(),
            (Outputs::Classes { .. }, _) => Err(Error::TypeMismatch(
                "interval target used with class outputs".into(),
            )),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(LabeledDataset {
            data: self.data.select(indices)?,
            outputs: self.outputs.select(indices),
        })
    }
}

/// Reads a CSV with a header row, one-hot encoding it against `schema`.
///
/// Columns are matched by header name; columns the schema does not mention
/// are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset> {
    let (data, _) = read_csv_inner(reader, schema, None)?;
    Ok(data)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Like [`read_csv`], additionally reading model outputs from `label_column`.
///
/// Returns `None` for the outputs when the column is absent.
pub fn read_labeled_csv<R: Read>(
    reader: R,
    schema: &FeatureSchema,
    label_column: &str,
    kind: ModelKind,
) -> Result<(Dataset, Option<Outputs>)> {
    let (data, raw) = read_csv_inner(reader, schema, Some(label_column))?;
    let outputs = match raw {
        None => None,
        Some(cells) => Some(match kind {
            ModelKind::Classifier => Outputs::from_labels(cells),
            ModelKind::Regressor => Outputs::Values(
                cells
                    .iter()
                    .enumerate()
                    .map(|(row, c)| {
                        c.trim().parse::<f64>().map_err(|_| Error::UnparsableNumber {
                            row,
                            column: label_column.to_string(),
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
        }),
    };
    Ok((data, outputs))
}

pub fn load_labeled_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    label_column: &str,
    kind: ModelKind,
) -> Result<(Dataset, Option<Outputs>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_labeled_csv(file, schema, label_column, kind)
}

fn read_csv_inner<R: Read>(
    reader: R,
    schema: &FeatureSchema,
    label_column: Option<&str>,
) -> Result<(Dataset, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);
    let columns: Vec<usize> = schema
        .features()
        .iter()
        .map(|f| position(f.name()).ok_or_else(|| Error::MissingColumn(f.name().to_string())))
        .collect::<Result<_>>()?;
    let label_idx = label_column.and_then(position);

    let mut rows = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = columns
            .iter()
            .map(|&c| record.get(c).unwrap_or(""))
            .collect();
        rows.push(schema.encode_record(&cells, i)?);
        if let (Some(idx), Some(labels)) = (label_idx, labels.as_mut()) {
            labels.push(record.get(idx).unwrap_or("").trim().to_string());
        }
    }
    if rows.is_empty() {
        return Err(Error::MissingData);
    }
    Ok((Dataset::new(schema.clone(), rows)?, labels))
}

/// Writes decoded rows (plus an optional output column) as CSV.
pub fn write_csv<W: Write>(
    writer: W,
    data: &Dataset,
    outputs: Option<(&str, &Outputs)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = data
        .schema()
        .features()
        .iter()
        .map(|f| f.name().to_string())
        .collect();
    if let Some((name, _)) = outputs {
        header.push(name.to_string());
    }
    w.write_record(&header)?;
    for (i, row) in data.rows().enumerate() {
        let mut record = data.schema().decode_row(row)?;
        if let Some((_, out)) = outputs {
            record.push(match out.get(i) {
                Prediction::Class(c) => c,
                Prediction::Value(v) => format!("{v}"),
            });
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
