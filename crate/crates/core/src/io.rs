//! CSV and JSON file formats.
//!
//! * Dataset CSV: header row, feature columns `f0..f{d-1}`, optional `label`
//!   and `weight` columns.
//! * Prediction CSV: columns `p0..p{K-1}`, optional `label`.
//! * Label CSV: a single `label` column.
//! * Manifest JSON: `{"class_count": K, "class_names": [...]}`.
//!
//! Reals are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Prior, ProbMatrix};
use crate::error::{Error, Result};

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// How a non-feature column is treated on load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Column {
    #[default]
    Ignore,
    IfPresent(String),
    Required(String),
}

impl Column {
    fn resolve(&self, headers: &csv::StringRecord) -> Result<Option<usize>> {
        match self {
            Column::Ignore => Ok(None),
            Column::IfPresent(name) => Ok(headers.iter().position(|h| h == name)),
            Column::Required(name) => headers
                .iter()
                .position(|h| h == name)
                .map(Some)
                .ok_or_else(|| Error::MissingColumn(name.clone())),
        }
    }
}

/// Column roles for [`load_dataset`].
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Explicit feature columns; `None` selects every `f<digits>` column in
    /// header order.
    pub features: Option<Vec<String>>,
    pub label: Column,
    pub weight: Column,
    pub class_count: Option<usize>,
    pub manifest: Option<Manifest>,
}

impl CsvSchema {
    /// Features only; labels and weights are not read.
    pub fn features_only() -> Self {
        Self::default()
    }

    /// `label` and `weight` are read when the header has them.
    pub fn standard() -> Self {
        Self {
            label: Column::IfPresent("label".into()),
            weight: Column::IfPresent("weight".into()),
            ..Self::default()
        }
    }

    pub fn with_label(mut self, name: &str) -> Self {
        self.label = Column::Required(name.into());
        self
    }

    pub fn with_weight(mut self, name: &str) -> Self {
        self.weight = Column::Required(name.into());
        self
    }

    pub fn with_class_count(mut self, k: usize) -> Self {
        self.class_count = Some(k);
        self
    }

    pub fn with_manifest(mut self, manifest: Manifest) -> Self {
        self.manifest = Some(manifest);
        self
    }
}

/// Sidecar mapping dense label indices to class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub class_count: usize,
    pub class_names: Vec<String>,
}

impl Manifest {
    pub fn new(class_names: Vec<String>) -> Self {
        Self {
            class_count: class_names.len(),
            class_names,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.class_names.len() != m.class_count {
            return Err(Error::InvalidConfig(format!(
                "manifest lists {} names for {} classes",
                m.class_names.len(),
                m.class_count
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file)))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

fn parse_label(cell: &str, row: usize, column: &str, names: Option<&HashMap<&str, usize>>) -> Result<usize> {
    if let Ok(v) = cell.parse::<usize>() {
        return Ok(v);
    }
    names
        .and_then(|m| m.get(cell).copied())
        .ok_or_else(|| Error::NonNumeric {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        })
}

fn is_feature_name(h: &str) -> bool {
    h.len() > 1 && h.starts_with('f') && h[1..].bytes().all(|b| b.is_ascii_digit())
}

/// Reads a dataset CSV. Row order is preserved; `K` is the declared class
/// count (schema, then manifest), else one more than the largest label
/// (at least 2).
pub fn load_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();

    let feature_idx: Vec<(usize, String)> = match &schema.features {
        Some(cols) => cols
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c)
                    .map(|i| (i, c.clone()))
                    .ok_or_else(|| Error::MissingColumn(c.clone()))
            })
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(_, h)| is_feature_name(h))
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::MissingColumn("f0".into()));
    }
    let label_idx = schema.label.resolve(&headers)?;
    let weight_idx = schema.weight.resolve(&headers)?;
    let names: Option<HashMap<&str, usize>> = schema.manifest.as_ref().map(|m| {
        m.class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect()
    });

    let mut features = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut weights = weight_idx.map(|_| Vec::new());
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (i, name) in &feature_idx {
            features.push(parse_real(record.get(*i).unwrap_or(""), row, name)?);
        }
        if let (Some(i), Some(labels)) = (label_idx, labels.as_mut()) {
            labels.push(parse_label(
                record.get(i).unwrap_or(""),
                row,
                &headers[i],
                names.as_ref(),
            )?);
        }
        if let (Some(i), Some(weights)) = (weight_idx, weights.as_mut()) {
            weights.push(parse_real(record.get(i).unwrap_or(""), row, &headers[i])?);
        }
    }

    let declared = schema
        .class_count
        .or_else(|| schema.manifest.as_ref().map(|m| m.class_count));
    let class_count = match declared {
        Some(k) => k,
        None => labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(2, |&m| (m + 1).max(2)),
    };
    Dataset::new(features, feature_idx.len(), labels, weights, class_count)
}

/// Writes a dataset CSV with columns `f0..`, then `label` and `weight` when
/// present.
pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut out = create_writer(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|i| format!("f{i}")).collect();
    if ds.labels().is_some() {
        header.push("label".into());
    }
    if ds.weights().is_some() {
        header.push("weight".into());
    }
    let io_err = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for (n, row) in ds.rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        if let Some(labels) = ds.labels() {
            cells.push(labels[n].to_string());
        }
        if let Some(weights) = ds.weights() {
            cells.push(fmt_real(weights[n]));
        }
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads a prediction catalog (`p0..p{K-1}`, optional `label`). Rows whose
/// sums drift by less than 1e-6 are renormalized.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<(ProbMatrix, Option<Vec<usize>>)> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let mut cols = Vec::new();
    for k in 0.. {
        match headers.iter().position(|h| h == format!("p{k}")) {
            Some(i) => cols.push(i),
            None => break,
        }
    }
    if cols.is_empty() {
        return Err(Error::MissingColumn("p0".into()));
    }
    let label_idx = headers.iter().position(|h| h == "label");
    let mut data = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (k, &i) in cols.iter().enumerate() {
            data.push(parse_real(record.get(i).unwrap_or(""), row, &format!("p{k}"))?);
        }
        if let (Some(i), Some(labels)) = (label_idx, labels.as_mut()) {
            let label = parse_label(record.get(i).unwrap_or(""), row, "label", None)?;
            if label >= cols.len() {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    class_count: cols.len(),
                });
            }
            labels.push(label);
        }
    }
    Ok((ProbMatrix::new_renormalizing(cols.len(), data)?, labels))
}

pub fn save_predictions(path: impl AsRef<Path>, probs: &ProbMatrix, labels: Option<&[usize]>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let mut out = create_writer(path)?;
    let mut header: Vec<String> = (0..probs.class_count()).map(|i| format!("p{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for (n, row) in probs.rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        if let Some(labels) = labels {
            cells.push(labels[n].to_string());
        }
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads the `label` column of any CSV.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::MissingColumn("label".into()))?;
    rdr.records()
        .enumerate()
        .map(|(row, r)| parse_label(r?.get(idx).unwrap_or(""), row, "label", None))
        .collect()
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let mut out = create_writer(path)?;
    writeln!(out, "label").map_err(io_err)?;
    for l in labels {
        writeln!(out, "{l}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut out = create_writer(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parses a prior given inline as `0.6,0.38,0.02`, as a JSON array, or as
/// the path of a JSON file holding an array. Values are normalized, so
/// `1,1,1` is the uniform prior.
pub fn parse_prior(text: &str) -> Result<Prior> {
    let text = text.trim();
    let values: Vec<f64> = if text.starts_with('[') {
        serde_json::from_str(text)?
    } else if Path::new(text).is_file() {
        read_json(text)?
    } else {
        text.split(',')
            .enumerate()
            .map(|(i, s)| parse_real(s.trim(), 0, &format!("prior[{i}]")))
            .collect::<Result<_>>()?
    };
    Prior::normalized(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_labelled_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "f0,f1,label\n0.1,0.2,0\n0.3,-0.1,1\n");
        let ds = load_dataset(&p, &CsvSchema::default().with_label("label")).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.class_count()), (2, 2, 2));
        assert_eq!(ds.row(1), &[0.3, -0.1]);
        assert_eq!(ds.labels(), Some(&[0usize, 1][..]));

        let unlabelled = load_dataset(&p, &CsvSchema::features_only()).unwrap();
        assert!(unlabelled.labels().is_none());
        assert_eq!(unlabelled.dim(), 2);
    }

    #[test]
    fn rejects_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "f0,f1,label\na,0.2,0\n");
        let err = load_dataset(&p, &CsvSchema::standard()).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 0, ref column, .. } if column == "f0"));

        let p = write(&dir, "e.csv", "f0,label\n0.5,3\n");
        let err = load_dataset(&p, &CsvSchema::standard().with_class_count(2)).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 3, .. }));

        let err = load_dataset(dir.path().join("missing.csv"), &CsvSchema::standard()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn manifest_maps_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "f0,label\n1,star\n2,galaxy\n3,agn\n");
        let manifest = Manifest::new(vec!["galaxy".into(), "star".into(), "agn".into()]);
        let ds = load_dataset(&p, &CsvSchema::default().with_label("label").with_manifest(manifest.clone())).unwrap();
        assert_eq!(ds.labels(), Some(&[1usize, 0, 2][..]));
        assert_eq!(ds.class_count(), 3);

        let mp = dir.path().join("m.json");
        manifest.save(&mp).unwrap();
        assert_eq!(Manifest::load(&mp).unwrap(), manifest);
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let feats = vec![0.1, -1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE, -0.0];
        let ds = Dataset::new(feats, 2, Some(vec![0, 1, 1]), Some(vec![1.0, 2.5, 1.0 / 7.0]), 2).unwrap();
        let p = dir.path().join("rt.csv");
        save_dataset(&p, &ds).unwrap();
        let back = load_dataset(&p, &CsvSchema::standard()).unwrap();
        for (a, b) in ds.features().iter().zip(back.features()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.weights(), ds.weights());
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ProbMatrix::from_rows(&[vec![0.2, 0.8], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let p = dir.path().join("p.csv");
        save_predictions(&p, &m, Some(&[1, 0])).unwrap();
        let (back, labels) = load_predictions(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(labels, Some(vec![1, 0]));
    }

    #[test]
    fn prior_text_forms() {
        assert_eq!(parse_prior("0.25, 0.75").unwrap().as_slice(), &[0.25, 0.75]);
        assert_eq!(parse_prior("[1,1]").unwrap().as_slice(), &[0.5, 0.5]);
        assert!(parse_prior("0.5,x").is_err());
    }
}
