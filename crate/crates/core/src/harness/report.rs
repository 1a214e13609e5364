use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::svg::{Panel, Series};
use super::{KlRow, OvershootRow, SummaryRow, SweepConfig, SweepResult, TrainingRow, Variant};
use crate::error::{Error, Result};
use crate::io::{fmt_real, write_json};
use crate::metrics::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    /// Parses a comma list such as `csv,json,svg`.
    pub fn parse_list(s: &str) -> Result<Vec<Format>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "csv" => Ok(Format::Csv),
                "json" => Ok(Format::Json),
                "svg" => Ok(Format::Svg),
                other => Err(Error::InvalidConfig(format!("unknown format '{other}'"))),
            })
            .collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_to_io(path, e))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_to_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidDataset(format!("{}: {other:?}", path.display())),
    }
}

const OVERSHOOT_HEADER: [&str; 10] = [
    "variant", "class", "size", "repeat", "metric", "predicted", "observed", "value", "variance", "z",
];
const KL_HEADER: [&str; 6] = ["variant", "class", "size", "repeat", "value", "clamped"];
const SUMMARY_HEADER: [&str; 7] = ["variant", "class", "size", "metric", "value", "variance", "repeats"];
const TRAINING_HEADER: [&str; 7] = ["variant", "size", "repeat", "best_loss", "iterations", "converged", "discarded"];

fn summary_rows(rows: &[SummaryRow]) -> impl Iterator<Item = Vec<String>> + '_ {
    rows.iter().map(|r| {
        vec![
            r.variant.to_string(),
            r.class.to_string(),
            r.size.to_string(),
            r.metric.clone(),
            opt(r.value),
            opt(r.variance),
            r.repeats.to_string(),
        ]
    })
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    config: &'a SweepConfig,
    class_count: usize,
    training: &'a [TrainingRow],
    overshoot: Vec<SummaryRow>,
    kl: Vec<SummaryRow>,
}

/// Writes the requested formats into `dir` and returns the files written.
///
/// CSV: `overshoot.csv` (one row per variant, class, size, repeat and
/// metric), `overshoot_summary.csv` (means over repeats), `training.csv`,
/// and with an oracle `kl.csv` and `kl_summary.csv`. JSON: `sweep.json`.
/// SVG: one `overshoot_<metric>.svg` per metric and `kl.svg`.
pub fn emit_report(result: &SweepResult, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    if result.overshoot.is_empty() {
        return Err(Error::InvalidConfig("sweep produced no rows to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let overshoot_summary = result.overshoot_summary();
    let kl_summary = result.kl_summary();

    if formats.contains(&Format::Csv) {
        let path = dir.join("overshoot.csv");
        write_csv(
            &path,
            &OVERSHOOT_HEADER,
            result.overshoot.iter().map(|r| {
                vec![
                    r.variant.to_string(),
                    r.class.to_string(),
                    r.size.to_string(),
                    r.repeat.to_string(),
                    r.metric.label().to_string(),
                    opt(r.predicted),
                    opt(r.observed),
                    opt(r.value),
                    opt(r.variance),
                    opt(r.z),
                ]
            }),
        )?;
        written.push(path);

        let path = dir.join("overshoot_summary.csv");
        write_csv(&path, &SUMMARY_HEADER, summary_rows(&overshoot_summary))?;
        written.push(path);

        let path = dir.join("training.csv");
        write_csv(
            &path,
            &TRAINING_HEADER,
            result.training.iter().map(|r| {
                vec![
                    r.variant.to_string(),
                    r.size.to_string(),
                    r.repeat.to_string(),
                    fmt_real(r.best_loss),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                    r.discarded.to_string(),
                ]
            }),
        )?;
        written.push(path);

        if !result.kl.is_empty() {
            let path = dir.join("kl.csv");
            write_csv(
                &path,
                &KL_HEADER,
                result.kl.iter().map(|r| {
                    vec![
                        r.variant.to_string(),
                        r.class.to_string(),
                        r.size.to_string(),
                        r.repeat.to_string(),
                        opt(r.value),
                        r.clamped.to_string(),
                    ]
                }),
            )?;
            written.push(path);

            let path = dir.join("kl_summary.csv");
            write_csv(&path, &SUMMARY_HEADER, summary_rows(&kl_summary))?;
            written.push(path);
        }
    }

    if formats.contains(&Format::Json) {
        let path = dir.join("sweep.json");
        write_json(
            &path,
            &JsonSummary {
                config: &result.config,
                class_count: result.class_count,
                training: &result.training,
                overshoot: overshoot_summary.clone(),
                kl: kl_summary.clone(),
            },
        )?;
        written.push(path);
    }

    if formats.contains(&Format::Svg) {
        let variants = variants_in(&overshoot_summary);
        for metric in Metric::ALL {
            let path = dir.join(format!("overshoot_{}.svg", metric.label()));
            let panels = panels(&overshoot_summary, result.class_count, &variants, metric.label());
            let title = format!("{} overshoot (observed - predicted)", metric.label());
            write_text(&path, &super::svg::render(&title, &panels))?;
            written.push(path);
        }
        if !kl_summary.is_empty() {
            let path = dir.join("kl.svg");
            let panels = panels(&kl_summary, result.class_count, &variants, "KL");
            write_text(&path, &super::svg::render("Mean KL(true || model), nats", &panels))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn variants_in(rows: &[SummaryRow]) -> Vec<Variant> {
    let mut v: Vec<Variant> = rows.iter().map(|r| r.variant).collect();
    v.sort();
    v.dedup();
    v
}

fn panels(rows: &[SummaryRow], class_count: usize, variants: &[Variant], metric: &str) -> Vec<Panel> {
    (0..class_count)
        .map(|class| Panel {
            title: format!("class {class}"),
            series: variants
                .iter()
                .map(|&variant| Series {
                    name: variant.to_string(),
                    color: color(variant),
                    points: rows
                        .iter()
                        .filter(|r| r.variant == variant && r.class == class && r.metric == metric)
                        .filter_map(|r| r.value.map(|v| (r.size as f64, v, r.variance.map(f64::sqrt))))
                        .collect(),
                })
                .collect(),
        })
        .collect()
}

fn color(v: Variant) -> &'static str {
    match v {
        Variant::Base => "#1f77b4",
        Variant::Weighted => "#d62728",
        Variant::Deweighted => "#ff7f0e",
        Variant::Biased => "#2ca02c",
        Variant::Debiased => "#9467bd",
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| csv_to_io(path, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::NonNumeric {
        row,
        column: name.to_string(),
        value: raw.to_string(),
    })
}

fn opt_field(rec: &csv::StringRecord, i: usize, row: usize, name: &str) -> Result<Option<f64>> {
    match rec.get(i).unwrap_or("") {
        "" => Ok(None),
        _ => field(rec, i, row, name).map(Some),
    }
}

fn variant_field(rec: &csv::StringRecord, row: usize) -> Result<Variant> {
    let raw = rec.get(0).unwrap_or("");
    Variant::parse(raw).ok_or_else(|| Error::InvalidDataset(format!("row {row}: unknown variant '{raw}'")))
}

/// Reads `overshoot.csv` back into rows.
pub fn read_overshoot_csv(path: impl AsRef<Path>) -> Result<Vec<OvershootRow>> {
    let mut r = reader(path.as_ref())?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let metric_raw = rec.get(4).unwrap_or("");
        out.push(OvershootRow {
            variant: variant_field(&rec, row)?,
            class: field(&rec, 1, row, "class")?,
            size: field(&rec, 2, row, "size")?,
            repeat: field(&rec, 3, row, "repeat")?,
            metric: Metric::parse(metric_raw)
                .ok_or_else(|| Error::InvalidDataset(format!("row {row}: unknown metric '{metric_raw}'")))?,
            predicted: opt_field(&rec, 5, row, "predicted")?,
            observed: opt_field(&rec, 6, row, "observed")?,
            value: opt_field(&rec, 7, row, "value")?,
            variance: opt_field(&rec, 8, row, "variance")?,
            z: opt_field(&rec, 9, row, "z")?,
        });
    }
    Ok(out)
}

/// Reads `kl.csv` back into rows.
pub fn read_kl_csv(path: impl AsRef<Path>) -> Result<Vec<KlRow>> {
    let mut r = reader(path.as_ref())?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        out.push(KlRow {
            variant: variant_field(&rec, row)?,
            class: field(&rec, 1, row, "class")?,
            size: field(&rec, 2, row, "size")?,
            repeat: field(&rec, 3, row, "repeat")?,
            value: opt_field(&rec, 4, row, "value")?,
            clamped: field(&rec, 5, row, "clamped")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_sweep, SweepConfig};
    use crate::mlp::TrainConfig;

    fn small_result() -> SweepResult {
        let cfg = SweepConfig {
            sizes: vec![200, 400],
            repeats: 2,
            test_size: 300,
            train: TrainConfig {
                hidden_sizes: vec![3],
                max_iters: 20,
                restarts: 1,
                ..TrainConfig::default()
            },
            ..SweepConfig::default()
        };
        run_sweep(&cfg, 1).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let res = small_result();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&res, dir.path(), &[Format::Csv]).unwrap();
        assert_eq!(files.len(), 5);
        assert_eq!(read_overshoot_csv(dir.path().join("overshoot.csv")).unwrap(), res.overshoot);
        assert_eq!(read_kl_csv(dir.path().join("kl.csv")).unwrap(), res.kl);
    }

    #[test]
    fn all_formats() {
        let res = small_result();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&res, dir.path(), &Format::parse_list("csv,json,svg").unwrap()).unwrap();
        assert_eq!(files.len(), 5 + 1 + 4);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
        assert_eq!(json["overshoot"].as_array().unwrap().len(), 5 * 3 * 3 * 2);
        for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "svg")) {
            let text = fs::read_to_string(f).unwrap();
            assert!(text.starts_with("<?xml") && text.trim_end().ends_with("</svg>"));
        }
    }

    #[test]
    fn empty_result_is_rejected() {
        let mut res = small_result();
        res.overshoot.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&res, dir.path(), &[Format::Csv]).is_err());
        assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
    }

    #[test]
    fn unwritable_directory() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_report(&small_result(), &blocker.join("sub"), &[Format::Csv]).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn format_list() {
        assert_eq!(Format::parse_list("svg, csv").unwrap(), vec![Format::Svg, Format::Csv]);
        assert!(Format::parse_list("csv,png").is_err());
    }
}
