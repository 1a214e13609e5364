//! Round-trip a labelled dataset and a prediction matrix through CSV, with a
//! manifest that names the classes.
//!
//! cargo run --release --example csv_data

use debias::io::{load_dataset, load_predictions, save_dataset, save_predictions, CsvSchema, Manifest};
use debias::simgen::{default_spec, oracle_matrix, sample_dataset, SimKind};

fn main() -> debias::Result<()> {
    let dir = std::env::temp_dir().join("debias-example-csv");
    std::fs::create_dir_all(&dir).map_err(|source| debias::Error::Io { path: dir.clone(), source })?;

    let cfg = default_spec(SimKind::Biased).with_points(1_000).with_seed(60);
    let ds = sample_dataset(&cfg)?;
    let data_path = dir.join("train.csv");
    save_dataset(&data_path, &ds)?;

    let manifest = Manifest::new(vec!["galaxy".into(), "star".into(), "agn".into()]);
    let manifest_path = dir.join("classes.json");
    manifest.save(&manifest_path)?;

    let schema = CsvSchema::standard().with_manifest(Manifest::load(&manifest_path)?);
    let loaded = load_dataset(&data_path, &schema)?;
    println!(
        "{}: {} rows, {} features, {} classes, identical: {}",
        data_path.display(),
        loaded.len(),
        loaded.dim(),
        loaded.class_count(),
        loaded.features() == ds.features() && loaded.labels() == ds.labels()
    );

    let probs = oracle_matrix(&cfg, &ds)?;
    let pred_path = dir.join("predictions.csv");
    save_predictions(&pred_path, &probs, ds.labels())?;
    let (back, labels) = load_predictions(&pred_path)?;
    println!(
        "{}: {} rows, exact round trip: {}, labels kept: {}",
        pred_path.display(),
        back.n_rows(),
        back == probs,
        labels.as_deref() == ds.labels()
    );
    Ok(())
}
