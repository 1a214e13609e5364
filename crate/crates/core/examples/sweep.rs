//! A small training-size sweep over all five model variants, written out as
//! CSV tables, a JSON dump and SVG charts.
//!
//! cargo run --release --example sweep [out_dir]

use debias::harness::{emit_report, run_sweep, Format, SweepConfig};
use debias::mlp::TrainConfig;

fn main() -> debias::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("debias-example-sweep"));
    let cfg = SweepConfig {
        sizes: vec![300, 1_000, 3_000],
        repeats: 2,
        test_size: 5_000,
        seed: 50,
        train: TrainConfig {
            hidden_sizes: vec![8],
            max_iters: 1_500,
            restarts: 1,
            ..TrainConfig::default()
        },
        ..SweepConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = run_sweep(&cfg, jobs)?;

    println!("variant     class  size  C overshoot (mean over repeats ± single-run sigma)");
    for row in result.overshoot_summary().iter().filter(|r| r.metric == "C") {
        println!(
            "{:<11} {:>5} {:>5}  {:+.4} ± {:.4}",
            row.variant.name(),
            row.class,
            row.size,
            row.value.unwrap_or(f64::NAN),
            row.variance.unwrap_or(0.0).sqrt()
        );
    }
    for path in emit_report(&result, &out, &[Format::Csv, Format::Json, Format::Svg])? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
