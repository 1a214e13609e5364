use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use debias::classify::{bayes_classify, stochastic_classify};
use debias::data::{balancing_weights, per_example_weights, prior_from_labels, Prior};
use debias::harness::{emit_report, run_sweep, Format, SweepConfig};
use debias::io::{self, CsvSchema};
use debias::metrics::{mean_kl_by_class, overshoot, KlReport, MetricReport, VarianceForm};
use debias::mlp::{train, Convention, MlpModel, TrainConfig};
use debias::priors::{deweight, pcp_hessian, pcp_solve, symmetric_eigenvalues, PcpInit, PcpOptions};
use debias::simgen::{default_spec, sample_dataset, SimKind};
use debias::{Error, Result};

#[derive(Parser)]
#[command(name = "debias", version, about = "Measure and correct class-prior bias in probabilistic classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the built-in 3-class Gaussian simulation to a dataset CSV.
    Simulate {
        #[arg(long, value_enum, default_value = "representative")]
        kind: Kind,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on a labelled dataset CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Hidden layer widths, e.g. `32` or `128,32`.
        #[arg(long, default_value = "32")]
        hidden: String,
        #[arg(long, value_enum, default_value = "interpolation")]
        convention: ConventionArg,
        #[arg(long, default_value_t = 2e-3)]
        lr: f64,
        #[arg(long, default_value_t = 1e-4)]
        weight_decay: f64,
        #[arg(long, default_value_t = 25_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `none`, `balanced` (1/P(i) per class), `column` (the dataset's
        /// `weight` column) or the path of a CSV with a `weight` column.
        #[arg(long, default_value = "none")]
        weights: String,
        /// Number of classes, when the labels do not show all of them.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write model probabilities for a dataset CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Swap the prior baked into a prediction CSV.
    Deweight {
        #[arg(long)]
        predictions: PathBuf,
        /// Comma list, JSON array or JSON file.
        #[arg(long)]
        old_prior: String,
        #[arg(long)]
        new_prior: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for the prediction-consistent prior of a prediction CSV.
    Pcp {
        #[arg(long)]
        predictions: PathBuf,
        /// Prior the predictions were made under.
        #[arg(long)]
        model_prior: String,
        /// `uniform`, `model`, or an explicit prior.
        #[arg(long, default_value = "uniform")]
        init: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        newton: bool,
        /// JSON output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign classes from a prediction CSV.
    Classify {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_enum, default_value = "bayes")]
        rule: Rule,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predicted vs observed completeness, reliability and F1.
    Metrics {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        assigned: PathBuf,
        /// Label CSV; defaults to the `label` column of the predictions.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Prediction CSV of true probabilities, for KL divergence.
        #[arg(long)]
        true_probs: Option<PathBuf>,
        /// Denominator of the completeness variance.
        #[arg(long, value_enum, default_value = "derived")]
        variance_form: FormArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Training-size sweep over model variants.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "csv,json,svg")]
        formats: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Representative,
    Biased,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Interpolation,
    Mathematician,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Bayes,
    Stochastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Derived,
    Printed,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad hidden layer width '{t}'")))
        })
        .collect()
}

fn read_weight_column(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == "weight")
        .ok_or_else(|| Error::MissingColumn("weight".into()))?;
    rdr.records()
        .enumerate()
        .map(|(row, r)| {
            let r = r?;
            let raw = r.get(idx).unwrap_or("");
            raw.trim().parse().map_err(|_| Error::NonNumeric {
                row,
                column: "weight".into(),
                value: raw.into(),
            })
        })
        .collect()
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                // A closed pipe (`| head`) is not an error worth reporting.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

#[derive(Serialize)]
struct PcpOutput {
    prior: Prior,
    iterations: usize,
    converged: bool,
    newton_steps: usize,
    nll_trace: Vec<f64>,
    hessian_eigenvalues: Vec<f64>,
}

#[derive(Serialize)]
struct MetricsOutput {
    report: MetricReport,
    kl: Option<KlReport>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { kind, n, seed, out } => {
            let kind = match kind {
                Kind::Representative => SimKind::Representative,
                Kind::Biased => SimKind::Biased,
            };
            let ds = sample_dataset(&default_spec(kind).with_points(n).with_seed(seed))?;
            io::save_dataset(&out, &ds)
        }
        Command::Train {
            data,
            hidden,
            convention,
            lr,
            weight_decay,
            max_iters,
            tol,
            restarts,
            seed,
            weights,
            classes,
            out,
        } => {
            let mut schema = CsvSchema::standard().with_label("label");
            if let Some(k) = classes {
                schema = schema.with_class_count(k);
            }
            let ds = io::load_dataset(&data, &schema)?;
            let cfg = TrainConfig {
                hidden_sizes: parse_hidden(&hidden)?,
                learning_rate: lr,
                weight_decay,
                max_iters,
                loss_tol: tol,
                restarts,
                seed,
                convention: match convention {
                    ConventionArg::Interpolation => Convention::Interpolation,
                    ConventionArg::Mathematician => Convention::Mathematician,
                },
            };
            let w = match weights.as_str() {
                "none" => None,
                "balanced" => Some(per_example_weights(&ds, &balancing_weights(&prior_from_labels(&ds)?)?)?),
                "column" => Some(
                    ds.weights()
                        .ok_or_else(|| Error::MissingColumn("weight".into()))?
                        .to_vec(),
                ),
                path => Some(read_weight_column(Path::new(path))?),
            };
            let model = train(&ds, &cfg, w.as_deref())?;
            if let Some(report) = &model.training {
                eprintln!(
                    "best restart {} of {}, loss {:.6}",
                    report.best_restart,
                    report.restarts.len(),
                    report.best_loss
                );
            }
            model.save(&out)
        }
        Command::Predict { model, data, out } => {
            let model = MlpModel::load(&model)?;
            let schema = CsvSchema::standard().with_class_count(model.class_count);
            let ds = io::load_dataset(&data, &schema)?;
            io::save_predictions(&out, &model.predict(&ds)?, ds.labels())
        }
        Command::Deweight {
            predictions,
            old_prior,
            new_prior,
            out,
        } => {
            let (probs, labels) = io::load_predictions(&predictions)?;
            let moved = deweight(&probs, &io::parse_prior(&old_prior)?, &io::parse_prior(&new_prior)?)?;
            io::save_predictions(&out, &moved, labels.as_deref())
        }
        Command::Pcp {
            predictions,
            model_prior,
            init,
            tol,
            max_iter,
            newton,
            out,
        } => {
            let (probs, _) = io::load_predictions(&predictions)?;
            let model_prior = io::parse_prior(&model_prior)?;
            let init = match init.as_str() {
                "uniform" => PcpInit::Uniform,
                "model" => PcpInit::Model,
                other => PcpInit::Given(io::parse_prior(other)?),
            };
            let res = pcp_solve(
                &probs,
                &model_prior,
                &PcpOptions {
                    init,
                    tol,
                    max_iter,
                    newton,
                },
            )?;
            if !res.converged {
                eprintln!("warning: no convergence after {max_iter} iterations");
            }
            let k = probs.class_count();
            let hessian = pcp_hessian(&probs, &model_prior, &res.prior)?;
            emit_json(
                out.as_deref(),
                &PcpOutput {
                    hessian_eigenvalues: symmetric_eigenvalues(&hessian, k),
                    prior: res.prior,
                    iterations: res.iterations,
                    converged: res.converged,
                    newton_steps: res.newton_steps,
                    nll_trace: res.nll_trace,
                },
            )
        }
        Command::Classify {
            predictions,
            rule,
            seed,
            out,
        } => {
            let (probs, _) = io::load_predictions(&predictions)?;
            let labels = match rule {
                Rule::Bayes => bayes_classify(&probs),
                Rule::Stochastic => stochastic_classify(&probs, seed),
            };
            io::save_labels(&out, &labels)
        }
        Command::Metrics {
            predictions,
            assigned,
            truth,
            true_probs,
            variance_form,
            out,
        } => {
            let (probs, embedded) = io::load_predictions(&predictions)?;
            let assigned = io::load_labels(&assigned)?;
            let truth = match truth {
                Some(p) => io::load_labels(&p)?,
                None => embedded.ok_or(Error::MissingLabels)?,
            };
            let form = match variance_form {
                FormArg::Derived => VarianceForm::Derived,
                FormArg::Printed => VarianceForm::Printed,
            };
            let report = overshoot(&probs, &assigned, &truth, form)?;
            let kl = match true_probs {
                Some(p) => Some(mean_kl_by_class(&io::load_predictions(&p)?.0, &probs, &truth)?),
                None => None,
            };
            for row in report.flagged() {
                eprintln!(
                    "class {} {}: |z| = {:.2} > 3, probabilities inconsistent with labels",
                    row.class,
                    row.metric.label(),
                    row.z.unwrap_or(f64::NAN).abs()
                );
            }
            emit_json(out.as_deref(), &MetricsOutput { report, kl })
        }
        Command::Sweep {
            config,
            out,
            jobs,
            formats,
        } => {
            let cfg: SweepConfig = io::read_json(&config)?;
            let formats = Format::parse_list(&formats)?;
            let dir = out
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| Error::InvalidConfig("no output directory: pass --out or set out_dir".into()))?;
            let result = run_sweep(&cfg, jobs)?;
            for path in emit_report(&result, &dir, &formats)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
