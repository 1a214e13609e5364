//! Estimate the class mix of an unlabelled set from a model's predictions
//! alone: the prior that agrees with the model's own deweighted predictions.
//! Uses exact posteriors, so the only error is sampling noise.
//!
//! cargo run --release --example pcp

use debias::priors::{deweight, pcp_hessian, pcp_solve, symmetric_eigenvalues, PcpInit, PcpOptions};
use debias::simgen::{default_spec, oracle_matrix, sample_dataset, SimKind};
use debias::{prior_from_labels, Prior};

fn main() -> debias::Result<()> {
    let cfg = default_spec(SimKind::Representative).with_points(20_000).with_seed(30);
    let ds = sample_dataset(&cfg)?;
    // Pretend the model was trained on a flat prior.
    let flat = Prior::uniform(3);
    let probs = deweight(&oracle_matrix(&cfg, &ds)?, &cfg.fractions, &flat)?;

    println!("label fractions {:.4?}", prior_from_labels(&ds)?.as_slice());
    for newton in [false, true] {
        for init in [PcpInit::Uniform, PcpInit::Given(Prior::new(vec![0.1, 0.1, 0.8])?)] {
            let label = format!("{init:?}");
            let res = pcp_solve(
                &probs,
                &flat,
                &PcpOptions {
                    init,
                    newton,
                    ..PcpOptions::default()
                },
            )?;
            println!(
                "newton {newton:<5} init {label:<28} -> {:.6?} in {} iterations ({} Newton)",
                res.prior.as_slice(),
                res.iterations,
                res.newton_steps
            );
        }
    }

    let best = pcp_solve(&probs, &flat, &PcpOptions::default())?.prior;
    let h = pcp_hessian(&probs, &flat, &best)?;
    let eig: Vec<String> = symmetric_eigenvalues(&h, 3).iter().map(|v| format!("{v:.3e}")).collect();
    println!("Hessian eigenvalues at the solution [{}]", eig.join(", "));
    Ok(())
}
