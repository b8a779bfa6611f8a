//! Runs every method on the desk preset and prints aggregate metrics.
//!
//! `cargo run --release --example desk -- [seed] [preset.toml]`

use std::time::Instant;

use trace_core::experiment::{Experiment, Method, Preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let t = Instant::now();
    let mut preset = Preset::desk(seed);
    if let Some(path) = std::env::args().nth(2) {
        preset = toml::from_str(&std::fs::read_to_string(path)?)?;
        preset.generator.seed = seed;
        preset.pretrain.train.seed = seed;
        preset.stream.seed = seed;
    }
    let exp = Experiment::prepare(&preset)?;
    println!("prepared in {:.1}s, bayes auc {:.4}", t.elapsed().as_secs_f64(), exp.bayes_auc()?);
    println!("eta {:?} c_tilde {:?}", exp.bundle.weights.eta, exp.bundle.weights.c_tilde);
    for m in Method::ALL {
        let t = Instant::now();
        let r = exp.run(m)?;
        let p = r.aggregate.pooled;
        println!(
            "{:<16} auc {:.4} nll {:.4} pr_auc {:.4} ece {:.4}  mean-auc {:.4}  ({:.1}s)",
            m.name(),
            p.auc.unwrap_or(f64::NAN),
            p.nll.unwrap_or(f64::NAN),
            p.pr_auc.unwrap_or(f64::NAN),
            p.ece.unwrap_or(f64::NAN),
            r.aggregate.mean.auc.unwrap_or(f64::NAN),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
