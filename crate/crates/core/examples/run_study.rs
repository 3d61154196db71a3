//! Runs a study from a TOML file, e.g.
//! `cargo run --release --example run_study -- configs/variance.toml`.

use tvarch::experiments::{run_study, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).ok_or("usage: run_study <config.toml>")?;
    let cfg = ExperimentConfig::from_toml(&std::fs::read_to_string(&path)?)?;
    for (n, lambda) in cfg.plan()? {
        eprintln!("cell {}", tvarch::experiments::cell_label(n, lambda));
    }
    let mut result = run_study(&cfg, None)?;
    result.evaluate_gates(&cfg.gates);
    for (name, value) in &result.metrics {
        println!("{name} = {value:.6}");
    }
    for g in &result.gates {
        println!("gate {}: {}", g.metric, if g.passed { "pass" } else { "fail" });
    }
    Ok(())
}
