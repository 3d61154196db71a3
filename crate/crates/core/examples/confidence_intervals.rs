//! Plug-in confidence intervals with a drift-based bias estimate.

use tvarch::curves::{Curve, InnovationSpec, ParamCurveSet, Smoothness};
use tvarch::inference::{estimate_moments, EstimateOptions};
use tvarch::rng::StreamSeed;
use tvarch::simulator::simulate_tvarch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 20_000;
    let curves = ParamCurveSet::new(
        vec![Curve::affine(0.3, 0.6), Curve::constant(0.2)],
        Smoothness::LipPlus(1.0),
    )?;
    let path = simulate_tvarch(&curves, &InnovationSpec::gaussian(), n, StreamSeed::new(3, 0), 500)?;

    let mut opts = EstimateOptions::new(1, 0.01);
    opts.t0 = Some(n / 2);
    let est = estimate_moments(path.squared(), &opts)?;
    let truth = curves.eval(0.5)?;
    for (i, ci) in est.ci.iter().enumerate() {
        println!(
            "a{i}: truth {:.4}, estimate {:.4}, {:.0}% interval [{:.4}, {:.4}], bias estimate {:+.5}",
            truth[i],
            est.a_hat[i],
            100.0 * est.level,
            ci.lo,
            ci.hi,
            est.bias_hat[i]
        );
    }
    println!("F_hat = {:?}", est.f_hat);
    println!("Sigma_hat = {:?}", est.sigma_hat);
    println!("{}", serde_json::to_string_pretty(&est)?);
    Ok(())
}
