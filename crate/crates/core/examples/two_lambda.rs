//! Combines runs at `lambda` and `w * lambda` to cancel the leading drift bias.

use rayon::prelude::*;

use tvarch::anre::{extrapolate, final_estimate, step_size_for_rate, RateMode};
use tvarch::curves::{Curve, InnovationSpec, ParamCurveSet, Smoothness};
use tvarch::rng::StreamSeed;
use tvarch::simulator::simulate_tvarch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, w, reps) = (20_000, 0.5, 200u64);
    let curves = ParamCurveSet::new(
        vec![Curve::affine(0.2, 2.0), Curve::constant(0.2)],
        Smoothness::LipPlus(1.0),
    )?;
    let step = step_size_for_rate(n, curves.smoothness(), 5.0, RateMode::TwoLambda)?;
    let lambda = step.lambda;
    println!("lambda_1 = {lambda:.5} (N^{:.3}), lambda_2 = {:.5}", step.exponent, w * lambda);

    let truth = curves.eval(1.0)?;
    let errs: Vec<[f64; 2]> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let path = simulate_tvarch(&curves, &InnovationSpec::gaussian(), n, StreamSeed::new(5, rep), 500).unwrap();
            let a1 = final_estimate(path.squared(), 1, lambda).unwrap();
            let a2 = final_estimate(path.squared(), 1, w * lambda).unwrap();
            let comb = extrapolate(&a1, &a2, w);
            [a1[0] - truth[0], comb[0] - truth[0]]
        })
        .collect();
    for (k, name) in ["single", "combined"].iter().enumerate() {
        let mean = errs.iter().map(|e| e[k]).sum::<f64>() / reps as f64;
        let mse = errs.iter().map(|e| e[k] * e[k]).sum::<f64>() / reps as f64;
        println!("{name:>9}: mean error on a0 {mean:+.5}, MSE {mse:.3e}");
    }
    Ok(())
}
