//! Monte Carlo stationary moments, asymptotic covariance and theoretical bias.

use tvarch::curves::{Curve, InnovationSpec, ParamCurveSet, Smoothness};
use tvarch::oracle::oracle_report;
use tvarch::rng::StreamSeed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curves = ParamCurveSet::new(
        vec![Curve::affine(0.4, 0.4), Curve::affine(0.3, -0.2)],
        Smoothness::LipPlus(1.0),
    )?;
    let report = oracle_report(
        &curves,
        &InnovationSpec::gaussian(),
        0.75,
        200_000,
        StreamSeed::new(11, 0),
        Some((10_000, 0.01)),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
