//! Distance between a tvARCH path and the stationary path frozen at `u0`,
//! driven by the same innovations.

use tvarch::curves::{Curve, InnovationSpec, ParamCurveSet, Smoothness};
use tvarch::rng::StreamSeed;
use tvarch::simulator::{simulate_coupled_stationary, simulate_tvarch};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curves = ParamCurveSet::new(
        vec![Curve::affine(0.4, 0.4), Curve::affine(0.3, -0.2)],
        Smoothness::Lip(1.0),
    )?;
    let reps = 200u64;
    for n in [1000usize, 4000, 16000] {
        let t0 = n / 2;
        let mut gap = 0.0;
        for rep in 0..reps {
            let tv = simulate_tvarch(&curves, &InnovationSpec::gaussian(), n, StreamSeed::new(2, rep), 500)?;
            let st = simulate_coupled_stationary(&tv, &curves, t0 as f64 / n as f64)?;
            gap += (tv.x2_at(t0 as i64) - st.x2_at(t0 as i64)).abs() / reps as f64;
        }
        println!("N = {n:>6}: mean |X^2 - Y^2| at t0 = {gap:.3e}, times N = {:.3}", gap * n as f64);
    }
    Ok(())
}
