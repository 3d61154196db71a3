//! Feeds observations one at a time and prints the estimate as the curve moves.

use tvarch::anre::AnreState;
use tvarch::curves::{Curve, InnovationSpec, ParamCurveSet, Smoothness};
use tvarch::rng::StreamSeed;
use tvarch::simulator::simulate_tvarch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 20_000;
    let curves = ParamCurveSet::new(
        vec![Curve::affine(0.3, 0.6), Curve::constant(0.2)],
        Smoothness::LipPlus(1.0),
    )?;
    let path = simulate_tvarch(&curves, &InnovationSpec::gaussian(), n, StreamSeed::new(1, 0), 500)?;

    let mut state = AnreState::new(1, 0.01)?;
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "t", "a0", "a0_hat", "a1", "a1_hat");
    for (t, &x2) in path.squared().iter().enumerate() {
        state.step(x2)?;
        if (t + 1) % 2000 == 0 {
            let u = (t + 1) as f64 / n as f64;
            let truth = curves.eval(u)?;
            let est = state.estimate();
            println!("{:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", t + 1, truth[0], est[0], truth[1], est[1]);
        }
    }
    Ok(())
}
