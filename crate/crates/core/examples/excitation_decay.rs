//! Geometric decay of random contraction products along a frozen path.

use tvarch::curves::{InnovationSpec, ParamCurveSet};
use tvarch::oracle::excitation_product_decay;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curves = ParamCurveSet::constant(&[0.5, 0.2])?;
    for lambda in [0.02, 0.05] {
        let fit = excitation_product_decay(&curves, &InnovationSpec::gaussian(), 0.5, lambda, 1, 8 * (1.0 / lambda) as usize, 200, 9)?;
        println!(
            "lambda {lambda}: delta_hat {:.4}, M_hat {:.3}, ratio(5/lambda : 1/lambda) {:.3}, R^2 {:.4}",
            fit.delta_hat, fit.m_hat, fit.ratio_5_to_1, fit.fit.r_squared
        );
    }
    Ok(())
}
