use rayon::prelude::*;

use tvarch::curves::{Curve, InnovationSpec, ParamCurveSet, Smoothness};
use tvarch::experiments::{run_study, ExperimentConfig};
use tvarch::inference::{estimate_f, estimate_moments, estimate_sigma, EstimateOptions, Mu4, SigmaForm, Weighting};
use tvarch::linalg::frobenius_relative;
use tvarch::oracle::{bias_theoretical, mc_sigma};
use tvarch::rng::{key_of, StreamSeed};
use tvarch::simulator::simulate_tvarch;

fn constant_pair() -> ParamCurveSet {
    ParamCurveSet::constant(&[0.5, 0.2]).unwrap()
}

#[test]
fn plugin_intervals_cover_constant_truth() {
    let curves = constant_pair();
    let innov = InnovationSpec::gaussian();
    let opts = EstimateOptions::new(1, 0.01);
    let key = key_of(&[1, 20_000]);
    let hits: Vec<[bool; 2]> = (0..50u64)
        .into_par_iter()
        .map(|rep| {
            let path = simulate_tvarch(&curves, &innov, 20_000, StreamSeed::for_replication(8, key, rep), 500).unwrap();
            let est = estimate_moments(path.squared(), &opts).unwrap();
            [est.ci[0].contains(0.5), est.ci[1].contains(0.2)]
        })
        .collect();
    let covered: usize = hits.iter().map(|h| h.iter().filter(|&&c| c).count()).sum();
    let per: Vec<usize> = (0..2).map(|i| hits.iter().filter(|h| h[i]).count()).collect();
    assert!(covered >= 90, "{covered} of 100 intervals cover the truth (per component {per:?})");
}

#[test]
fn plugin_moments_track_oracle() {
    let curves = constant_pair();
    let innov = InnovationSpec::gaussian();
    let oracle = mc_sigma(&curves, &innov, 0.5, 400_000, StreamSeed::new(2, 0)).unwrap();
    let path = simulate_tvarch(&curves, &innov, 400_000, StreamSeed::new(2, 9), 500).unwrap();
    let obs = path.squared();
    let w = Weighting::Window { m: 390_000 };
    let f = estimate_f(obs, 1, obs.len(), w).unwrap();
    assert!(frobenius_relative(&f.matrix, &oracle.moments.f) < 0.02);
    let a = [0.5, 0.2];
    let s = estimate_sigma(obs, 1, obs.len(), w, &f.matrix, &a, Mu4::Estimated, false).unwrap();
    assert!((s.mu4 - 2.0).abs() < 0.1, "mu4 = {}", s.mu4);
    let rel = frobenius_relative(s.form(SigmaForm::Lyapunov), &oracle.lyapunov);
    assert!(rel < 0.1, "Sigma relative error {rel}");
    let s_known = estimate_sigma(obs, 1, obs.len(), w, &f.matrix, &a, Mu4::Known(2.0), false).unwrap();
    assert_eq!(s_known.mu4, 2.0);
}

#[test]
fn drift_estimate_has_the_sign_of_the_derivative() {
    let curves = ParamCurveSet::new(
        vec![Curve::affine(0.2, 4.0), Curve::affine(0.24, -0.2)],
        Smoothness::LipPlus(1.0),
    )
    .unwrap();
    let innov = InnovationSpec::gaussian();
    let (n, lambda, u0) = (10_000usize, 0.01, 0.5);
    let t0 = (u0 * n as f64) as usize;
    let mut opts = EstimateOptions::new(1, lambda);
    opts.t0 = Some(t0);
    let key = key_of(&[2, n as u64]);
    type Pair = (Vec<f64>, Vec<f64>);
    let reps: Vec<Pair> = (0..200u64)
        .into_par_iter()
        .map(|rep| {
            let path = simulate_tvarch(&curves, &innov, n, StreamSeed::for_replication(4, key, rep), 500).unwrap();
            let est = estimate_moments(path.squared(), &opts).unwrap();
            (est.increment_hat, est.bias_hat)
        })
        .collect();
    let mean = |f: &dyn Fn(&Pair) -> f64| reps.iter().map(f).sum::<f64>() / reps.len() as f64;
    let inc0 = mean(&|r| r.0[0]);
    let inc1 = mean(&|r| r.0[1]);
    // Per-step increments of a_0 and a_1 are 4 / N and -0.2 / N.
    assert!(inc0 > 0.0, "a_0 increment {inc0}");
    assert!((inc0 * n as f64 - 4.0).abs() < 2.0, "a_0 increment {inc0}");
    assert!(inc1 < 0.0, "a_1 increment {inc1}");

    let oracle = mc_sigma(&curves, &innov, u0, 200_000, StreamSeed::new(4, 1)).unwrap();
    let theory = bias_theoretical(&curves, u0, n, lambda, &oracle.moments.f).unwrap();
    let b0 = mean(&|r| r.1[0]);
    assert_eq!(b0.signum(), theory[0].signum(), "bias {b0} vs {}", theory[0]);
}

#[test]
fn steeper_curves_couple_less_tightly() {
    let base = |slope: f64| {
        format!(
            r#"
study = "coupling"
n_grid = [2000]
replications = 100
seed = 6

[curves]
smoothness = {{ lip = 1.0 }}
curves = [
  {{ family = "affine", intercept = 0.4, slope = {slope} }},
  {{ family = "constant", value = 0.2 }},
]
"#
        )
    };
    let err = |slope: f64| {
        let cfg = ExperimentConfig::from_toml(&base(slope)).unwrap();
        run_study(&cfg, None).unwrap().metric("mean_error_max").unwrap()
    };
    let (gentle, steep) = (err(0.2), err(0.4));
    // Same innovations, so the error roughly doubles with the slope.
    let ratio = steep / gentle;
    assert!(ratio > 1.6 && ratio < 2.4, "ratio {ratio}");
}
