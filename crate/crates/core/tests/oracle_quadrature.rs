//! Monte Carlo moments against deterministic quadrature for ARCH(1) with
//! `a_1 = 0`, where `X_t^2 = a_0 Z_t^2` is i.i.d. and `sigma_t^2 = a_0`.

use nalgebra::{DMatrix, DVector};

use tvarch::curves::{InnovationSpec, ParamCurveSet};
use tvarch::inference::sigma_from_parts;
use tvarch::oracle::{mc_moments, mc_sigma};
use tvarch::rng::StreamSeed;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `E h(Z^2)` for standard normal `Z`, integrating `2 h(z^2) phi(z)` over `[0, 12]`.
fn expect_chi2<F: Fn(f64) -> f64>(h: F) -> f64 {
    let rule = gauss_legendre(16);
    let panels = 400;
    let width = 12.0 / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * width;
        for &(x, w) in &rule {
            let z = mid + 0.5 * width * x;
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            sum += 0.5 * width * w * 2.0 * h(z * z) * phi;
        }
    }
    sum
}

fn quadrature_moments(a0: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let entry = |i: usize, j: usize, power: i32, scale: f64| {
        expect_chi2(|z2| {
            let y = a0 * z2;
            let x = [1.0, y];
            scale * x[i] * x[j] / (1.0 + y).powi(power)
        })
    };
    let f = DMatrix::from_fn(2, 2, |i, j| entry(i, j, 2, 1.0));
    let g = DMatrix::from_fn(2, 2, |i, j| entry(i, j, 4, a0 * a0));
    (f, g)
}

/// Solves `F S + S F = C` through the Kronecker form.
fn lyapunov_kron(f: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let d = f.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let k = id.kronecker(f) + f.kronecker(&id);
    let rhs = DVector::from_iterator(d * d, c.iter().copied());
    let s = k.lu().solve(&rhs).expect("nonsingular");
    DMatrix::from_iterator(d, d, s.iter().copied())
}

#[test]
fn quadrature_rule_integrates_chi2_moments() {
    assert!((expect_chi2(|_| 1.0) - 1.0).abs() < 1e-12);
    assert!((expect_chi2(|z2| z2) - 1.0).abs() < 1e-12);
    assert!((expect_chi2(|z2| z2 * z2) - 3.0).abs() < 1e-10);
}

#[test]
fn mc_f_and_g_match_quadrature() {
    let a0 = 0.5;
    let curves = ParamCurveSet::constant(&[a0, 0.0]).unwrap();
    let innov = InnovationSpec::gaussian();
    let (fq, gq) = quadrature_moments(a0);
    let mc = mc_moments(&curves, &innov, 0.5, 200_000, StreamSeed::new(11, 0)).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let zf = (mc.f[(i, j)] - fq[(i, j)]).abs() / mc.f_se[(i, j)].max(1e-12);
            let zg = (mc.g[(i, j)] - gq[(i, j)]).abs() / mc.g_se[(i, j)].max(1e-12);
            assert!(zf < 4.5, "F[{i},{j}]: mc {} vs quad {} (z = {zf})", mc.f[(i, j)], fq[(i, j)]);
            assert!(zg < 4.5, "G[{i},{j}]: mc {} vs quad {} (z = {zg})", mc.g[(i, j)], gq[(i, j)]);
        }
    }
}

#[test]
fn sigma_forms_match_independent_solves() {
    let (fq, gq) = quadrature_moments(0.5);
    let (lyap, one_sided, ridged, _) = sigma_from_parts(&fq, &gq, 2.0, false).unwrap();
    assert!(!ridged);
    let kron = lyapunov_kron(&fq, &(&gq * 2.0));
    assert!((&lyap - &kron).abs().max() < 1e-10);
    let direct = fq.clone().try_inverse().unwrap() * &gq;
    assert!((&one_sided - &direct).abs().max() < 1e-10);
    // The one-sided form is not symmetric unless F and G commute.
    assert!((&one_sided - one_sided.transpose()).abs().max() > 1e-4);
}

#[test]
fn mc_sigma_close_to_quadrature() {
    let a0 = 0.5;
    let curves = ParamCurveSet::constant(&[a0, 0.0]).unwrap();
    let innov = InnovationSpec::gaussian();
    let (fq, gq) = quadrature_moments(a0);
    let exact = lyapunov_kron(&fq, &(&gq * 2.0));
    let mc = mc_sigma(&curves, &innov, 0.5, 400_000, StreamSeed::new(3, 0)).unwrap();
    let rel = (&mc.lyapunov - &exact).norm() / exact.norm();
    assert!(rel < 0.03, "relative error {rel}");
    assert!((mc.mu4 - 2.0).abs() < 1e-12);
}
