//! Monte Carlo and analytic reference values: `F(u)`, `Sigma(u)`, the
//! excitation matrix `E(Y_p Y_p')`, the martingale and non-stationarity terms
//! `L` and `R` of the error decomposition, the leading bias, MSE
//! approximations and the decay of products `prod (I - lambda x x'/|x|_1^2)`.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curves::{CurveError, InnovationSpec, ParamCurveSet};
use crate::inference::{sigma_from_parts, InferenceError};
use crate::linalg::{self, LinalgError};
use crate::rng::{key_of, StreamSeed};
use crate::simulator::{self, stationary_mean, SimError, StationaryPath, TvArchPath};
use crate::stats::{self, OlsFit};

/// Minimum Monte Carlo sample size for moment oracles.
pub const MIN_SAMPLES: usize = 10_000;
/// Burn-in for stationary chains.
pub const CHAIN_BURN_IN: usize = 1000;
/// Look-back of anchored stationary states in [`compute_r`].
pub const ANCHOR_HORIZON: usize = 500;
/// Weights `lambda (1 - delta lambda)^k` below this are dropped in [`compute_r`].
pub const R_TRUNCATION: f64 = 1e-8;
const BATCHES: usize = 50;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle request: {0}")]
    Parameter(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Singular(#[from] LinalgError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

fn check_samples(samples: usize) -> Result<(), OracleError> {
    if samples < MIN_SAMPLES {
        return Err(OracleError::Parameter(format!(
            "{samples} samples requested, at least {MIN_SAMPLES} required"
        )));
    }
    Ok(())
}

fn check_anchor(u: f64) -> Result<(), OracleError> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(CurveError::Domain(u).into());
    }
    Ok(())
}

/// ARCH(p) chain with frozen coefficients.
struct FrozenChain<'a> {
    a: Vec<f64>,
    /// `X^2_{t-1}, ..., X^2_{t-p}`.
    window: Vec<f64>,
    innovation: &'a InnovationSpec,
    rng: ChaCha8Rng,
}

impl<'a> FrozenChain<'a> {
    fn new(a: Vec<f64>, innovation: &'a InnovationSpec, seed: StreamSeed) -> Self {
        let p = a.len() - 1;
        let mut chain = Self {
            window: vec![stationary_mean(&a); p],
            a,
            innovation,
            rng: seed.rng(),
        };
        for _ in 0..CHAIN_BURN_IN {
            chain.advance();
        }
        chain
    }

    fn regressor_into(&self, x: &mut [f64]) {
        x[0] = 1.0;
        x[1..].copy_from_slice(&self.window);
    }

    fn sigma2(&self) -> f64 {
        self.a[0] + self.a[1..].iter().zip(&self.window).map(|(a, v)| a * v).sum::<f64>()
    }

    fn advance(&mut self) {
        let x2 = self.innovation.sample_squared(&mut self.rng) * self.sigma2();
        self.window.rotate_right(1);
        self.window[0] = x2;
    }
}

/// Moments of the stationary regressor at one anchor.
#[derive(Clone, Debug)]
pub struct StationaryMoments {
    /// `E(x x' / |x|_1^2)`.
    pub f: DMatrix<f64>,
    pub f_se: DMatrix<f64>,
    /// `E(sigma^4 x x' / |x|_1^4)`.
    pub g: DMatrix<f64>,
    pub g_se: DMatrix<f64>,
    pub samples: usize,
}

/// Averages over a long stationary path frozen at `u`, sampling every
/// `p + 1` steps. Standard errors are batch-means estimates.
pub fn mc_moments(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    u: f64,
    samples: usize,
    seed: StreamSeed,
) -> Result<StationaryMoments, OracleError> {
    check_samples(samples)?;
    check_anchor(u)?;
    let a = curves.eval(u)?;
    let d = a.len();
    let mut chain = FrozenChain::new(a, innovation, seed);
    let mut x = vec![0.0; d];
    let mut f_batches = vec![DMatrix::<f64>::zeros(d, d); BATCHES];
    let mut g_batches = vec![DMatrix::<f64>::zeros(d, d); BATCHES];
    let mut counts = [0usize; BATCHES];
    for s in 0..samples {
        let b = s * BATCHES / samples;
        chain.regressor_into(&mut x);
        let l1: f64 = x.iter().sum();
        let s2 = chain.sigma2();
        let cf = 1.0 / (l1 * l1);
        let cg = s2 * s2 * cf * cf;
        let (fb, gb) = (&mut f_batches[b], &mut g_batches[b]);
        for i in 0..d {
            for j in 0..=i {
                let xx = x[i] * x[j];
                fb[(i, j)] += cf * xx;
                gb[(i, j)] += cg * xx;
            }
        }
        counts[b] += 1;
        for _ in 0..d {
            chain.advance();
        }
    }
    let (f, f_se) = batch_summary(&mut f_batches, &counts, samples);
    let (g, g_se) = batch_summary(&mut g_batches, &counts, samples);
    Ok(StationaryMoments {
        f,
        f_se,
        g,
        g_se,
        samples,
    })
}

fn batch_summary(
    batches: &mut [DMatrix<f64>],
    counts: &[usize],
    total: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = batches[0].nrows();
    for (m, &c) in batches.iter_mut().zip(counts) {
        for i in 0..d {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        let sum = m.clone();
        *m = sum / c as f64;
    }
    let mut mean = DMatrix::zeros(d, d);
    for (m, &c) in batches.iter().zip(counts) {
        mean += m * (c as f64 / total as f64);
    }
    let se = DMatrix::from_fn(d, d, |i, j| {
        let vals: Vec<f64> = batches.iter().map(|m| m[(i, j)]).collect();
        (stats::variance(&vals) / vals.len() as f64).sqrt()
    });
    (mean, se)
}

/// `F(u)` with per-entry standard errors.
pub fn mc_f(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    u: f64,
    samples: usize,
    seed: StreamSeed,
) -> Result<(DMatrix<f64>, DMatrix<f64>), OracleError> {
    let m = mc_moments(curves, innovation, u, samples, seed)?;
    Ok((m.f, m.f_se))
}

/// Monte Carlo asymptotic covariance.
#[derive(Clone, Debug)]
pub struct SigmaOracle {
    pub moments: StationaryMoments,
    pub mu4: f64,
    /// Solution of `F S + S F = mu_4 G`.
    pub lyapunov: DMatrix<f64>,
    /// `(mu_4 / 2) F^{-1} G`.
    pub one_sided: DMatrix<f64>,
}

/// `Sigma(u)` with `mu_4` taken exactly from the innovation law.
pub fn mc_sigma(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    u: f64,
    samples: usize,
    seed: StreamSeed,
) -> Result<SigmaOracle, OracleError> {
    let moments = mc_moments(curves, innovation, u, samples, seed)?;
    let mu4 = innovation.mu4();
    let (lyapunov, one_sided, _, _) = sigma_from_parts(&moments.f, &moments.g, mu4, false)?;
    Ok(SigmaOracle {
        moments,
        mu4,
        lyapunov,
        one_sided,
    })
}

/// Monte Carlo estimate of `P(u) = E(Y_p(u) Y_p(u)')`.
#[derive(Clone, Debug, Serialize)]
pub struct ExcitationEstimate {
    pub matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    /// Delete-a-group jackknife standard error of the smallest eigenvalue.
    pub min_eigenvalue_se: f64,
    /// `min_eigenvalue - 2 se > 0`.
    pub passed: bool,
    pub samples: usize,
}

pub fn excitation_matrix_mc(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    u: f64,
    samples: usize,
    seed: StreamSeed,
) -> Result<ExcitationEstimate, OracleError> {
    check_samples(samples)?;
    check_anchor(u)?;
    let d = curves.dim();
    let mut rng = seed.rng();
    let mut groups = vec![DMatrix::<f64>::zeros(d, d); BATCHES];
    for s in 0..samples {
        let y = simulator::sample_y_vector(curves, innovation, u, &mut rng)?;
        let g = &mut groups[s * BATCHES / samples];
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] += y[i] * y[j];
            }
        }
    }
    let total: DMatrix<f64> = groups.iter().sum();
    let p_hat = &total / samples as f64;
    let min_eigenvalue = linalg::min_eigenvalue(&p_hat);
    let sizes: Vec<usize> = (0..BATCHES)
        .map(|b| (0..samples).filter(|s| s * BATCHES / samples == b).count())
        .collect();
    let loo: Vec<f64> = groups
        .iter()
        .zip(&sizes)
        .map(|(g, &n)| linalg::min_eigenvalue(&((&total - g) / (samples - n) as f64)))
        .collect();
    let mean_loo = stats::mean(&loo);
    let k = BATCHES as f64;
    let se = ((k - 1.0) / k * loo.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>()).sqrt();
    Ok(ExcitationEstimate {
        matrix: linalg::to_rows(&p_hat),
        min_eigenvalue,
        min_eigenvalue_se: se,
        passed: min_eigenvalue - 2.0 * se > 0.0,
        samples,
    })
}

/// `M_t(u) = (Z_t^2 - 1) sigma_t(u)^2 x_{t-1}(u) / |x_{t-1}(u)|_1^2`.
fn martingale_increment(z2: f64, sigma2: f64, prev: &[f64], out: &mut [f64]) {
    let l1: f64 = prev.iter().sum();
    let c = (z2 - 1.0) * sigma2 / (l1 * l1);
    for (o, x) in out.iter_mut().zip(prev) {
        *o = c * x;
    }
}

/// `S <- (I - lambda F) S + lambda v`.
fn accumulate(s: &mut [f64], a: &DMatrix<f64>, lambda: f64, v: &[f64]) {
    let next: Vec<f64> = (0..s.len())
        .map(|i| (0..s.len()).map(|j| a[(i, j)] * s[j]).sum::<f64>() + lambda * v[i])
        .collect();
    s.copy_from_slice(&next);
}

fn contraction(f: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    DMatrix::identity(f.nrows(), f.ncols()) - f * lambda
}

fn check_t0(t0: usize, order: usize, n: usize) -> Result<(), OracleError> {
    if t0 <= order || t0 > n {
        return Err(OracleError::Parameter(format!(
            "t0 = {t0} outside (p, N] = ({order}, {n}]"
        )));
    }
    Ok(())
}

/// `L = sum_{k=0}^{t0-p-1} lambda (I - lambda F)^k M_{t0-k}(u0)` from a
/// stationary path coupled to `path`.
pub fn compute_l(
    path: &TvArchPath,
    stationary: &StationaryPath,
    lambda: f64,
    t0: usize,
    f: &DMatrix<f64>,
) -> Result<Vec<f64>, OracleError> {
    let p = path.order();
    if stationary.len() != path.len() || stationary.burn_in() != path.burn_in() {
        return Err(OracleError::Parameter(
            "stationary path is not coupled to the tvARCH path".into(),
        ));
    }
    check_t0(t0, p, path.len())?;
    let a = contraction(f, lambda);
    let mut s = vec![0.0; p + 1];
    let mut m = vec![0.0; p + 1];
    for t in p as i64 + 1..=t0 as i64 {
        let prev = stationary.regressor(t - 1);
        martingale_increment(path.z_squared_at(t), stationary.sigma2_at(t), &prev, &mut m);
        accumulate(&mut s, &a, lambda, &m);
    }
    Ok(s)
}

/// Number of terms kept by [`compute_r`]: the largest `k` with
/// `lambda (1 - delta lambda)^k >= R_TRUNCATION`.
pub fn r_terms(lambda: f64, delta: f64) -> usize {
    let rate = (1.0 - delta * lambda).max(f64::MIN_POSITIVE);
    if lambda <= R_TRUNCATION {
        return 0;
    }
    ((R_TRUNCATION / lambda).ln() / rate.ln()).floor() as usize + 1
}

/// Non-stationarity term
/// `R = sum_k lambda (I - lambda F)^k ([M_{t0-k}((t0-k)/N) - M_{t0-k}(u0)] + F [a((t0-k)/N) - a(u0)])`,
/// truncated after [`r_terms`]`(lambda, delta)` terms. Stationary values at
/// each `(t0-k)/N` come from anchored states with look-back `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn compute_r(
    path: &TvArchPath,
    curves: &ParamCurveSet,
    lambda: f64,
    t0: usize,
    u0: f64,
    f: &DMatrix<f64>,
    delta: f64,
    horizon: usize,
) -> Result<Vec<f64>, OracleError> {
    let p = path.order();
    let n = path.len();
    check_t0(t0, p, n)?;
    check_anchor(u0)?;
    let a0 = curves.eval(u0)?;
    let a_contr = contraction(f, lambda);
    let terms = r_terms(lambda, delta).min(t0 - p);
    let first = (t0 - terms + 1) as i64;
    let mut s = vec![0.0; p + 1];
    let (mut m_u, mut m_0) = (vec![0.0; p + 1], vec![0.0; p + 1]);
    let mut v = vec![0.0; p + 1];
    let mut a_u = vec![0.0; p + 1];
    for t in first..=t0 as i64 {
        let z2 = path.z_squared_at(t);
        curves.fill(t as f64 / n as f64, &mut a_u);
        let local = simulator::anchored_with(path, &a_u, t, horizon);
        let frozen = simulator::anchored_with(path, &a0, t, horizon);
        martingale_increment(z2, local.sigma2, &local.prev_regressor, &mut m_u);
        martingale_increment(z2, frozen.sigma2, &frozen.prev_regressor, &mut m_0);
        for i in 0..=p {
            let fa: f64 = (0..=p).map(|j| f[(i, j)] * (a_u[j] - a0[j])).sum();
            v[i] = m_u[i] - m_0[i] + fa;
        }
        accumulate(&mut s, &a_contr, lambda, &v);
    }
    Ok(s)
}

/// `-(N lambda)^{-1} F^{-1} a'(u0)`.
pub fn bias_theoretical(
    curves: &ParamCurveSet,
    u0: f64,
    n: usize,
    lambda: f64,
    f: &DMatrix<f64>,
) -> Result<Vec<f64>, OracleError> {
    let deriv = curves.derivative(u0)?;
    let inv = linalg::spd_inverse(f, false)?;
    let scale = -1.0 / (n as f64 * lambda);
    Ok(linalg::mat_vec(&inv.inverse, &deriv)
        .into_iter()
        .map(|v| scale * v)
        .collect())
}

/// MSE approximations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum MseBound {
    /// `c1 lambda + c2 (N lambda)^{-2 beta}`.
    Coarse { c1: f64, c2: f64, beta: f64 },
    /// `lambda tr(Sigma) + (N lambda)^{-2} |F^{-1} a'|^2`.
    Refined { trace_sigma: f64, bias_norm2: f64 },
}

impl MseBound {
    pub fn refined(sigma: &DMatrix<f64>, f: &DMatrix<f64>, derivative: &[f64]) -> Result<Self, OracleError> {
        let inv = linalg::spd_inverse(f, false)?;
        let b = linalg::mat_vec(&inv.inverse, derivative);
        Ok(MseBound::Refined {
            trace_sigma: sigma.trace(),
            bias_norm2: b.iter().map(|v| v * v).sum(),
        })
    }

    pub fn value(&self, lambda: f64, n: usize) -> f64 {
        let nl = n as f64 * lambda;
        match *self {
            MseBound::Coarse { c1, c2, beta } => c1 * lambda + c2 * nl.powf(-2.0 * beta),
            MseBound::Refined {
                trace_sigma,
                bias_norm2,
            } => lambda * trace_sigma + bias_norm2 / (nl * nl),
        }
    }

    /// Step size minimizing the refined form, `(2 B / (T N^2))^{1/3}`.
    pub fn minimizer(&self, n: usize) -> Option<f64> {
        match *self {
            MseBound::Refined {
                trace_sigma,
                bias_norm2,
            } if bias_norm2 > 0.0 => {
                Some((2.0 * bias_norm2 / (trace_sigma * (n as f64).powi(2))).cbrt())
            }
            _ => None,
        }
    }
}

/// Mean spectral norms of `prod_i (I - lambda x_i x_i' / |x_i|_1^2)`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub lambda: f64,
    pub q: u32,
    pub order: usize,
    pub replications: usize,
    /// `(k, mean norm^q)`.
    pub checkpoints: Vec<(usize, f64)>,
    /// Fit of `log mean` on `k` over checkpoints with `k >= 1 / lambda`.
    pub fit: OlsFit,
    /// `-slope / lambda`.
    pub delta_hat: f64,
    /// `exp(intercept)`.
    pub m_hat: f64,
    /// Mean at `ceil(5 / lambda)` over mean at `ceil(1 / lambda)`.
    pub ratio_5_to_1: f64,
    /// Largest single norm observed.
    pub max_norm: f64,
}

impl DecayFit {
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.checkpoints.iter().find(|c| c.0 == k).map(|c| c.1)
    }

    /// Writes `k,mean_norm_q`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,mean_norm_q")?;
        for (k, v) in &self.checkpoints {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

fn decay_checkpoints(lambda: f64, k_max: usize) -> Vec<usize> {
    let stride = k_max.div_ceil(200).max(1);
    let mut ks: Vec<usize> = (1..=k_max).filter(|k| k % stride == 0).collect();
    ks.extend([1, (1.0 / lambda).ceil() as usize, (5.0 / lambda).ceil() as usize, k_max]);
    ks.retain(|&k| k <= k_max);
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Product-norm decay along stationary paths frozen at `u`.
#[allow(clippy::too_many_arguments)]
pub fn excitation_product_decay(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    u: f64,
    lambda: f64,
    q: u32,
    k_max: usize,
    replications: usize,
    base_seed: u64,
) -> Result<DecayFit, OracleError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(OracleError::Parameter(format!("lambda {lambda} outside (0, 1)")));
    }
    if ![1, 2, 4].contains(&q) {
        return Err(OracleError::Parameter(format!("moment order {q} not in {{1, 2, 4}}")));
    }
    if (k_max as f64) * lambda < 5.0 {
        return Err(OracleError::Parameter(format!(
            "k_max * lambda = {} below 5",
            k_max as f64 * lambda
        )));
    }
    if replications == 0 {
        return Err(OracleError::Parameter("no replications".into()));
    }
    check_anchor(u)?;
    let a = curves.eval(u)?;
    let d = a.len();
    let checkpoints = decay_checkpoints(lambda, k_max);
    let cell = key_of(&[d as u64, lambda.to_bits(), u.to_bits(), q as u64]);
    let per_rep: Vec<(Vec<f64>, f64)> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut chain = FrozenChain::new(a.clone(), innovation, StreamSeed::for_replication(base_seed, cell, rep));
            let mut prod = DMatrix::<f64>::identity(d, d);
            let mut x = vec![0.0; d];
            let mut norms = Vec::with_capacity(checkpoints.len());
            let mut max_norm: f64 = 0.0;
            let mut next = 0;
            for k in 1..=k_max {
                chain.regressor_into(&mut x);
                let factor = contraction(&linalg::outer_normalized(&x, 2), lambda);
                prod = factor * prod;
                chain.advance();
                if checkpoints[next] == k {
                    let norm = linalg::spectral_norm(&prod);
                    max_norm = max_norm.max(norm);
                    norms.push(norm.powi(q as i32));
                    next += 1;
                    if next == checkpoints.len() {
                        break;
                    }
                }
            }
            (norms, max_norm)
        })
        .collect();
    let means: Vec<f64> = (0..checkpoints.len())
        .map(|i| per_rep.iter().map(|r| r.0[i]).sum::<f64>() / replications as f64)
        .collect();
    let max_norm = per_rep.iter().map(|r| r.1).fold(0.0, f64::max);
    let k_lo = (1.0 / lambda).ceil() as usize;
    let k_hi = (5.0 / lambda).ceil() as usize;
    let (xs, ys): (Vec<f64>, Vec<f64>) = checkpoints
        .iter()
        .zip(&means)
        .filter(|(k, _)| **k >= k_lo)
        .map(|(k, m)| (*k as f64, m.ln()))
        .unzip();
    let fit = stats::ols(&xs, &ys);
    let checkpoints: Vec<(usize, f64)> = checkpoints.into_iter().zip(means).collect();
    let at = |k: usize| checkpoints.iter().find(|c| c.0 == k).map(|c| c.1);
    let ratio_5_to_1 = match (at(k_hi), at(k_lo)) {
        (Some(hi), Some(lo)) => hi / lo,
        _ => f64::NAN,
    };
    Ok(DecayFit {
        lambda,
        q,
        order: d - 1,
        replications,
        checkpoints,
        delta_hat: -fit.slope / lambda,
        m_hat: fit.intercept.exp(),
        fit,
        ratio_5_to_1,
        max_norm,
    })
}

/// `sum_{k=0}^{t-1} lambda (I - lambda F)^{2k}`, which tends to `F^{-1} / 2`.
pub fn contraction_square_sum(f: &DMatrix<f64>, lambda: f64, t: usize) -> DMatrix<f64> {
    let a = contraction(f, lambda);
    let b = &a * &a;
    let d = f.nrows();
    let mut power = DMatrix::<f64>::identity(d, d);
    let mut sum = DMatrix::<f64>::zeros(d, d);
    for _ in 0..t {
        sum += &power * lambda;
        power = &power * &b;
    }
    sum
}

/// `sum_{k=1}^{n} (1 - lambda)^k k^beta`, bounded by `lambda^{-1-beta}`.
pub fn geometric_power_sum(lambda: f64, beta: f64, n: usize) -> f64 {
    let mut w = 1.0;
    let mut sum = 0.0;
    for k in 1..=n {
        w *= 1.0 - lambda;
        if w == 0.0 {
            break;
        }
        sum += w * (k as f64).powf(beta);
    }
    sum
}

/// `(I - lambda F)^k` by repeated multiplication.
pub fn contraction_power_iterated(f: &DMatrix<f64>, lambda: f64, k: usize) -> DMatrix<f64> {
    let a = contraction(f, lambda);
    let mut out = DMatrix::identity(f.nrows(), f.ncols());
    for _ in 0..k {
        out = &out * &a;
    }
    out
}

/// `(I - lambda F)^k` from the eigen-decomposition of symmetric `F`.
pub fn contraction_power_eigen(f: &DMatrix<f64>, lambda: f64, k: usize) -> DMatrix<f64> {
    let e = SymmetricEigen::new(linalg::symmetrize(f));
    let vals = e.eigenvalues.map(|v| (1.0 - lambda * v).powi(k as i32));
    &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose()
}

/// Collected reference values at one anchor.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub u0: f64,
    pub samples: usize,
    #[serde(rename = "F_mc")]
    pub f_mc: Vec<Vec<f64>>,
    #[serde(rename = "F_se")]
    pub f_se: Vec<Vec<f64>>,
    pub mu4: f64,
    /// Symmetric solution of `F S + S F = mu_4 G`.
    #[serde(rename = "Sigma_mc")]
    pub sigma_mc: Vec<Vec<f64>>,
    /// `(mu_4 / 2) F^{-1} G`.
    #[serde(rename = "Sigma_one_sided")]
    pub sigma_one_sided: Vec<Vec<f64>>,
    pub sigma_one_sided_asymmetry: f64,
    pub excitation_min_eig: f64,
    pub excitation_min_eig_se: f64,
    pub excitation_passed: bool,
    /// Present when `N`, `lambda` and a derivative are available.
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub bias_theoretical: Option<Vec<f64>>,
    pub mse_bound: Option<f64>,
    pub mse_minimizing_lambda: Option<f64>,
}

/// Computes [`OracleReport`] with independent streams derived from `seed`.
pub fn oracle_report(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    u0: f64,
    samples: usize,
    seed: StreamSeed,
    horizon: Option<(usize, f64)>,
) -> Result<OracleReport, OracleError> {
    let sigma = mc_sigma(curves, innovation, u0, samples, seed.derive(1))?;
    let exc = excitation_matrix_mc(curves, innovation, u0, samples, seed.derive(2))?;
    let f = &sigma.moments.f;
    let (mut bias, mut mse, mut minimizer) = (None, None, None);
    if let Some((n, lambda)) = horizon {
        if let Ok(deriv) = curves.derivative(u0) {
            bias = Some(bias_theoretical(curves, u0, n, lambda, f)?);
            let bound = MseBound::refined(&sigma.lyapunov, f, &deriv)?;
            mse = Some(bound.value(lambda, n));
            minimizer = bound.minimizer(n);
        }
    }
    Ok(OracleReport {
        u0,
        samples,
        f_mc: linalg::to_rows(f),
        f_se: linalg::to_rows(&sigma.moments.f_se),
        mu4: sigma.mu4,
        sigma_mc: linalg::to_rows(&sigma.lyapunov),
        sigma_one_sided: linalg::to_rows(&sigma.one_sided),
        sigma_one_sided_asymmetry: linalg::asymmetry(&sigma.one_sided),
        excitation_min_eig: exc.min_eigenvalue,
        excitation_min_eig_se: exc.min_eigenvalue_se,
        excitation_passed: exc.passed,
        n: horizon.map(|h| h.0),
        lambda: horizon.map(|h| h.1),
        bias_theoretical: bias,
        mse_bound: mse,
        mse_minimizing_lambda: minimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{Curve, Innovation, Smoothness};
    use approx::assert_relative_eq;

    fn white_noise() -> ParamCurveSet {
        ParamCurveSet::constant(&[0.5, 0.0]).unwrap()
    }

    #[test]
    fn sample_size_guard() {
        let g = InnovationSpec::gaussian();
        assert!(mc_f(&white_noise(), &g, 0.5, 100, StreamSeed::new(1, 0)).is_err());
    }

    #[test]
    fn f_symmetric_and_bounded() {
        let c = ParamCurveSet::constant(&[0.5, 0.2]).unwrap();
        let (f, se) = mc_f(&c, &InnovationSpec::gaussian(), 0.5, 20_000, StreamSeed::new(3, 1)).unwrap();
        assert!(linalg::asymmetry(&f) < 1e-14);
        assert!(f[(0, 0)] > 0.0 && f[(0, 0)] < 1.0);
        assert!(se.iter().all(|v| *v > 0.0));
        assert!(f.trace() <= 1.0);
    }

    #[test]
    fn excitation_closed_form_two_by_two() {
        // Y = (1, a0 Z^2): P = [[1, a0], [a0, 3 a0^2]].
        let a0 = 0.5;
        let p = DMatrix::from_row_slice(2, 2, &[1.0, a0, a0, 3.0 * a0 * a0]);
        let exact = linalg::min_eigenvalue(&p);
        let est = excitation_matrix_mc(&white_noise(), &InnovationSpec::gaussian(), 0.3, 200_000, StreamSeed::new(9, 9))
            .unwrap();
        assert!(est.min_eigenvalue >= 0.0);
        assert!((est.min_eigenvalue - exact).abs() < 3.0 * est.min_eigenvalue_se);
        assert!(est.passed);
    }

    #[test]
    fn degenerate_innovations_give_zero_l() {
        let c = ParamCurveSet::constant(&[0.5, 0.2]).unwrap();
        let n = 300;
        let path = simulator::simulate_with_innovations(&c, n, 200, vec![1.0; n + 200]).unwrap();
        let st = simulator::simulate_coupled_stationary(&path, &c, 0.75).unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[0.6, 0.14, 0.14, 0.13]);
        let l = compute_l(&path, &st, 0.01, 225, &f).unwrap();
        assert_eq!(l, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_curves_give_zero_r() {
        let c = ParamCurveSet::constant(&[0.5, 0.2]).unwrap();
        let path = simulator::simulate_tvarch(&c, &InnovationSpec::gaussian(), 2000, StreamSeed::new(5, 5), 500).unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[0.6, 0.14, 0.14, 0.13]);
        let r = compute_r(&path, &c, 0.02, 1500, 0.75, &f, 0.08, ANCHOR_HORIZON).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn bias_formula_scaling() {
        let c = ParamCurveSet::new(
            vec![Curve::affine(0.2, 2.0), Curve::affine(0.24, -0.2)],
            Smoothness::LipPlus(1.0),
        )
        .unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[0.6, 0.14, 0.14, 0.13]);
        let b1 = bias_theoretical(&c, 0.75, 10_000, 0.01, &f).unwrap();
        let b2 = bias_theoretical(&c, 0.75, 20_000, 0.01, &f).unwrap();
        for (x, y) in b1.iter().zip(&b2) {
            assert_relative_eq!(*x, 2.0 * y, max_relative = 1e-14);
        }
        let inv = linalg::spd_inverse(&f, false).unwrap().inverse;
        let expect = linalg::mat_vec(&inv, &[2.0, -0.2]);
        assert_relative_eq!(b1[0], -expect[0] / 100.0, max_relative = 1e-14);
        assert!(b1[0] < 0.0);
        let flat = ParamCurveSet::constant(&[0.5, 0.2]).unwrap();
        assert_eq!(bias_theoretical(&flat, 0.75, 10_000, 0.01, &f).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn refined_mse_minimizer() {
        let bound = MseBound::Refined {
            trace_sigma: 0.3,
            bias_norm2: 4.0,
        };
        let n = 10_000;
        let star = bound.minimizer(n).unwrap();
        assert_relative_eq!(star, (8.0f64 / (0.3 * 1e8)).cbrt(), max_relative = 1e-14);
        let h = 1e-6;
        let slope = (bound.value(star + h, n) - bound.value(star - h, n)) / (2.0 * h);
        assert!(slope.abs() < 1e-6);
        assert!(bound.value(2.0 * star, n) < bound.value(4.0 * star, n));
        let flat = MseBound::Refined {
            trace_sigma: 0.3,
            bias_norm2: 0.0,
        };
        assert_eq!(flat.value(0.01, n), 0.003);
        assert!(flat.minimizer(n).is_none());
        let ratio = bound.minimizer(2 * n).unwrap() / star;
        assert_relative_eq!(ratio, 2f64.powf(-2.0 / 3.0), max_relative = 1e-12);
    }

    #[test]
    fn matrix_powers_agree() {
        let f = DMatrix::from_row_slice(2, 2, &[0.59, 0.14, 0.14, 0.13]);
        for k in [1, 10, 100] {
            let a = contraction_power_iterated(&f, 0.05, k);
            let b = contraction_power_eigen(&f, 0.05, k);
            assert!(linalg::frobenius_relative(&a, &b) < 1e-8);
        }
    }

    #[test]
    fn geometric_power_sum_bound() {
        for lambda in [0.1, 0.01] {
            for beta in [0.5, 1.0] {
                assert!(geometric_power_sum(lambda, beta, 1_000_000) <= lambda.powf(-1.0 - beta));
            }
        }
        // beta = 1 closed form (1 - lambda) / lambda^2.
        assert_relative_eq!(geometric_power_sum(0.1, 1.0, 100_000), 0.9 / 0.01, max_relative = 1e-12);
    }

    #[test]
    fn decay_norms_bounded_and_ratio() {
        let c = ParamCurveSet::constant(&[0.5, 0.2]).unwrap();
        let fit = excitation_product_decay(&c, &InnovationSpec::gaussian(), 0.5, 0.05, 1, 200, 20, 7).unwrap();
        assert!(fit.max_norm <= 1.0 + 1e-10);
        assert!(fit.ratio_5_to_1 < 1.0);
        assert!(fit.delta_hat > 0.0);
        assert!(fit.mean_at(20).is_some() && fit.mean_at(100).is_some());
        assert!(excitation_product_decay(&c, &InnovationSpec::gaussian(), 0.5, 0.05, 3, 200, 20, 7).is_err());
        assert!(excitation_product_decay(&c, &InnovationSpec::gaussian(), 0.5, 0.05, 1, 50, 20, 7).is_err());
    }

    #[test]
    fn rademacher_is_degenerate_for_sigma() {
        let r = InnovationSpec::new(Innovation::Rademacher, 5.0).unwrap();
        assert_eq!(r.mu4(), 0.0);
    }
}
