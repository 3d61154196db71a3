//! Plug-in estimates of `F(u0)`, `Sigma(u0)` and the bias, and confidence
//! intervals for a recursive estimate computed at time `t0`.
//!
//! Observations are indexed `t = 1..=n` (slice entry `t - 1`). The regressor
//! at time `t` is `(1, X^2_t, ..., X^2_{t-p+1})`, available for `t >= p`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anre::{AnreError, AnreTrace};
use crate::linalg::{self, LinalgError};
use crate::stats::normal_quantile;

/// Floor applied to fitted conditional variances.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("insufficient data: {0}")]
    Range(String),
    #[error("invalid argument: {0}")]
    Parameter(String),
    #[error(transparent)]
    Singular(#[from] LinalgError),
    #[error("covariance diagonal entry {index} is {value}, expected positive")]
    InvalidCovariance { index: usize, value: f64 },
    #[error("trace has no snapshot at t = {0}; drift estimation needs stride 1")]
    Resolution(usize),
    #[error(transparent)]
    Anre(#[from] AnreError),
}

/// Weighting of past regressors around `t0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Weighting {
    /// Plain average of the last `m` regressors.
    Window { m: usize },
    /// Weights `lambda (1 - lambda)^j`, normalized over `j = 0..=t0 - p`.
    Ewma { lambda: f64 },
}

impl Weighting {
    /// Window of `ceil(1 / lambda)` regressors.
    pub fn default_window(lambda: f64) -> Self {
        Weighting::Window {
            m: (1.0 / lambda).ceil() as usize,
        }
    }

    /// `(t, weight)` pairs, most recent first. Weights sum to one.
    pub fn weights(&self, order: usize, t0: usize) -> Result<Vec<(usize, f64)>, InferenceError> {
        match *self {
            Weighting::Window { m } => {
                if m == 0 {
                    return Err(InferenceError::Parameter("window length must be positive".into()));
                }
                if t0 <= order + m {
                    return Err(InferenceError::Range(format!(
                        "window of {m} at t0 = {t0} needs t0 > p + m = {}",
                        order + m
                    )));
                }
                let w = 1.0 / m as f64;
                Ok((0..m).map(|j| (t0 - j, w)).collect())
            }
            Weighting::Ewma { lambda } => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(InferenceError::Parameter(format!(
                        "ewma rate {lambda} outside (0, 1)"
                    )));
                }
                if t0 <= order {
                    return Err(InferenceError::Range(format!(
                        "ewma at t0 = {t0} needs t0 > p = {order}"
                    )));
                }
                let terms = t0 - order + 1;
                let norm = 1.0 - (1.0 - lambda).powi(terms as i32);
                let mut w = lambda / norm;
                let mut out = Vec::with_capacity(terms);
                for j in 0..terms {
                    out.push((t0 - j, w));
                    w *= 1.0 - lambda;
                }
                Ok(out)
            }
        }
    }
}

fn regressor(obs: &[f64], order: usize, t: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(order + 1);
    x.push(1.0);
    for j in 0..order {
        x.push(obs[t - 1 - j]);
    }
    x
}

fn check_anchor(obs: &[f64], t0: usize) -> Result<(), InferenceError> {
    if t0 > obs.len() {
        return Err(InferenceError::Range(format!(
            "t0 = {t0} beyond the {} available observations",
            obs.len()
        )));
    }
    Ok(())
}

/// Weighted average of normalized regressor outer products.
#[derive(Clone, Debug, PartialEq)]
pub struct FEstimate {
    pub matrix: DMatrix<f64>,
    /// `1 / sum w^2`.
    pub effective_weight: f64,
}

/// Plug-in estimate of `F(u0) = E(x x' / |x|_1^2)`.
pub fn estimate_f(
    obs: &[f64],
    order: usize,
    t0: usize,
    method: Weighting,
) -> Result<FEstimate, InferenceError> {
    check_anchor(obs, t0)?;
    let weights = method.weights(order, t0)?;
    let d = order + 1;
    let mut f = DMatrix::zeros(d, d);
    let mut w2 = 0.0;
    for &(t, w) in &weights {
        let x = regressor(obs, order, t);
        let l1: f64 = x.iter().sum();
        let s = w / (l1 * l1);
        for i in 0..d {
            for j in 0..=i {
                f[(i, j)] += s * x[i] * x[j];
            }
        }
        w2 += w * w;
    }
    for i in 0..d {
        for j in 0..i {
            f[(j, i)] = f[(i, j)];
        }
    }
    Ok(FEstimate {
        matrix: f,
        effective_weight: 1.0 / w2,
    })
}

/// How `mu_4 = E Z^4 - 1` enters the covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mu4 {
    /// Weighted mean of squared standardized residuals, minus one.
    Estimated,
    Known(f64),
}

/// Which matrix is reported as the asymptotic covariance.
///
/// `Lyapunov` solves `F S + S F = mu_4 G`, the limit of
/// `lambda^{-1} var(sum_k lambda (I - lambda F)^k M_k)`. `OneSided` is the
/// one-sided product `(mu_4 / 2) F^{-1} G`; the two coincide when `F` and `G`
/// commute and always have equal traces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaForm {
    #[default]
    Lyapunov,
    OneSided,
}

#[derive(Clone, Debug)]
pub struct SigmaEstimate {
    pub lyapunov: DMatrix<f64>,
    pub one_sided: DMatrix<f64>,
    pub mu4: f64,
    /// Weighted average of `sigma^4 x x' / |x|_1^4`.
    pub g: DMatrix<f64>,
    /// Fitted variances that hit [`VARIANCE_FLOOR`].
    pub floor_excursions: usize,
    pub ridged: bool,
    pub condition: f64,
}

impl SigmaEstimate {
    pub fn form(&self, form: SigmaForm) -> &DMatrix<f64> {
        match form {
            SigmaForm::Lyapunov => &self.lyapunov,
            SigmaForm::OneSided => &self.one_sided,
        }
    }

    /// `max |S - S'|` of the one-sided form.
    pub fn one_sided_asymmetry(&self) -> f64 {
        linalg::asymmetry(&self.one_sided)
    }
}

/// Covariance pieces from `F`, `G` and `mu_4`.
pub fn sigma_from_parts(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    mu4: f64,
    allow_ridge: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>, bool, f64), InferenceError> {
    let inv = linalg::spd_inverse(f, allow_ridge)?;
    let one_sided = &inv.inverse * g * (mu4 / 2.0);
    let lyapunov = linalg::symmetrize(&linalg::lyapunov(&inv.eigen, &(g * mu4)));
    Ok((lyapunov, one_sided, inv.ridged, inv.condition))
}

fn fitted_variance(coef: &[f64], x: &[f64], excursions: &mut usize) -> f64 {
    let s: f64 = coef.iter().zip(x).map(|(a, v)| a * v).sum();
    if s < VARIANCE_FLOOR {
        *excursions += 1;
        VARIANCE_FLOOR
    } else {
        s
    }
}

/// Plug-in estimate of `Sigma(u0)`. Fitted conditional variances are
/// `a_hat' x_t` with `a_hat` the estimate at `t0`, floored at
/// [`VARIANCE_FLOOR`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_sigma(
    obs: &[f64],
    order: usize,
    t0: usize,
    method: Weighting,
    f_hat: &DMatrix<f64>,
    a_hat: &[f64],
    mu4: Mu4,
    allow_ridge: bool,
) -> Result<SigmaEstimate, InferenceError> {
    check_anchor(obs, t0)?;
    if a_hat.len() != order + 1 {
        return Err(InferenceError::Parameter(format!(
            "expected {} coefficients, got {}",
            order + 1,
            a_hat.len()
        )));
    }
    let weights = method.weights(order, t0)?;
    let d = order + 1;
    let mut g = DMatrix::zeros(d, d);
    let mut excursions = 0;
    // Residual moments pair X^2_t with the regressor at t - 1.
    let (mut z4, mut z4_weight) = (0.0, 0.0);
    for &(t, w) in &weights {
        let x = regressor(obs, order, t);
        let l1: f64 = x.iter().sum();
        let s2 = fitted_variance(a_hat, &x, &mut excursions);
        let c = w * s2 * s2 / l1.powi(4);
        for i in 0..d {
            for j in 0..=i {
                g[(i, j)] += c * x[i] * x[j];
            }
        }
        if t > order {
            let prev = regressor(obs, order, t - 1);
            let s2_prev = fitted_variance(a_hat, &prev, &mut excursions);
            let z2 = obs[t - 1] / s2_prev;
            z4 += w * z2 * z2;
            z4_weight += w;
        }
    }
    for i in 0..d {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    let mu4 = match mu4 {
        Mu4::Known(v) => v,
        Mu4::Estimated => z4 / z4_weight - 1.0,
    };
    let (lyapunov, one_sided, ridged, condition) = sigma_from_parts(f_hat, &g, mu4, allow_ridge)?;
    if !lyapunov.iter().chain(one_sided.iter()).all(|v| v.is_finite()) {
        return Err(InferenceError::Parameter("covariance estimate is not finite".into()));
    }
    Ok(SigmaEstimate {
        lyapunov,
        one_sided,
        mu4,
        g,
        floor_excursions: excursions,
        ridged,
        condition,
    })
}

/// Exponentially weighted drift of the recursive estimates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftEstimate {
    /// `sum_j w_j (a_hat_{t0} - a_hat_{t0-j})` with normalized weights
    /// `w_j = lambda (1 - lambda)^j / [1 - (1 - lambda)^{t0-p+1}]`.
    pub drift: Vec<f64>,
    /// `sum_j j w_j`; the drift of a trend with slope `s` per step is
    /// `s * lag_weight`.
    pub lag_weight: f64,
    /// `drift / lag_weight`, the per-step parameter increment.
    pub increment: Vec<f64>,
}

/// Drift of the estimate over the window before `t0`, computed from a trace
/// recorded with stride 1.
pub fn estimate_drift(trace: &AnreTrace, t0: usize, lambda: f64) -> Result<DriftEstimate, InferenceError> {
    let order = trace.order();
    let weights = Weighting::Ewma { lambda }.weights(order, t0)?;
    let current = trace.at(t0).ok_or(InferenceError::Resolution(t0))?;
    let mut drift = vec![0.0; order + 1];
    let mut lag_weight = 0.0;
    for (j, &(t, w)) in weights.iter().enumerate() {
        let past = trace.at(t).ok_or(InferenceError::Resolution(t))?;
        for ((d, c), p) in drift.iter_mut().zip(current).zip(past) {
            *d += w * (c - p);
        }
        lag_weight += w * j as f64;
    }
    let increment = drift.iter().map(|d| d / lag_weight).collect();
    Ok(DriftEstimate {
        drift,
        lag_weight,
        increment,
    })
}

/// `-F^{-1} s / lambda` for a per-step increment `s`, the plug-in version of
/// `-(N lambda)^{-1} F^{-1} a'(u0)`.
pub fn bias_from_increment(
    f_hat: &DMatrix<f64>,
    increment: &[f64],
    lambda: f64,
    allow_ridge: bool,
) -> Result<Vec<f64>, InferenceError> {
    let inv = linalg::spd_inverse(f_hat, allow_ridge)?;
    Ok(linalg::mat_vec(&inv.inverse, increment)
        .into_iter()
        .map(|v| -v / lambda)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }
}

/// Componentwise intervals `a_hat_i - bias_i +/- z sqrt(lambda Sigma_ii)`.
pub fn confidence_interval(
    a_hat: &[f64],
    sigma: &DMatrix<f64>,
    lambda: f64,
    level: f64,
    bias: Option<&[f64]>,
) -> Result<Vec<Interval>, InferenceError> {
    if !(level > 0.5 && level < 1.0) {
        return Err(InferenceError::Parameter(format!("level {level} outside (0.5, 1)")));
    }
    let z = normal_quantile((1.0 + level) / 2.0);
    a_hat
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let v = sigma[(i, i)];
            if v.is_nan() || v <= 0.0 {
                return Err(InferenceError::InvalidCovariance { index: i, value: v });
            }
            let center = a - bias.map_or(0.0, |b| b[i]);
            let h = z * (lambda * v).sqrt();
            Ok(Interval {
                lo: center - h,
                hi: center + h,
            })
        })
        .collect()
}

/// Options for [`estimate_moments`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateOptions {
    pub order: usize,
    pub lambda: f64,
    /// Anchor; defaults to the last observation.
    #[serde(default)]
    pub t0: Option<usize>,
    /// Weighting for the plug-in moments; defaults to an ewma at `lambda`.
    #[serde(default)]
    pub weighting: Option<Weighting>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_mu4")]
    pub mu4: Mu4,
    #[serde(default)]
    pub sigma_form: SigmaForm,
    /// Center intervals on the drift-corrected estimate.
    #[serde(default)]
    pub bias_correct: bool,
    /// Second step-size ratio `w` for the extrapolated estimate.
    #[serde(default)]
    pub two_lambda_w: Option<f64>,
    #[serde(default = "default_true")]
    pub allow_ridge: bool,
}

fn default_level() -> f64 {
    0.95
}

fn default_mu4() -> Mu4 {
    Mu4::Estimated
}

fn default_true() -> bool {
    true
}

impl EstimateOptions {
    pub fn new(order: usize, lambda: f64) -> Self {
        Self {
            order,
            lambda,
            t0: None,
            weighting: None,
            level: default_level(),
            mu4: default_mu4(),
            sigma_form: SigmaForm::default(),
            bias_correct: false,
            two_lambda_w: None,
            allow_ridge: true,
        }
    }
}

/// Exported estimate record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimates {
    pub t0: usize,
    pub lambda: f64,
    pub a_hat: Vec<f64>,
    #[serde(rename = "F_hat")]
    pub f_hat: Vec<Vec<f64>>,
    #[serde(rename = "Sigma_hat")]
    pub sigma_hat: Vec<Vec<f64>>,
    pub drift_hat: Vec<f64>,
    pub ci: Vec<Interval>,
    pub level: f64,
    pub weighting: Weighting,
    pub effective_weight: f64,
    pub mu4_hat: f64,
    pub sigma_form: SigmaForm,
    /// `max |S - S'|` of the one-sided covariance form.
    pub sigma_one_sided_asymmetry: f64,
    pub increment_hat: Vec<f64>,
    pub bias_hat: Vec<f64>,
    pub bias_corrected: bool,
    pub ridged: bool,
    pub variance_floor_excursions: usize,
    pub negative_excursions: usize,
    pub a_two_lambda: Option<Vec<f64>>,
}

/// Runs the estimator over squared observations and assembles plug-in
/// moments, drift, bias and intervals at `t0`.
pub fn estimate_moments(obs: &[f64], opts: &EstimateOptions) -> Result<MomentEstimates, InferenceError> {
    let p = opts.order;
    let t0 = opts.t0.unwrap_or(obs.len());
    if obs.len() <= p {
        return Err(AnreError::InsufficientData {
            needed: p + 1,
            got: obs.len(),
        }
        .into());
    }
    check_anchor(obs, t0)?;
    let trace = crate::anre::run_anre(obs[..t0].iter().copied(), p, opts.lambda, 1)?;
    let a_hat = trace.final_estimate().to_vec();
    let weighting = opts.weighting.unwrap_or(Weighting::Ewma { lambda: opts.lambda });
    let f = estimate_f(obs, p, t0, weighting)?;
    let sigma = estimate_sigma(obs, p, t0, weighting, &f.matrix, &a_hat, opts.mu4, opts.allow_ridge)?;
    let drift = estimate_drift(&trace, t0, opts.lambda)?;
    let bias = bias_from_increment(&f.matrix, &drift.increment, opts.lambda, opts.allow_ridge)?;
    let sigma_hat = sigma.form(opts.sigma_form);
    let ci = confidence_interval(
        &a_hat,
        sigma_hat,
        opts.lambda,
        opts.level,
        opts.bias_correct.then_some(bias.as_slice()),
    )?;
    let a_two_lambda = match opts.two_lambda_w {
        Some(w) => {
            let second = crate::anre::run_anre(obs[..t0].iter().copied(), p, w * opts.lambda, t0)?;
            Some(crate::anre::combine_two_lambda(&trace, &second, w)?)
        }
        None => None,
    };
    Ok(MomentEstimates {
        t0,
        lambda: opts.lambda,
        a_hat,
        f_hat: linalg::to_rows(&f.matrix),
        sigma_hat: linalg::to_rows(sigma_hat),
        drift_hat: drift.drift,
        ci,
        level: opts.level,
        weighting,
        effective_weight: f.effective_weight,
        mu4_hat: sigma.mu4,
        sigma_form: opts.sigma_form,
        sigma_one_sided_asymmetry: sigma.one_sided_asymmetry(),
        increment_hat: drift.increment,
        bias_hat: bias,
        bias_corrected: opts.bias_correct,
        ridged: sigma.ridged,
        variance_floor_excursions: sigma.floor_excursions,
        negative_excursions: trace.final_state.negative_excursions(),
        a_two_lambda,
    })
}
