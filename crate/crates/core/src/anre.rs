//! The ARCH normalized recursive estimator.
//!
//! Each observation `X^2_t` moves the estimate along the normalized regressor
//! `x = (1, X^2_{t-1}, ..., X^2_{t-p})`:
//!
//! ```text
//! a_t = a_{t-1} + lambda * (X^2_t - a_{t-1}' x) * x / |x|_1^2
//! ```
//!
//! The recursion never looks at the sample size, so the same code serves
//! rescaled simulations and raw data streams.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::curves::Smoothness;

#[derive(Debug, Error, PartialEq)]
pub enum AnreError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("negative squared observation {0}")]
    Domain(f64),
    #[error("non-finite observation {0}")]
    Data(f64),
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("step sizes do not satisfy lambda_2 = w * lambda_1 ({lambda1} * {w} != {lambda2})")]
    Configuration { lambda1: f64, lambda2: f64, w: f64 },
    #[error("estimates refer to different times ({0} vs {1})")]
    Alignment(usize, usize),
}

/// Online estimator state.
#[derive(Clone, Debug, PartialEq)]
pub struct AnreState {
    order: usize,
    lambda: f64,
    coef: Vec<f64>,
    /// Last `p` squared observations, most recent first.
    window: Vec<f64>,
    consumed: usize,
    negative_excursions: usize,
}

impl AnreState {
    /// Zero initial estimate, empty window.
    pub fn new(order: usize, lambda: f64) -> Result<Self, AnreError> {
        if order == 0 {
            return Err(AnreError::Parameter("ARCH order must be at least 1".into()));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(AnreError::Parameter(format!(
                "step size {lambda} outside (0, 1)"
            )));
        }
        Ok(Self {
            order,
            lambda,
            coef: vec![0.0; order + 1],
            window: Vec::with_capacity(order),
            consumed: 0,
            negative_excursions: 0,
        })
    }

    /// Resumes a recursion from a saved estimate and a full regressor window
    /// `(X^2_{t-1}, ..., X^2_{t-p})`.
    pub fn resume(lambda: f64, estimate: &[f64], window: &[f64]) -> Result<Self, AnreError> {
        if estimate.len() < 2 || window.len() + 1 != estimate.len() {
            return Err(AnreError::Parameter(format!(
                "estimate of length {} needs a window of length {}",
                estimate.len(),
                estimate.len().saturating_sub(1)
            )));
        }
        if let Some(&v) = estimate.iter().find(|v| !v.is_finite()) {
            return Err(AnreError::Data(v));
        }
        if let Some(&v) = window.iter().find(|v| !v.is_finite()) {
            return Err(AnreError::Data(v));
        }
        if let Some(&v) = window.iter().find(|&&v| v < 0.0) {
            return Err(AnreError::Domain(v));
        }
        let mut s = Self::new(window.len(), lambda)?;
        s.coef = estimate.to_vec();
        s.window = window.to_vec();
        s.consumed = window.len();
        Ok(s)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Current estimate `(a_0, ..., a_p)`.
    pub fn estimate(&self) -> &[f64] {
        &self.coef
    }

    /// Number of observations consumed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Number of updates after which some coefficient was negative.
    pub fn negative_excursions(&self) -> usize {
        self.negative_excursions
    }

    /// `(1, X^2_{t-1}, ..., X^2_{t-p})` once the window is full.
    pub fn regressor(&self) -> Option<Vec<f64>> {
        (self.window.len() == self.order).then(|| {
            let mut x = Vec::with_capacity(self.order + 1);
            x.push(1.0);
            x.extend_from_slice(&self.window);
            x
        })
    }

    /// Consumes one squared observation. The first `p` observations only fill
    /// the regressor window.
    pub fn step(&mut self, x_squared: f64) -> Result<(), AnreError> {
        if !x_squared.is_finite() {
            return Err(AnreError::Data(x_squared));
        }
        if x_squared < 0.0 {
            return Err(AnreError::Domain(x_squared));
        }
        if self.window.len() == self.order {
            let mut l1 = 1.0;
            let mut pred = self.coef[0];
            for (c, x) in self.coef[1..].iter().zip(&self.window) {
                l1 += x;
                pred += c * x;
            }
            let gain = self.lambda * (x_squared - pred) / (l1 * l1);
            self.coef[0] += gain;
            for (c, x) in self.coef[1..].iter_mut().zip(&self.window) {
                *c += gain * x;
            }
            if self.coef.iter().any(|&c| c < 0.0) {
                self.negative_excursions += 1;
            }
            self.window.rotate_right(1);
            self.window[0] = x_squared;
        } else {
            self.window.insert(0, x_squared);
        }
        self.consumed += 1;
        Ok(())
    }
}

/// Estimate recorded at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: usize,
    pub coef: Vec<f64>,
}

/// Snapshots of a full run plus the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct AnreTrace {
    pub stride: usize,
    pub snapshots: Vec<Snapshot>,
    pub final_state: AnreState,
}

impl AnreTrace {
    pub fn lambda(&self) -> f64 {
        self.final_state.lambda()
    }

    pub fn order(&self) -> usize {
        self.final_state.order()
    }

    /// Time of the last consumed observation.
    pub fn final_t(&self) -> usize {
        self.final_state.consumed()
    }

    pub fn final_estimate(&self) -> &[f64] {
        self.final_state.estimate()
    }

    /// Snapshot at exactly time `t`, if recorded.
    pub fn at(&self, t: usize) -> Option<&[f64]> {
        self.snapshots
            .binary_search_by_key(&t, |s| s.t)
            .ok()
            .map(|i| self.snapshots[i].coef.as_slice())
    }

    /// Writes `t,a_hat_0,...,a_hat_p`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (0..=self.order()).map(|j| format!("a_hat_{j}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for s in &self.snapshots {
            let row: Vec<String> = s.coef.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", s.t, row.join(","))?;
        }
        Ok(())
    }
}

/// Snapshot stride that keeps about a thousand snapshots.
pub fn default_stride(n: usize) -> usize {
    (n / 1000).max(1)
}

/// Runs the estimator over a stream of squared observations, recording a
/// snapshot at `t = p` (the initial state) and every `stride` updates after
/// it, plus the final state.
pub fn run_anre<I>(observations: I, order: usize, lambda: f64, stride: usize) -> Result<AnreTrace, AnreError>
where
    I: IntoIterator<Item = f64>,
{
    if stride == 0 {
        return Err(AnreError::Parameter("snapshot stride must be positive".into()));
    }
    let mut state = AnreState::new(order, lambda)?;
    let mut snapshots = Vec::new();
    for x in observations {
        state.step(x)?;
        let t = state.consumed();
        if t >= order && (t - order).is_multiple_of(stride) {
            snapshots.push(Snapshot {
                t,
                coef: state.estimate().to_vec(),
            });
        }
    }
    let t = state.consumed();
    if t < order {
        return Err(AnreError::InsufficientData {
            needed: order,
            got: t,
        });
    }
    if snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(Snapshot {
            t,
            coef: state.estimate().to_vec(),
        });
    }
    Ok(AnreTrace {
        stride,
        snapshots,
        final_state: state,
    })
}

/// Final estimate only; avoids snapshot allocation in Monte Carlo loops.
pub fn final_estimate(observations: &[f64], order: usize, lambda: f64) -> Result<Vec<f64>, AnreError> {
    let mut state = AnreState::new(order, lambda)?;
    for &x in observations {
        state.step(x)?;
    }
    if state.consumed() < order {
        return Err(AnreError::InsufficientData {
            needed: order,
            got: state.consumed(),
        });
    }
    Ok(state.estimate().to_vec())
}

/// `(1/(1-w)) a(lambda_1) - (w/(1-w)) a(lambda_2)`.
pub fn extrapolate(a_lambda1: &[f64], a_lambda2: &[f64], w: f64) -> Vec<f64> {
    let c1 = 1.0 / (1.0 - w);
    let c2 = w / (1.0 - w);
    a_lambda1
        .iter()
        .zip(a_lambda2)
        .map(|(a1, a2)| c1 * a1 - c2 * a2)
        .collect()
}

/// Bias-corrected combination of two runs with `lambda_2 = w * lambda_1`.
pub fn combine_two_lambda(
    trace1: &AnreTrace,
    trace2: &AnreTrace,
    w: f64,
) -> Result<Vec<f64>, AnreError> {
    if !(w > 0.0 && w < 1.0) {
        return Err(AnreError::Parameter(format!("ratio w = {w} outside (0, 1)")));
    }
    let (l1, l2) = (trace1.lambda(), trace2.lambda());
    if (l2 - w * l1).abs() > 1e-12 * (w * l1) {
        return Err(AnreError::Configuration {
            lambda1: l1,
            lambda2: l2,
            w,
        });
    }
    if trace1.final_t() != trace2.final_t() {
        return Err(AnreError::Alignment(trace1.final_t(), trace2.final_t()));
    }
    Ok(extrapolate(trace1.final_estimate(), trace2.final_estimate(), w))
}

/// Single run, or the pair of runs combined by extrapolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Single,
    TwoLambda,
}

/// Step size chosen for a target convergence rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepSize {
    pub lambda: f64,
    /// Power of `N` before clamping (negative).
    pub exponent: f64,
    /// Whether the `N lambda >= (log N)^1.1` floor was applied.
    pub clamped: bool,
}

/// Exponent of the `(log N)^{1 + eps}` floor on `N lambda`.
pub const LOG_FLOOR_EXPONENT: f64 = 1.1;

/// Smallest admissible step size for horizon `n`.
pub fn lambda_floor(n: usize) -> f64 {
    (n as f64).ln().powf(LOG_FLOOR_EXPONENT) / n as f64
}

/// `scale * N^{-2 nu / (1 + 2 nu)}` (single run, `nu` capped at one) or
/// `scale * N^{-(2 + 2 beta') / (3 + 2 beta')}` (two runs), then raised to
/// [`lambda_floor`] if needed.
pub fn step_size_for_rate(
    n: usize,
    smoothness: Smoothness,
    scale: f64,
    mode: RateMode,
) -> Result<StepSize, AnreError> {
    if n < 100 {
        return Err(AnreError::Parameter(format!("horizon {n} below 100")));
    }
    let exponent = match (mode, smoothness) {
        (RateMode::Single, s) => {
            let nu = s.exponent().min(1.0);
            -2.0 * nu / (1.0 + 2.0 * nu)
        }
        (RateMode::TwoLambda, Smoothness::LipPlus(bp)) => -(2.0 + 2.0 * bp) / (3.0 + 2.0 * bp),
        (RateMode::TwoLambda, Smoothness::Lip(_)) => {
            return Err(AnreError::Parameter(
                "two-step-size extrapolation needs Lip(1 + beta') curves".into(),
            ))
        }
    };
    let raw = scale * (n as f64).powf(exponent);
    let floor = lambda_floor(n);
    let (lambda, clamped) = if raw < floor { (floor, true) } else { (raw, false) };
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(AnreError::Parameter(format!(
            "step size {lambda} outside (0, 1) for N = {n}"
        )));
    }
    Ok(StepSize {
        lambda,
        exponent,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn state_with(coef: &[f64], window: &[f64], lambda: f64) -> AnreState {
        AnreState::resume(lambda, coef, window).unwrap()
    }

    #[test]
    fn resume_validates() {
        assert!(AnreState::resume(0.1, &[0.5], &[]).is_err());
        assert!(AnreState::resume(0.1, &[0.5, 0.2], &[1.0, 2.0]).is_err());
        assert!(AnreState::resume(0.1, &[0.5, 0.2], &[-1.0]).is_err());
        assert!(AnreState::resume(0.1, &[f64::NAN, 0.2], &[1.0]).is_err());
        let s = AnreState::resume(0.1, &[0.5, 0.2], &[1.0]).unwrap();
        assert_eq!(s.regressor().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn init_is_zero() {
        let s = AnreState::new(1, 0.1).unwrap();
        assert_eq!(s.estimate(), &[0.0, 0.0]);
        assert_eq!(AnreState::new(3, 0.1).unwrap().estimate().len(), 4);
        assert!(AnreState::new(1, 0.0).is_err());
        assert!(AnreState::new(1, 1.0).is_err());
        assert!(AnreState::new(0, 0.5).is_err());
    }

    #[test]
    fn hand_computed_step() {
        let mut s = state_with(&[0.5, 0.2], &[1.0], 0.1);
        s.step(1.5).unwrap();
        assert_abs_diff_eq!(s.estimate()[0], 0.52, epsilon = 1e-15);
        assert_abs_diff_eq!(s.estimate()[1], 0.22, epsilon = 1e-15);
        assert_eq!(s.regressor().unwrap(), vec![1.0, 1.5]);
    }

    #[test]
    fn zero_prediction_error_leaves_estimate() {
        let mut s = state_with(&[0.5, 0.2], &[2.0], 0.3);
        s.step(0.9).unwrap();
        assert_eq!(s.estimate(), &[0.5, 0.2]);
    }

    #[test]
    fn increment_linear_in_lambda() {
        let mut a = state_with(&[0.1, 0.3, 0.05], &[0.7, 2.0], 0.05);
        let mut b = state_with(&[0.1, 0.3, 0.05], &[0.7, 2.0], 0.1);
        a.step(3.0).unwrap();
        b.step(3.0).unwrap();
        let da: Vec<f64> = a.estimate().iter().zip([0.1, 0.3, 0.05]).map(|(x, y)| x - y).collect();
        let db: Vec<f64> = b.estimate().iter().zip([0.1, 0.3, 0.05]).map(|(x, y)| x - y).collect();
        for (x, y) in da.iter().zip(&db) {
            assert_abs_diff_eq!(2.0 * x, *y, epsilon = 1e-15);
        }
    }

    #[test]
    fn warm_up_fills_window_without_update() {
        let mut s = AnreState::new(2, 0.1).unwrap();
        s.step(1.0).unwrap();
        assert!(s.regressor().is_none());
        s.step(2.0).unwrap();
        assert_eq!(s.estimate(), &[0.0, 0.0, 0.0]);
        assert_eq!(s.regressor().unwrap(), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_observations() {
        let mut s = AnreState::new(1, 0.1).unwrap();
        assert_eq!(s.step(-1.0), Err(AnreError::Domain(-1.0)));
        assert!(matches!(s.step(f64::NAN), Err(AnreError::Data(_))));
        assert!(matches!(s.step(f64::INFINITY), Err(AnreError::Data(_))));
    }

    #[test]
    fn stream_of_length_p_has_only_initial_snapshot() {
        let tr = run_anre([1.0, 2.0], 2, 0.1, 1).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0], Snapshot { t: 2, coef: vec![0.0; 3] });
        assert!(matches!(
            run_anre([1.0], 2, 0.1, 1),
            Err(AnreError::InsufficientData { .. })
        ));
    }

    #[test]
    fn snapshots_strictly_increasing_and_final_included() {
        let obs: Vec<f64> = (0..103).map(|i| 0.5 + (i % 7) as f64 * 0.1).collect();
        let tr = run_anre(obs.iter().copied(), 1, 0.05, 10).unwrap();
        assert!(tr.snapshots.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(tr.snapshots.last().unwrap().t, 103);
        assert_eq!(tr.at(103).unwrap(), tr.final_estimate());
        assert_eq!(tr.at(11).map(|c| c.len()), Some(2));
        assert!(tr.at(12).is_none());
        assert_eq!(final_estimate(&obs, 1, 0.05).unwrap(), tr.final_estimate());
    }

    #[test]
    fn trace_csv_layout() {
        let tr = run_anre([1.0, 2.0, 3.0], 1, 0.1, 1).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,a_hat_0,a_hat_1");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn combine_arithmetic_and_checks() {
        let a = run_anre([1.0, 2.0, 3.0], 1, 0.2, 1).unwrap();
        let b = run_anre([1.0, 2.0, 3.0], 1, 0.1, 1).unwrap();
        let c = combine_two_lambda(&a, &b, 0.5).unwrap();
        let expect = extrapolate(a.final_estimate(), b.final_estimate(), 0.5);
        assert_eq!(c, expect);
        assert_eq!(extrapolate(&[1.0, 0.0], &[2.0, 0.0], 0.5), vec![0.0, 0.0]);
        for w in [0.1, 0.25, 0.9] {
            let v = extrapolate(&[0.3, 0.7], &[0.3, 0.7], w);
            assert_abs_diff_eq!(v[0], 0.3, epsilon = 1e-14);
            assert_abs_diff_eq!(v[1], 0.7, epsilon = 1e-14);
        }
        assert!(matches!(
            combine_two_lambda(&a, &b, 0.25),
            Err(AnreError::Configuration { .. })
        ));
        let short = run_anre([1.0, 2.0], 1, 0.1, 1).unwrap();
        assert!(matches!(
            combine_two_lambda(&a, &short, 0.5),
            Err(AnreError::Alignment(3, 2))
        ));
    }

    #[test]
    fn rate_step_sizes() {
        let s = step_size_for_rate(10_000, Smoothness::Lip(1.0), 1.0, RateMode::Single).unwrap();
        assert_abs_diff_eq!(s.exponent, -2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.lambda, 10_000f64.powf(-2.0 / 3.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s.lambda, 2.154e-3, epsilon = 1e-6);
        assert!(!s.clamped);

        // Single mode caps nu at one even for smoother curves.
        let s = step_size_for_rate(10_000, Smoothness::LipPlus(1.0), 1.0, RateMode::Single).unwrap();
        assert_abs_diff_eq!(s.exponent, -2.0 / 3.0, epsilon = 1e-15);

        let s = step_size_for_rate(10_000, Smoothness::LipPlus(1.0), 1.0, RateMode::TwoLambda).unwrap();
        assert_abs_diff_eq!(s.exponent, -0.8, epsilon = 1e-15);
        // 1e4^-0.8 = 6.31e-4 is below (ln 1e4)^1.1 / 1e4 = 1.150e-3.
        assert!(s.clamped);
        assert_abs_diff_eq!(s.lambda, 10_000f64.ln().powf(1.1) / 1e4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.lambda, 1.150e-3, epsilon = 1e-6);

        assert!(step_size_for_rate(10_000, Smoothness::Lip(1.0), 1.0, RateMode::TwoLambda).is_err());
        assert!(step_size_for_rate(50, Smoothness::Lip(1.0), 1.0, RateMode::Single).is_err());
        assert!(step_size_for_rate(10_000, Smoothness::Lip(1.0), 1e4, RateMode::Single).is_err());
    }
}
