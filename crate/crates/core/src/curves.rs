//! Time-varying coefficient curves and innovation distributions.
//!
//! A [`ParamCurveSet`] holds the intercept curve `a_0(u)` followed by the lag
//! curves `a_1(u), ..., a_p(u)` on rescaled time `u in [0, 1]`. Curves come
//! from a small closed vocabulary of parametric families so that every model
//! can be written to and read back from a config file.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Step used by the central finite-difference derivative fallback.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("rescaled time {0} lies outside [0, 1]")]
    Domain(f64),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("invalid curve set: {0}")]
    Invalid(String),
    #[error("invalid innovation distribution: {0}")]
    Innovation(String),
}

/// One parametric coefficient curve on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Curve {
    Constant {
        value: f64,
    },
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// `base + amplitude * sin(2 pi (frequency * u + phase))`.
    Sinusoid {
        base: f64,
        amplitude: f64,
        #[serde(default = "unit")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Logistic ramp from `low` (u << center) to `high` (u >> center).
    LogisticRamp {
        low: f64,
        high: f64,
        center: f64,
        steepness: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Curve {
    pub fn constant(value: f64) -> Self {
        Curve::Constant { value }
    }

    pub fn affine(intercept: f64, slope: f64) -> Self {
        Curve::Affine { intercept, slope }
    }

    pub fn sinusoid(base: f64, amplitude: f64, frequency: f64, phase: f64) -> Self {
        Curve::Sinusoid {
            base,
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn logistic_ramp(low: f64, high: f64, center: f64, steepness: f64) -> Self {
        Curve::LogisticRamp {
            low,
            high,
            center,
            steepness,
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Curve::Constant { value } => value,
            Curve::Affine { intercept, slope } => intercept + slope * u,
            Curve::Sinusoid {
                base,
                amplitude,
                frequency,
                phase,
            } => base + amplitude * (2.0 * PI * (frequency * u + phase)).sin(),
            Curve::LogisticRamp {
                low,
                high,
                center,
                steepness,
            } => low + (high - low) * logistic(steepness * (u - center)),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Curve::Constant { .. } => 0.0,
            Curve::Affine { slope, .. } => slope,
            Curve::Sinusoid {
                amplitude,
                frequency,
                phase,
                ..
            } => 2.0 * PI * frequency * amplitude * (2.0 * PI * (frequency * u + phase)).cos(),
            Curve::LogisticRamp {
                low,
                high,
                center,
                steepness,
            } => {
                let s = logistic(steepness * (u - center));
                (high - low) * steepness * s * (1.0 - s)
            }
        }
    }

    /// Points of `[0, 1]` where the supremum or infimum can be attained.
    fn extremal_candidates(&self) -> Vec<f64> {
        let mut pts = vec![0.0, 1.0];
        if let Curve::Sinusoid {
            frequency, phase, ..
        } = *self
        {
            if frequency != 0.0 {
                // sin(2 pi theta) is extremal at theta = k/2 + 1/4.
                let (t0, t1) = {
                    let a = phase;
                    let b = frequency + phase;
                    (a.min(b), a.max(b))
                };
                let mut k = ((t0 - 0.25) * 2.0).ceil();
                while k / 2.0 + 0.25 <= t1 {
                    let theta = k / 2.0 + 0.25;
                    pts.push(((theta - phase) / frequency).clamp(0.0, 1.0));
                    k += 1.0;
                }
            }
        }
        pts
    }

    /// Exact supremum over `[0, 1]`.
    pub fn sup(&self) -> f64 {
        self.extremal_candidates()
            .into_iter()
            .map(|u| self.value(u))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact infimum over `[0, 1]`.
    pub fn inf(&self) -> f64 {
        self.extremal_candidates()
            .into_iter()
            .map(|u| self.value(u))
            .fold(f64::INFINITY, f64::min)
    }

    fn params_finite(&self) -> bool {
        let v: &[f64] = &match *self {
            Curve::Constant { value } => vec![value],
            Curve::Affine { intercept, slope } => vec![intercept, slope],
            Curve::Sinusoid {
                base,
                amplitude,
                frequency,
                phase,
            } => vec![base, amplitude, frequency, phase],
            Curve::LogisticRamp {
                low,
                high,
                center,
                steepness,
            } => vec![low, high, center, steepness],
        };
        v.iter().all(|x| x.is_finite())
    }
}

/// Declared Hölder class of the coefficient curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    /// `Lip(beta)`, `0 < beta <= 1`.
    Lip(f64),
    /// `Lip(1 + beta')`: differentiable with `beta'`-Hölder derivative.
    LipPlus(f64),
}

impl Smoothness {
    /// Total smoothness exponent: `beta` or `1 + beta'`.
    pub fn exponent(&self) -> f64 {
        match *self {
            Smoothness::Lip(b) => b,
            Smoothness::LipPlus(b) => 1.0 + b,
        }
    }

    /// Hölder exponent of the curves themselves (capped at one).
    pub fn beta(&self) -> f64 {
        self.exponent().min(1.0)
    }

    fn validate(&self) -> Result<(), CurveError> {
        let b = match *self {
            Smoothness::Lip(b) | Smoothness::LipPlus(b) => b,
        };
        if b > 0.0 && b <= 1.0 {
            Ok(())
        } else {
            Err(CurveError::Invalid(format!(
                "smoothness exponent {b} outside (0, 1]"
            )))
        }
    }
}

/// The `p + 1` coefficient curves of a tvARCH(p) model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamCurveSet {
    curves: Vec<Curve>,
    smoothness: Smoothness,
    /// Whether the families' analytic derivatives may be used.
    #[serde(default = "yes")]
    analytic_derivatives: bool,
}

fn yes() -> bool {
    true
}

impl ParamCurveSet {
    pub fn new(curves: Vec<Curve>, smoothness: Smoothness) -> Result<Self, CurveError> {
        let set = Self {
            curves,
            smoothness,
            analytic_derivatives: true,
        };
        set.check()?;
        Ok(set)
    }

    /// Constant coefficients `a`, declared `Lip(1)`.
    pub fn constant(a: &[f64]) -> Result<Self, CurveError> {
        Self::new(
            a.iter().map(|&v| Curve::constant(v)).collect(),
            Smoothness::Lip(1.0),
        )
    }

    /// Validates a set that was deserialized.
    pub fn check(&self) -> Result<(), CurveError> {
        if self.curves.len() < 2 {
            return Err(CurveError::Invalid(
                "need an intercept curve and at least one lag curve".into(),
            ));
        }
        if let Some(i) = self.curves.iter().position(|c| !c.params_finite()) {
            return Err(CurveError::Invalid(format!(
                "curve {i} has non-finite parameters"
            )));
        }
        self.smoothness.validate()
    }

    pub fn without_analytic_derivatives(mut self) -> Self {
        self.analytic_derivatives = false;
        self
    }

    pub fn order(&self) -> usize {
        self.curves.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.curves.len()
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.analytic_derivatives
    }

    /// True when every curve is a constant.
    pub fn is_constant(&self) -> bool {
        self.curves
            .iter()
            .all(|c| matches!(c, Curve::Constant { .. }))
    }

    /// `(a_0(u), ..., a_p(u))`.
    pub fn eval(&self, u: f64) -> Result<Vec<f64>, CurveError> {
        check_unit(u)?;
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: f64) -> Vec<f64> {
        self.curves.iter().map(|c| c.value(u)).collect()
    }

    pub(crate) fn fill(&self, u: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.curves) {
            *o = c.value(u);
        }
    }

    /// `(a_0'(u), ..., a_p'(u))`.
    ///
    /// Uses the analytic derivatives when enabled, otherwise a central finite
    /// difference for `Lip(1 + beta')` sets. `Lip(beta)` sets without analytic
    /// derivatives are rejected.
    pub fn derivative(&self, u: f64) -> Result<Vec<f64>, CurveError> {
        check_unit(u)?;
        if self.analytic_derivatives {
            return Ok(self.curves.iter().map(|c| c.derivative(u)).collect());
        }
        match self.smoothness {
            Smoothness::LipPlus(_) => Ok(self.derivative_fd(u, FD_STEP)),
            Smoothness::Lip(b) => Err(CurveError::Unsupported(format!(
                "derivative of Lip({b}) curves without analytic derivatives"
            ))),
        }
    }

    /// Finite-difference derivative with step `h`, one-sided near the ends.
    pub fn derivative_fd(&self, u: f64, h: f64) -> Vec<f64> {
        let lo = (u - h).max(0.0);
        let hi = (u + h).min(1.0);
        let span = hi - lo;
        self.curves
            .iter()
            .map(|c| (c.value(hi) - c.value(lo)) / span)
            .collect()
    }

    /// Declared supremum of `sum_{j>=1} a_j(u)` (sum of per-curve suprema).
    pub fn declared_lag_sup(&self) -> f64 {
        self.curves[1..].iter().map(Curve::sup).sum()
    }

    /// Freezes the curves at `u`.
    pub fn frozen_at(&self, u: f64) -> Result<ParamCurveSet, CurveError> {
        let a = self.eval(u)?;
        ParamCurveSet::constant(&a)
    }
}

fn check_unit(u: f64) -> Result<(), CurveError> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(CurveError::Domain(u))
    }
}

/// Distribution family of the i.i.d. innovations `Z_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case", deny_unknown_fields)]
pub enum Innovation {
    Gaussian,
    /// Student-t rescaled to unit variance.
    StudentT { dof: f64 },
    /// `Z = +-1` with equal probability, so `Z^2 = 1` exactly.
    Rademacher,
}

impl Innovation {
    /// `E|Z|^k` for the unit-variance distribution.
    pub fn abs_moment(&self, k: f64) -> Option<f64> {
        match *self {
            Innovation::Gaussian => {
                Some((0.5 * k * 2f64.ln() + ln_gamma(0.5 * (k + 1.0)) - 0.5 * PI.ln()).exp())
            }
            Innovation::StudentT { dof } => {
                if k >= dof {
                    return None;
                }
                let raw = 0.5 * k * dof.ln() + ln_gamma(0.5 * (k + 1.0)) + ln_gamma(0.5 * (dof - k))
                    - 0.5 * PI.ln()
                    - ln_gamma(0.5 * dof);
                let scale = 0.5 * k * ((dof - 2.0) / dof).ln();
                Some((raw + scale).exp())
            }
            Innovation::Rademacher => Some(1.0),
        }
    }
}

/// Innovation distribution together with its cached moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InnovationRepr", into = "InnovationRepr")]
pub struct InnovationSpec {
    dist: Innovation,
    moment_order: f64,
    moment_2r: f64,
    fourth: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Family {
    Gaussian,
    StudentT,
    Rademacher,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InnovationRepr {
    distribution: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dof: Option<f64>,
    #[serde(default = "default_moment_order")]
    moment_order: f64,
}

fn default_moment_order() -> f64 {
    5.0
}

impl TryFrom<InnovationRepr> for InnovationSpec {
    type Error = CurveError;

    fn try_from(r: InnovationRepr) -> Result<Self, CurveError> {
        let law = match (r.distribution, r.dof) {
            (Family::StudentT, Some(dof)) => Innovation::StudentT { dof },
            (Family::StudentT, None) => {
                return Err(CurveError::Innovation("student_t requires dof".into()))
            }
            (_, Some(_)) => {
                return Err(CurveError::Innovation("dof applies to student_t only".into()))
            }
            (Family::Gaussian, None) => Innovation::Gaussian,
            (Family::Rademacher, None) => Innovation::Rademacher,
        };
        InnovationSpec::new(law, r.moment_order)
    }
}

impl From<InnovationSpec> for InnovationRepr {
    fn from(s: InnovationSpec) -> Self {
        let (distribution, dof) = match s.dist {
            Innovation::Gaussian => (Family::Gaussian, None),
            Innovation::StudentT { dof } => (Family::StudentT, Some(dof)),
            Innovation::Rademacher => (Family::Rademacher, None),
        };
        InnovationRepr {
            distribution,
            dof,
            moment_order: s.moment_order,
        }
    }
}

impl InnovationSpec {
    /// `moment_order` is the `r` of the moment condition `E(Z^{2r}) < inf`.
    pub fn new(dist: Innovation, moment_order: f64) -> Result<Self, CurveError> {
        if !(moment_order >= 1.0 && moment_order.is_finite()) {
            return Err(CurveError::Innovation(format!(
                "moment order {moment_order} must be >= 1"
            )));
        }
        if let Innovation::StudentT { dof } = dist {
            if !(dof > 2.0 * moment_order && dof > 4.0) {
                return Err(CurveError::Innovation(format!(
                    "Student-t with {dof} degrees of freedom has no finite moment of order {}",
                    2.0 * moment_order
                )));
            }
        }
        let moment_2r = dist
            .abs_moment(2.0 * moment_order)
            .ok_or_else(|| CurveError::Innovation("moment does not exist".into()))?;
        let fourth = dist
            .abs_moment(4.0)
            .ok_or_else(|| CurveError::Innovation("fourth moment does not exist".into()))?;
        Ok(Self {
            dist,
            moment_order,
            moment_2r,
            fourth,
        })
    }

    pub fn gaussian() -> Self {
        Self::new(Innovation::Gaussian, default_moment_order()).expect("Gaussian moments exist")
    }

    pub fn distribution(&self) -> Innovation {
        self.dist
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    /// `E(Z^{2r})`.
    pub fn moment_2r(&self) -> f64 {
        self.moment_2r
    }

    /// `E(Z^4)`.
    pub fn fourth_moment(&self) -> f64 {
        self.fourth
    }

    /// `mu_4 = E(Z^4) - 1`, the variance of `Z^2`.
    pub fn mu4(&self) -> f64 {
        self.fourth - 1.0
    }

    /// Draws one `Z^2`.
    pub fn sample_squared<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use rand_distr::{Distribution, StandardNormal, StudentT};
        match self.dist {
            Innovation::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z * z
            }
            Innovation::StudentT { dof } => {
                let t = StudentT::new(dof).expect("validated dof").sample(rng);
                t * t * (dof - 2.0) / dof
            }
            Innovation::Rademacher => 1.0,
        }
    }
}

/// Which model condition a check refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `E(Z^{2r})^{1/r} sup_u sum_j a_j(u) < 1 - eta`.
    MomentContraction,
    /// `rho_1 <= a_0(u) <= rho_2`.
    InterceptBounds,
    /// `a_j(u) >= 0` for the lag curves.
    LagNonnegative,
    /// Sampled Hölder quotient is finite.
    Holder,
    /// Excitation matrix bounded away from singularity (Monte Carlo).
    Excitation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub passed: bool,
    pub worst_u: f64,
    /// Signed slack; positive means satisfied.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    /// Estimated Hölder constant of the curves on the sampled grid.
    pub holder_constant: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, condition: Condition) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOptions {
    pub eta: f64,
    pub grid: usize,
    /// Optional `(rho_1, rho_2)` bounds for the intercept.
    pub intercept_bounds: Option<(f64, f64)>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            eta: 0.05,
            grid: 1000,
            intercept_bounds: None,
        }
    }
}

/// Checks conditions (i)-(iii) on a uniform grid of `[0, 1]`. The excitation
/// condition is evaluated separately by `oracle::excitation_matrix_mc`.
pub fn validate_assumptions(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    opts: &ValidationOptions,
) -> Result<ValidationReport, CurveError> {
    if opts.grid < 100 {
        return Err(CurveError::Invalid(format!(
            "validation grid {} is below 100 points",
            opts.grid
        )));
    }
    let grid: Vec<f64> = (0..opts.grid)
        .map(|i| i as f64 / (opts.grid - 1) as f64)
        .collect();
    let values: Vec<Vec<f64>> = grid.iter().map(|&u| curves.eval_unchecked(u)).collect();

    let scale = innovation.moment_2r().powf(1.0 / innovation.moment_order());
    let (sup_u, sup_sum) = grid
        .iter()
        .zip(&values)
        .map(|(&u, a)| (u, a[1..].iter().sum::<f64>()))
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let contraction_margin = (1.0 - opts.eta) - scale * sup_sum;

    let (min_u, min_a0) = grid
        .iter()
        .zip(&values)
        .map(|(&u, a)| (u, a[0]))
        .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let (max_u, max_a0) = grid
        .iter()
        .zip(&values)
        .map(|(&u, a)| (u, a[0]))
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let (intercept_margin, intercept_u) = match opts.intercept_bounds {
        Some((lo, hi)) if hi - max_a0 < min_a0 - lo => (hi - max_a0, max_u),
        Some((lo, _)) => (min_a0 - lo, min_u),
        None => (min_a0, min_u),
    };
    let intercept_ok = min_a0 > 0.0
        && match opts.intercept_bounds {
            Some(_) => intercept_margin >= 0.0,
            None => true,
        };

    let (neg_u, min_lag) = grid
        .iter()
        .zip(&values)
        .map(|(&u, a)| (u, a[1..].iter().copied().fold(f64::INFINITY, f64::min)))
        .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });

    let beta = curves.smoothness().beta();
    let mut holder = 0.0f64;
    let mut holder_u = 0.0;
    for w in 0..grid.len() - 1 {
        let du = (grid[w + 1] - grid[w]).powf(beta);
        for (next, cur) in values[w + 1].iter().zip(&values[w]) {
            let q = (next - cur).abs() / du;
            if q > holder {
                holder = q;
                holder_u = grid[w];
            }
        }
    }

    let checks = vec![
        ConditionCheck {
            condition: Condition::MomentContraction,
            passed: contraction_margin > 0.0,
            worst_u: sup_u,
            margin: contraction_margin,
        },
        ConditionCheck {
            condition: Condition::InterceptBounds,
            passed: intercept_ok,
            worst_u: intercept_u,
            margin: intercept_margin,
        },
        ConditionCheck {
            condition: Condition::LagNonnegative,
            passed: min_lag >= 0.0,
            worst_u: neg_u,
            margin: min_lag,
        },
        ConditionCheck {
            condition: Condition::Holder,
            passed: holder.is_finite(),
            worst_u: holder_u,
            margin: holder,
        },
    ];
    Ok(ValidationReport {
        checks,
        holder_constant: holder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn affine_pair() -> ParamCurveSet {
        ParamCurveSet::new(
            vec![Curve::affine(0.5, 0.2), Curve::affine(0.1, 0.1)],
            Smoothness::LipPlus(1.0),
        )
        .unwrap()
    }

    #[test]
    fn constant_curves_eval_anywhere() {
        let c = ParamCurveSet::constant(&[0.5, 0.2]).unwrap();
        for u in [0.0, 0.3, 1.0] {
            assert_eq!(c.eval(u).unwrap(), vec![0.5, 0.2]);
        }
    }

    #[test]
    fn affine_eval_at_midpoint() {
        let a = affine_pair().eval(0.5).unwrap();
        assert_abs_diff_eq!(a[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1], 0.15, epsilon = 1e-15);
    }

    #[test]
    fn sinusoid_eval_quarter() {
        let c = ParamCurveSet::new(
            vec![Curve::constant(0.5), Curve::sinusoid(0.15, 0.1, 1.0, 0.0)],
            Smoothness::LipPlus(1.0),
        )
        .unwrap();
        assert_abs_diff_eq!(c.eval(0.25).unwrap()[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn eval_outside_unit_interval_is_domain_error() {
        let c = affine_pair();
        assert_eq!(c.eval(-0.1), Err(CurveError::Domain(-0.1)));
        assert_eq!(c.eval(1.5), Err(CurveError::Domain(1.5)));
    }

    #[test]
    fn analytic_derivatives() {
        let d = affine_pair().derivative(0.37).unwrap();
        assert_abs_diff_eq!(d[0], 0.2, epsilon = 1e-15);
        let c = ParamCurveSet::constant(&[0.5, 0.2]).unwrap();
        assert_eq!(c.derivative(0.4).unwrap(), vec![0.0, 0.0]);
        let s = ParamCurveSet::new(
            vec![Curve::constant(0.5), Curve::sinusoid(0.15, 0.1, 1.0, 0.0)],
            Smoothness::LipPlus(1.0),
        )
        .unwrap();
        assert_abs_diff_eq!(s.derivative(0.0).unwrap()[1], 0.2 * PI, epsilon = 1e-12);
    }

    #[test]
    fn lip_beta_without_derivatives_is_unsupported() {
        let c = ParamCurveSet::new(
            vec![Curve::affine(0.5, 0.2), Curve::constant(0.1)],
            Smoothness::Lip(0.5),
        )
        .unwrap()
        .without_analytic_derivatives();
        assert!(matches!(c.derivative(0.5), Err(CurveError::Unsupported(_))));
    }

    #[test]
    fn finite_difference_fallback_is_one_sided_at_ends() {
        let c = affine_pair().without_analytic_derivatives();
        for u in [0.0, 0.5, 1.0] {
            assert_abs_diff_eq!(c.derivative(u).unwrap()[0], 0.2, epsilon = 1e-9);
        }
    }

    #[test]
    fn sinusoid_sup_covers_interior_peak_and_endpoints() {
        let s = Curve::sinusoid(0.15, 0.1, 1.0, 0.0);
        assert_abs_diff_eq!(s.sup(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.inf(), 0.05, epsilon = 1e-15);
        // Quarter period only: monotone increasing from 0.15 to 0.25.
        let q = Curve::sinusoid(0.15, 0.1, 0.25, 0.0);
        assert_abs_diff_eq!(q.sup(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(q.inf(), 0.15, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_moments() {
        let z = InnovationSpec::gaussian();
        assert_abs_diff_eq!(z.moment_2r(), 945.0, epsilon = 1e-9);
        assert_abs_diff_eq!(z.fourth_moment(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.mu4(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn student_t_moments_and_rejection() {
        // Unit-variance t_nu: E Z^4 = 3 (nu - 2) / (nu - 4).
        let z = InnovationSpec::new(Innovation::StudentT { dof: 12.0 }, 5.0).unwrap();
        assert_abs_diff_eq!(z.fourth_moment(), 3.0 * 10.0 / 8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            Innovation::StudentT { dof: 12.0 }.abs_moment(2.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(InnovationSpec::new(Innovation::StudentT { dof: 10.0 }, 5.0).is_err());
        assert!(InnovationSpec::new(Innovation::StudentT { dof: 11.0 }, 5.0).is_ok());
    }

    fn lag_only(sup: f64) -> ParamCurveSet {
        ParamCurveSet::constant(&[0.5, sup]).unwrap()
    }

    #[test]
    fn moment_condition_passes_at_024() {
        let z = InnovationSpec::gaussian();
        let r = validate_assumptions(&lag_only(0.24), &z, &ValidationOptions::default()).unwrap();
        let c = r.check(Condition::MomentContraction).unwrap();
        assert!(c.passed);
        // 0.24 * 945^(1/5) = 0.9446...
        assert_abs_diff_eq!(c.margin, 0.95 - 0.24 * 945f64.powf(0.2), epsilon = 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn moment_condition_white_noise_margin() {
        let z = InnovationSpec::gaussian();
        let r = validate_assumptions(&lag_only(0.0), &z, &ValidationOptions::default()).unwrap();
        let c = r.check(Condition::MomentContraction).unwrap();
        assert!(c.passed);
        assert_abs_diff_eq!(c.margin, 0.95, epsilon = 1e-15);
    }

    #[test]
    fn moment_condition_fails_at_half() {
        let z = InnovationSpec::gaussian();
        let r = validate_assumptions(&lag_only(0.5), &z, &ValidationOptions::default()).unwrap();
        assert!(!r.check(Condition::MomentContraction).unwrap().passed);
        assert!(!r.passed());
    }

    #[test]
    fn negative_lag_and_intercept_flagged() {
        let z = InnovationSpec::gaussian();
        let c = ParamCurveSet::new(
            vec![Curve::affine(-0.1, 0.5), Curve::affine(0.1, -0.2)],
            Smoothness::Lip(1.0),
        )
        .unwrap();
        let r = validate_assumptions(&c, &z, &ValidationOptions::default()).unwrap();
        let ib = r.check(Condition::InterceptBounds).unwrap();
        assert!(!ib.passed);
        assert_eq!(ib.worst_u, 0.0);
        let lag = r.check(Condition::LagNonnegative).unwrap();
        assert!(!lag.passed);
        assert_eq!(lag.worst_u, 1.0);
    }

    #[test]
    fn small_grid_rejected() {
        let z = InnovationSpec::gaussian();
        let opts = ValidationOptions {
            grid: 50,
            ..Default::default()
        };
        assert!(validate_assumptions(&lag_only(0.1), &z, &opts).is_err());
    }

    #[test]
    fn curve_set_roundtrips_through_toml() {
        let c = ParamCurveSet::new(
            vec![
                Curve::logistic_ramp(0.4, 0.8, 0.5, 20.0),
                Curve::sinusoid(0.14, 0.1, 1.0, 0.25),
            ],
            Smoothness::LipPlus(1.0),
        )
        .unwrap();
        let s = toml::to_string(&c).unwrap();
        let back: ParamCurveSet = toml::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = s.replace("steepness", "steepnes");
        assert!(toml::from_str::<ParamCurveSet>(&bad).is_err());
    }

    #[test]
    fn innovation_from_toml() {
        let z: InnovationSpec = toml::from_str("distribution = \"student_t\"\ndof = 12.0\n").unwrap();
        assert_eq!(z.distribution(), Innovation::StudentT { dof: 12.0 });
        assert_eq!(z.moment_order(), 5.0);
        let g: InnovationSpec = toml::from_str("distribution = \"gaussian\"\nmoment_order = 3.0\n").unwrap();
        assert_eq!(g.moment_order(), 3.0);
        assert!(toml::from_str::<InnovationSpec>("distribution = \"student_t\"\ndof = 8.0\n").is_err());
        assert!(toml::from_str::<InnovationSpec>("distribution = \"gaussian\"\nscale = 2.0\n").is_err());
        let back: InnovationSpec = toml::from_str(&toml::to_string(&z).unwrap()).unwrap();
        assert_eq!(back, z);
    }
}
