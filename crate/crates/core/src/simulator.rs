//! tvARCH(p) sample paths and their coupled stationary approximations.
//!
//! Time runs `t = 1..=N` with curve argument `t/N`. Before `t = 1` the
//! recursion is run for `burn_in` steps with the coefficients frozen at
//! `u = 1/N`, starting from the unconditional mean. All innovations (burn-in
//! included) are kept so that stationary paths anchored at any `u` can be
//! driven by exactly the same `Z_t`.

use std::io::{self, Write};

use thiserror::Error;

use crate::curves::{CurveError, InnovationSpec, ParamCurveSet};
use crate::rng::StreamSeed;

/// Conditional variances above this bound abort the simulation.
pub const EXPLOSION_BOUND: f64 = 1e12;
pub const DEFAULT_BURN_IN: usize = 500;
pub const MIN_BURN_IN: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation request: {0}")]
    Config(String),
    #[error("process exploded at t = {t} (sigma^2 = {sigma_squared:e})")]
    Explosion { t: i64, sigma_squared: f64 },
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// `a_0 / (1 - sum_j a_j)`, the stationary mean of `X^2` for frozen `a`.
pub fn stationary_mean(a: &[f64]) -> f64 {
    let s: f64 = a[1..].iter().sum();
    if s < 1.0 {
        a[0] / (1.0 - s)
    } else {
        a[0]
    }
}

/// Squared observations and conditional variances over the burn-in and the
/// sample, plus the `p` initial values that precede the burn-in.
#[derive(Clone, Debug, PartialEq)]
struct Extended {
    order: usize,
    n: usize,
    burn_in: usize,
    /// `p + burn_in + n` values of `X^2`; entry `i` is time `i - p - burn_in + 1`.
    x2: Vec<f64>,
    /// `burn_in + n` conditional variances; entry `k` is time `k - burn_in + 1`.
    sigma2: Vec<f64>,
}

impl Extended {
    fn x2_index(&self, t: i64) -> usize {
        (t + (self.order + self.burn_in) as i64 - 1) as usize
    }

    fn earliest_time(&self) -> i64 {
        -(self.burn_in as i64)
    }

    fn squared(&self) -> &[f64] {
        &self.x2[self.order + self.burn_in..]
    }

    fn sigma_squared(&self) -> &[f64] {
        &self.sigma2[self.burn_in..]
    }

    fn x2_at(&self, t: i64) -> f64 {
        self.x2[self.x2_index(t)]
    }

    /// `(1, X^2_t, ..., X^2_{t-p+1})`.
    fn regressor(&self, t: i64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.order + 1);
        x.push(1.0);
        let i = self.x2_index(t);
        for j in 0..self.order {
            x.push(self.x2[i - j]);
        }
        x
    }
}

/// A simulated tvARCH trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TvArchPath {
    data: Extended,
    z_squared: Vec<f64>,
    seed: Option<StreamSeed>,
}

/// A stationary ARCH path with coefficients frozen at `anchor`, driven by the
/// innovations of a companion [`TvArchPath`].
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPath {
    anchor: f64,
    data: Extended,
    seed: Option<StreamSeed>,
}

macro_rules! path_accessors {
    ($t:ty) => {
        impl $t {
            pub fn order(&self) -> usize {
                self.data.order
            }
            /// Sample size `N`.
            pub fn len(&self) -> usize {
                self.data.n
            }
            pub fn is_empty(&self) -> bool {
                self.data.n == 0
            }
            pub fn burn_in(&self) -> usize {
                self.data.burn_in
            }
            /// `X^2_1, ..., X^2_N`.
            pub fn squared(&self) -> &[f64] {
                self.data.squared()
            }
            /// `sigma^2_1, ..., sigma^2_N`.
            pub fn sigma_squared(&self) -> &[f64] {
                self.data.sigma_squared()
            }
            /// `X^2_t` for `t` in `[-burn_in - p + 1, N]`.
            pub fn x2_at(&self, t: i64) -> f64 {
                self.data.x2_at(t)
            }
            /// Regressor `(1, X^2_t, ..., X^2_{t-p+1})`.
            pub fn regressor(&self, t: i64) -> Vec<f64> {
                self.data.regressor(t)
            }
            pub fn seed(&self) -> Option<StreamSeed> {
                self.seed
            }
        }
    };
}

path_accessors!(TvArchPath);
path_accessors!(StationaryPath);

impl TvArchPath {
    /// `Z^2_t` for `t` in `[-burn_in + 1, N]`.
    pub fn z_squared_at(&self, t: i64) -> f64 {
        self.z_squared[(t + self.data.burn_in as i64 - 1) as usize]
    }

    /// Innovations over burn-in and sample, oldest first.
    pub fn z_squared(&self) -> &[f64] {
        &self.z_squared
    }

    /// `sigma^2_t` for `t` in `[-burn_in + 1, N]`.
    pub fn sigma2_at(&self, t: i64) -> f64 {
        self.data.sigma2[(t + self.data.burn_in as i64 - 1) as usize]
    }

    /// Writes `t,x_squared,sigma_squared` with a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x_squared,sigma_squared")?;
        for (i, (x, s)) in self.squared().iter().zip(self.sigma_squared()).enumerate() {
            writeln!(w, "{},{},{}", i + 1, x, s)?;
        }
        Ok(())
    }
}

impl StationaryPath {
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// `sigma^2_t(u)` for `t` in `[-burn_in + 1, N]`.
    pub fn sigma2_at(&self, t: i64) -> f64 {
        self.data.sigma2[(t + self.data.burn_in as i64 - 1) as usize]
    }
}

/// Simulates a tvARCH(p) path of length `n`.
pub fn simulate_tvarch(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    n: usize,
    seed: StreamSeed,
    burn_in: usize,
) -> Result<TvArchPath, SimError> {
    check_request(curves, n, burn_in)?;
    let mut rng = seed.rng();
    let z: Vec<f64> = (0..burn_in + n)
        .map(|_| innovation.sample_squared(&mut rng))
        .collect();
    let mut path = simulate_with_innovations(curves, n, burn_in, z)?;
    path.seed = Some(seed);
    Ok(path)
}

fn check_request(curves: &ParamCurveSet, n: usize, burn_in: usize) -> Result<(), SimError> {
    let p = curves.order();
    if n <= 10 * p {
        return Err(SimError::Config(format!(
            "sample size {n} must exceed 10 * p = {}",
            10 * p
        )));
    }
    if burn_in < MIN_BURN_IN {
        return Err(SimError::Config(format!(
            "burn-in {burn_in} is below the minimum of {MIN_BURN_IN}"
        )));
    }
    Ok(())
}

/// Simulates a path from a supplied innovation record `Z^2` of length
/// `burn_in + n` (oldest first).
pub fn simulate_with_innovations(
    curves: &ParamCurveSet,
    n: usize,
    burn_in: usize,
    z_squared: Vec<f64>,
) -> Result<TvArchPath, SimError> {
    if z_squared.len() != burn_in + n {
        return Err(SimError::Config(format!(
            "expected {} innovations, got {}",
            burn_in + n,
            z_squared.len()
        )));
    }
    let nf = n as f64;
    let data = run_recursion(curves.order(), n, burn_in, &z_squared, |t, a| {
        let u = if t <= 0 { 1.0 / nf } else { t as f64 / nf };
        curves.fill(u, a);
    })?;
    Ok(TvArchPath {
        data,
        z_squared,
        seed: None,
    })
}

fn run_recursion(
    p: usize,
    n: usize,
    burn_in: usize,
    z_squared: &[f64],
    mut coefficients: impl FnMut(i64, &mut [f64]),
) -> Result<Extended, SimError> {
    let mut a = vec![0.0; p + 1];
    coefficients(-(burn_in as i64) + 1, &mut a);
    let init = stationary_mean(&a);
    let mut x2 = Vec::with_capacity(p + burn_in + n);
    x2.resize(p, init);
    let mut sigma2 = Vec::with_capacity(burn_in + n);
    for (k, &z) in z_squared.iter().enumerate() {
        let t = k as i64 - burn_in as i64 + 1;
        coefficients(t, &mut a);
        let i = p + k;
        let s = sigma_squared(&a, &x2[i - p..i]);
        if !s.is_finite() || s > EXPLOSION_BOUND {
            return Err(SimError::Explosion {
                t,
                sigma_squared: s,
            });
        }
        sigma2.push(s);
        x2.push(z * s);
    }
    Ok(Extended {
        order: p,
        n,
        burn_in,
        x2,
        sigma2,
    })
}

/// `a_0 + sum_j a_j X^2_{t-j}` where `past` holds `X^2_{t-p}, ..., X^2_{t-1}`.
#[inline]
fn sigma_squared(a: &[f64], past: &[f64]) -> f64 {
    let p = past.len();
    let mut s = a[0];
    for j in 1..=p {
        s += a[j] * past[p - j];
    }
    s
}

/// Stationary ARCH path with coefficients frozen at `u`, driven by the same
/// innovations as `path` from the start of its burn-in.
pub fn simulate_coupled_stationary(
    path: &TvArchPath,
    curves: &ParamCurveSet,
    u: f64,
) -> Result<StationaryPath, SimError> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(CurveError::Domain(u).into());
    }
    if curves.order() != path.order() {
        return Err(SimError::Config("curve order does not match the path".into()));
    }
    let a = curves.eval(u)?;
    let data = run_recursion(path.order(), path.len(), path.burn_in(), &path.z_squared, |_, out| {
        out.copy_from_slice(&a)
    })?;
    Ok(StationaryPath {
        anchor: u,
        data,
        seed: path.seed,
    })
}

/// State of the stationary process anchored at `u`, evaluated at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredState {
    /// `X_t(u)^2`.
    pub x2: f64,
    /// `sigma_t(u)^2`.
    pub sigma2: f64,
    /// `(1, X_{t-1}(u)^2, ..., X_{t-p}(u)^2)`.
    pub prev_regressor: Vec<f64>,
}

/// Runs the recursion frozen at `u` over the `horizon` steps ending at `t`,
/// starting from the tvARCH state at `t - horizon` and reusing its
/// innovations. The truncation error decays geometrically in `horizon`.
pub fn anchored_state(
    path: &TvArchPath,
    curves: &ParamCurveSet,
    u: f64,
    t: i64,
    horizon: usize,
) -> Result<AnchoredState, SimError> {
    let a = curves.eval(u)?;
    Ok(anchored_with(path, &a, t, horizon))
}

pub(crate) fn anchored_with(path: &TvArchPath, a: &[f64], t: i64, horizon: usize) -> AnchoredState {
    let p = path.order();
    let start = (t - horizon as i64).max(path.data.earliest_time());
    let mut window: Vec<f64> = (0..p)
        .map(|j| path.x2_at(start - (p as i64 - 1) + j as i64))
        .collect();
    let mut sigma2 = path.sigma2_at(t.max(path.data.earliest_time() + 1));
    let mut prev = window.clone();
    for tau in start + 1..=t {
        prev.copy_from_slice(&window);
        sigma2 = sigma_squared(a, &window);
        let x2 = path.z_squared_at(tau) * sigma2;
        window.rotate_left(1);
        window[p - 1] = x2;
    }
    let mut prev_regressor = Vec::with_capacity(p + 1);
    prev_regressor.push(1.0);
    prev_regressor.extend(prev.iter().rev());
    AnchoredState {
        x2: window[p - 1],
        sigma2,
        prev_regressor,
    }
}

/// Draws `Y_p(u) = (1, Y_1(u), ..., Y_p(u))`.
pub fn sample_y_vector<R: rand::Rng + ?Sized>(
    curves: &ParamCurveSet,
    innovation: &InnovationSpec,
    u: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(CurveError::Domain(u).into());
    }
    let a = curves.eval(u)?;
    let z: Vec<f64> = (0..=curves.order())
        .map(|_| innovation.sample_squared(rng))
        .collect();
    Ok(y_vector_from(&a, &z))
}

/// `Y_p` from coefficients `a` and innovations `Z_0^2, ..., Z_p^2`:
/// `Y_0 = a_0 Z_0^2`, `Y_t = (a_0 + sum_{j=1}^t a_j Y_{t-j}) Z_t^2`.
pub fn y_vector_from(a: &[f64], z_squared: &[f64]) -> Vec<f64> {
    let p = a.len() - 1;
    let mut y = Vec::with_capacity(p + 1);
    y.push(a[0] * z_squared[0]);
    for t in 1..=p {
        let mut s = a[0];
        for j in 1..=t {
            s += a[j] * y[t - j];
        }
        y.push(s * z_squared[t]);
    }
    y[0] = 1.0;
    y
}
