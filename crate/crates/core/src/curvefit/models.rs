//! Parametric response families: value, parameter gradient, bounds and
//! starting guesses.

use serde::{Deserialize, Serialize, Serializer};

use super::FitError;
use crate::landscape::{interpolate, ClickCostCurve};

pub(crate) const S_BOUNDS: (f64, f64) = (1e-6, 1e12);
pub(crate) const T_BOUNDS: (f64, f64) = (1e-6, 1e6);
pub(crate) const P_BOUNDS: (f64, f64) = (-50.0, 50.0);

const ALPHA_BOUNDS: (f64, f64) = (1e-12, 1e15);
const POWER_BETA_BOUNDS: (f64, f64) = (1e-6, 1.0);
const RATE_BOUNDS: (f64, f64) = (1e-9, 1e6);

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Logistic growth response `h(x) = s / (1 + exp(-t x + p)) - q` with the
/// vertical offset tied to the other three by `q = s / (1 + exp(p))`, so that
/// `h(0) = 0` holds for every parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SigmoidParams {
    /// Click scale.
    pub s: f64,
    /// Steepness per eCPM dollar.
    pub t: f64,
    /// Horizontal shift.
    pub p: f64,
}

impl Serialize for SigmoidParams {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Full {
            s: f64,
            t: f64,
            p: f64,
            q: f64,
        }
        Full {
            s: self.s,
            t: self.t,
            p: self.p,
            q: self.q(),
        }
        .serialize(serializer)
    }
}

impl SigmoidParams {
    pub fn new(s: f64, t: f64, p: f64) -> Result<Self, FitError> {
        let params = Self { s, t, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(FitError::InvalidParams(format!("s must be positive, got {}", self.s)));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(FitError::InvalidParams(format!("t must be positive, got {}", self.t)));
        }
        if !self.p.is_finite() {
            return Err(FitError::InvalidParams("p must be finite".into()));
        }
        Ok(())
    }

    /// Vertical offset.
    pub fn q(&self) -> f64 {
        self.s * logistic(-self.p)
    }

    /// Saturation level `s - q`.
    pub fn asymptote(&self) -> f64 {
        self.s * logistic(self.p)
    }

    fn sigma(&self, x: f64) -> f64 {
        logistic(self.t * x - self.p)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.s * (self.sigma(x) - logistic(-self.p))
    }

    /// `t s e / (1 + e)^2` with `e = exp(-t x + p)`.
    pub fn derivative(&self, x: f64) -> f64 {
        let sg = self.sigma(x);
        self.t * self.s * sg * (1.0 - sg)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let sg = self.sigma(x);
        self.t * self.t * self.s * sg * (1.0 - sg) * (1.0 - 2.0 * sg)
    }

    /// Partial derivatives of `h(x)` with respect to `(s, t, p)`.
    pub fn gradient(&self, x: f64) -> [f64; 3] {
        let sg = self.sigma(x);
        let s0 = logistic(-self.p);
        let slope = sg * (1.0 - sg);
        [sg - s0, self.s * slope * x, self.s * (s0 * (1.0 - s0) - slope)]
    }
}

/// `(alpha, beta)` of a two-parameter baseline family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoParams {
    pub alpha: f64,
    pub beta: f64,
}

/// A parametric family the damped Gauss-Newton solver can fit.
pub(crate) trait Family {
    fn n_params(&self) -> usize;
    fn value(&self, theta: &[f64], x: f64) -> f64;
    fn gradient(&self, theta: &[f64], x: f64, out: &mut [f64]);
    /// Clips `theta` into the feasible box.
    fn project(&self, theta: &mut [f64]);
    fn initial_guess(&self, curve: &ClickCostCurve) -> Vec<f64>;
}

/// Smallest cost at which the linearly interpolated clicks first reach
/// `level`, scanning left to right.
pub(crate) fn first_crossing(curve: &ClickCostCurve, level: f64) -> f64 {
    let pairs = &curve.pairs;
    if pairs[0].1 >= level {
        return pairs[0].0;
    }
    for w in pairs.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y1 >= level {
            if y1 == y0 {
                return x1;
            }
            return x0 + (level - y0) * (x1 - x0) / (y1 - y0);
        }
    }
    pairs[pairs.len() - 1].0
}

fn max_clicks(curve: &ClickCostCurve) -> f64 {
    curve.clicks().fold(0.0, f64::max)
}

fn clamp(v: &mut f64, (lo, hi): (f64, f64)) {
    *v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
}

pub(crate) struct SigmoidFamily;

impl Family for SigmoidFamily {
    fn n_params(&self) -> usize {
        3
    }

    fn value(&self, theta: &[f64], x: f64) -> f64 {
        SigmoidParams {
            s: theta[0],
            t: theta[1],
            p: theta[2],
        }
        .value(x)
    }

    fn gradient(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let g = SigmoidParams {
            s: theta[0],
            t: theta[1],
            p: theta[2],
        }
        .gradient(x);
        out.copy_from_slice(&g);
    }

    fn project(&self, theta: &mut [f64]) {
        clamp(&mut theta[0], S_BOUNDS);
        clamp(&mut theta[1], T_BOUNDS);
        clamp(&mut theta[2], P_BOUNDS);
    }

    fn initial_guess(&self, curve: &ClickCostCurve) -> Vec<f64> {
        let ymax = max_clicks(curve);
        let x_mid = first_crossing(curve, 0.5 * ymax);
        let x10 = first_crossing(curve, 0.1 * ymax);
        let x90 = first_crossing(curve, 0.9 * ymax);
        let spread = x90 - x10;
        let t = if spread > 0.0 {
            (4.0 / spread).max(1e-3)
        } else {
            let (lo, hi) = (curve.pairs[0].0, curve.pairs[curve.len() - 1].0);
            (4.0 / (hi - lo)).max(1e-3)
        };
        let mut theta = vec![1.05 * ymax, t, t * x_mid];
        self.project(&mut theta);
        theta
    }
}

/// `y = alpha x^beta`, `0 < beta <= 1`.
pub(crate) struct PowerFamily;

impl Family for PowerFamily {
    fn n_params(&self) -> usize {
        2
    }

    fn value(&self, theta: &[f64], x: f64) -> f64 {
        theta[0] * x.powf(theta[1])
    }

    fn gradient(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        if x <= 0.0 {
            out[0] = 0.0;
            out[1] = 0.0;
            return;
        }
        let xb = x.powf(theta[1]);
        out[0] = xb;
        out[1] = theta[0] * xb * x.ln();
    }

    fn project(&self, theta: &mut [f64]) {
        clamp(&mut theta[0], ALPHA_BOUNDS);
        clamp(&mut theta[1], POWER_BETA_BOUNDS);
    }

    fn initial_guess(&self, curve: &ClickCostCurve) -> Vec<f64> {
        // least squares on log y = log alpha + beta log x
        let logs: Vec<(f64, f64)> = curve
            .pairs
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0)
            .map(|&(x, y)| (x.ln(), y.ln()))
            .collect();
        let mut theta = if logs.len() >= 2 {
            let n = logs.len() as f64;
            let mx = logs.iter().map(|l| l.0).sum::<f64>() / n;
            let my = logs.iter().map(|l| l.1).sum::<f64>() / n;
            let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
            let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
            let beta = if sxx > 0.0 { sxy / sxx } else { 1.0 };
            let beta = beta.clamp(POWER_BETA_BOUNDS.0, POWER_BETA_BOUNDS.1);
            vec![(my - beta * mx).exp(), beta]
        } else {
            let (x, y) = curve.pairs[curve.len() - 1];
            vec![if x > 0.0 { y / x } else { 1.0 }, 1.0]
        };
        self.project(&mut theta);
        theta
    }
}

/// `y = alpha x / (1 + beta x)`, `beta > 0`.
pub(crate) struct MichaelisMentenFamily;

impl Family for MichaelisMentenFamily {
    fn n_params(&self) -> usize {
        2
    }

    fn value(&self, theta: &[f64], x: f64) -> f64 {
        theta[0] * x / (1.0 + theta[1] * x)
    }

    fn gradient(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let d = 1.0 + theta[1] * x;
        out[0] = x / d;
        out[1] = -theta[0] * x * x / (d * d);
    }

    fn project(&self, theta: &mut [f64]) {
        clamp(&mut theta[0], ALPHA_BOUNDS);
        clamp(&mut theta[1], RATE_BOUNDS);
    }

    fn initial_guess(&self, curve: &ClickCostCurve) -> Vec<f64> {
        let ymax = max_clicks(curve);
        let half = first_crossing(curve, 0.5 * ymax).max(1e-9);
        let beta = 1.0 / half;
        let mut theta = vec![1.2 * ymax * beta, beta];
        self.project(&mut theta);
        theta
    }
}

/// `y = alpha (1 - exp(-beta x))`, `beta > 0`.
pub(crate) struct NegExpFamily;

impl Family for NegExpFamily {
    fn n_params(&self) -> usize {
        2
    }

    fn value(&self, theta: &[f64], x: f64) -> f64 {
        -theta[0] * (-theta[1] * x).exp_m1()
    }

    fn gradient(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let e = (-theta[1] * x).exp();
        out[0] = -(-theta[1] * x).exp_m1();
        out[1] = theta[0] * x * e;
    }

    fn project(&self, theta: &mut [f64]) {
        clamp(&mut theta[0], ALPHA_BOUNDS);
        clamp(&mut theta[1], RATE_BOUNDS);
    }

    fn initial_guess(&self, curve: &ClickCostCurve) -> Vec<f64> {
        let ymax = max_clicks(curve);
        let half = first_crossing(curve, 0.5 * ymax).max(1e-9);
        let mut theta = vec![1.2 * ymax, std::f64::consts::LN_2 / half];
        self.project(&mut theta);
        theta
    }
}

/// Nearest stored cost; ties go to the lower cost.
pub(crate) fn nearest_neighbor(curve: &ClickCostCurve, x: f64) -> f64 {
    let mut best = curve.pairs[0];
    for &(c, y) in &curve.pairs[1..] {
        if (c - x).abs() < (best.0 - x).abs() {
            best = (c, y);
        }
    }
    best.1
}

pub(crate) fn linear_interp(curve: &ClickCostCurve, x: f64) -> Result<f64, FitError> {
    let lo = curve.pairs[0].0;
    let hi = curve.pairs[curve.len() - 1].0;
    if x < lo || x > hi {
        return Err(FitError::OutOfRange { x, lo, hi });
    }
    let xs: Vec<f64> = curve.costs().collect();
    let ys: Vec<f64> = curve.clicks().collect();
    Ok(interpolate(&xs, &ys, x))
}
