//! Response-curve fitting: the constrained logistic growth model, three
//! saturating or non-saturating baselines, and two non-parametric predictors
//! used only for comparison.

mod lm;
mod models;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::ClickCostCurve;
use models::{
    linear_interp, nearest_neighbor, Family, MichaelisMentenFamily, NegExpFamily, PowerFamily, SigmoidFamily,
};

pub use models::{SigmoidParams, TwoParams};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("too few points: {found}, need at least {need}")]
    TooFewPoints { found: usize, need: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("initial guess produced non-finite residuals")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("query {x} outside the observed cost range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("{0} has no analytic derivative")]
    NoDerivative(ModelKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sigmoid,
    Power,
    MichaelisMenten,
    NegExp,
    NearestNeighbor,
    LinearInterp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::NearestNeighbor,
        ModelKind::LinearInterp,
        ModelKind::Power,
        ModelKind::MichaelisMenten,
        ModelKind::NegExp,
        ModelKind::Sigmoid,
    ];

    /// Short name used on the command line and in reports.
    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::Sigmoid => "sigmoid",
            ModelKind::Power => "power",
            ModelKind::MichaelisMenten => "mm",
            ModelKind::NegExp => "negexp",
            ModelKind::NearestNeighbor => "nns",
            ModelKind::LinearInterp => "li",
        }
    }

    /// Number of free parameters fitted by least squares.
    pub fn free_params(self) -> usize {
        match self {
            ModelKind::Sigmoid => 3,
            ModelKind::Power | ModelKind::MichaelisMenten | ModelKind::NegExp => 2,
            ModelKind::NearestNeighbor => 0,
            ModelKind::LinearInterp => 1,
        }
    }

    pub fn is_parametric(self) -> bool {
        !matches!(self, ModelKind::NearestNeighbor | ModelKind::LinearInterp)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ModelKind::Sigmoid),
            "power" => Ok(ModelKind::Power),
            "mm" | "michaelis-menten" | "michaelis_menten" => Ok(ModelKind::MichaelisMenten),
            "negexp" | "exp" | "neg_exp" => Ok(ModelKind::NegExp),
            "nns" | "nearest" | "nearest_neighbor" => Ok(ModelKind::NearestNeighbor),
            "li" | "linear" | "linear_interp" => Ok(ModelKind::LinearInterp),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

/// A fitted (or stored) click-vs-cost predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Sigmoid(SigmoidParams),
    Power(TwoParams),
    MichaelisMenten(TwoParams),
    NegExp(TwoParams),
    NearestNeighbor(ClickCostCurve),
    LinearInterp(ClickCostCurve),
}

fn check_two(params: &TwoParams, kind: ModelKind) -> Result<(), FitError> {
    let TwoParams { alpha, beta } = *params;
    let ok =
        alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0 && (kind != ModelKind::Power || beta <= 1.0);
    if ok {
        Ok(())
    } else {
        Err(FitError::InvalidParams(format!("{kind}: alpha={alpha}, beta={beta}")))
    }
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Sigmoid(_) => ModelKind::Sigmoid,
            Model::Power(_) => ModelKind::Power,
            Model::MichaelisMenten(_) => ModelKind::MichaelisMenten,
            Model::NegExp(_) => ModelKind::NegExp,
            Model::NearestNeighbor(_) => ModelKind::NearestNeighbor,
            Model::LinearInterp(_) => ModelKind::LinearInterp,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        match self {
            Model::Sigmoid(p) => p.validate(),
            Model::Power(p) | Model::MichaelisMenten(p) | Model::NegExp(p) => check_two(p, self.kind()),
            Model::NearestNeighbor(c) | Model::LinearInterp(c) => {
                if c.is_empty() {
                    Err(FitError::InvalidParams("empty curve".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn check_x(x: f64) -> Result<(), FitError> {
        if x.is_finite() && x >= 0.0 {
            Ok(())
        } else {
            Err(FitError::InvalidParams(format!("cost must be >= 0, got {x}")))
        }
    }

    /// Predicted clicks at eCPM cost `x`.
    pub fn eval(&self, x: f64) -> Result<f64, FitError> {
        Self::check_x(x)?;
        self.validate()?;
        Ok(match self {
            Model::Sigmoid(p) => p.value(x),
            Model::Power(p) => PowerFamily.value(&[p.alpha, p.beta], x),
            Model::MichaelisMenten(p) => MichaelisMentenFamily.value(&[p.alpha, p.beta], x),
            Model::NegExp(p) => NegExpFamily.value(&[p.alpha, p.beta], x),
            Model::NearestNeighbor(c) => nearest_neighbor(c, x),
            Model::LinearInterp(c) => linear_interp(c, x)?,
        })
    }

    /// Analytic `d clicks / d cost` for the parametric kinds.
    pub fn derivative(&self, x: f64) -> Result<f64, FitError> {
        Self::check_x(x)?;
        self.validate()?;
        match self {
            Model::Sigmoid(p) => Ok(p.derivative(x)),
            Model::Power(p) => Ok(if x == 0.0 {
                // infinite slope at the origin when beta < 1
                if p.beta < 1.0 {
                    f64::INFINITY
                } else {
                    p.alpha
                }
            } else {
                p.alpha * p.beta * x.powf(p.beta - 1.0)
            }),
            Model::MichaelisMenten(p) => Ok(p.alpha / (1.0 + p.beta * x).powi(2)),
            Model::NegExp(p) => Ok(p.alpha * p.beta * (-p.beta * x).exp()),
            Model::NearestNeighbor(_) | Model::LinearInterp(_) => Err(FitError::NoDerivative(self.kind())),
        }
    }

    pub fn as_sigmoid(&self) -> Option<&SigmoidParams> {
        match self {
            Model::Sigmoid(p) => Some(p),
            _ => None,
        }
    }
}

/// Iteration controls for least-squares fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Stop once the relative change in squared error falls to this level.
    pub xi: f64,
    pub max_iterations: usize,
    pub damping0: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            xi: 1e-5,
            max_iterations: 200,
            damping0: 1e-3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(FitError::InvalidParams("xi must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(FitError::InvalidParams("max_iterations must be >= 1".into()));
        }
        if !(self.damping0 > 0.0 && self.damping0.is_finite()) {
            return Err(FitError::InvalidParams("damping0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: Model,
    /// Sum of squared residuals on the fitted points.
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_points: usize,
}

impl FitResult {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum ParamsView<'a> {
    Sigmoid(&'a SigmoidParams),
    Two(&'a TwoParams),
    Points { costs: Vec<f64>, clicks: Vec<f64> },
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            kind: ModelKind,
            params: ParamsView<'a>,
            sse: f64,
            iterations: usize,
            converged: bool,
            n_points: usize,
        }
        let params = match &self.model {
            Model::Sigmoid(p) => ParamsView::Sigmoid(p),
            Model::Power(p) | Model::MichaelisMenten(p) | Model::NegExp(p) => ParamsView::Two(p),
            Model::NearestNeighbor(c) | Model::LinearInterp(c) => ParamsView::Points {
                costs: c.costs().collect(),
                clicks: c.clicks().collect(),
            },
        };
        View {
            kind: self.kind(),
            params,
            sse: self.sse,
            iterations: self.iterations,
            converged: self.converged,
            n_points: self.n_points,
        }
        .serialize(serializer)
    }
}

/// Analytic Jacobian of the logistic model with respect to `(s, t, p)`.
pub fn jacobian(params: &SigmoidParams, xs: &[f64]) -> Result<DMatrix<f64>, FitError> {
    params.validate()?;
    let theta = [params.s, params.t, params.p];
    Ok(lm::jacobian_matrix(&SigmoidFamily, &theta, xs))
}

fn check_data(kind: ModelKind, curve: &ClickCostCurve) -> Result<(), FitError> {
    let need = (kind.free_params() + 1).max(1);
    if curve.len() < need {
        return Err(FitError::TooFewPoints {
            found: curve.len(),
            need,
        });
    }
    if curve
        .pairs
        .iter()
        .any(|&(x, y)| !(x.is_finite() && x >= 0.0 && y.is_finite() && y >= 0.0))
    {
        return Err(FitError::InvalidParams(
            "costs and clicks must be finite and non-negative".into(),
        ));
    }
    if curve.pairs.len() >= 2 {
        let (x0, y0) = curve.pairs[0];
        if curve.pairs.iter().all(|p| p.0 == x0) {
            return Err(FitError::DegenerateData("all costs identical".into()));
        }
        if kind.is_parametric() && curve.pairs.iter().all(|p| p.1 == y0) {
            return Err(FitError::DegenerateData("all clicks identical".into()));
        }
    }
    Ok(())
}

fn run<F: Family>(family: &F, curve: &ClickCostCurve, config: &FitConfig) -> Result<lm::Outcome, FitError> {
    let theta0 = family.initial_guess(curve);
    let outcome = lm::minimize(family, curve, theta0, config);
    if outcome.non_finite && outcome.iterations == 0 {
        return Err(FitError::NonFinite);
    }
    Ok(outcome)
}

/// Fits `kind` to the curve. Non-parametric kinds store the data.
pub fn fit(kind: ModelKind, curve: &ClickCostCurve, config: &FitConfig) -> Result<FitResult, FitError> {
    config.validate()?;
    check_data(kind, curve)?;
    let n_points = curve.len();
    let two = |o: &lm::Outcome| TwoParams {
        alpha: o.theta[0],
        beta: o.theta[1],
    };
    let (model, outcome) = match kind {
        ModelKind::Sigmoid => {
            let o = run(&SigmoidFamily, curve, config)?;
            let p = SigmoidParams {
                s: o.theta[0],
                t: o.theta[1],
                p: o.theta[2],
            };
            (Model::Sigmoid(p), o)
        }
        ModelKind::Power => {
            let o = run(&PowerFamily, curve, config)?;
            (Model::Power(two(&o)), o)
        }
        ModelKind::MichaelisMenten => {
            let o = run(&MichaelisMentenFamily, curve, config)?;
            (Model::MichaelisMenten(two(&o)), o)
        }
        ModelKind::NegExp => {
            let o = run(&NegExpFamily, curve, config)?;
            (Model::NegExp(two(&o)), o)
        }
        ModelKind::NearestNeighbor | ModelKind::LinearInterp => {
            let model = if kind == ModelKind::NearestNeighbor {
                Model::NearestNeighbor(curve.clone())
            } else {
                Model::LinearInterp(curve.clone())
            };
            return Ok(FitResult {
                model,
                sse: 0.0,
                iterations: 0,
                converged: true,
                n_points,
            });
        }
    };
    Ok(FitResult {
        model,
        sse: outcome.sse,
        iterations: outcome.iterations,
        converged: outcome.converged,
        n_points,
    })
}

/// Non-parametric prediction from the stored curve.
pub fn predict_baseline(kind: ModelKind, curve: &ClickCostCurve, x: f64) -> Result<f64, FitError> {
    if curve.is_empty() {
        return Err(FitError::TooFewPoints { found: 0, need: 1 });
    }
    match kind {
        ModelKind::NearestNeighbor => Ok(nearest_neighbor(curve, x)),
        ModelKind::LinearInterp => linear_interp(curve, x),
        other => Err(FitError::InvalidParams(format!(
            "{other} is not a non-parametric baseline"
        ))),
    }
}

#[cfg(test)]
mod tests;
