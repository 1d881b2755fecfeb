//! Damped Gauss-Newton least squares.
//!
//! Each iteration solves `(JᵀJ + λ D) Δθ = Jᵀ Δy`, where `D` is the diagonal
//! of `JᵀJ` and `Δy` the residual vector `y - h(x; θ)`. Steps that raise the
//! sum of squared errors are rejected and the damping grows; accepted steps
//! shrink it. With `λ → 0` the update is plain Gauss-Newton.

use nalgebra::{DMatrix, DVector};

use super::models::Family;
use super::FitConfig;
use crate::landscape::ClickCostCurve;

const DAMPING_GROW: f64 = 10.0;
const DAMPING_SHRINK: f64 = 0.5;
const DAMPING_MAX: f64 = 1e20;

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub theta: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The residuals or Jacobian overflowed; `theta` is the last finite iterate.
    pub non_finite: bool,
}

fn sse<F: Family>(family: &F, theta: &[f64], curve: &ClickCostCurve) -> f64 {
    curve
        .pairs
        .iter()
        .map(|&(x, y)| (y - family.value(theta, x)).powi(2))
        .sum()
}

/// Stacks parameter gradients into an `n x K` matrix.
pub(crate) fn jacobian_matrix<F: Family>(family: &F, theta: &[f64], xs: &[f64]) -> DMatrix<f64> {
    let k = family.n_params();
    let mut j = DMatrix::zeros(xs.len(), k);
    let mut row = vec![0.0; k];
    for (r, &x) in xs.iter().enumerate() {
        family.gradient(theta, x, &mut row);
        for (c, v) in row.iter().enumerate() {
            j[(r, c)] = *v;
        }
    }
    j
}

pub(crate) fn minimize<F: Family>(family: &F, curve: &ClickCostCurve, theta0: Vec<f64>, config: &FitConfig) -> Outcome {
    let xs: Vec<f64> = curve.costs().collect();
    let ys = DVector::from_iterator(curve.len(), curve.clicks());
    let scale: f64 = ys.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);

    let mut theta = theta0;
    let mut current = sse(family, &theta, curve);
    let mut lambda = config.damping0;
    let mut iterations = 0;

    if !current.is_finite() {
        return Outcome {
            theta,
            sse: current,
            iterations,
            converged: false,
            non_finite: true,
        };
    }

    while iterations < config.max_iterations {
        iterations += 1;
        if current <= scale * 1e-28 {
            return done(theta, current, iterations, true);
        }

        let j = jacobian_matrix(family, &theta, &xs);
        let predicted = DVector::from_iterator(xs.len(), xs.iter().map(|&x| family.value(&theta, x)));
        let residual = &ys - predicted;
        if j.iter().any(|v| !v.is_finite()) || residual.iter().any(|v| !v.is_finite()) {
            return Outcome {
                theta,
                sse: current,
                iterations,
                converged: false,
                non_finite: true,
            };
        }
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * residual;
        let diag_floor = jtj.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;

        // inner loop: raise damping until the step goes downhill
        let mut accepted = None;
        while lambda <= DAMPING_MAX {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= DAMPING_GROW;
                continue;
            };
            let step = chol.solve(&jtr);
            let mut candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + d).collect();
            family.project(&mut candidate);
            let trial = sse(family, &candidate, curve);
            if trial.is_finite() && trial <= current {
                accepted = Some((candidate, trial));
                lambda = (lambda * DAMPING_SHRINK).max(1e-15);
                break;
            }
            lambda *= DAMPING_GROW;
        }

        let Some((candidate, trial)) = accepted else {
            // no downhill step at any damping: the iterate is stationary
            return done(theta, current, iterations, true);
        };
        let change = (current - trial).abs() / current;
        theta = candidate;
        current = trial;
        if change <= config.xi {
            return done(theta, current, iterations, true);
        }
    }
    done(theta, current, iterations, false)
}

fn done(theta: Vec<f64>, sse: f64, iterations: usize, converged: bool) -> Outcome {
    Outcome {
        theta,
        sse,
        iterations,
        converged,
        non_finite: false,
    }
}
