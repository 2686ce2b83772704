//! Geodesic gradient descent on 𝕊ⁿ₊₊ with the affine-invariant metric.
//!
//! With `W = X^{1/2} ∇F(X) X^{1/2}` the whitened Euclidean gradient, one
//! step moves along the geodesic `X ← X^{1/2} exp(−η W) X^{1/2}` and the
//! step length is chosen by Armijo backtracking on `F`. The Riemannian
//! gradient norm is `‖W‖_F`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::{sym_exp, SpdMatrix, SymMatrix};

pub trait SpdObjective: Sync {
    fn value(&self, x: &SpdMatrix) -> Result<f64>;
    fn euclidean_gradient(&self, x: &SpdMatrix) -> Result<SymMatrix>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub step: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Values below this floor with a non-vanishing gradient count as divergence.
    pub divergence_floor: f64,
    /// Iterates more ill-conditioned than this count as divergence.
    pub max_condition: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            step: 1.0,
            max_iter: 10_000,
            grad_tol: 1e-8,
            backtrack: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
            divergence_floor: -50.0,
            max_condition: 1e10,
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step > 0.0
            && self.max_iter > 0
            && self.grad_tol > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.max_condition > 1.0;
        if !ok {
            return Err(Error::Usage(format!("invalid descent options: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Clone, Debug, Serialize)]
pub struct DescentOutcome {
    pub x: SpdMatrix,
    pub value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub status: DescentStatus,
    /// Objective value after each accepted step, starting with `F(X0)`.
    pub history: Vec<f64>,
}

/// Whitened gradient `X^{1/2} ∇F X^{1/2}` and its Frobenius norm.
pub fn whitened_gradient(obj: &dyn SpdObjective, x: &SpdMatrix) -> Result<(SymMatrix, f64)> {
    let g = obj.euclidean_gradient(x)?;
    let w = x.sqrt().as_sym().sandwich(&g);
    let norm = w.frobenius_norm();
    Ok((w, norm))
}

/// `X^{1/2} exp(−η W) X^{1/2}`.
pub fn geodesic_step(x: &SpdMatrix, w: &SymMatrix, eta: f64) -> Result<SpdMatrix> {
    let e = sym_exp(&w.scale(-eta))?;
    SpdMatrix::new(x.sqrt().as_sym().sandwich(e.as_sym()))
}

pub fn geodesic_descent(obj: &dyn SpdObjective, x0: &SpdMatrix, opts: &DescentOptions) -> Result<DescentOutcome> {
    opts.validate()?;
    let mut x = x0.clone();
    let mut value = obj.value(&x)?;
    let mut history = vec![value];
    let (mut w, mut gnorm) = whitened_gradient(obj, &x)?;

    for iter in 0..opts.max_iter {
        if gnorm <= opts.grad_tol {
            return Ok(DescentOutcome {
                x,
                value,
                iterations: iter,
                gradient_norm: gnorm,
                status: DescentStatus::Converged,
                history,
            });
        }
        if value < opts.divergence_floor || x.condition_number() > opts.max_condition {
            return Ok(DescentOutcome {
                x,
                value,
                iterations: iter,
                gradient_norm: gnorm,
                status: DescentStatus::Diverged,
                history,
            });
        }
        // Below this predicted decrease, rounding in F dominates and the
        // Armijo test cannot discriminate; accept a non-increase up to it.
        let slack = 1e-13 * (1.0 + value.abs());
        let mut eta = opts.step;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            if let Ok(trial) = geodesic_step(&x, &w, eta) {
                if let Ok(fv) = obj.value(&trial) {
                    let decrease = opts.armijo * eta * gnorm * gnorm;
                    if fv <= value - decrease || (decrease < slack && fv <= value + slack) {
                        accepted = Some((trial, fv));
                        break;
                    }
                }
            }
            eta *= opts.backtrack;
        }
        let Some((next, fv)) = accepted else {
            return Err(Error::Stagnation {
                iterations: iter,
                best_value: value,
                best: Box::new(x),
            });
        };
        x = next;
        value = fv;
        history.push(value);
        (w, gnorm) = whitened_gradient(obj, &x)?;
    }
    let status = if gnorm <= opts.grad_tol {
        DescentStatus::Converged
    } else {
        DescentStatus::MaxIterations
    };
    Ok(DescentOutcome {
        x,
        value,
        iterations: opts.max_iter,
        gradient_norm: gnorm,
        status,
        history,
    })
}
