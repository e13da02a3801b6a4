//! Møller's scaled conjugate gradient.
//!
//! Each [`Scg::step`] is one iteration: a finite-difference Hessian-vector
//! product along the search direction, a Levenberg-Marquardt style scaling
//! `lambda` that keeps the local quadratic model positive definite, and a
//! trust test `Delta` comparing predicted and actual loss reduction. Rejected
//! steps leave the weights unchanged and raise `lambda`.

use serde::{Deserialize, Serialize};

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Loss and gradient at `w`.
    fn evaluate(&self, w: &[f64]) -> (f64, Vec<f64>);
    /// Loss only; override when it is cheaper than [`Objective::evaluate`].
    fn loss(&self, w: &[f64]) -> f64 {
        self.evaluate(w).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScgSettings {
    /// Finite-difference step numerator (`sigma_k = sigma / |p|`).
    pub sigma: f64,
    /// Initial scale parameter.
    pub lambda_init: f64,
}

impl Default for ScgSettings {
    fn default() -> Self {
        Self {
            sigma: 5e-5,
            lambda_init: 5e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Whether the trial point was accepted.
    pub accepted: bool,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Scg {
    settings: ScgSettings,
    w: Vec<f64>,
    loss: f64,
    grad: Vec<f64>,
    /// Negative gradient.
    r: Vec<f64>,
    /// Search direction.
    p: Vec<f64>,
    /// Curvature along `p` from the last successful step.
    s: Vec<f64>,
    delta: f64,
    lambda: f64,
    lambda_bar: f64,
    success: bool,
    iteration: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Scg {
    pub fn new<O: Objective + ?Sized>(objective: &O, w0: Vec<f64>, settings: ScgSettings) -> Self {
        assert_eq!(w0.len(), objective.dim());
        let (loss, grad) = objective.evaluate(&w0);
        let r: Vec<f64> = grad.iter().map(|g| -g).collect();
        Self {
            settings,
            p: r.clone(),
            s: vec![0.0; w0.len()],
            r,
            w: w0,
            loss,
            grad,
            delta: 0.0,
            lambda: settings.lambda_init,
            lambda_bar: 0.0,
            success: true,
            iteration: 0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_norm(&self) -> f64 {
        dot(&self.grad, &self.grad).sqrt()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Runs one iteration.
    pub fn step<O: Objective + ?Sized>(&mut self, objective: &O) -> StepReport {
        self.iteration += 1;
        let n = self.w.len();
        if dot(&self.p, &self.r) <= 0.0 {
            // not a descent direction: restart along the negative gradient
            self.p.copy_from_slice(&self.r);
            self.success = true;
            self.lambda_bar = 0.0;
        }
        let p_norm2 = dot(&self.p, &self.p);
        if p_norm2 == 0.0 {
            return self.report(false);
        }

        if self.success {
            let sigma_k = self.settings.sigma / p_norm2.sqrt();
            let probe: Vec<f64> = self.w.iter().zip(&self.p).map(|(w, p)| w + sigma_k * p).collect();
            let (_, g_probe) = objective.evaluate(&probe);
            for ((s, gp), g) in self.s.iter_mut().zip(&g_probe).zip(&self.grad) {
                *s = (gp - g) / sigma_k;
            }
            self.delta = dot(&self.p, &self.s);
        }

        // scale the curvature by the current lambda
        self.delta += (self.lambda - self.lambda_bar) * p_norm2;
        if self.delta <= 0.0 {
            // force positive definiteness
            self.lambda_bar = 2.0 * (self.lambda - self.delta / p_norm2);
            self.delta = -self.delta + self.lambda * p_norm2;
            self.lambda = self.lambda_bar;
        }

        let mu = dot(&self.p, &self.r);
        let alpha = mu / self.delta;
        let trial: Vec<f64> = self.w.iter().zip(&self.p).map(|(w, p)| w + alpha * p).collect();
        let trial_loss = objective.loss(&trial);
        // a non-finite trial counts as a bad prediction
        let comparison = if trial_loss.is_finite() {
            2.0 * self.delta * (self.loss - trial_loss) / (mu * mu)
        } else {
            -1.0
        };

        if comparison >= 0.0 {
            let (loss, grad) = objective.evaluate(&trial);
            let r_new: Vec<f64> = grad.iter().map(|g| -g).collect();
            self.w = trial;
            self.loss = loss;
            self.grad = grad;
            self.lambda_bar = 0.0;
            self.success = true;
            if self.iteration.is_multiple_of(n) {
                self.p.copy_from_slice(&r_new);
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &self.r)) / mu;
                for (p, r) in self.p.iter_mut().zip(&r_new) {
                    *p = r + beta * *p;
                }
            }
            self.r = r_new;
            if comparison >= 0.75 {
                self.lambda *= 0.25;
            }
        } else {
            self.lambda_bar = self.lambda;
            self.success = false;
        }

        if comparison < 0.25 {
            self.lambda += self.delta * (1.0 - comparison) / p_norm2;
        }
        self.report(self.success)
    }

    fn report(&self, accepted: bool) -> StepReport {
        StepReport {
            accepted,
            loss: self.loss,
            grad_norm: self.grad_norm(),
        }
    }
}
