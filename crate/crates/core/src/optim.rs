//! ADAM in ascent convention plus the orthant-wise machinery that makes the
//! L1-penalized subspace updates produce exact zeros.
//!
//! The update of a row of `T` composes three steps: the sub-gradient fixes
//! up coordinates sitting at zero (shrink toward zero, dead-zone, or leave),
//! ADAM turns the sub-gradient into a step `d`, and the orthant projection
//! clamps any coordinate whose step would cross zero to exactly `0.0`.

use ndarray::{Array, Array2, Dimension, ShapeBuilder, Zip};

use crate::model::sign;
use crate::{Error, Result};

/// ADAM hyper-parameters. The learning rate is part of the state because the
/// posterior and subspace optimizers run with different rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub eta: f64,
}

impl AdamConfig {
    pub fn with_eta(eta: f64) -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            eta,
        }
    }
}

/// Moment accumulators for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<D: Dimension> {
    /// First moment.
    f: Array<f64, D>,
    /// Second moment; entries stay >= 0.
    s: Array<f64, D>,
    step_count: u64,
    pub cfg: AdamConfig,
}

impl<D: Dimension> AdamState<D> {
    pub fn new<Sh: ShapeBuilder<Dim = D>>(shape: Sh, cfg: AdamConfig) -> Self {
        let f: Array<f64, D> = Array::zeros(shape);
        let s = Array::zeros(f.raw_dim());
        AdamState {
            f,
            s,
            step_count: 0,
            cfg,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Advances the moments with `grad` and returns the ascent step
    /// `eta * f_hat / (sqrt(s_hat) + eps_hat)`; parameters move by `+d`.
    pub fn direction(&mut self, grad: &Array<f64, D>) -> Array<f64, D> {
        assert_eq!(grad.raw_dim(), self.f.raw_dim(), "gradient shape mismatch");
        self.step_count += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.step_count as i32);
        let bc2 = 1.0 - b2.powi(self.step_count as i32);
        let eta = self.cfg.eta;
        let eps_hat = self.cfg.eps_hat;
        let mut d = grad.clone();
        Zip::from(&mut d)
            .and(&mut self.f)
            .and(&mut self.s)
            .for_each(|d, f, s| {
                let g = *d;
                *f = b1 * *f + (1.0 - b1) * g;
                *s = b2 * *s + (1.0 - b2) * g * g;
                let f_hat = *f / bc1;
                let s_hat = *s / bc2;
                *d = eta * f_hat / (s_hat.sqrt() + eps_hat);
            });
        d
    }
}

/// Orthant-wise sub-gradient. `grad` is the gradient of the full regularized
/// objective (the `-omega sign(t)` term already active where `|t| > 0`); at
/// `t = 0` the penalty turns into the case analysis below.
pub fn l1_subgradient<D: Dimension>(
    t: &Array<f64, D>,
    grad: &Array<f64, D>,
    omega: f64,
) -> Array<f64, D> {
    let mut out = grad.clone();
    Zip::from(&mut out).and(t).for_each(|g, &t| {
        if t == 0.0 {
            if *g < -omega {
                *g += omega;
            } else if *g > omega {
                *g -= omega;
            } else {
                *g = 0.0;
            }
        }
    });
    out
}

/// Projects the stepped parameter back onto the orthant of `t`: coordinates
/// whose update would flip sign become exactly `0.0`.
pub fn orthant_project<D: Dimension>(t: &Array<f64, D>, d: &Array<f64, D>) -> Array<f64, D> {
    let mut out = t.clone();
    Zip::from(&mut out).and(d).for_each(|t, &d| {
        let stepped = *t + d;
        *t = if *t * stepped < 0.0 || stepped == 0.0 {
            0.0
        } else {
            stepped
        };
    });
    out
}

/// One orthant-wise ADAM update of `T` given the smooth (data-term) gradient.
/// Applies the L1 penalty, the sub-gradient fix-up at zero, the ADAM step and
/// the orthant projection, in that order. With `omega = 0` the objective is
/// smooth everywhere and the update is plain ADAM ascent.
pub fn update_t_rows(
    t: &mut Array2<f64>,
    smooth_grad: &Array2<f64>,
    state: &mut AdamState<ndarray::Ix2>,
    omega: f64,
) -> Result<()> {
    if let Some((idx, _)) = smooth_grad
        .indexed_iter()
        .find(|(_, g)| !g.is_finite())
    {
        return Err(Error::Numerical(format!(
            "non-finite T gradient at row {} col {}",
            idx.0, idx.1
        )));
    }
    if omega == 0.0 {
        let d = state.direction(smooth_grad);
        *t += &d;
        return Ok(());
    }
    let mut full = smooth_grad.clone();
    Zip::from(&mut full).and(&*t).for_each(|g, &t| *g -= omega * sign(t));
    let sub = l1_subgradient(t, &full, omega);
    let d = state.direction(&sub);
    let projected = orthant_project(t, &d);
    t.assign(&projected);
    Ok(())
}
