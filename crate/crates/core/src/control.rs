//! Control policies: the one-step model-based regulator plus the static and
//! proportional-thresholding baselines.
//!
//! The one-step regulator picks `u` minimizing `‖xRef − (A·x + B·u)‖²` over
//! the control box `U`: it solves the ridge-stabilized normal equations for
//! the unconstrained minimizer, projects it, then runs projected gradient
//! descent to the box-constrained optimum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::model::{self, BoxConstraints, ControlVector, LinearModel, ModelError, StateVector};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("{what} index {index} out of range (dimension {dim})")]
    IndexOutOfRange { what: &'static str, index: usize, dim: usize },
    #[error("proportional thresholding requires finite bounds on control component {index}")]
    UnboundedControl { index: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Hysteresis-band controller on a single state component driving a single
/// control component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PropThreshold {
    /// State component watched by the controller.
    pub component_index: usize,
    pub low_water: f64,
    pub high_water: f64,
    /// Step per epoch as a fraction of the controlled component's bound width.
    pub step_frac: f64,
    /// Control component moved by the controller.
    pub control_index: usize,
}

/// A control policy mapping sampled state to a bounded control vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlPolicy {
    /// Keep the previous control unchanged.
    None,
    /// Always emit the same control.
    Static { u: ControlVector },
    PropThreshold(PropThreshold),
    /// Regulate the one-step-ahead prediction toward a reference state.
    OneStep { model: LinearModel, x_ref: StateVector },
}

/// Diagnostics returned alongside the one-step control choice.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepDiagnostics {
    /// Set when `B` cannot move the state toward the reference at all.
    pub uncontrollable: bool,
    pub iterations: usize,
    /// Final objective value `‖xRef − (A·x + B·u)‖²`.
    pub objective: f64,
}

const ONE_STEP_RIDGE: f64 = 1e-9;
const PGD_MAX_ITERS: usize = 500;
const PGD_MOVE_TOL: f64 = 1e-10;

/// Box-constrained least-squares regulator: `argmin_{u ∈ U} ‖xRef − (A·x + B·u)‖²`.
pub fn one_step_control(
    model: &LinearModel,
    x: &StateVector,
    x_ref: &StateVector,
) -> Result<(ControlVector, OneStepDiagnostics), ControlError> {
    let n = model.state_dim();
    let m = model.control_dim();
    if x.dim() != n {
        return Err(ModelError::DimensionMismatch {
            operand: "state x",
            expected: n,
            actual: x.dim(),
        }
        .into());
    }
    if x_ref.dim() != n {
        return Err(ModelError::DimensionMismatch {
            operand: "reference xRef",
            expected: n,
            actual: x_ref.dim(),
        }
        .into());
    }
    let bounds = model.control_bounds();
    let b = model.b();

    // Residual the control must cancel: r = xRef − A·x.
    let ax = model.a().mul_vec(x.as_slice());
    let r: Vec<f64> = x_ref.as_slice().iter().zip(&ax).map(|(xr, a)| xr - a).collect();

    // Unconstrained minimizer from (BᵀB + ridge·I) u = Bᵀ r. The minimum-norm
    // solution is recovered in the rank-deficient case thanks to the ridge.
    let mut gram = b.transpose().mul(b);
    gram.add_diagonal(ONE_STEP_RIDGE);
    let rhs = b.mul_vec_transposed(&r);
    let unconstrained = gram
        .lu()
        .map(|f| f.solve(&rhs))
        .unwrap_or_else(|_| vec![0.0; m]);

    let lipschitz = linalg::largest_eigenvalue_spd(
        |v| b.mul_vec_transposed(&b.mul_vec(v)),
        m,
        1000,
        1e-10,
    );

    let mut u = model::project(&unconstrained, bounds)?;
    let mut iterations = 0;
    if lipschitz > 1e-30 {
        let step = 1.0 / lipschitz;
        for _ in 0..PGD_MAX_ITERS {
            iterations += 1;
            let bu = b.mul_vec(&u);
            let grad: Vec<f64> = {
                let diff: Vec<f64> = bu.iter().zip(&r).map(|(p, rr)| p - rr).collect();
                b.mul_vec_transposed(&diff)
            };
            let candidate: Vec<f64> =
                u.iter().zip(&grad).map(|(ui, g)| ui - step * g).collect();
            let next = model::project(&candidate, bounds)?;
            let movement = next
                .iter()
                .zip(&u)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            u = next;
            if movement < PGD_MOVE_TOL {
                break;
            }
        }
    }

    let bu = b.mul_vec(&u);
    let objective: f64 = r.iter().zip(&bu).map(|(rr, p)| (rr - p) * (rr - p)).sum();
    let residual_norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diagnostics = OneStepDiagnostics {
        uncontrollable: lipschitz <= 1e-30 && residual_norm > 1e-12,
        iterations,
        objective,
    };
    Ok((ControlVector::new(u)?, diagnostics))
}

/// Hysteresis step: raise the controlled component by
/// `stepFrac·(upper − lower)` above the high watermark, lower it below the
/// low watermark, keep it inside the dead band; result projected into bounds.
pub fn prop_threshold_control(
    policy: &PropThreshold,
    x: &StateVector,
    u_prev: &ControlVector,
    bounds: &BoxConstraints,
) -> Result<ControlVector, ControlError> {
    if policy.component_index >= x.dim() {
        return Err(ControlError::IndexOutOfRange {
            what: "state component",
            index: policy.component_index,
            dim: x.dim(),
        });
    }
    if policy.control_index >= bounds.dim() {
        return Err(ControlError::IndexOutOfRange {
            what: "control component",
            index: policy.control_index,
            dim: bounds.dim(),
        });
    }
    if u_prev.dim() != bounds.dim() {
        return Err(ModelError::DimensionMismatch {
            operand: "previous control",
            expected: bounds.dim(),
            actual: u_prev.dim(),
        }
        .into());
    }
    let lo = bounds.lower()[policy.control_index];
    let hi = bounds.upper()[policy.control_index];
    if !lo.is_finite() || !hi.is_finite() {
        return Err(ControlError::UnboundedControl { index: policy.control_index });
    }
    let delta = policy.step_frac * (hi - lo);
    let watched = x.as_slice()[policy.component_index];
    let mut u = u_prev.as_slice().to_vec();
    if watched > policy.high_water {
        u[policy.control_index] += delta;
    } else if watched < policy.low_water {
        u[policy.control_index] -= delta;
    }
    Ok(ControlVector::new(model::project(&u, bounds)?)?)
}

/// Dispatch to the policy kind; the result always satisfies `bounds`.
pub fn apply_policy(
    policy: &ControlPolicy,
    x: &StateVector,
    u_prev: &ControlVector,
    bounds: &BoxConstraints,
) -> Result<ControlVector, ControlError> {
    match policy {
        ControlPolicy::None => Ok(u_prev.clone()),
        ControlPolicy::Static { u } => Ok(ControlVector::new(model::project(u.as_slice(), bounds)?)?),
        ControlPolicy::PropThreshold(p) => prop_threshold_control(p, x, u_prev, bounds),
        ControlPolicy::OneStep { model, x_ref } => {
            let (u, _) = one_step_control(model, x, x_ref)?;
            Ok(u)
        }
    }
}
