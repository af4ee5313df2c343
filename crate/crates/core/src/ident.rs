//! System identification: least-squares fit of the plant matrices `A`, `B`
//! from a recorded `(x, u)` trajectory.
//!
//! The estimator regresses `x(t+1)` against `[x(t); u(t)]` over one-step
//! transitions, solving the (optionally ridge-regularized) normal equations.
//! Persistence of excitation is the caller's responsibility; the report
//! carries the regressor condition number as the diagnostic instead of
//! failing silently.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::model::{self, BoxConstraints, ControlVector, LinearModel, ModelError, StateVector};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum IdentError {
    #[error("insufficient data: need at least {required} epochs for n={n}, m={m}, got {actual}")]
    InsufficientData { required: usize, actual: usize, n: usize, m: usize },
    #[error("regressors are rank-deficient with ridge == 0; retry with a positive ridge (pivot {pivot:.3e} at column {col})")]
    RankDeficient { col: usize, pivot: f64 },
    #[error("epoch {index}: t must increase by exactly 1 (got {got} after {prev})")]
    NonConsecutiveEpochs { index: usize, prev: i64, got: i64 },
    #[error("epoch {index}: {what} has dimension {actual}, expected {expected}")]
    InconsistentDimension { index: usize, what: &'static str, expected: usize, actual: usize },
    #[error("epoch {index}: {what} has a non-finite component")]
    NonFinite { index: usize, what: &'static str },
    #[error("trace has no epochs")]
    EmptyTrace,
    #[error("ridge must be finite and >= 0, got {0}")]
    BadRidge(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One sampled control epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentEpoch {
    pub t: i64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// A contiguous `(x, u)` trajectory with epoch indices increasing by one.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentTrace {
    epochs: Vec<IdentEpoch>,
}

impl IdentTrace {
    pub fn new(epochs: Vec<IdentEpoch>) -> Result<Self, IdentError> {
        if epochs.is_empty() {
            return Err(IdentError::EmptyTrace);
        }
        let n = epochs[0].x.len();
        let m = epochs[0].u.len();
        for (i, e) in epochs.iter().enumerate() {
            if e.x.len() != n {
                return Err(IdentError::InconsistentDimension {
                    index: i,
                    what: "x",
                    expected: n,
                    actual: e.x.len(),
                });
            }
            if e.u.len() != m {
                return Err(IdentError::InconsistentDimension {
                    index: i,
                    what: "u",
                    expected: m,
                    actual: e.u.len(),
                });
            }
            if e.x.iter().any(|v| !v.is_finite()) {
                return Err(IdentError::NonFinite { index: i, what: "x" });
            }
            if e.u.iter().any(|v| !v.is_finite()) {
                return Err(IdentError::NonFinite { index: i, what: "u" });
            }
            if i > 0 {
                let prev = epochs[i - 1].t;
                if e.t != prev + 1 {
                    return Err(IdentError::NonConsecutiveEpochs { index: i, prev, got: e.t });
                }
            }
        }
        Ok(Self { epochs })
    }

    pub fn epochs(&self) -> &[IdentEpoch] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.epochs[0].x.len()
    }

    pub fn control_dim(&self) -> usize {
        self.epochs[0].u.len()
    }
}

/// Result of a fit: the model plus residual and conditioning diagnostics.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FitReport {
    pub model: LinearModel,
    /// Per-state-component RMS of the one-step prediction residual.
    pub residual_rms: Vec<f64>,
    /// Ratio of largest to smallest singular value of the regressor matrix;
    /// infinite when the regressors are singular.
    pub condition_number: f64,
    pub spectral_radius_a: f64,
}

/// Fit `[A B]` minimizing `Σₜ ‖x(t+1) − A x(t) − B u(t)‖² + ridge·‖[A B]‖²_F`
/// via the normal equations.
///
/// `state_bounds` and `control_bounds` are attached to the fitted model but
/// do not constrain the regression.
pub fn fit_least_squares(
    trace: &IdentTrace,
    state_bounds: BoxConstraints,
    control_bounds: BoxConstraints,
    ridge: f64,
) -> Result<FitReport, IdentError> {
    if !ridge.is_finite() || ridge < 0.0 {
        return Err(IdentError::BadRidge(ridge));
    }
    let n = trace.state_dim();
    let m = trace.control_dim();
    let required = n + m + 1;
    if trace.len() < required {
        return Err(IdentError::InsufficientData { required, actual: trace.len(), n, m });
    }
    let d = n + m;
    let transitions = trace.len() - 1;

    // Normal matrix M = Σ z zᵀ and cross-products C = Σ x(t+1) zᵀ,
    // z = [x(t); u(t)].
    let mut normal = Matrix::zeros(d, d);
    let mut cross = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for w in trace.epochs.windows(2) {
        z[..n].copy_from_slice(&w[0].x);
        z[n..].copy_from_slice(&w[0].u);
        for i in 0..d {
            for j in 0..d {
                let v = normal.get(i, j) + z[i] * z[j];
                normal.set(i, j, v);
            }
        }
        for i in 0..n {
            for j in 0..d {
                let v = cross.get(i, j) + w[1].x[i] * z[j];
                cross.set(i, j, v);
            }
        }
    }

    let mut regularized = normal.clone();
    regularized.add_diagonal(ridge);
    let factors = match regularized.lu() {
        Ok(f) => f,
        Err(linalg::LinalgError::Singular { col, pivot }) => {
            return Err(IdentError::RankDeficient { col, pivot })
        }
        Err(_) => unreachable!("square by construction"),
    };

    // Θᵢ solves (M + ridge·I) θ = cᵢ for each state component i.
    let mut theta = Matrix::zeros(n, d);
    for i in 0..n {
        let sol = factors.solve(cross.row(i));
        for (j, v) in sol.iter().enumerate() {
            theta.set(i, j, *v);
        }
    }

    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, theta.get(i, j));
        }
        for j in 0..m {
            b.set(i, j, theta.get(i, n + j));
        }
    }

    let mut sq_err = vec![0.0; n];
    for w in trace.epochs.windows(2) {
        z[..n].copy_from_slice(&w[0].x);
        z[n..].copy_from_slice(&w[0].u);
        for (i, e) in sq_err.iter_mut().enumerate() {
            let pred: f64 = theta.row(i).iter().zip(&z).map(|(t, zz)| t * zz).sum();
            let r = w[1].x[i] - pred;
            *e += r * r;
        }
    }
    let residual_rms: Vec<f64> =
        sq_err.iter().map(|e| (e / transitions as f64).sqrt()).collect();

    let condition_number = regressor_condition_number(&normal);
    let spectral_radius_a = model::spectral_radius(&a)?;
    let model = LinearModel::new(a, b, state_bounds, control_bounds)?;

    Ok(FitReport { model, residual_rms, condition_number, spectral_radius_a })
}

/// Condition number σ_max/σ_min of the regressor matrix, estimated from its
/// normal matrix `M = ZᵀZ`: power iteration gives λ_max(M) = σ_max² and
/// inverse power iteration (solving against the LU factors) gives
/// 1/λ_min(M).
fn regressor_condition_number(normal: &Matrix) -> f64 {
    let d = normal.rows();
    let lambda_max = linalg::largest_eigenvalue_spd(|v| normal.mul_vec(v), d, 1000, 1e-10);
    if lambda_max == 0.0 {
        return f64::INFINITY;
    }
    match normal.lu() {
        Ok(factors) => {
            let inv_lambda_min =
                linalg::largest_eigenvalue_spd(|v| factors.solve(v), d, 1000, 1e-10);
            (lambda_max * inv_lambda_min).sqrt()
        }
        Err(_) => f64::INFINITY,
    }
}

/// Roll the model forward from `x0` under the given control sequence, adding
/// i.i.d. zero-mean Gaussian noise of standard deviation `noise_sigma` to
/// every state component per epoch.
///
/// Returns `controls.len() + 1` epochs; the final epoch carries a zero
/// placeholder control that is never applied. Deterministic for a fixed
/// seed (stream name `rollout`).
pub fn simulate_rollout(
    model: &LinearModel,
    x0: &StateVector,
    controls: &[ControlVector],
    noise_sigma: f64,
    seed: u64,
) -> Result<IdentTrace, IdentError> {
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(IdentError::BadRidge(noise_sigma));
    }
    let mut rng = SplitMix64::stream(seed, "rollout");
    let m = model.control_dim();
    let mut epochs = Vec::with_capacity(controls.len() + 1);
    let mut x = x0.clone();
    for (t, u) in controls.iter().enumerate() {
        epochs.push(IdentEpoch { t: t as i64, x: x.as_slice().to_vec(), u: u.as_slice().to_vec() });
        let mut next = model::step(model, &x, u)?.into_vec();
        if noise_sigma > 0.0 {
            for v in &mut next {
                *v += noise_sigma * rng.next_normal();
            }
        }
        x = StateVector::new(next)?;
    }
    epochs.push(IdentEpoch {
        t: controls.len() as i64,
        x: x.as_slice().to_vec(),
        u: vec![0.0; m],
    });
    IdentTrace::new(epochs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn plant(a: Matrix, b: Matrix) -> LinearModel {
        let n = a.rows();
        let m = b.cols();
        LinearModel::new(a, b, BoxConstraints::unbounded(n), BoxConstraints::unbounded(m)).unwrap()
    }

    fn uniform_controls(seed: u64, count: usize, m: usize) -> Vec<ControlVector> {
        let mut rng = SplitMix64::stream(seed, "excitation");
        (0..count)
            .map(|_| {
                ControlVector::new((0..m).map(|_| 2.0 * rng.next_f64() - 1.0).collect()).unwrap()
            })
            .collect()
    }

    fn fit(trace: &IdentTrace, ridge: f64) -> Result<FitReport, IdentError> {
        let n = trace.state_dim();
        let m = trace.control_dim();
        fit_least_squares(trace, BoxConstraints::unbounded(n), BoxConstraints::unbounded(m), ridge)
    }

    #[test]
    fn noiseless_roundtrip_recovers_generating_matrices() {
        let a = mat(&[&[0.5, 0.0], &[0.1, 0.9]]);
        let b = mat(&[&[1.0], &[0.0]]);
        let model = plant(a.clone(), b.clone());
        let x0 = StateVector::new(vec![1.0, -1.0]).unwrap();
        let controls = uniform_controls(1, 200, 1);
        let trace = simulate_rollout(&model, &x0, &controls, 0.0, 1).unwrap();
        let report = fit(&trace, 0.0).unwrap();
        assert!(report.model.a().frobenius_distance(&a) < 1e-8);
        assert!(report.model.b().frobenius_distance(&b) < 1e-8);
        assert!(report.residual_rms.iter().all(|&r| r < 1e-8));
    }

    #[test]
    fn noisy_recovery_over_ten_seeds() {
        let a = mat(&[&[0.5, 0.0], &[0.1, 0.9]]);
        let b = mat(&[&[1.0], &[0.0]]);
        let model = plant(a.clone(), b.clone());
        let x0 = StateVector::new(vec![0.0, 0.0]).unwrap();
        let mut total = 0.0;
        for seed in 0..10u64 {
            let controls = uniform_controls(seed + 100, 1000, 1);
            let trace = simulate_rollout(&model, &x0, &controls, 0.01, seed).unwrap();
            let report = fit(&trace, 0.0).unwrap();
            let err = report.model.a().frobenius_distance(&a).hypot(
                report.model.b().frobenius_distance(&b),
            );
            total += err;
        }
        assert!(total / 10.0 < 5e-2, "mean frobenius error {}", total / 10.0);
    }

    #[test]
    fn unexcited_input_is_rank_deficient_without_ridge() {
        // u ≡ 0 and x released from e₁ excites only the first diagonal entry.
        let a = mat(&[&[0.5, 0.0], &[0.0, 0.8]]);
        let b = mat(&[&[1.0], &[1.0]]);
        let model = plant(a, b);
        let x0 = StateVector::new(vec![1.0, 0.0]).unwrap();
        let controls: Vec<ControlVector> =
            (0..50).map(|_| ControlVector::new(vec![0.0]).unwrap()).collect();
        let trace = simulate_rollout(&model, &x0, &controls, 0.0, 3).unwrap();

        let err = fit(&trace, 0.0).unwrap_err();
        assert!(matches!(err, IdentError::RankDeficient { .. }));
        assert!(err.to_string().contains("ridge"));

        // With a small ridge the excited diagonal entry is still recovered.
        let report = fit(&trace, 1e-9).unwrap();
        assert!((report.model.a().get(0, 0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn insufficient_data_is_rejected() {
        let epochs: Vec<IdentEpoch> = (0..3)
            .map(|t| IdentEpoch { t, x: vec![0.0, 0.0], u: vec![0.0] })
            .collect();
        let trace = IdentTrace::new(epochs).unwrap();
        assert!(matches!(fit(&trace, 0.0), Err(IdentError::InsufficientData { .. })));
    }

    #[test]
    fn rollout_identity_plant_is_constant() {
        let model = plant(Matrix::identity(2), Matrix::zeros(2, 1));
        let x0 = StateVector::new(vec![4.0, -2.0]).unwrap();
        let controls: Vec<ControlVector> =
            (0..10).map(|_| ControlVector::new(vec![0.0]).unwrap()).collect();
        let trace = simulate_rollout(&model, &x0, &controls, 0.0, 9).unwrap();
        for e in trace.epochs() {
            assert_eq!(e.x, vec![4.0, -2.0]);
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let model = plant(mat(&[&[0.7]]), mat(&[&[1.0]]));
        let x0 = StateVector::new(vec![1.0]).unwrap();
        let controls = uniform_controls(5, 50, 1);
        let t1 = simulate_rollout(&model, &x0, &controls, 0.5, 77).unwrap();
        let t2 = simulate_rollout(&model, &x0, &controls, 0.5, 77).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn rollout_geometric_decay() {
        let model = plant(mat(&[&[0.5]]), mat(&[&[0.0]]));
        let x0 = StateVector::new(vec![8.0]).unwrap();
        let controls: Vec<ControlVector> =
            (0..3).map(|_| ControlVector::new(vec![0.0]).unwrap()).collect();
        let trace = simulate_rollout(&model, &x0, &controls, 0.0, 0).unwrap();
        assert_eq!(trace.epochs()[3].x[0], 1.0);
    }

    #[test]
    fn fit_is_translation_invariant_in_epoch_index() {
        let a = mat(&[&[0.6]]);
        let b = mat(&[&[0.5]]);
        let model = plant(a, b);
        let x0 = StateVector::new(vec![1.0]).unwrap();
        let controls = uniform_controls(21, 60, 1);
        let trace = simulate_rollout(&model, &x0, &controls, 0.0, 21).unwrap();
        let shifted = IdentTrace::new(
            trace
                .epochs()
                .iter()
                .map(|e| IdentEpoch { t: e.t + 1000, x: e.x.clone(), u: e.u.clone() })
                .collect(),
        )
        .unwrap();
        let r1 = fit(&trace, 1e-6).unwrap();
        let r2 = fit(&shifted, 1e-6).unwrap();
        assert_eq!(r1.model.a(), r2.model.a());
        assert_eq!(r1.model.b(), r2.model.b());
    }

    #[test]
    fn ridge_never_grows_parameter_norm() {
        let a = mat(&[&[0.5, 0.2], &[0.0, 0.7]]);
        let b = mat(&[&[1.0], &[0.5]]);
        let model = plant(a, b);
        let x0 = StateVector::new(vec![1.0, 1.0]).unwrap();
        let controls = uniform_controls(8, 120, 1);
        let trace = simulate_rollout(&model, &x0, &controls, 0.05, 8).unwrap();
        let base = fit(&trace, 0.0).unwrap();
        let base_norm = base.model.a().frobenius_norm().hypot(base.model.b().frobenius_norm());
        for ridge in [1e-6, 1e-3, 1.0] {
            let r = fit(&trace, ridge).unwrap();
            let norm = r.model.a().frobenius_norm().hypot(r.model.b().frobenius_norm());
            assert!(norm <= base_norm + 1e-9, "ridge {ridge}: {norm} > {base_norm}");
        }
    }

    #[test]
    fn condition_number_of_orthogonal_regressors_is_one() {
        // Alternating basis-vector regressors give M proportional to the
        // identity.
        let epochs: Vec<IdentEpoch> = (0..41)
            .map(|t| {
                if t % 2 == 0 {
                    IdentEpoch { t, x: vec![1.0], u: vec![0.0] }
                } else {
                    IdentEpoch { t, x: vec![0.0], u: vec![1.0] }
                }
            })
            .collect();
        let trace = IdentTrace::new(epochs).unwrap();
        let report = fit(&trace, 0.0).unwrap();
        assert!((report.condition_number - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trace_rejects_non_consecutive_epochs() {
        let epochs = vec![
            IdentEpoch { t: 0, x: vec![0.0], u: vec![0.0] },
            IdentEpoch { t: 2, x: vec![0.0], u: vec![0.0] },
        ];
        assert!(matches!(IdentTrace::new(epochs), Err(IdentError::NonConsecutiveEpochs { .. })));
    }
}
