//! Discrete-time linear state-space plant `x(t+1) = A·x(t) + B·u(t)` with
//! box constraints `x ∈ X`, `u ∈ U`.
//!
//! `step` is the pure difference equation and never projects; callers compose
//! `step` with [`project`] when saturation matters. Constraint sets are
//! axis-aligned boxes so projection is an exact per-component clamp.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{operand}: expected dimension {expected}, got {actual}")]
    DimensionMismatch { operand: &'static str, expected: usize, actual: usize },
    #[error("{what} has a non-finite component at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("{what} must not be empty")]
    Empty { what: &'static str },
    #[error("bounds inverted at index {index}: lower {lower} > upper {upper}")]
    BoundsInverted { index: usize, lower: f64, upper: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<(), ModelError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ModelError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// State vector `x ∈ Rⁿ`; all components finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVector(Vec<f64>);

/// Control vector `u ∈ Rᵐ`; all components finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlVector(Vec<f64>);

macro_rules! finite_vector {
    ($ty:ident, $what:literal) => {
        impl $ty {
            pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
                if values.is_empty() {
                    return Err(ModelError::Empty { what: $what });
                }
                check_finite($what, &values)?;
                Ok(Self(values))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }
        }

        impl TryFrom<Vec<f64>> for $ty {
            type Error = ModelError;
            fn try_from(values: Vec<f64>) -> Result<Self, ModelError> {
                Self::new(values)
            }
        }

        impl From<$ty> for Vec<f64> {
            fn from(v: $ty) -> Vec<f64> {
                v.0
            }
        }
    };
}

finite_vector!(StateVector, "state vector");
finite_vector!(ControlVector, "control vector");

/// Axis-aligned box `[lower, upper]` per component; infinities allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxConstraintsRaw", into = "BoxConstraintsRaw")]
pub struct BoxConstraints {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// JSON form: `null` stands for an unbounded side (JSON has no infinity
/// literal).
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct BoxConstraintsRaw {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl TryFrom<BoxConstraintsRaw> for BoxConstraints {
    type Error = ModelError;
    fn try_from(raw: BoxConstraintsRaw) -> Result<Self, ModelError> {
        let lower = raw.lower.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let upper = raw.upper.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        BoxConstraints::new(lower, upper)
    }
}

impl From<BoxConstraints> for BoxConstraintsRaw {
    fn from(b: BoxConstraints) -> Self {
        Self {
            lower: b.lower.into_iter().map(|v| v.is_finite().then_some(v)).collect(),
            upper: b.upper.into_iter().map(|v| v.is_finite().then_some(v)).collect(),
        }
    }
}

impl BoxConstraints {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        if lower.is_empty() {
            return Err(ModelError::Empty { what: "bounds" });
        }
        if lower.len() != upper.len() {
            return Err(ModelError::DimensionMismatch {
                operand: "bounds upper",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() {
                return Err(ModelError::NonFinite { what: "bounds", index: i });
            }
            if lo > hi {
                return Err(ModelError::BoundsInverted { index: i, lower: lo, upper: hi });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Unbounded box of the given dimension.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| lo <= x && x <= hi)
    }
}

/// Names and units for the state components; metadata only, never
/// interpreted by the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct StateSemantics {
    labels: Vec<String>,
}

impl StateSemantics {
    pub fn new(labels: Vec<String>) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::Empty { what: "state labels" });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(ModelError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

impl TryFrom<Vec<String>> for StateSemantics {
    type Error = ModelError;
    fn try_from(labels: Vec<String>) -> Result<Self, ModelError> {
        Self::new(labels)
    }
}

impl From<StateSemantics> for Vec<String> {
    fn from(s: StateSemantics) -> Vec<String> {
        s.labels
    }
}

/// The plant: `A` (n×n), `B` (n×m), and the constraint boxes for states and
/// controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearModelRaw", into = "LinearModelRaw")]
pub struct LinearModel {
    a: Matrix,
    b: Matrix,
    state_bounds: BoxConstraints,
    control_bounds: BoxConstraints,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LinearModelRaw {
    a: Matrix,
    b: Matrix,
    state_bounds: BoxConstraints,
    control_bounds: BoxConstraints,
}

impl TryFrom<LinearModelRaw> for LinearModel {
    type Error = ModelError;
    fn try_from(raw: LinearModelRaw) -> Result<Self, ModelError> {
        LinearModel::new(raw.a, raw.b, raw.state_bounds, raw.control_bounds)
    }
}

impl From<LinearModel> for LinearModelRaw {
    fn from(m: LinearModel) -> Self {
        Self { a: m.a, b: m.b, state_bounds: m.state_bounds, control_bounds: m.control_bounds }
    }
}

impl LinearModel {
    pub fn new(
        a: Matrix,
        b: Matrix,
        state_bounds: BoxConstraints,
        control_bounds: BoxConstraints,
    ) -> Result<Self, ModelError> {
        if !a.is_square() {
            return Err(ModelError::NotSquare { rows: a.rows(), cols: a.cols() });
        }
        if b.rows() != a.rows() {
            return Err(ModelError::DimensionMismatch {
                operand: "B rows",
                expected: a.rows(),
                actual: b.rows(),
            });
        }
        if state_bounds.dim() != a.rows() {
            return Err(ModelError::DimensionMismatch {
                operand: "state bounds",
                expected: a.rows(),
                actual: state_bounds.dim(),
            });
        }
        if control_bounds.dim() != b.cols() {
            return Err(ModelError::DimensionMismatch {
                operand: "control bounds",
                expected: b.cols(),
                actual: control_bounds.dim(),
            });
        }
        if !a.is_finite() {
            return Err(ModelError::NonFinite { what: "A", index: 0 });
        }
        if !b.is_finite() {
            return Err(ModelError::NonFinite { what: "B", index: 0 });
        }
        Ok(Self { a, b, state_bounds, control_bounds })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn state_bounds(&self) -> &BoxConstraints {
        &self.state_bounds
    }

    pub fn control_bounds(&self) -> &BoxConstraints {
        &self.control_bounds
    }
}

/// One step of the difference equation: returns exactly `A·x + B·u` with no
/// projection applied.
pub fn step(model: &LinearModel, x: &StateVector, u: &ControlVector) -> Result<StateVector, ModelError> {
    if x.dim() != model.state_dim() {
        return Err(ModelError::DimensionMismatch {
            operand: "state x",
            expected: model.state_dim(),
            actual: x.dim(),
        });
    }
    if u.dim() != model.control_dim() {
        return Err(ModelError::DimensionMismatch {
            operand: "control u",
            expected: model.control_dim(),
            actual: u.dim(),
        });
    }
    let ax = model.a.mul_vec(x.as_slice());
    let bu = model.b.mul_vec(u.as_slice());
    let next: Vec<f64> = ax.iter().zip(&bu).map(|(a, b)| a + b).collect();
    check_finite("step result", &next)?;
    Ok(StateVector(next))
}

/// Clamp every component of `v` into its `[lower, upper]` interval.
pub fn project(v: &[f64], bounds: &BoxConstraints) -> Result<Vec<f64>, ModelError> {
    if v.len() != bounds.dim() {
        return Err(ModelError::DimensionMismatch {
            operand: "projection input",
            expected: bounds.dim(),
            actual: v.len(),
        });
    }
    Ok(v.iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
        .collect())
}

/// Spectral radius estimate of a square matrix: power method, 1000
/// iterations or convergence within 1e-10.
pub fn spectral_radius(a: &Matrix) -> Result<f64, ModelError> {
    if !a.is_square() {
        return Err(ModelError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    Ok(linalg::power_iteration(|v| a.mul_vec(v), a.rows(), 1000, 1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn model(a: Matrix, b: Matrix) -> LinearModel {
        let n = a.rows();
        let m = b.cols();
        LinearModel::new(a, b, BoxConstraints::unbounded(n), BoxConstraints::unbounded(m)).unwrap()
    }

    fn x(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    fn u(v: &[f64]) -> ControlVector {
        ControlVector::new(v.to_vec()).unwrap()
    }

    /// Independent oracle: naive index-by-index A·x + B·u.
    fn brute_force_step(a: &Matrix, b: &Matrix, xs: &[f64], us: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.rows()];
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                out[i] += a.get(i, j) * xs[j];
            }
            for j in 0..b.cols() {
                out[i] += b.get(i, j) * us[j];
            }
        }
        out
    }

    #[test]
    fn step_identity_dynamics() {
        let m = model(Matrix::identity(2), Matrix::zeros(2, 1));
        let next = step(&m, &x(&[3.0, -1.0]), &u(&[7.5])).unwrap();
        assert_eq!(next.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn step_pure_input_response() {
        let m = model(Matrix::zeros(2, 2), mat(&[&[1.0], &[2.0]]));
        let next = step(&m, &x(&[11.0, -4.0]), &u(&[0.5])).unwrap();
        assert_eq!(next.as_slice(), &[0.5, 1.0]);
    }

    #[test]
    fn step_hand_derived_example() {
        let a = mat(&[&[0.5, 0.0], &[0.1, 0.9]]);
        let b = mat(&[&[1.0], &[0.0]]);
        let m = model(a.clone(), b.clone());
        let next = step(&m, &x(&[2.0, 4.0]), &u(&[-1.0])).unwrap();
        assert!((next.as_slice()[0] - 0.0).abs() < 1e-12);
        assert!((next.as_slice()[1] - 3.8).abs() < 1e-12);
        let oracle = brute_force_step(&a, &b, &[2.0, 4.0], &[-1.0]);
        for (got, want) in next.as_slice().iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn step_dimension_errors_name_operand() {
        let m = model(Matrix::identity(2), Matrix::zeros(2, 1));
        let err = step(&m, &x(&[1.0]), &u(&[0.0])).unwrap_err();
        assert!(err.to_string().contains("state x"));
        let err = step(&m, &x(&[1.0, 2.0]), &u(&[0.0, 0.0])).unwrap_err();
        assert!(err.to_string().contains("control u"));
    }

    #[test]
    fn step_overflow_reports_component() {
        let a = mat(&[&[f64::MAX, 0.0], &[0.0, 1.0]]);
        let m = model(a, mat(&[&[f64::MAX], &[0.0]]));
        let err = step(&m, &x(&[1.0, 1.0]), &u(&[1.0])).unwrap_err();
        assert_eq!(err, ModelError::NonFinite { what: "step result", index: 0 });
    }

    #[test]
    fn project_feasible_identity() {
        let b = BoxConstraints::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(project(&[0.5], &b).unwrap(), vec![0.5]);
    }

    #[test]
    fn project_clamps_per_component() {
        let b = BoxConstraints::new(vec![0.0, 0.0], vec![1.0, 5.0]).unwrap();
        assert_eq!(project(&[-3.0, 7.0], &b).unwrap(), vec![0.0, 5.0]);
    }

    #[test]
    fn project_dimension_mismatch() {
        let b = BoxConstraints::new(vec![0.0], vec![1.0]).unwrap();
        assert!(project(&[1.0, 2.0], &b).is_err());
    }

    #[test]
    fn spectral_radius_identity() {
        let r = spectral_radius(&Matrix::identity(3)).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_diagonal() {
        let a = mat(&[&[0.5, 0.0], &[0.0, -0.9]]);
        let r = spectral_radius(&a).unwrap();
        assert!((r - 0.9).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_double_eigenvalue() {
        // Characteristic polynomial λ² − λ + 0.25 = (λ − 0.5)².
        let a = mat(&[&[0.0, 1.0], &[-0.25, 1.0]]);
        let r = spectral_radius(&a).unwrap();
        assert!((r - 0.5).abs() < 1e-3, "got {r}");
    }

    #[test]
    fn spectral_radius_rejects_non_square() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(spectral_radius(&a), Err(ModelError::NotSquare { .. })));
    }

    #[test]
    fn bounds_reject_inversion() {
        assert!(matches!(
            BoxConstraints::new(vec![1.0], vec![0.0]),
            Err(ModelError::BoundsInverted { .. })
        ));
    }

    #[test]
    fn state_vector_rejects_nan() {
        assert!(StateVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn semantics_reject_duplicate_labels() {
        assert!(StateSemantics::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn unbounded_sides_serialize_as_null_and_roundtrip() {
        let b = BoxConstraints::new(vec![0.0, f64::NEG_INFINITY], vec![f64::INFINITY, 1.0])
            .unwrap();
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, r#"{"lower":[0.0,null],"upper":[null,1.0]}"#);
        let back: BoxConstraints = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
    }
}
