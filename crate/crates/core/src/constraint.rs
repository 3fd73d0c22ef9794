//! Inequality constraints `g(x) <= 0` and `h(u) <= 0` in the smooth row form
//! consumed by the interior-point smoother, together with the matching
//! projection used by the samplers.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::vi::ProjectionOperator;

/// State constraint rows `g(x) <= 0`.
pub trait StateConstraint: Debug + Send + Sync {
    fn count(&self) -> usize;
    fn evaluate(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    /// `sum_i y_i * hess(g_i)(x)`.
    fn weighted_hessian(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let _ = y;
        DMatrix::zeros(x.len(), x.len())
    }

    fn violated(&self, x: &[f64]) -> bool {
        let mut g = vec![0.0; self.count()];
        self.evaluate(x, &mut g);
        g.iter().any(|&v| v > 0.0)
    }
}

/// Control constraint sets for the two case studies.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlLimits {
    /// `lo <= u <= hi`, one row per finite bound.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `|u| cos(half_angle) <= u_last` and `|u| <= cap`.
    Cone { half_angle: f64, cap: f64 },
}

impl ControlLimits {
    pub fn projection(&self) -> Result<ProjectionOperator> {
        match self {
            ControlLimits::Box { lo, hi } => ProjectionOperator::boxed(lo.clone(), hi.clone()),
            ControlLimits::Cone { half_angle, cap } => {
                ProjectionOperator::scaled_cone(*half_angle, Some(*cap))
            }
        }
    }

    pub fn validate(&self, control_dim: usize) -> Result<()> {
        match self {
            ControlLimits::Box { lo, hi } => {
                if lo.len() != control_dim || hi.len() != control_dim {
                    return Err(Error::InvalidArgument(format!(
                        "control bounds need {control_dim} entries"
                    )));
                }
            }
            ControlLimits::Cone { .. } => {
                if control_dim < 2 {
                    return Err(Error::InvalidArgument("cone limits need at least two controls".into()));
                }
            }
        }
        self.projection().map(|_| ())
    }

    /// Row order: for a box, `lo_i - u_i` then `u_i - hi_i` per axis; for a
    /// cone, the norm cap then the cone row.
    pub fn rows(&self) -> usize {
        match self {
            ControlLimits::Box { lo, hi } => {
                lo.iter().filter(|v| v.is_finite()).count() + hi.iter().filter(|v| v.is_finite()).count()
            }
            ControlLimits::Cone { .. } => 2,
        }
    }

    pub fn evaluate(&self, u: &[f64], out: &mut [f64]) {
        match self {
            ControlLimits::Box { lo, hi } => {
                let mut k = 0;
                for i in 0..u.len() {
                    if lo[i].is_finite() {
                        out[k] = lo[i] - u[i];
                        k += 1;
                    }
                    if hi[i].is_finite() {
                        out[k] = u[i] - hi[i];
                        k += 1;
                    }
                }
            }
            ControlLimits::Cone { half_angle, cap } => {
                let n = norm(u);
                out[0] = n - cap;
                out[1] = n * half_angle.cos() - u[u.len() - 1];
            }
        }
    }

    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let m = u.len();
        let mut j = DMatrix::zeros(self.rows(), m);
        match self {
            ControlLimits::Box { lo, hi } => {
                let mut k = 0;
                for i in 0..m {
                    if lo[i].is_finite() {
                        j[(k, i)] = -1.0;
                        k += 1;
                    }
                    if hi[i].is_finite() {
                        j[(k, i)] = 1.0;
                        k += 1;
                    }
                }
            }
            ControlLimits::Cone { half_angle, .. } => {
                let n = norm(u);
                // the norm is smooth away from the apex, which is never
                // strictly feasible for the cone row
                if n > 1e-12 {
                    for i in 0..m {
                        j[(0, i)] = u[i] / n;
                        j[(1, i)] = half_angle.cos() * u[i] / n;
                    }
                }
                j[(1, m - 1)] -= 1.0;
            }
        }
        j
    }

    /// `sum_i y_i * hess(h_i)(u)`.
    pub fn weighted_hessian(&self, u: &[f64], y: &[f64]) -> DMatrix<f64> {
        let m = u.len();
        match self {
            ControlLimits::Box { .. } => DMatrix::zeros(m, m),
            ControlLimits::Cone { half_angle, .. } => {
                let n = norm(u);
                if n <= 1e-12 {
                    return DMatrix::zeros(m, m);
                }
                // both rows are affine in |u|, whose Hessian is (I - uu'/|u|^2) / |u|
                let uv = DVector::from_column_slice(u);
                (DMatrix::identity(m, m) - &uv * uv.transpose() / (n * n)) * ((y[0] + y[1] * half_angle.cos()) / n)
            }
        }
    }
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}
