//! Stage and terminal cost interfaces plus the goal-quadratic forms used by
//! the bundled scenarios.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Second-order expansion of a stage cost at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpansion {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub lux: DMatrix<f64>,
    pub luu: DMatrix<f64>,
}

impl CostExpansion {
    pub fn zeros(n: usize, m: usize) -> Self {
        CostExpansion {
            lx: DVector::zeros(n),
            lu: DVector::zeros(m),
            lxx: DMatrix::zeros(n, n),
            lux: DMatrix::zeros(m, n),
            luu: DMatrix::zeros(m, m),
        }
    }
}

/// Running cost `l_t(x, u)`.
pub trait StageCost: Debug + Send + Sync {
    fn value(&self, t: usize, x: &[f64], u: &[f64]) -> f64;
    fn expansion(&self, t: usize, x: &[f64], u: &[f64]) -> CostExpansion;
}

/// Terminal cost `l_f(x)`.
pub trait FinalCost: Debug + Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn expansion(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>);
}

/// `sum_i q_i (x_i - target_i)^2 + sum_j r_j u_j^2` with diagonal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalQuadratic {
    pub state_weights: Vec<f64>,
    pub target: Vec<f64>,
    pub control_weights: Vec<f64>,
}

impl GoalQuadratic {
    /// `weight * |x - target|^2`.
    pub fn terminal(weight: f64, target: Vec<f64>) -> Self {
        GoalQuadratic {
            state_weights: vec![weight; target.len()],
            target,
            control_weights: Vec::new(),
        }
    }

    /// `weight * |u|^2` with no state term.
    pub fn control_effort(weight: f64, state_dim: usize, control_dim: usize) -> Self {
        GoalQuadratic {
            state_weights: vec![0.0; state_dim],
            target: vec![0.0; state_dim],
            control_weights: vec![weight; control_dim],
        }
    }

    fn state_part(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.target)
            .zip(&self.state_weights)
            .map(|((x, t), q)| q * (x - t) * (x - t))
            .sum()
    }
}

impl StageCost for GoalQuadratic {
    fn value(&self, _t: usize, x: &[f64], u: &[f64]) -> f64 {
        let effort: f64 = u.iter().zip(&self.control_weights).map(|(u, r)| r * u * u).sum();
        self.state_part(x) + effort
    }

    fn expansion(&self, _t: usize, x: &[f64], u: &[f64]) -> CostExpansion {
        let (lx, lxx) = FinalCost::expansion(self, x);
        let lu = DVector::from_iterator(u.len(), u.iter().zip(&self.control_weights).map(|(u, r)| 2.0 * r * u));
        let luu = DMatrix::from_diagonal(&DVector::from_iterator(
            u.len(),
            self.control_weights.iter().map(|r| 2.0 * r),
        ));
        CostExpansion {
            lx,
            lu,
            lxx,
            lux: DMatrix::zeros(u.len(), x.len()),
            luu,
        }
    }
}

impl FinalCost for GoalQuadratic {
    fn value(&self, x: &[f64]) -> f64 {
        self.state_part(x)
    }

    fn expansion(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let lx = DVector::from_iterator(
            n,
            x.iter()
                .zip(&self.target)
                .zip(&self.state_weights)
                .map(|((x, t), q)| 2.0 * q * (x - t)),
        );
        let lxx = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            self.state_weights.iter().map(|q| 2.0 * q),
        ));
        (lx, lxx)
    }
}

/// Adds the corridor-centre penalty `|p_t - c_t|_Q^2` (diagonal `Q` over
/// the position coordinates) to a base stage cost.
#[derive(Debug, Clone)]
pub struct CenterTracking {
    pub base: Arc<dyn StageCost>,
    pub positions: Vec<usize>,
    pub weights: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
}

impl CenterTracking {
    fn penalty(&self, t: usize, x: &[f64]) -> f64 {
        let c = &self.centers[t];
        self.positions
            .iter()
            .zip(&self.weights)
            .zip(c)
            .map(|((&i, q), c)| q * (x[i] - c) * (x[i] - c))
            .sum()
    }
}

impl StageCost for CenterTracking {
    fn value(&self, t: usize, x: &[f64], u: &[f64]) -> f64 {
        self.base.value(t, x, u) + self.penalty(t, x)
    }

    fn expansion(&self, t: usize, x: &[f64], u: &[f64]) -> CostExpansion {
        let mut e = self.base.expansion(t, x, u);
        let c = &self.centers[t];
        for ((&i, q), c) in self.positions.iter().zip(&self.weights).zip(c) {
            e.lx[i] += 2.0 * q * (x[i] - c);
            e.lxx[(i, i)] += 2.0 * q;
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn mobile_robot_terminal_cost() {
        let lf = GoalQuadratic::terminal(300.0, vec![0.0, 6.0, FRAC_PI_2]);
        assert!((FinalCost::value(&lf, &[0.0, 0.0, FRAC_PI_2]) - 10800.0).abs() < 1e-9);
        let l = GoalQuadratic::control_effort(0.01, 3, 2);
        assert!((StageCost::value(&l, 0, &[5.0, 5.0, 5.0], &[1.0, 2.0]) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn expansions_match_finite_differences() {
        let base: Arc<dyn StageCost> = Arc::new(GoalQuadratic {
            state_weights: vec![1.0, 2.0, 0.5],
            target: vec![0.3, -1.0, 2.0],
            control_weights: vec![0.1, 0.7],
        });
        let cost = CenterTracking {
            base,
            positions: vec![0, 1],
            weights: vec![0.4, 0.9],
            centers: vec![vec![1.0, 2.0]],
        };
        let x = [0.2, 0.5, -0.3];
        let u = [1.2, -0.4];
        let e = cost.expansion(0, &x, &u);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (cost.value(0, &xp, &u) - cost.value(0, &xm, &u)) / (2.0 * h);
            assert!((fd - e.lx[i]).abs() < 1e-6);
        }
        for j in 0..2 {
            let mut up = u;
            let mut um = u;
            up[j] += h;
            um[j] -= h;
            let fd = (cost.value(0, &x, &up) - cost.value(0, &x, &um)) / (2.0 * h);
            assert!((fd - e.lu[j]).abs() < 1e-6);
        }
        assert!((e.lxx[(0, 0)] - (2.0 + 0.8)).abs() < 1e-15);
        assert!((e.luu[(1, 1)] - 1.4).abs() < 1e-15);
    }
}
