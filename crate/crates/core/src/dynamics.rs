//! Discrete-time dynamics models, their Jacobians and open-loop rollout.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Standard gravity used by the point-mass quadrotor.
pub const GRAVITY: f64 = 9.81;

/// A discrete-time system `x' = f(x, u)`.
///
/// Implementors provide the unchecked slice kernels; the checked vector
/// methods are supplied on top of them.
pub trait DynamicsModel: Debug + Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Indices of the position coordinates within the state.
    fn position_indices(&self) -> &[usize];

    /// Writes `f(x, u)` into `out`. Slices must have the model's dimensions.
    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// Analytic `(f_x, f_u)` at `(x, u)`.
    fn jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("state", self.state_dim(), x.len())?;
        check_dim("control", self.control_dim(), u.len())?;
        let mut out = DVector::zeros(self.state_dim());
        self.step_into(x.as_slice(), u.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn linearize(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_dim("state", self.state_dim(), x.len())?;
        check_dim("control", self.control_dim(), u.len())?;
        Ok(self.jacobians(x.as_slice(), u.as_slice()))
    }

    fn rollout(&self, x0: &DVector<f64>, controls: &[DVector<f64>]) -> Result<Trajectory> {
        check_dim("initial state", self.state_dim(), x0.len())?;
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for u in controls {
            let next = self.step(states.last().unwrap(), u)?;
            states.push(next);
        }
        Ok(Trajectory {
            states,
            controls: controls.to_vec(),
        })
    }

    fn position(&self, x: &[f64]) -> Vec<f64> {
        self.position_indices().iter().map(|&i| x[i]).collect()
    }
}

/// Paired state and control sequences; `states.len() == controls.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != controls.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "trajectory needs one more state than controls ({} states, {} controls)",
                states.len(),
                controls.len()
            )));
        }
        Ok(Trajectory { states, controls })
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one state")
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")))
    }
}

/// Unicycle kinematics with state `(x, y, heading)` and control
/// `(linear speed, angular speed)`, forward-Euler discretized. The heading is
/// never wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffDrive {
    dt: f64,
}

impl DiffDrive {
    pub fn new(dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(DiffDrive { dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl DynamicsModel for DiffDrive {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn position_indices(&self) -> &[usize] {
        &[0, 1]
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (sin, cos) = x[2].sin_cos();
        out[0] = x[0] + u[0] * cos * self.dt;
        out[1] = x[1] + u[0] * sin * self.dt;
        out[2] = x[2] + u[1] * self.dt;
    }

    fn jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (sin, cos) = x[2].sin_cos();
        let dt = self.dt;
        #[rustfmt::skip]
        let fx = DMatrix::from_row_slice(3, 3, &[
            1.0, 0.0, -u[0] * sin * dt,
            0.0, 1.0, u[0] * cos * dt,
            0.0, 0.0, 1.0,
        ]);
        #[rustfmt::skip]
        let fu = DMatrix::from_row_slice(3, 2, &[
            cos * dt, 0.0,
            sin * dt, 0.0,
            0.0, dt,
        ]);
        (fx, fu)
    }
}

/// Point mass in 3-D with state `(position, velocity)` and commanded
/// acceleration as control; gravity acts along `-z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassQuadrotor {
    dt: f64,
}

impl PointMassQuadrotor {
    pub fn new(dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(PointMassQuadrotor { dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl DynamicsModel for PointMassQuadrotor {
    fn state_dim(&self) -> usize {
        6
    }

    fn control_dim(&self) -> usize {
        3
    }

    fn position_indices(&self) -> &[usize] {
        &[0, 1, 2]
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let dt = self.dt;
        for i in 0..3 {
            out[i] = x[i] + x[i + 3] * dt;
            out[i + 3] = x[i + 3] + u[i] * dt;
        }
        out[5] -= GRAVITY * dt;
    }

    fn jacobians(&self, _x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let dt = self.dt;
        let mut fx = DMatrix::identity(6, 6);
        let mut fu = DMatrix::zeros(6, 3);
        for i in 0..3 {
            fx[(i, i + 3)] = dt;
            fu[(i + 3, i)] = dt;
        }
        (fx, fu)
    }
}

/// Time-invariant linear system `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    positions: Vec<usize>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidArgument("state matrix must be square".into()));
        }
        check_dim("input matrix rows", a.nrows(), b.nrows())?;
        Ok(LinearDynamics {
            a,
            b,
            positions: Vec::new(),
        })
    }

    /// Declares which state coordinates are positions.
    pub fn with_positions(mut self, positions: Vec<usize>) -> Result<Self> {
        let n = self.a.nrows();
        let mut seen = positions.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != positions.len() || positions.iter().any(|&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "position indices {positions:?} must be distinct and below {n}"
            )));
        }
        self.positions = positions;
        Ok(self)
    }

    /// `n`-axis double integrator with positions first, then velocities.
    pub fn double_integrator(axes: usize, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let mut a = DMatrix::identity(2 * axes, 2 * axes);
        let mut b = DMatrix::zeros(2 * axes, axes);
        for i in 0..axes {
            a[(i, i + axes)] = dt;
            b[(i, i)] = 0.5 * dt * dt;
            b[(i + axes, i)] = dt;
        }
        Self::new(a, b)?.with_positions((0..axes).collect())
    }
}

impl DynamicsModel for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn position_indices(&self) -> &[usize] {
        &self.positions
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let ax: f64 = (0..x.len()).map(|j| self.a[(i, j)] * x[j]).sum();
            let bu: f64 = (0..u.len()).map(|j| self.b[(i, j)] * u[j]).sum();
            *o = ax + bu;
        }
    }

    fn jacobians(&self, _x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

/// Central finite-difference Jacobians of `step_into`.
pub fn finite_difference_jacobians(
    model: &dyn DynamicsModel,
    x: &[f64],
    u: &[f64],
    h: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (model.state_dim(), model.control_dim());
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut fx = DMatrix::zeros(n, n);
    let mut fu = DMatrix::zeros(n, m);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        model.step_into(&xp, u, &mut plus);
        xp[j] = x[j] - h;
        model.step_into(&xp, u, &mut minus);
        xp[j] = x[j];
        for i in 0..n {
            fx[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    let mut up = u.to_vec();
    for j in 0..m {
        up[j] = u[j] + h;
        model.step_into(x, &up, &mut plus);
        up[j] = u[j] - h;
        model.step_into(x, &up, &mut minus);
        up[j] = u[j];
        for i in 0..n {
            fu[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    (fx, fu)
}
