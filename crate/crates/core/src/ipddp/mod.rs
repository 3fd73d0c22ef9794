//! Interior-point differential dynamic programming.
//!
//! Solves
//!
//! ```text
//! minimize  l_f(x_T) + sum_t l_t(x_t, u_t)
//! s.t.      x_{t+1} = f(x_t, u_t),  x_0 = x_init,  g_t(x_t, u_t) <= 0
//! ```
//!
//! with slacks `s > 0` and duals `y > 0` carried through the stagewise
//! quadratic model. The start need not be feasible: the primal residual
//! `g + s` is driven to zero along with the barrier parameter.

mod backward;
mod forward;

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::cost::{FinalCost, StageCost};
use crate::dynamics::{DynamicsModel, Trajectory};
use crate::error::{check_dim, Error, Result};

pub use backward::backward_pass;
pub use forward::{forward_pass, ForwardStep};

/// Per-stage inequality rows `g_t(x, u) <= 0`.
pub trait StageConstraints: Debug + Send + Sync {
    fn count(&self, t: usize) -> usize;
    fn evaluate(&self, t: usize, x: &[f64], u: &[f64], out: &mut [f64]);
    /// `(dg/dx, dg/du)`, shaped `k x n` and `k x m`.
    fn jacobians(&self, t: usize, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);
    /// `sum_i y_i hess(g_i)` split into `(xx, ux, uu)` blocks. `None` means
    /// the rows are affine.
    fn weighted_hessians(
        &self,
        t: usize,
        x: &[f64],
        u: &[f64],
        y: &[f64],
    ) -> Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let _ = (t, x, u, y);
        None
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedOcp {
    pub model: Arc<dyn DynamicsModel>,
    pub x_init: DVector<f64>,
    pub horizon: usize,
    pub stage_cost: Arc<dyn StageCost>,
    pub final_cost: Arc<dyn FinalCost>,
    pub constraints: Option<Arc<dyn StageConstraints>>,
}

impl ConstrainedOcp {
    pub fn new(
        model: Arc<dyn DynamicsModel>,
        x_init: DVector<f64>,
        horizon: usize,
        stage_cost: Arc<dyn StageCost>,
        final_cost: Arc<dyn FinalCost>,
    ) -> Result<Self> {
        check_dim("initial state", model.state_dim(), x_init.len())?;
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(ConstrainedOcp {
            model,
            x_init,
            horizon,
            stage_cost,
            final_cost,
            constraints: None,
        })
    }

    pub fn with_constraints(mut self, constraints: Arc<dyn StageConstraints>) -> Self {
        self.constraints = Some(constraints);
        self
    }

    pub fn constraint_count(&self, t: usize) -> usize {
        self.constraints.as_ref().map_or(0, |c| c.count(t))
    }

    fn constraint_values(&self, t: usize, x: &[f64], u: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.constraint_count(t));
        if let Some(c) = &self.constraints {
            c.evaluate(t, x, u, g.as_mut_slice());
        }
        g
    }

    /// Objective without barrier terms.
    pub fn cost(&self, traj: &Trajectory) -> f64 {
        let running: f64 = (0..traj.horizon())
            .map(|t| {
                self.stage_cost
                    .value(t, traj.states[t].as_slice(), traj.controls[t].as_slice())
            })
            .sum();
        running + self.final_cost.value(traj.final_state().as_slice())
    }

    /// Largest constraint value over all stages (`<= 0` means feasible).
    pub fn max_constraint(&self, traj: &Trajectory) -> f64 {
        (0..traj.horizon())
            .flat_map(|t| {
                self.constraint_values(t, traj.states[t].as_slice(), traj.controls[t].as_slice())
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solver state: trajectory plus slacks, duals, barrier and regularization.
#[derive(Debug, Clone, PartialEq)]
pub struct IpddpIterate {
    pub trajectory: Trajectory,
    pub slacks: Vec<DVector<f64>>,
    pub duals: Vec<DVector<f64>>,
    pub mu: f64,
    pub rho: f64,
}

impl IpddpIterate {
    /// Rolls `controls` out from `x_init` and centres the slacks and duals:
    /// `s = max(-g, floor)`, `y = mu / s`.
    pub fn initial(ocp: &ConstrainedOcp, controls: &[DVector<f64>], mu: f64, slack_floor: f64) -> Result<Self> {
        check_dim("control sequence", ocp.horizon, controls.len())?;
        let trajectory = ocp.model.rollout(&ocp.x_init, controls)?;
        let mut slacks = Vec::with_capacity(ocp.horizon);
        let mut duals = Vec::with_capacity(ocp.horizon);
        for t in 0..ocp.horizon {
            let g = ocp.constraint_values(t, trajectory.states[t].as_slice(), controls[t].as_slice());
            let s = g.map(|v| (-v).max(slack_floor));
            duals.push(s.map(|v| mu / v));
            slacks.push(s);
        }
        Ok(IpddpIterate {
            trajectory,
            slacks,
            duals,
            mu,
            rho: 0.0,
        })
    }
}

/// Value function expansion `V_x`, `V_xx` at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueExpansion {
    pub vx: DVector<f64>,
    pub vxx: DMatrix<f64>,
}

/// Output of the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub ku: Vec<DMatrix<f64>>,
    pub du: Vec<DVector<f64>>,
    pub ks: Vec<DMatrix<f64>>,
    pub ds: Vec<DVector<f64>>,
    pub ky: Vec<DMatrix<f64>>,
    pub dy: Vec<DVector<f64>>,
    /// Predicted change of the objective for a full step.
    pub delta_v: f64,
    /// Lagrangian gradients at the current iterate, before the barrier terms.
    pub qx: Vec<DVector<f64>>,
    pub qu: Vec<DVector<f64>>,
    /// `value[t]` for `t = 0..=T`.
    pub value: Vec<ValueExpansion>,
    pub max_qu: f64,
    pub max_rp: f64,
    pub max_rd: f64,
    /// Largest `|V_xx - V_xx^T|` entry seen before symmetrizing.
    pub max_asymmetry: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, ThisError)]
pub enum PassFailure {
    #[error("regularized control Hessian is not positive definite at stage {stage}")]
    NotPositiveDefinite { stage: usize },
    #[error("line search found no acceptable step")]
    NoAcceptableStep,
}

/// Set of `(barrier objective, violation)` pairs. A candidate is accepted if
/// it improves on every entry in at least one coordinate by `margin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
    margin: f64,
}

impl Filter {
    pub fn new(margin: f64) -> Self {
        Filter {
            entries: Vec::new(),
            margin,
        }
    }

    pub fn accepts(&self, cost: f64, violation: f64) -> bool {
        cost.is_finite()
            && violation.is_finite()
            && self
                .entries
                .iter()
                .all(|&(c, v)| cost < c - self.margin || violation < v - self.margin)
    }

    pub fn push(&mut self, cost: f64, violation: f64) {
        self.entries.push((cost, violation));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn set_margin(&mut self, margin: f64) {
        self.margin = margin;
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpddpOptions {
    pub mu_init: f64,
    pub mu_min: f64,
    /// Global stop once the local test passes at or below this barrier.
    pub mu_stop: f64,
    pub kappa: f64,
    pub mu_factor: f64,
    pub mu_power: f64,
    pub tau: f64,
    pub max_iters: usize,
    pub line_search_steps: usize,
    pub rho_init: f64,
    pub rho_max: f64,
    pub rho_increase: f64,
    pub rho_decrease: f64,
    /// Filter margin at `mu = 1`; each barrier phase uses
    /// `filter_margin * mu` so late phases can still make progress.
    pub filter_margin: f64,
    pub slack_floor: f64,
    /// Adds `V_x . f_xx` terms computed by differencing the Jacobians.
    pub second_order_dynamics: bool,
}

impl Default for IpddpOptions {
    fn default() -> Self {
        IpddpOptions {
            mu_init: 1.0,
            mu_min: 1e-8,
            mu_stop: 1e-8,
            kappa: 10.0,
            mu_factor: 0.2,
            mu_power: 1.2,
            tau: 0.995,
            max_iters: 300,
            line_search_steps: 11,
            rho_init: 1e-6,
            rho_max: 1e8,
            rho_increase: 10.0,
            rho_decrease: 5.0,
            filter_margin: 1e-8,
            slack_floor: 1e-2,
            second_order_dynamics: false,
        }
    }
}

impl IpddpOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("ipddp: {msg}")));
        if !(self.mu_init > 0.0 && self.mu_min > 0.0 && self.mu_stop > 0.0) {
            return bad("barrier parameters must be positive");
        }
        if !(self.kappa > 1.0) {
            return bad("kappa must exceed 1");
        }
        if !(self.mu_factor > 0.0 && self.mu_factor < 1.0 && self.mu_power > 1.0) {
            return bad("barrier schedule needs 0 < mu_factor < 1 and mu_power > 1");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if self.line_search_steps == 0 {
            return bad("line_search_steps must be at least 1");
        }
        if !(self.rho_init > 0.0 && self.rho_max > self.rho_init && self.rho_increase > 1.0 && self.rho_decrease >= 1.0) {
            return bad("invalid regularization schedule");
        }
        if !(self.slack_floor > 0.0 && self.filter_margin >= 0.0) {
            return bad("slack_floor must be positive and filter_margin non-negative");
        }
        Ok(())
    }

    fn next_mu(&self, mu: f64) -> f64 {
        self.mu_min.max((self.mu_factor * mu).min(mu.powf(self.mu_power)))
    }
}

/// `max(|Q_u|, |r_p|, |r_d|) < kappa * mu`.
pub fn check_local_convergence(max_qu: f64, max_rp: f64, max_rd: f64, kappa: f64, mu: f64) -> bool {
    max_qu.max(max_rp).max(max_rd) < kappa * mu
}

/// One accepted forward pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub mu: f64,
    pub rho: f64,
    pub alpha: f64,
    pub cost: f64,
    pub barrier_cost: f64,
    pub violation: f64,
    pub min_slack: f64,
    pub min_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpddpResult {
    pub trajectory: Trajectory,
    pub slacks: Vec<DVector<f64>>,
    pub duals: Vec<DVector<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub mu: f64,
    /// `max_t |g_t + s_t|_inf` at the returned iterate.
    pub max_primal_residual: f64,
    pub cost: f64,
    pub history: Vec<IterationLog>,
}

fn primal_residual(ocp: &ConstrainedOcp, it: &IpddpIterate) -> f64 {
    let traj = &it.trajectory;
    (0..ocp.horizon)
        .map(|t| {
            let g = ocp.constraint_values(t, traj.states[t].as_slice(), traj.controls[t].as_slice());
            (g + &it.slacks[t]).amax()
        })
        .fold(0.0, f64::max)
}

/// Sets `s = -g` on every row that is strictly satisfied, so a converged
/// iterate carries no leftover linearization error in its slacks. `x`, `u`
/// and the duals are untouched.
fn reset_slacks(ocp: &ConstrainedOcp, it: &mut IpddpIterate) {
    for t in 0..ocp.horizon {
        let g = ocp.constraint_values(t, it.trajectory.states[t].as_slice(), it.trajectory.controls[t].as_slice());
        for (s, gi) in it.slacks[t].iter_mut().zip(g.iter()) {
            if *gi < 0.0 {
                *s = -gi;
            }
        }
    }
}

fn finish(ocp: &ConstrainedOcp, it: IpddpIterate, converged: bool, iterations: usize, history: Vec<IterationLog>) -> IpddpResult {
    IpddpResult {
        max_primal_residual: primal_residual(ocp, &it),
        cost: ocp.cost(&it.trajectory),
        trajectory: it.trajectory,
        slacks: it.slacks,
        duals: it.duals,
        converged,
        iterations,
        mu: it.mu,
        history,
    }
}

fn min_entry(v: &[DVector<f64>]) -> f64 {
    v.iter().flat_map(|s| s.iter().copied()).fold(f64::INFINITY, f64::min)
}

/// Runs the solver from the controls of `init` (re-rolled from `x_init`).
///
/// Returns `Error::SolveFailed` with the last iterate when the
/// regularization exceeds its cap. Hitting `max_iters` is not an error; the
/// result then has `converged == false`.
pub fn solve(ocp: &ConstrainedOcp, init: &Trajectory, opts: &IpddpOptions) -> Result<IpddpResult> {
    opts.validate()?;
    let mut it = IpddpIterate::initial(ocp, &init.controls, opts.mu_init, opts.slack_floor)?;
    let mut filter = Filter::new(opts.filter_margin * opts.mu_init);
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        let gains = backward_pass(ocp, &it, opts).ok();
        if let Some(g) = &gains {
            if check_local_convergence(g.max_qu, g.max_rp, g.max_rd, opts.kappa, it.mu) {
                if it.mu <= opts.mu_stop {
                    reset_slacks(ocp, &mut it);
                    return Ok(finish(ocp, it, true, iterations, history));
                }
                it.mu = opts.next_mu(it.mu);
                filter.clear();
                filter.set_margin(opts.filter_margin * it.mu);
                continue;
            }
        }
        if iterations >= opts.max_iters {
            return Ok(finish(ocp, it, false, iterations, history));
        }
        iterations += 1;
        let step = gains.ok_or(PassFailure::NoAcceptableStep).and_then(|g| {
            forward_pass(ocp, &it, &g, &mut filter, opts)
        });
        match step {
            Ok(step) => {
                let rho = it.rho;
                history.push(IterationLog {
                    iteration: iterations,
                    mu: step.iterate.mu,
                    rho,
                    alpha: step.alpha,
                    cost: step.cost,
                    barrier_cost: step.barrier_cost,
                    violation: step.violation,
                    min_slack: min_entry(&step.iterate.slacks),
                    min_dual: min_entry(&step.iterate.duals),
                });
                it = step.iterate;
                it.rho = rho / opts.rho_decrease;
            }
            Err(_) => {
                it.rho = (it.rho * opts.rho_increase).max(opts.rho_init);
                if it.rho > opts.rho_max {
                    log::debug!("ipddp: regularization exhausted after {iterations} iterations");
                    return Err(Error::SolveFailed(Box::new(finish(ocp, it, false, iterations, history))));
                }
            }
        }
    }
}
