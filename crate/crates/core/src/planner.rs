//! The outer loop: coarse search, corridors, smoothing, repeated until the
//! smoothed controls stop changing.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::constraint::{ControlLimits, StateConstraint};
use crate::corridor::{build_corridors, CorridorParams, CorridorSequence};
use crate::cost::{CenterTracking, FinalCost, StageCost};
use crate::dynamics::{DynamicsModel, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::geom::CollisionWorld;
use crate::ipddp::{solve, ConstrainedOcp, IpddpOptions, IpddpResult, StageConstraints};
use crate::mppi::{mppi_cost, mppi_update, MppiParams, MppiProblem};
use crate::vi::stream_id;

/// Everything that defines one planning task, independent of tuning.
#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub model: Arc<dyn DynamicsModel>,
    pub start: DVector<f64>,
    pub horizon: usize,
    pub stage_cost: Arc<dyn StageCost>,
    pub final_cost: Arc<dyn FinalCost>,
    pub control_limits: ControlLimits,
    pub state_constraint: Option<Arc<dyn StateConstraint>>,
    pub world: Arc<CollisionWorld>,
    /// Warm start for the first coarse search; one entry per stage.
    pub initial_controls: Vec<DVector<f64>>,
}

impl PlanningProblem {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.model.state_dim(), self.model.control_dim());
        check_dim("start state", n, self.start.len())?;
        check_dim("initial control sequence", self.horizon, self.initial_controls.len())?;
        for u in &self.initial_controls {
            check_dim("initial control", m, u.len())?;
        }
        check_dim("world dimension", self.model.position_indices().len(), self.world.dimension())?;
        self.control_limits.validate(m)?;
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let start = self.model.position(self.start.as_slice());
        if self.world.collides(&start) {
            return Err(Error::InvalidArgument(format!("start position {start:?} is in collision")));
        }
        Ok(())
    }

    fn mppi_problem(&self) -> Result<MppiProblem> {
        Ok(MppiProblem {
            model: self.model.clone(),
            world: self.world.clone(),
            stage_cost: self.stage_cost.clone(),
            final_cost: self.final_cost.clone(),
            state_constraint: self.state_constraint.clone(),
            control_projection: self.control_limits.projection()?,
            horizon: self.horizon,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub mppi: MppiParams,
    pub corridor: CorridorParams,
    pub ipddp: IpddpOptions,
    pub outer_max_iters: usize,
    pub outer_tol: f64,
    /// Diagonal of the centre-tracking weight, one entry per position axis.
    pub corridor_weight: Vec<f64>,
}

impl PlannerConfig {
    pub fn validate(&self, problem: &PlanningProblem) -> Result<()> {
        if self.outer_max_iters == 0 {
            return Err(Error::InvalidArgument("outer_max_iters must be at least 1".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidArgument("outer_tol must be positive".into()));
        }
        let dim = problem.model.position_indices().len();
        check_dim("corridor weight", dim, self.corridor_weight.len())?;
        if self.corridor_weight.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::InvalidArgument("corridor weights must be >= 0".into()));
        }
        self.mppi.validate(problem.model.control_dim())?;
        self.corridor.validate(dim)?;
        self.ipddp.validate()
    }
}

/// Constraint rows of the smoothing problem at stage `t`: control limits,
/// then state constraints, then `|p_t - c_t|^2 - r_t^2` for `t >= 1`.
///
/// The corridor row is left out at `t = 0` because `x_0` is fixed.
#[derive(Debug, Clone)]
pub struct SmoothingConstraints {
    pub limits: ControlLimits,
    pub state: Option<Arc<dyn StateConstraint>>,
    pub positions: Vec<usize>,
    pub corridors: CorridorSequence,
}

impl SmoothingConstraints {
    fn control_rows(&self) -> usize {
        self.limits.rows()
    }

    fn state_rows(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.count())
    }
}

impl StageConstraints for SmoothingConstraints {
    fn count(&self, t: usize) -> usize {
        self.control_rows() + self.state_rows() + usize::from(t >= 1)
    }

    fn evaluate(&self, t: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (kc, ks) = (self.control_rows(), self.state_rows());
        self.limits.evaluate(u, &mut out[..kc]);
        if let Some(s) = &self.state {
            s.evaluate(x, &mut out[kc..kc + ks]);
        }
        if t >= 1 {
            let c = &self.corridors.centers[t];
            let r = self.corridors.radii[t];
            let d2: f64 = self.positions.iter().zip(c).map(|(&i, c)| (x[i] - c) * (x[i] - c)).sum();
            out[kc + ks] = d2 - r * r;
        }
    }

    fn jacobians(&self, t: usize, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (kc, ks) = (self.control_rows(), self.state_rows());
        let k = self.count(t);
        let mut gx = DMatrix::zeros(k, x.len());
        let mut gu = DMatrix::zeros(k, u.len());
        gu.rows_mut(0, kc).copy_from(&self.limits.jacobian(u));
        if let Some(s) = &self.state {
            gx.rows_mut(kc, ks).copy_from(&s.jacobian(x));
        }
        if t >= 1 {
            let c = &self.corridors.centers[t];
            for (&i, c) in self.positions.iter().zip(c) {
                gx[(kc + ks, i)] = 2.0 * (x[i] - c);
            }
        }
        (gx, gu)
    }

    fn weighted_hessians(
        &self,
        t: usize,
        x: &[f64],
        u: &[f64],
        y: &[f64],
    ) -> Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let (kc, ks) = (self.control_rows(), self.state_rows());
        let huu = self.limits.weighted_hessian(u, &y[..kc]);
        let mut hxx = match &self.state {
            Some(s) => s.weighted_hessian(x, &y[kc..kc + ks]),
            None => DMatrix::zeros(x.len(), x.len()),
        };
        if t >= 1 {
            for &i in &self.positions {
                hxx[(i, i)] += 2.0 * y[kc + ks];
            }
        }
        Some((hxx, DMatrix::zeros(u.len(), x.len()), huu))
    }
}

/// Smoothing problem around `coarse`: the original costs plus the
/// centre-tracking term, with the coarse start as `x_init`.
pub fn build_smoothing_ocp(
    problem: &PlanningProblem,
    coarse: &Trajectory,
    corridors: &CorridorSequence,
    corridor_weight: &[f64],
) -> Result<ConstrainedOcp> {
    check_dim("corridor sequence", problem.horizon, corridors.len())?;
    check_dim("coarse trajectory", problem.horizon, coarse.horizon())?;
    if let Some((stage, &radius)) = corridors.radii.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
        return Err(Error::InfeasibleCorridor { stage, radius });
    }
    let positions = problem.model.position_indices().to_vec();
    let stage_cost: Arc<dyn StageCost> = if corridor_weight.iter().all(|q| *q == 0.0) {
        problem.stage_cost.clone()
    } else {
        Arc::new(CenterTracking {
            base: problem.stage_cost.clone(),
            positions: positions.clone(),
            weights: corridor_weight.to_vec(),
            centers: corridors.centers.clone(),
        })
    };
    let constraints = SmoothingConstraints {
        limits: problem.control_limits.clone(),
        state: problem.state_constraint.clone(),
        positions,
        corridors: corridors.clone(),
    };
    Ok(ConstrainedOcp::new(
        problem.model.clone(),
        coarse.states[0].clone(),
        problem.horizon,
        stage_cost,
        problem.final_cost.clone(),
    )?
    .with_constraints(Arc::new(constraints)))
}

/// Snapshot of one outer iteration.
///
/// Equality ignores `wall_time`.
#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Coarse-search objective (with collision indicator) of the coarse path.
    pub coarse_cost: f64,
    /// Smoothing objective, centre tracking included, of the smoothed path.
    pub smoothing_cost: f64,
    pub max_primal_residual: f64,
    pub ipddp_converged: bool,
    pub ipddp_iterations: usize,
    /// `max_t |U_new - U_prev|_inf`.
    pub control_change: f64,
    #[serde(skip)]
    pub coarse: Trajectory,
    #[serde(skip)]
    pub smoothed: Trajectory,
    #[serde(skip)]
    pub corridors: CorridorSequence,
    #[serde(skip)]
    pub wall_time: f64,
}

impl PartialEq for IterationTrace {
    fn eq(&self, other: &Self) -> bool {
        self.iteration == other.iteration
            && self.coarse_cost == other.coarse_cost
            && self.smoothing_cost == other.smoothing_cost
            && self.max_primal_residual == other.max_primal_residual
            && self.ipddp_converged == other.ipddp_converged
            && self.ipddp_iterations == other.ipddp_iterations
            && self.control_change == other.control_change
            && self.coarse == other.coarse
            && self.smoothed == other.smoothed
            && self.corridors == other.corridors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub corridors: CorridorSequence,
    pub traces: Vec<IterationTrace>,
    pub status: PlanStatus,
}

const MPPI_ATTEMPTS: u64 = 3;

fn coarse_search(
    mppi: &MppiProblem,
    start: &DVector<f64>,
    controls: &[DVector<f64>],
    params: &MppiParams,
    iteration: usize,
) -> Result<(Vec<DVector<f64>>, f64)> {
    let mut last = None;
    for attempt in 0..MPPI_ATTEMPTS {
        match mppi_update(mppi, start, controls, params, stream_id(&[iteration as u64, attempt])) {
            Ok(update) => {
                let blend_cost = mppi_cost(mppi, start, &update.controls)?;
                // the weighted mean of free samples can still clip an obstacle
                return Ok(if blend_cost.is_finite() {
                    (update.controls, blend_cost)
                } else {
                    log::debug!("iteration {iteration}: blended controls collide, using the best sample");
                    (update.best_controls, update.best_cost)
                });
            }
            Err(e @ Error::NoFeasibleSample { .. }) => {
                log::warn!("iteration {iteration}: no feasible sample (attempt {})", attempt + 1);
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn smooth(ocp: &ConstrainedOcp, coarse: &Trajectory, opts: &IpddpOptions) -> Result<IpddpResult> {
    match solve(ocp, coarse, opts) {
        Ok(res) => Ok(res),
        // keep the last iterate; the outer loop treats it as not converged
        Err(Error::SolveFailed(res)) => {
            log::warn!("smoothing stopped after {} iterations: regularization exhausted", res.iterations);
            Ok(*res)
        }
        Err(e) => Err(e),
    }
}

fn max_change(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Runs the outer loop, starting from `problem.initial_controls`.
///
/// Stops with `Converged` once the smoother converged and the controls moved
/// less than `outer_tol`, or with `MaxIters` after `outer_max_iters` rounds.
/// Stage errors come back as `Error::PlannerFailed` carrying the iteration.
pub fn plan(problem: &PlanningProblem, config: &PlannerConfig) -> Result<PlanResult> {
    problem.validate()?;
    config.validate(problem)?;
    let mppi = problem.mppi_problem()?;
    let projection = &mppi.control_projection;
    let mut controls: Vec<DVector<f64>> = problem
        .initial_controls
        .iter()
        .map(|u| projection.project(u.as_slice()).map(DVector::from_vec))
        .collect::<Result<_>>()?;
    let mut traces: Vec<IterationTrace> = Vec::new();

    for iteration in 1..=config.outer_max_iters {
        let clock = Instant::now();
        let wrap = |source: Error| Error::PlannerFailed {
            iteration,
            source: Box::new(source),
        };
        let (coarse_controls, coarse_cost) =
            coarse_search(&mppi, &problem.start, &controls, &config.mppi, iteration).map_err(wrap)?;
        let coarse = problem.model.rollout(&problem.start, &coarse_controls).map_err(wrap)?;
        let corridors =
            build_corridors(&coarse.states, &problem.world, problem.model.as_ref(), &config.corridor).map_err(wrap)?;
        let ocp = build_smoothing_ocp(problem, &coarse, &corridors, &config.corridor_weight).map_err(wrap)?;
        let res = smooth(&ocp, &coarse, &config.ipddp).map_err(wrap)?;

        let control_change = max_change(&res.trajectory.controls, &controls);
        log::info!(
            "iteration {iteration}: coarse cost {coarse_cost:.4}, smoothed cost {:.4}, residual {:.2e}, change {:.2e}, ipddp {} ({} its)",
            res.cost,
            res.max_primal_residual,
            control_change,
            if res.converged { "converged" } else { "not converged" },
            res.iterations,
        );
        controls = res.trajectory.controls.clone();
        let done = res.converged && control_change < config.outer_tol;
        traces.push(IterationTrace {
            iteration,
            coarse_cost,
            smoothing_cost: res.cost,
            max_primal_residual: res.max_primal_residual,
            ipddp_converged: res.converged,
            ipddp_iterations: res.iterations,
            control_change,
            coarse,
            smoothed: res.trajectory,
            corridors,
            wall_time: clock.elapsed().as_secs_f64(),
        });
        if done {
            break;
        }
    }

    let last = traces.last().expect("at least one outer iteration");
    let status = if last.ipddp_converged && last.control_change < config.outer_tol {
        PlanStatus::Converged
    } else {
        PlanStatus::MaxIters
    };
    Ok(PlanResult {
        trajectory: last.smoothed.clone(),
        corridors: last.corridors.clone(),
        status,
        traces,
    })
}

/// Offline re-check of a finished plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    /// Original objective (no centre tracking).
    pub total_cost: f64,
    /// Largest positive constraint value over all stages.
    pub max_primal_residual: f64,
    /// Per stage, `-max_i g_i` over control, state and corridor rows.
    pub stage_margins: Vec<f64>,
    /// Indices `t = 0..=T` whose position lies inside an obstacle.
    pub collisions: Vec<usize>,
}

impl PlanReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.collisions.is_empty() && self.stage_margins.iter().all(|m| *m >= -tol)
    }
}

pub fn evaluate_plan(result: &PlanResult, problem: &PlanningProblem) -> PlanReport {
    let traj = &result.trajectory;
    let constraints = SmoothingConstraints {
        limits: problem.control_limits.clone(),
        state: problem.state_constraint.clone(),
        positions: problem.model.position_indices().to_vec(),
        corridors: result.corridors.clone(),
    };
    let horizon = traj.horizon();
    let mut stage_margins = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut g = vec![0.0; constraints.count(t)];
        constraints.evaluate(t, traj.states[t].as_slice(), traj.controls[t].as_slice(), &mut g);
        stage_margins.push(-g.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let max_primal_residual = stage_margins.iter().map(|m| (-m).max(0.0)).fold(0.0, f64::max);
    let collisions = traj
        .states
        .iter()
        .enumerate()
        .filter(|(_, x)| problem.world.collides(&problem.model.position(x.as_slice())))
        .map(|(t, _)| t)
        .collect();
    let running: f64 = (0..horizon)
        .map(|t| problem.stage_cost.value(t, traj.states[t].as_slice(), traj.controls[t].as_slice()))
        .sum();
    PlanReport {
        total_cost: running + problem.final_cost.value(traj.final_state().as_slice()),
        max_primal_residual,
        stage_margins,
        collisions,
    }
}
