//! Sampling-based coarse trajectory search.
//!
//! One update perturbs the nominal control sequence with Gaussian noise,
//! projects every perturbed sequence onto the control constraint set, scores
//! it with the running/terminal cost plus an infinite collision indicator and
//! replaces the nominal with the exponentially weighted mean.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::constraint::StateConstraint;
use crate::cost::{FinalCost, StageCost};
use crate::dynamics::DynamicsModel;
use crate::error::{check_dim, Error, Result};
use crate::geom::CollisionWorld;
use crate::vi::{fill_standard_normal, keyed_rng, softmax_weights, ProjectionOperator};

/// Problem data for the coarse search.
#[derive(Debug, Clone)]
pub struct MppiProblem {
    pub model: Arc<dyn DynamicsModel>,
    pub world: Arc<CollisionWorld>,
    pub stage_cost: Arc<dyn StageCost>,
    pub final_cost: Arc<dyn FinalCost>,
    pub state_constraint: Option<Arc<dyn StateConstraint>>,
    /// Applied independently at every time step.
    pub control_projection: ProjectionOperator,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppiParams {
    pub samples: usize,
    /// Diagonal of the per-step control noise covariance.
    pub noise_variance: Vec<f64>,
    /// Inverse temperature.
    pub temperature: f64,
    pub seed: u64,
    /// Use the unperturbed nominal as sample 0.
    pub include_nominal: bool,
}

impl MppiParams {
    pub fn validate(&self, control_dim: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("MPPI needs at least one sample".into()));
        }
        check_dim("MPPI noise variance", control_dim, self.noise_variance.len())?;
        if self.noise_variance.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("MPPI noise variances must be >= 0".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("MPPI temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct MppiUpdate {
    /// Projected weighted mean of the samples.
    pub controls: Vec<DVector<f64>>,
    /// Lowest-cost sample of this round.
    pub best_controls: Vec<DVector<f64>>,
    pub best_cost: f64,
    pub feasible_samples: usize,
}

impl MppiProblem {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        check_dim(
            "world dimension",
            self.model.position_indices().len(),
            self.world.dimension(),
        )
    }

    fn check_controls(&self, controls: &[DVector<f64>]) -> Result<()> {
        check_dim("control sequence length", self.horizon, controls.len())?;
        let m = self.model.control_dim();
        controls.iter().try_for_each(|u| check_dim("control", m, u.len()))
    }

    /// Cost of a flat control sequence (`horizon * m` entries).
    pub(crate) fn flat_cost(&self, x0: &[f64], controls: &[f64], scratch: &mut RolloutScratch) -> f64 {
        let m = self.model.control_dim();
        let positions = self.model.position_indices();
        scratch.x.copy_from_slice(x0);
        let mut total = 0.0;
        for t in 0..=self.horizon {
            for (p, &i) in scratch.p.iter_mut().zip(positions) {
                *p = scratch.x[i];
            }
            if self.world.collides(&scratch.p) {
                return f64::INFINITY;
            }
            if let Some(g) = &self.state_constraint {
                if g.violated(&scratch.x) {
                    return f64::INFINITY;
                }
            }
            if t == self.horizon {
                break;
            }
            let u = &controls[t * m..(t + 1) * m];
            total += self.stage_cost.value(t, &scratch.x, u);
            self.model.step_into(&scratch.x, u, &mut scratch.next);
            std::mem::swap(&mut scratch.x, &mut scratch.next);
        }
        total + self.final_cost.value(&scratch.x)
    }

    fn scratch(&self) -> RolloutScratch {
        let n = self.model.state_dim();
        RolloutScratch {
            x: vec![0.0; n],
            next: vec![0.0; n],
            p: vec![0.0; self.model.position_indices().len()],
        }
    }
}

pub(crate) struct RolloutScratch {
    x: Vec<f64>,
    next: Vec<f64>,
    p: Vec<f64>,
}

fn flatten(controls: &[DVector<f64>]) -> Vec<f64> {
    controls.iter().flat_map(|u| u.iter().copied()).collect()
}

fn unflatten(flat: &[f64], m: usize) -> Vec<DVector<f64>> {
    flat.chunks(m).map(DVector::from_column_slice).collect()
}

/// Running plus terminal cost of the rollout from `x0`, or `+inf` if any
/// state `x_0..x_T` collides or violates the state constraint.
pub fn mppi_cost(prob: &MppiProblem, x0: &DVector<f64>, controls: &[DVector<f64>]) -> Result<f64> {
    check_dim("initial state", prob.model.state_dim(), x0.len())?;
    prob.check_controls(controls)?;
    Ok(prob.flat_cost(x0.as_slice(), &flatten(controls), &mut prob.scratch()))
}

/// Projects every time step of `controls` onto the control set.
pub fn project_sequence(prob: &MppiProblem, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
    controls
        .iter()
        .map(|u| {
            let mut v = u.clone();
            prob.control_projection.project_in_place(v.as_mut_slice());
            v
        })
        .collect()
}

/// One sampling update around `controls`. `stream` selects an independent
/// noise stream (the planner passes its iteration counters); sample `i` of a
/// stream is the same no matter how the work is split across threads.
pub fn mppi_update(
    prob: &MppiProblem,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    params: &MppiParams,
    stream: u64,
) -> Result<MppiUpdate> {
    check_dim("initial state", prob.model.state_dim(), x0.len())?;
    prob.check_controls(controls)?;
    prob.validate()?;
    let m = prob.model.control_dim();
    params.validate(m)?;

    let nominal = flatten(controls);
    let std: Vec<f64> = params.noise_variance.iter().map(|v| v.sqrt()).collect();
    let len = nominal.len();

    let scored: Vec<(Vec<f64>, f64)> = (0..params.samples)
        .into_par_iter()
        .map_init(
            || prob.scratch(),
            |scratch, i| {
                let mut sample = nominal.clone();
                if !(params.include_nominal && i == 0) {
                    let mut rng = keyed_rng(params.seed, stream, i as u64);
                    let mut noise = vec![0.0; len];
                    fill_standard_normal(&mut rng, &mut noise);
                    for (k, (s, z)) in sample.iter_mut().zip(noise).enumerate() {
                        *s += std[k % m] * z;
                    }
                }
                for u in sample.chunks_mut(m) {
                    prob.control_projection.project_in_place(u);
                }
                let cost = prob.flat_cost(x0.as_slice(), &sample, scratch);
                (sample, cost)
            },
        )
        .collect();

    let costs: Vec<f64> = scored.iter().map(|(_, c)| *c).collect();
    let weights = softmax_weights(&costs, params.temperature).map_err(|e| match e {
        Error::NoFeasibleSample { .. } => Error::NoFeasibleSample {
            context: format!("MPPI stream {stream:#x}, {} samples", params.samples),
        },
        other => other,
    })?;

    // Blend deviations from the projected nominal so that coinciding samples
    // reproduce it exactly. The fixed summation order keeps the result
    // independent of the thread count.
    let mut base = nominal;
    for u in base.chunks_mut(m) {
        prob.control_projection.project_in_place(u);
    }
    let mut shift = vec![0.0; len];
    for ((sample, _), &w) in scored.iter().zip(&weights) {
        if w != 0.0 {
            for ((d, s), b) in shift.iter_mut().zip(sample).zip(&base) {
                *d += w * (s - b);
            }
        }
    }
    let mut blend: Vec<f64> = base.iter().zip(&shift).map(|(b, d)| b + d).collect();
    for u in blend.chunks_mut(m) {
        prob.control_projection.project_in_place(u);
    }

    let (best_idx, best_cost) = costs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, c)| if c < acc.1 { (i, c) } else { acc });

    Ok(MppiUpdate {
        controls: unflatten(&blend, m),
        best_controls: unflatten(&scored[best_idx].0, m),
        best_cost,
        feasible_samples: costs.iter().filter(|c| c.is_finite()).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::GoalQuadratic;
    use crate::dynamics::DiffDrive;
    use crate::geom::Obstacle;
    use std::f64::consts::FRAC_PI_2;

    fn mobile_problem(world: CollisionWorld, horizon: usize) -> MppiProblem {
        MppiProblem {
            model: Arc::new(DiffDrive::new(0.1).unwrap()),
            world: Arc::new(world),
            stage_cost: Arc::new(GoalQuadratic::control_effort(0.01, 3, 2)),
            final_cost: Arc::new(GoalQuadratic::terminal(300.0, vec![0.0, 6.0, FRAC_PI_2])),
            state_constraint: None,
            control_projection: ProjectionOperator::boxed(vec![0.0, -1.5], vec![1.5, 1.5]).unwrap(),
            horizon,
        }
    }

    fn params(samples: usize, var: f64) -> MppiParams {
        MppiParams {
            samples,
            noise_variance: vec![var, var],
            temperature: 100.0,
            seed: 3,
            include_nominal: false,
        }
    }

    fn start() -> DVector<f64> {
        DVector::from_column_slice(&[0.0, 0.0, FRAC_PI_2])
    }

    #[test]
    fn cost_of_stationary_rollout() {
        let prob = mobile_problem(CollisionWorld::empty(2).unwrap(), 50);
        let c = mppi_cost(&prob, &start(), &vec![DVector::zeros(2); 50]).unwrap();
        assert!((c - 10800.0).abs() < 1e-9);
    }

    #[test]
    fn start_inside_obstacle_is_infinite() {
        let world = CollisionWorld::new(2, vec![Obstacle::sphere([0.0, 0.0], 0.5).unwrap()], None).unwrap();
        let prob = mobile_problem(world, 5);
        assert_eq!(mppi_cost(&prob, &start(), &vec![DVector::zeros(2); 5]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn terminal_state_collision_counts() {
        // only x_T enters the box
        let world = CollisionWorld::new(2, vec![Obstacle::aabb([-1.0, 0.45], [1.0, 1.0]).unwrap()], None).unwrap();
        let prob = mobile_problem(world, 5);
        let u = vec![DVector::from_column_slice(&[1.0, 0.0]); 5];
        assert_eq!(mppi_cost(&prob, &start(), &u).unwrap(), f64::INFINITY);
        let u = vec![DVector::from_column_slice(&[0.8, 0.0]); 5];
        assert!(mppi_cost(&prob, &start(), &u).unwrap().is_finite());
    }

    #[test]
    fn zero_cost_feasible_rollout() {
        let mut prob = mobile_problem(CollisionWorld::empty(2).unwrap(), 4);
        prob.final_cost = Arc::new(GoalQuadratic::terminal(0.0, vec![0.0; 3]));
        prob.stage_cost = Arc::new(GoalQuadratic::control_effort(0.0, 3, 2));
        let u = vec![DVector::from_column_slice(&[1.0, 0.5]); 4];
        assert_eq!(mppi_cost(&prob, &start(), &u).unwrap(), 0.0);
        assert!(mppi_cost(&prob, &start(), &u[..3]).is_err());
    }

    #[test]
    fn zero_noise_returns_projected_nominal() {
        let prob = mobile_problem(CollisionWorld::empty(2).unwrap(), 10);
        let u: Vec<DVector<f64>> = (0..10)
            .map(|t| DVector::from_column_slice(&[2.0 - 0.3 * t as f64, -2.0 + 0.4 * t as f64]))
            .collect();
        let out = mppi_update(&prob, &start(), &u, &params(16, 0.0), 0).unwrap();
        assert_eq!(out.controls, project_sequence(&prob, &u));
    }

    #[test]
    fn single_sample_is_returned() {
        let prob = mobile_problem(CollisionWorld::empty(2).unwrap(), 10);
        let u = vec![DVector::from_column_slice(&[0.7, 0.1]); 10];
        let out = mppi_update(&prob, &start(), &u, &params(1, 0.25), 5).unwrap();
        assert_eq!(out.controls, out.best_controls);
        assert_ne!(out.controls, u);
    }

    #[test]
    fn two_sample_blend_matches_hand_computation() {
        let prob = mobile_problem(CollisionWorld::empty(2).unwrap(), 6);
        let u = vec![DVector::from_column_slice(&[0.7, 0.1]); 6];
        let mut p = params(2, 0.04);
        p.temperature = 0.01;
        let out = mppi_update(&prob, &start(), &u, &p, 77).unwrap();

        // independent recomputation of the two samples from the keyed streams
        let samples: Vec<Vec<DVector<f64>>> = (0..2u64)
            .map(|i| {
                let mut rng = keyed_rng(p.seed, 77, i);
                let mut z = vec![0.0; 12];
                fill_standard_normal(&mut rng, &mut z);
                (0..6)
                    .map(|t| {
                        let raw = [0.7 + 0.2 * z[2 * t], 0.1 + 0.2 * z[2 * t + 1]];
                        DVector::from_column_slice(&[raw[0].clamp(0.0, 1.5), raw[1].clamp(-1.5, 1.5)])
                    })
                    .collect()
            })
            .collect();
        let j: Vec<f64> = samples.iter().map(|s| mppi_cost(&prob, &start(), s).unwrap()).collect();
        let jmin = j[0].min(j[1]);
        let e: Vec<f64> = j.iter().map(|c| (-p.temperature * (c - jmin)).exp()).collect();
        let wsum = e[0] + e[1];
        for t in 0..6 {
            let expected = &samples[0][t] * (e[0] / wsum) + &samples[1][t] * (e[1] / wsum);
            assert!((&out.controls[t] - expected).amax() < 1e-12);
        }
    }

    #[test]
    fn all_infeasible_samples_error() {
        let world = CollisionWorld::new(2, vec![Obstacle::sphere([0.0, 0.0], 0.5).unwrap()], None).unwrap();
        let prob = mobile_problem(world, 5);
        let err = mppi_update(&prob, &start(), &vec![DVector::zeros(2); 5], &params(8, 0.25), 1).unwrap_err();
        assert!(matches!(err, Error::NoFeasibleSample { .. }));
    }

    #[test]
    fn output_is_inside_control_set() {
        let prob = mobile_problem(CollisionWorld::empty(2).unwrap(), 20);
        let u = vec![DVector::zeros(2); 20];
        let out = mppi_update(&prob, &start(), &u, &params(200, 1.0), 2).unwrap();
        let again = project_sequence(&prob, &out.controls);
        for (a, b) in out.controls.iter().zip(&again) {
            assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn nominal_sample_dominates_when_noise_is_costly() {
        let prob = mobile_problem(CollisionWorld::empty(2).unwrap(), 10);
        let u = vec![DVector::from_column_slice(&[1.2, 0.0]); 10];
        let mut p = params(64, 0.25);
        p.include_nominal = true;
        p.temperature = 1e4;
        let out = mppi_update(&prob, &start(), &u, &p, 0).unwrap();
        let nominal_cost = mppi_cost(&prob, &start(), &u).unwrap();
        if out.best_cost == nominal_cost {
            assert_eq!(out.best_controls, u);
        }
        assert!(out.best_cost <= nominal_cost);
    }
}
