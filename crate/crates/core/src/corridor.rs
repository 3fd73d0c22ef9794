//! Collision-free ball corridors around a coarse path.
//!
//! For every path point `p` the builder looks for a ball `B_r(c)` that
//! contains `p`, stays clear of all obstacles and trades centre offset
//! against radius:
//!
//! ```text
//! minimize  lambda_c |c - p| - lambda_r r      s.t. |c - p| <= r <= r_max
//! ```
//!
//! It uses the same sample / weight / re-average update as the coarse search,
//! once per stage. An emitted ball is always free: if the final average
//! touches an obstacle its radius is shrunk by bisection. With `refine` set,
//! a deterministic pattern search then polishes each centre.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::dynamics::DynamicsModel;
use crate::error::{check_dim, Error, Result};
use crate::geom::{dist, Ball, CollisionWorld};
use crate::vi::{fill_standard_normal, keyed_rng, softmax_weights, stream_id};

#[derive(Debug, Clone, PartialEq)]
pub struct CorridorParams {
    /// Weight on the centre offset.
    pub lambda_c: f64,
    /// Reward per unit radius.
    pub lambda_r: f64,
    pub r_max: f64,
    pub samples: usize,
    /// Diagonal noise variance over `(c, r)`; length `dim + 1`.
    pub noise_variance: Vec<f64>,
    pub temperature: f64,
    pub inflate_iters: usize,
    /// Early stop once every stage moves less than this in `|dc| + |dr|`.
    pub tol: f64,
    /// Polish every ball with a deterministic local search after sampling.
    pub refine: bool,
    pub seed: u64,
}

impl CorridorParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.r_max > 0.0) {
            return Err(Error::InvalidArgument("r_max must be positive".into()));
        }
        if !(self.lambda_c > 0.0 && self.lambda_r > 0.0) {
            return Err(Error::InvalidArgument("corridor weights must be positive".into()));
        }
        if self.samples == 0 || self.inflate_iters == 0 {
            return Err(Error::InvalidArgument(
                "corridor sample count and inflation iterations must be at least 1".into(),
            ));
        }
        check_dim("corridor noise variance", dim + 1, self.noise_variance.len())?;
        if self.noise_variance.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("corridor noise variances must be >= 0".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("corridor temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Per-stage balls for `t = 0..T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorridorSequence {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

impl CorridorSequence {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn ball(&self, t: usize) -> Ball {
        Ball::new(self.centers[t].clone(), self.radii[t])
    }
}

/// `lambda_c |c - p| - lambda_r r`, or `+inf` if the ball meets an obstacle.
pub fn corridor_cost(
    center: &[f64],
    radius: f64,
    path_point: &[f64],
    world: &CollisionWorld,
    params: &CorridorParams,
) -> Result<f64> {
    check_dim("corridor center", world.dimension(), center.len())?;
    check_dim("path point", world.dimension(), path_point.len())?;
    Ok(stage_cost(center, radius, path_point, world, params))
}

fn stage_cost(c: &[f64], r: f64, p: &[f64], world: &CollisionWorld, params: &CorridorParams) -> f64 {
    if !world.ball_free(c, r) {
        return f64::INFINITY;
    }
    params.lambda_c * dist(c, p) - params.lambda_r * r
}

/// Clamps `r` to `[0, r_max]`, then pulls `c` radially toward `p` until
/// `|c - p| <= r`.
pub fn project_corridor_var(center: &[f64], radius: f64, path_point: &[f64], r_max: f64) -> (Vec<f64>, f64) {
    let mut c = center.to_vec();
    let r = project_in_place(&mut c, radius, path_point, r_max);
    (c, r)
}

fn project_in_place(c: &mut [f64], radius: f64, p: &[f64], r_max: f64) -> f64 {
    let r = radius.clamp(0.0, r_max);
    let d = dist(c, p);
    if d > r {
        let t = r / d;
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci = pi + t * (*ci - pi);
        }
    }
    r
}

#[derive(Debug, Clone)]
struct StageState {
    center: Vec<f64>,
    radius: f64,
}

fn inflate_round(
    t: usize,
    round: usize,
    state: &StageState,
    p: &[f64],
    world: &CollisionWorld,
    params: &CorridorParams,
) -> StageState {
    let d = p.len();
    let std: Vec<f64> = params.noise_variance.iter().map(|v| v.sqrt()).collect();
    let stream = stream_id(&[t as u64, round as u64]);
    let mut noise = vec![0.0; d + 1];
    let mut samples = Vec::with_capacity(params.samples);
    let mut costs = Vec::with_capacity(params.samples);
    for i in 0..params.samples {
        // samples come in pairs with mirrored centre noise and shared radius
        // noise; in open space both members tie and the centre does not drift
        let mut rng = keyed_rng(params.seed, stream, (i / 2) as u64);
        fill_standard_normal(&mut rng, &mut noise);
        if i % 2 == 1 {
            noise[..d].iter_mut().for_each(|v| *v = -*v);
        }
        let mut c: Vec<f64> = (0..d).map(|k| state.center[k] + std[k] * noise[k]).collect();
        let r = project_in_place(&mut c, state.radius + std[d] * noise[d], p, params.r_max);
        costs.push(stage_cost(&c, r, p, world, params));
        samples.push((c, r));
    }
    let Ok(weights) = softmax_weights(&costs, params.temperature) else {
        return state.clone();
    };
    let mut center = vec![0.0; d];
    let mut radius = 0.0;
    for ((c, r), &w) in samples.iter().zip(&weights) {
        if w != 0.0 {
            for (a, b) in center.iter_mut().zip(c) {
                *a += w * b;
            }
            radius += w * r;
        }
    }
    let radius = project_in_place(&mut center, radius, p, params.r_max);
    StageState { center, radius }
}

/// Largest radius in `[lo, hi]` (to bisection precision) whose ball is free;
/// `lo` must be free.
fn shrink_radius(world: &CollisionWorld, c: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if world.ball_free(c, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn make_free(state: StageState, p: &[f64], world: &CollisionWorld) -> StageState {
    if world.ball_free(&state.center, state.radius) {
        return state;
    }
    let offset = dist(&state.center, p);
    if offset <= state.radius && world.ball_free(&state.center, offset) {
        let radius = shrink_radius(world, &state.center, offset, state.radius);
        return StageState { radius, ..state };
    }
    let radius = shrink_radius(world, p, 0.0, state.radius);
    StageState {
        center: p.to_vec(),
        radius,
    }
}

/// Largest usable radius at `c`: the clearance, kept strictly below it,
/// capped at `r_max`.
fn usable_radius(world: &CollisionWorld, c: &[f64], r_max: f64) -> f64 {
    let d = world.clearance(c);
    if d > r_max {
        r_max
    } else {
        d * (1.0 - 1e-9)
    }
}

/// Stage cost with the radius chosen as large as possible for `c`.
fn reduced_cost(c: &[f64], p: &[f64], world: &CollisionWorld, params: &CorridorParams) -> (f64, f64) {
    let r = usable_radius(world, c, params.r_max);
    let offset = dist(c, p);
    if r > 0.0 && offset <= r {
        (params.lambda_c * offset - params.lambda_r * r, r)
    } else {
        (f64::INFINITY, r)
    }
}

fn pattern_search(start: &[f64], p: &[f64], world: &CollisionWorld, params: &CorridorParams) -> (Vec<f64>, f64, f64) {
    let d = start.len();
    // axes and diagonals; the reduced cost has kinks along which axis moves
    // alone can stall
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[k] = sign;
            dirs.push(v);
        }
    }
    for mask in 0..(1usize << d) {
        let scale = 1.0 / (d as f64).sqrt();
        dirs.push((0..d).map(|k| if mask >> k & 1 == 1 { scale } else { -scale }).collect());
    }
    let mut c = start.to_vec();
    let (mut best, mut r) = reduced_cost(&c, p, world, params);
    let mut h = 0.1 * params.r_max;
    let mut trial = vec![0.0; d];
    while best.is_finite() && h > 1e-9 * params.r_max {
        let mut moved = false;
        for v in &dirs {
            for k in 0..d {
                trial[k] = c[k] + h * v[k];
            }
            let (f, rt) = reduced_cost(&trial, p, world, params);
            if f < best {
                c.copy_from_slice(&trial);
                best = f;
                r = rt;
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (c, r, best)
}

/// Deterministic local polish of a free ball. Searches from the path point
/// and from the sampled centre and keeps the better result (the path-point
/// start on ties), so the outcome moves continuously with the path.
fn refine(state: StageState, p: &[f64], world: &CollisionWorld, params: &CorridorParams) -> StageState {
    let (mut c, mut r, mut f) = pattern_search(p, p, world, params);
    let (c2, r2, f2) = pattern_search(&state.center, p, world, params);
    if f2 < f {
        (c, r, f) = (c2, r2, f2);
    }
    let current = stage_cost(&state.center, state.radius, p, world, params);
    if f <= current && world.ball_free(&c, r) {
        StageState { center: c, radius: r }
    } else {
        state
    }
}

/// Builds one ball per stage `t = 0..T-1` around the positions of `states`.
pub fn build_corridors(
    states: &[DVector<f64>],
    world: &CollisionWorld,
    model: &dyn DynamicsModel,
    params: &CorridorParams,
) -> Result<CorridorSequence> {
    if states.len() < 2 {
        return Err(Error::InvalidArgument("corridors need a path with at least two states".into()));
    }
    let dim = model.position_indices().len();
    check_dim("world dimension", dim, world.dimension())?;
    params.validate(dim)?;
    let path: Vec<Vec<f64>> = states[..states.len() - 1]
        .iter()
        .map(|x| {
            check_dim("state", model.state_dim(), x.len())?;
            Ok(model.position(x.as_slice()))
        })
        .collect::<Result<_>>()?;
    if let Some(stage) = path.iter().position(|p| world.collides(p)) {
        return Err(Error::CorridorInfeasible { stage });
    }

    let mut stages: Vec<StageState> = path
        .iter()
        .map(|p| StageState {
            center: p.clone(),
            radius: 0.0,
        })
        .collect();
    for round in 0..params.inflate_iters {
        let next: Vec<StageState> = stages
            .par_iter()
            .zip(path.par_iter())
            .enumerate()
            .map(|(t, (s, p))| inflate_round(t, round, s, p, world, params))
            .collect();
        let change = next
            .iter()
            .zip(&stages)
            .map(|(a, b)| dist(&a.center, &b.center) + (a.radius - b.radius).abs())
            .fold(0.0, f64::max);
        stages = next;
        if change < params.tol {
            break;
        }
    }

    let (centers, radii) = stages
        .into_iter()
        .zip(&path)
        .map(|(s, p)| {
            let s = make_free(s, p, world);
            let s = if params.refine { refine(s, p, world, params) } else { s };
            (s.center, s.radius)
        })
        .unzip();
    Ok(CorridorSequence { centers, radii })
}
