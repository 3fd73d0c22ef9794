//! Scenario files: a TOML description of the model, costs, limits, world and
//! solver tables, plus the two bundled case studies.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraint::ControlLimits;
use crate::corridor::CorridorParams;
use crate::cost::GoalQuadratic;
use crate::dynamics::{DiffDrive, DynamicsModel, PointMassQuadrotor};
use crate::error::{Error, Result};
use crate::geom::{Bounds, CollisionWorld, Obstacle};
use crate::ipddp::IpddpOptions;
use crate::mppi::MppiParams;
use crate::planner::{PlannerConfig, PlanningProblem};
use crate::vi::stream_id;

const MOBILE_ROBOT: &str = include_str!("../scenarios/mobile_robot.toml");
const QUADROTOR: &str = include_str!("../scenarios/quadrotor.toml");

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 2] = ["mobile_robot", "quadrotor"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DiffDrive,
    QuadrotorPointMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dt: f64,
    pub horizon: usize,
    pub start: Vec<f64>,
    /// Control used at every stage of the first warm start; zeros if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_control: Option<Vec<f64>>,
}

/// `terminal_weight |x_T - target|^2 + control_weight sum_t |u_t|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub terminal_weight: f64,
    pub target: Vec<f64>,
    pub control_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Cone { half_angle_deg: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    Box { min: Vec<f64>, max: Vec<f64> },
    Sphere { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiSpec {
    pub samples: usize,
    pub noise_variance: Vec<f64>,
    /// Inverse temperature.
    pub temperature: f64,
    #[serde(default = "yes")]
    pub include_nominal: bool,
}

fn default_inflate_iters() -> usize {
    5
}

fn default_corridor_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSpec {
    pub lambda_c: f64,
    pub lambda_r: f64,
    pub r_max: f64,
    pub samples: usize,
    pub noise_variance: Vec<f64>,
    /// Inverse temperature.
    pub temperature: f64,
    #[serde(default = "default_inflate_iters")]
    pub inflate_iters: usize,
    #[serde(default = "default_corridor_tol")]
    pub tol: f64,
    /// Polish each sampled ball with a local search.
    #[serde(default = "yes")]
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSpec {
    pub outer_max_iters: usize,
    pub outer_tol: f64,
    /// Diagonal of the centre-tracking weight; one entry per position axis.
    /// Empty means `0.001` on every axis.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub corridor_weight: Vec<f64>,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        PlannerSpec {
            outer_max_iters: 30,
            outer_tol: 1e-3,
            corridor_weight: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    pub cost: CostSpec,
    pub constraints: ConstraintSpec,
    pub world: WorldSpec,
    pub mppi: MppiSpec,
    pub corridor: CorridorSpec,
    #[serde(default)]
    pub ipddp: IpddpOptions,
    #[serde(default)]
    pub planner: PlannerSpec,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses scenario text. Unknown keys are errors; the error names the key
/// path and, where known, the line.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
        path: String::new(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            path,
            line: inner.span().map(|s| line_of(text, s.start)),
            message: inner.message().to_string(),
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// One of the bundled scenarios by name.
pub fn bundled(name: &str) -> Option<ScenarioSpec> {
    let text = match name {
        "mobile_robot" => MOBILE_ROBOT,
        "quadrotor" => QUADROTOR,
        _ => return None,
    };
    Some(parse_scenario(text).expect("bundled scenarios parse"))
}

/// Raw text of a bundled scenario.
pub fn bundled_text(name: &str) -> Option<&'static str> {
    match name {
        "mobile_robot" => Some(MOBILE_ROBOT),
        "quadrotor" => Some(QUADROTOR),
        _ => None,
    }
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line: None,
        message: message.into(),
    }
}

impl ScenarioSpec {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn model(&self) -> Result<Arc<dyn DynamicsModel>> {
        Ok(match self.model.kind {
            ModelKind::DiffDrive => Arc::new(DiffDrive::new(self.model.dt)?),
            ModelKind::QuadrotorPointMass => Arc::new(PointMassQuadrotor::new(self.model.dt)?),
        })
    }

    /// Structural checks that the type system does not cover.
    pub fn validate(&self) -> Result<()> {
        let model = self.model().map_err(|e| invalid("model.dt", e.to_string()))?;
        let (n, m) = (model.state_dim(), model.control_dim());
        let d = model.position_indices().len();
        if self.model.horizon == 0 {
            return Err(invalid("model.horizon", "must be at least 1"));
        }
        let expect = |path: &str, want: usize, got: usize| {
            if want == got {
                Ok(())
            } else {
                Err(invalid(path, format!("expected {want} entries, got {got}")))
            }
        };
        expect("model.start", n, self.model.start.len())?;
        if let Some(u) = &self.model.initial_control {
            expect("model.initial_control", m, u.len())?;
        }
        expect("cost.target", n, self.cost.target.len())?;
        if let ConstraintSpec::Box { lo, hi } = &self.constraints {
            expect("constraints.lo", m, lo.len())?;
            expect("constraints.hi", m, hi.len())?;
        }
        expect("world.dimension", d, self.world.dimension)?;
        expect("mppi.noise_variance", m, self.mppi.noise_variance.len())?;
        expect("corridor.noise_variance", d + 1, self.corridor.noise_variance.len())?;
        if !self.planner.corridor_weight.is_empty() {
            expect("planner.corridor_weight", d, self.planner.corridor_weight.len())?;
        }
        self.world().map_err(|e| invalid("world", e.to_string()))?;
        self.control_limits()
            .validate(m)
            .map_err(|e| invalid("constraints", e.to_string()))?;
        let (problem, config) = self.build_unchecked(model)?;
        config.validate(&problem).map_err(|e| invalid("", e.to_string()))
    }

    pub fn world(&self) -> Result<CollisionWorld> {
        let obstacles = self
            .world
            .obstacles
            .iter()
            .map(|o| match o {
                ObstacleSpec::Box { min, max } => Obstacle::aabb(min.clone(), max.clone()),
                ObstacleSpec::Sphere { center, radius } => Obstacle::sphere(center.clone(), *radius),
            })
            .collect::<Result<Vec<_>>>()?;
        let bounds = self.world.bounds.as_ref().map(|b| Bounds {
            min: b.min.clone(),
            max: b.max.clone(),
        });
        CollisionWorld::new(self.world.dimension, obstacles, bounds)
    }

    pub fn control_limits(&self) -> ControlLimits {
        match &self.constraints {
            ConstraintSpec::Box { lo, hi } => ControlLimits::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            ConstraintSpec::Cone { half_angle_deg, cap } => ControlLimits::Cone {
                half_angle: half_angle_deg.to_radians(),
                cap: *cap,
            },
        }
    }

    fn build_unchecked(&self, model: Arc<dyn DynamicsModel>) -> Result<(PlanningProblem, PlannerConfig)> {
        let (n, m) = (model.state_dim(), model.control_dim());
        let d = model.position_indices().len();
        let u0 = self.model.initial_control.clone().unwrap_or_else(|| vec![0.0; m]);
        let problem = PlanningProblem {
            start: DVector::from_column_slice(&self.model.start),
            horizon: self.model.horizon,
            stage_cost: Arc::new(GoalQuadratic::control_effort(self.cost.control_weight, n, m)),
            final_cost: Arc::new(GoalQuadratic::terminal(self.cost.terminal_weight, self.cost.target.clone())),
            control_limits: self.control_limits(),
            state_constraint: None,
            world: Arc::new(self.world()?),
            initial_controls: vec![DVector::from_vec(u0); self.model.horizon],
            model,
        };
        let c = &self.corridor;
        let config = PlannerConfig {
            mppi: MppiParams {
                samples: self.mppi.samples,
                noise_variance: self.mppi.noise_variance.clone(),
                temperature: self.mppi.temperature,
                seed: self.seed,
                include_nominal: self.mppi.include_nominal,
            },
            corridor: CorridorParams {
                lambda_c: c.lambda_c,
                lambda_r: c.lambda_r,
                r_max: c.r_max,
                samples: c.samples,
                noise_variance: c.noise_variance.clone(),
                temperature: c.temperature,
                inflate_iters: c.inflate_iters,
                tol: c.tol,
                refine: c.refine,
                // separate noise family from the coarse search
                seed: stream_id(&[self.seed, 1]),
            },
            ipddp: self.ipddp.clone(),
            outer_max_iters: self.planner.outer_max_iters,
            outer_tol: self.planner.outer_tol,
            corridor_weight: if self.planner.corridor_weight.is_empty() {
                vec![1e-3; d]
            } else {
                self.planner.corridor_weight.clone()
            },
        };
        Ok((problem, config))
    }

    /// Problem and tuning ready for [`crate::planner::plan`].
    pub fn build(&self) -> Result<(PlanningProblem, PlannerConfig)> {
        let (problem, config) = self.build_unchecked(self.model()?)?;
        problem.validate()?;
        config.validate(&problem)?;
        Ok((problem, config))
    }
}
