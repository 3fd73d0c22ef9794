//! Obstacle sets and the binary collision queries used by every stage of the
//! planner.
//!
//! Obstacles are closed sets: a point on a boundary is in collision and a ball
//! that touches an obstacle is not free. Optional workspace bounds act as an
//! inverted obstacle, so a point must lie strictly inside them.

use crate::error::{check_dim, Error, Result};

/// A single obstacle primitive.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    /// Axis-aligned box given by its minimum and maximum corners.
    Box { min: Vec<f64>, max: Vec<f64> },
    Sphere { center: Vec<f64>, radius: f64 },
}

impl Obstacle {
    pub fn aabb(min: impl Into<Vec<f64>>, max: impl Into<Vec<f64>>) -> Result<Self> {
        let (min, max) = (min.into(), max.into());
        check_dim("box max corner", min.len(), max.len())?;
        if min.iter().zip(&max).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidArgument(format!(
                "box min corner {min:?} exceeds max corner {max:?}"
            )));
        }
        Ok(Obstacle::Box { min, max })
    }

    pub fn sphere(center: impl Into<Vec<f64>>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sphere radius must be finite and non-negative, got {radius}"
            )));
        }
        Ok(Obstacle::Sphere {
            center: center.into(),
            radius,
        })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Obstacle::Box { min, .. } => min.len(),
            Obstacle::Sphere { center, .. } => center.len(),
        }
    }

    fn contains(&self, p: &[f64]) -> bool {
        match self {
            Obstacle::Box { min, max } => p
                .iter()
                .zip(min.iter().zip(max))
                .all(|(x, (lo, hi))| lo <= x && x <= hi),
            Obstacle::Sphere { center, radius } => dist(p, center) <= *radius,
        }
    }

    /// Distance from `p` to the set; zero inside.
    fn distance(&self, p: &[f64]) -> f64 {
        match self {
            Obstacle::Box { min, max } => p
                .iter()
                .zip(min.iter().zip(max))
                .map(|(x, (lo, hi))| {
                    let gap = (lo - x).max(x - hi).max(0.0);
                    gap * gap
                })
                .sum::<f64>()
                .sqrt(),
            Obstacle::Sphere { center, radius } => (dist(p, center) - radius).max(0.0),
        }
    }
}

/// Axis-aligned workspace limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// A Euclidean ball `{p : |p - center| <= radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: impl Into<Vec<f64>>, radius: f64) -> Self {
        Ball {
            center: center.into(),
            radius,
        }
    }
}

/// Immutable obstacle set. All queries are read-only, so a world can be shared
/// freely between worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionWorld {
    dimension: usize,
    obstacles: Vec<Obstacle>,
    bounds: Option<Bounds>,
}

impl CollisionWorld {
    pub fn new(dimension: usize, obstacles: Vec<Obstacle>, bounds: Option<Bounds>) -> Result<Self> {
        if !(2..=3).contains(&dimension) {
            return Err(Error::InvalidArgument(format!(
                "world dimension must be 2 or 3, got {dimension}"
            )));
        }
        for obstacle in &obstacles {
            check_dim("obstacle", dimension, obstacle.dimension())?;
        }
        if let Some(b) = &bounds {
            check_dim("bounds min corner", dimension, b.min.len())?;
            check_dim("bounds max corner", dimension, b.max.len())?;
            if b.min.iter().zip(&b.max).any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::InvalidArgument(
                    "workspace bounds must have min < max on every axis".into(),
                ));
            }
        }
        Ok(CollisionWorld {
            dimension,
            obstacles,
            bounds,
        })
    }

    pub fn empty(dimension: usize) -> Result<Self> {
        Self::new(dimension, Vec::new(), None)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn bounds(&self) -> Option<&Bounds> {
        self.bounds.as_ref()
    }

    /// True iff `p` lies in (or on the boundary of) any obstacle, or outside
    /// the open workspace bounds.
    pub fn point_in_collision(&self, p: &[f64]) -> Result<bool> {
        check_dim("query point", self.dimension, p.len())?;
        Ok(self.collides(p))
    }

    /// Euclidean distance to the nearest obstacle surface; 0 in collision and
    /// `+inf` for an empty unbounded world.
    pub fn distance_to_obstacles(&self, p: &[f64]) -> Result<f64> {
        check_dim("query point", self.dimension, p.len())?;
        Ok(self.clearance(p))
    }

    /// True iff the closed ball does not touch any obstacle and lies strictly
    /// inside the workspace bounds. Tangency counts as intersection.
    pub fn ball_is_free(&self, ball: &Ball) -> Result<bool> {
        check_dim("ball center", self.dimension, ball.center.len())?;
        Ok(self.ball_free(&ball.center, ball.radius))
    }

    pub(crate) fn collides(&self, p: &[f64]) -> bool {
        if let Some(b) = &self.bounds {
            let inside = p
                .iter()
                .zip(b.min.iter().zip(&b.max))
                .all(|(x, (lo, hi))| lo < x && x < hi);
            if !inside {
                return true;
            }
        }
        self.obstacles.iter().any(|o| o.contains(p))
    }

    pub(crate) fn clearance(&self, p: &[f64]) -> f64 {
        if self.collides(p) {
            return 0.0;
        }
        let to_bounds = match &self.bounds {
            Some(b) => p
                .iter()
                .zip(b.min.iter().zip(&b.max))
                .map(|(x, (lo, hi))| (x - lo).min(hi - x))
                .fold(f64::INFINITY, f64::min),
            None => f64::INFINITY,
        };
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(to_bounds, f64::min)
    }

    pub(crate) fn ball_free(&self, center: &[f64], radius: f64) -> bool {
        radius >= 0.0 && self.clearance(center) > radius
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box() -> CollisionWorld {
        CollisionWorld::new(2, vec![Obstacle::aabb([0.0, 0.0], [1.0, 1.0]).unwrap()], None).unwrap()
    }

    fn unit_circle() -> CollisionWorld {
        CollisionWorld::new(2, vec![Obstacle::sphere([0.0, 0.0], 1.0).unwrap()], None).unwrap()
    }

    #[test]
    fn point_queries() {
        let empty = CollisionWorld::empty(2).unwrap();
        assert!(!empty.point_in_collision(&[1.0, 2.0]).unwrap());
        assert!(unit_box().point_in_collision(&[0.5, 0.5]).unwrap());
        // closed set: boundary is occupied
        assert!(unit_circle().point_in_collision(&[1.0, 0.0]).unwrap());
    }

    #[test]
    fn distances() {
        let empty = CollisionWorld::empty(3).unwrap();
        assert_eq!(empty.distance_to_obstacles(&[4.0, 5.0, 6.0]).unwrap(), f64::INFINITY);
        assert_eq!(unit_box().distance_to_obstacles(&[2.0, 0.5]).unwrap(), 1.0);
        assert_eq!(unit_circle().distance_to_obstacles(&[3.0, 0.0]).unwrap(), 2.0);
        assert_eq!(unit_box().distance_to_obstacles(&[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn ball_queries() {
        let empty = CollisionWorld::empty(2).unwrap();
        assert!(empty.ball_is_free(&Ball::new([0.0, 0.0], 100.0)).unwrap());
        let world = unit_box();
        assert!(!world.ball_is_free(&Ball::new([2.0, 0.5], 1.0)).unwrap());
        assert!(world.ball_is_free(&Ball::new([2.0, 0.5], 0.9)).unwrap());
    }

    #[test]
    fn tangent_ball_against_dense_sampling() {
        // Oracle: sample the ball densely and test each point.
        let world = unit_box();
        let sample_hits = |c: [f64; 2], r: f64| {
            let n = 400;
            (0..=n).any(|i| {
                (0..=n).any(|j| {
                    let p = [
                        c[0] - r + 2.0 * r * i as f64 / n as f64,
                        c[1] - r + 2.0 * r * j as f64 / n as f64,
                    ];
                    dist(&p, &c) <= r && world.point_in_collision(&p).unwrap()
                })
            })
        };
        assert!(!sample_hits([2.0, 0.5], 0.9));
        assert!(world.ball_is_free(&Ball::new([2.0, 0.5], 0.9)).unwrap());
        assert!(sample_hits([2.0, 0.5], 1.0));
    }

    #[test]
    fn bounds_are_an_inverted_obstacle() {
        let bounds = Bounds {
            min: vec![-1.0, -1.0],
            max: vec![1.0, 1.0],
        };
        let world = CollisionWorld::new(2, vec![], Some(bounds)).unwrap();
        assert!(!world.point_in_collision(&[0.0, 0.0]).unwrap());
        assert!(world.point_in_collision(&[1.0, 0.0]).unwrap());
        assert!(world.point_in_collision(&[2.0, 0.0]).unwrap());
        assert_eq!(world.distance_to_obstacles(&[0.5, 0.0]).unwrap(), 0.5);
        assert!(world.ball_is_free(&Ball::new([0.0, 0.0], 0.9)).unwrap());
        assert!(!world.ball_is_free(&Ball::new([0.5, 0.0], 0.5)).unwrap());
    }

    #[test]
    fn dimension_errors() {
        let world = unit_box();
        assert!(matches!(
            world.point_in_collision(&[0.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(world.distance_to_obstacles(&[0.0]).is_err());
        assert!(world.ball_is_free(&Ball::new([0.0, 0.0, 0.0], 1.0)).is_err());
        assert!(CollisionWorld::new(
            2,
            vec![Obstacle::sphere([0.0, 0.0, 0.0], 1.0).unwrap()],
            None
        )
        .is_err());
        assert!(Obstacle::aabb([1.0, 0.0], [0.0, 1.0]).is_err());
        assert!(Obstacle::sphere([0.0, 0.0], -1.0).is_err());
        assert!(CollisionWorld::empty(4).is_err());
    }

    fn arb_world() -> impl Strategy<Value = CollisionWorld> {
        prop::collection::vec(
            (-3.0..3.0f64, -3.0..3.0f64, 0.05..1.5f64, 0.05..1.5f64),
            0..=5,
        )
        .prop_map(|boxes| {
            let obstacles = boxes
                .into_iter()
                .map(|(x, y, w, h)| Obstacle::aabb([x, y], [x + w, y + h]).unwrap())
                .collect();
            CollisionWorld::new(2, obstacles, None).unwrap()
        })
    }

    proptest! {
        #[test]
        fn ball_freedom_is_monotone_in_radius(
            world in arb_world(), cx in -4.0..4.0f64, cy in -4.0..4.0f64,
            r1 in 0.0..2.0f64, r2 in 0.0..2.0f64,
        ) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            if world.ball_is_free(&Ball::new([cx, cy], hi)).unwrap() {
                prop_assert!(world.ball_is_free(&Ball::new([cx, cy], lo)).unwrap());
            }
        }

        #[test]
        fn zero_ball_matches_point_query(world in arb_world(), cx in -4.0..4.0f64, cy in -4.0..4.0f64) {
            let p = [cx, cy];
            prop_assert_eq!(
                world.ball_is_free(&Ball::new(p, 0.0)).unwrap(),
                !world.point_in_collision(&p).unwrap()
            );
            prop_assert_eq!(
                world.distance_to_obstacles(&p).unwrap() > 0.0,
                !world.point_in_collision(&p).unwrap()
            );
        }

        #[test]
        fn ball_freedom_matches_grid_oracle(
            world in arb_world(), cx in -4.0..4.0f64, cy in -4.0..4.0f64, r in 0.01..1.0f64,
        ) {
            let n = 60;
            let hit = (0..=n).any(|i| (0..=n).any(|j| {
                let p = [cx - r + 2.0 * r * i as f64 / n as f64, cy - r + 2.0 * r * j as f64 / n as f64];
                dist(&p, &[cx, cy]) <= r && world.point_in_collision(&p).unwrap()
            }));
            let d = world.distance_to_obstacles(&[cx, cy]).unwrap();
            // the grid resolves the ball only up to its spacing; skip the tangency band
            let spacing = 2.0 * r / n as f64 * std::f64::consts::SQRT_2;
            if (d - r).abs() > 1e-3_f64.max(spacing) {
                prop_assert_eq!(world.ball_is_free(&Ball::new([cx, cy], r)).unwrap(), !hit);
            }
        }
    }
}
