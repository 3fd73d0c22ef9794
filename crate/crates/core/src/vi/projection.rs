//! Euclidean projections onto the convex sets used as control and corridor
//! constraints.

use crate::error::{check_dim, Error, Result};

/// A closed convex set with a closed-form projection.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionOperator {
    /// Componentwise interval `lo <= u <= hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Unit second-order cone `{(v, s) : |v| <= s}`; `s` is the last entry.
    StandardCone,
    /// `{(v, s) : |v| <= s tan(half_angle)}`, optionally intersected with the
    /// ball `|u| <= cap`.
    ScaledCone { half_angle: f64, cap: Option<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Independent operators on consecutive blocks; block sizes must add up
    /// to the input dimension.
    Composite(Vec<(usize, ProjectionOperator)>),
}

impl ProjectionOperator {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("box upper bound", lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box needs lo <= hi".into()));
        }
        Ok(ProjectionOperator::Box { lo, hi })
    }

    pub fn scaled_cone(half_angle: f64, cap: Option<f64>) -> Result<Self> {
        if !(half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!(
                "cone half-angle must lie in (0, pi/2), got {half_angle}"
            )));
        }
        if let Some(c) = cap {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("norm cap must be positive, got {c}")));
            }
        }
        Ok(ProjectionOperator::ScaledCone { half_angle, cap })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument("ball radius must be non-negative".into()));
        }
        Ok(ProjectionOperator::Ball { center, radius })
    }

    /// Expected input dimension, if the operator fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ProjectionOperator::Box { lo, .. } => Some(lo.len()),
            ProjectionOperator::Ball { center, .. } => Some(center.len()),
            ProjectionOperator::Composite(blocks) => Some(blocks.iter().map(|(n, _)| n).sum()),
            _ => None,
        }
    }

    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.is_empty() {
            return Err(Error::InvalidArgument("cannot project a zero-dimensional vector".into()));
        }
        if let Some(d) = self.dim() {
            check_dim("projection input", d, u.len())?;
        }
        let mut out = u.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Unchecked in-place projection for hot loops.
    pub(crate) fn project_in_place(&self, u: &mut [f64]) {
        match self {
            ProjectionOperator::Box { lo, hi } => {
                for ((x, l), h) in u.iter_mut().zip(lo).zip(hi) {
                    *x = x.clamp(*l, *h);
                }
            }
            ProjectionOperator::StandardCone => project_cone(u, 1.0),
            ProjectionOperator::ScaledCone { half_angle, cap } => {
                project_cone(u, half_angle.tan());
                if let Some(cap) = cap {
                    scale_into_ball(u, *cap);
                }
            }
            ProjectionOperator::Ball { center, radius } => {
                let d = crate::geom::dist(u, center);
                if d > *radius {
                    let t = radius / d;
                    for (x, c) in u.iter_mut().zip(center) {
                        *x = c + t * (*x - c);
                    }
                }
            }
            ProjectionOperator::Composite(blocks) => {
                let mut start = 0;
                for (len, op) in blocks {
                    op.project_in_place(&mut u[start..start + len]);
                    start += len;
                }
            }
        }
    }

    /// True if `u` already lies in the set (within `tol`).
    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            ProjectionOperator::Box { lo, hi } => u
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            ProjectionOperator::StandardCone => in_cone(u, 1.0, tol),
            ProjectionOperator::ScaledCone { half_angle, cap } => {
                in_cone(u, half_angle.tan(), tol)
                    && cap.is_none_or(|c| norm(u) <= c + tol)
            }
            ProjectionOperator::Ball { center, radius } => {
                crate::geom::dist(u, center) <= radius + tol
            }
            ProjectionOperator::Composite(blocks) => {
                let mut start = 0;
                blocks.iter().all(|(len, op)| {
                    let ok = op.contains(&u[start..start + len], tol);
                    start += len;
                    ok
                })
            }
        }
    }
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn in_cone(u: &[f64], slope: f64, tol: f64) -> bool {
    let (v, s) = u.split_at(u.len() - 1);
    s[0] >= -tol && norm(v) <= s[0] * slope + tol
}

/// Projection onto `{(v, s) : |v| <= slope * s}`.
fn project_cone(u: &mut [f64], slope: f64) {
    let n = u.len();
    let s = u[n - 1];
    let v_norm = norm(&u[..n - 1]);
    if v_norm <= slope * s {
        return;
    }
    if slope * v_norm <= -s {
        u.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let lambda = (slope * v_norm + s) / (slope * slope + 1.0);
    for x in &mut u[..n - 1] {
        *x *= lambda * slope / v_norm;
    }
    u[n - 1] = lambda;
}

fn scale_into_ball(u: &mut [f64], radius: f64) {
    let r = norm(u);
    if r > radius {
        let t = radius / r;
        u.iter_mut().for_each(|x| *x *= t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn box_clamps_controls() {
        let op = ProjectionOperator::boxed(vec![0.0, -1.5], vec![1.5, 1.5]).unwrap();
        assert_eq!(op.project(&[2.0, -2.0]).unwrap(), vec![1.5, -1.5]);
        assert!(op.project(&[1.0]).is_err());
        assert!(ProjectionOperator::boxed(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn standard_cone_branches() {
        let op = ProjectionOperator::StandardCone;
        assert_eq!(op.project(&[1.0, 0.0, 0.0]).unwrap(), vec![0.5, 0.0, 0.5]);
        assert_eq!(op.project(&[1.0, 0.0, -2.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(op.project(&[0.3, 0.4, 1.0]).unwrap(), vec![0.3, 0.4, 1.0]);
        assert!(op.project(&[]).is_err());
    }

    #[test]
    fn scaled_cone_fixes_its_boundary() {
        let op = ProjectionOperator::scaled_cone(60f64.to_radians(), None).unwrap();
        let p = op.project(&[3f64.sqrt(), 0.0, 1.0]).unwrap();
        assert!(close(&p, &[3f64.sqrt(), 0.0, 1.0], 1e-15));
        assert!(ProjectionOperator::scaled_cone(0.0, None).is_err());
        assert!(ProjectionOperator::scaled_cone(1.0, Some(0.0)).is_err());
    }

    #[test]
    fn scaled_cone_matches_brute_force() {
        // Oracle: minimize distance over a fine grid of boundary points in the
        // plane spanned by (v, s).
        let slope = 60f64.to_radians().tan();
        let op = ProjectionOperator::scaled_cone(60f64.to_radians(), None).unwrap();
        for u in [[3.0, 0.0, 0.0], [2.0, 1.0, -0.5], [-4.0, 1.0, 0.5]] {
            let p = op.project(&u).unwrap();
            let vn = (u[0] * u[0] + u[1] * u[1]).sqrt();
            let dir = [u[0] / vn, u[1] / vn];
            let mut best = f64::INFINITY;
            for i in 0..=200_000 {
                let s = i as f64 * 1e-5;
                let q = [dir[0] * slope * s, dir[1] * slope * s, s];
                best = best.min(crate::geom::dist(&q, &u));
            }
            let d = crate::geom::dist(&p, &u);
            assert!((d - best).abs() < 1e-4, "{u:?}: {d} vs {best}");
        }
    }

    #[test]
    fn cone_with_cap() {
        let op = ProjectionOperator::scaled_cone(60f64.to_radians(), Some(20.0)).unwrap();
        let p = op.project(&[0.0, 0.0, 30.0]).unwrap();
        assert!(close(&p, &[0.0, 0.0, 20.0], 1e-12));
        let p = op.project(&[40.0, 0.0, 1.0]).unwrap();
        assert!(norm(&p) <= 20.0 + 1e-12);
        assert!(op.contains(&p, 1e-9));
    }

    #[test]
    fn ball_and_composite() {
        let op = ProjectionOperator::ball(vec![1.0, 1.0], 1.0).unwrap();
        assert!(close(&op.project(&[3.0, 1.0]).unwrap(), &[2.0, 1.0], 1e-15));
        assert_eq!(op.project(&[1.5, 1.0]).unwrap(), vec![1.5, 1.0]);
        let comp = ProjectionOperator::Composite(vec![
            (1, ProjectionOperator::boxed(vec![0.0], vec![1.0]).unwrap()),
            (2, ProjectionOperator::ball(vec![0.0, 0.0], 1.0).unwrap()),
        ]);
        assert!(close(&comp.project(&[2.0, 0.0, 3.0]).unwrap(), &[1.0, 0.0, 1.0], 1e-15));
        assert!(comp.project(&[1.0, 1.0]).is_err());
    }

    fn operators() -> Vec<ProjectionOperator> {
        vec![
            ProjectionOperator::boxed(vec![-1.0, 0.0, -2.0], vec![1.0, 0.5, 3.0]).unwrap(),
            ProjectionOperator::ball(vec![0.5, -0.5, 1.0], 1.5).unwrap(),
            ProjectionOperator::StandardCone,
            ProjectionOperator::scaled_cone(60f64.to_radians(), None).unwrap(),
            ProjectionOperator::scaled_cone(60f64.to_radians(), Some(2.0)).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn projections_are_idempotent(u in prop::array::uniform3(-5.0..5.0f64)) {
            for op in operators() {
                let p = op.project(&u).unwrap();
                let pp = op.project(&p).unwrap();
                prop_assert!(close(&p, &pp, 1e-12), "{op:?}");
                prop_assert!(op.contains(&p, 1e-9));
            }
        }

        #[test]
        fn projections_are_nonexpansive(
            a in prop::array::uniform3(-5.0..5.0f64),
            b in prop::array::uniform3(-5.0..5.0f64),
        ) {
            for op in operators() {
                let (pa, pb) = (op.project(&a).unwrap(), op.project(&b).unwrap());
                prop_assert!(crate::geom::dist(&pa, &pb) <= crate::geom::dist(&a, &b) + 1e-12);
            }
        }

        #[test]
        fn scaled_cone_output_is_feasible(u in prop::array::uniform3(-50.0..50.0f64)) {
            let phi = 60f64.to_radians();
            let p = ProjectionOperator::scaled_cone(phi, None).unwrap().project(&u).unwrap();
            prop_assert!(p[2] >= 0.0);
            prop_assert!((p[0] * p[0] + p[1] * p[1]).sqrt() <= p[2] * phi.tan() + 1e-9);
        }
    }
}
