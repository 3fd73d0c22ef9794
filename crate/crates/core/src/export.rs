//! Comma-separated dumps of a plan. Values are printed with the shortest
//! round-trip representation, so equal plans give equal bytes.

use std::fmt::Write as _;

use crate::corridor::CorridorSequence;
use crate::dynamics::Trajectory;

/// `t, x0.., u0..`; the final row leaves the control columns empty.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states[0].len();
    let m = traj.controls.first().map_or(0, |u| u.len());
    let mut out = String::from("t");
    (0..n).for_each(|i| write!(out, ",x{i}").unwrap());
    (0..m).for_each(|i| write!(out, ",u{i}").unwrap());
    out.push('\n');
    for (t, x) in traj.states.iter().enumerate() {
        write!(out, "{t}").unwrap();
        x.iter().for_each(|v| write!(out, ",{v}").unwrap());
        match traj.controls.get(t) {
            Some(u) => u.iter().for_each(|v| write!(out, ",{v}").unwrap()),
            None => (0..m).for_each(|_| out.push(',')),
        }
        out.push('\n');
    }
    out
}

/// `t, c0.., radius`.
pub fn corridors_csv(corr: &CorridorSequence) -> String {
    let d = corr.centers.first().map_or(0, |c| c.len());
    let mut out = String::from("t");
    (0..d).for_each(|i| write!(out, ",c{i}").unwrap());
    out.push_str(",radius\n");
    for (t, (c, r)) in corr.centers.iter().zip(&corr.radii).enumerate() {
        write!(out, "{t}").unwrap();
        c.iter().for_each(|v| write!(out, ",{v}").unwrap());
        writeln!(out, ",{r}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn layouts() {
        let traj = Trajectory::new(
            vec![DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![0.5, 1.5])],
            vec![DVector::from_vec(vec![2.0])],
        )
        .unwrap();
        assert_eq!(trajectory_csv(&traj), "t,x0,x1,u0\n0,0,1,2\n1,0.5,1.5,\n");
        let corr = CorridorSequence { centers: vec![vec![0.0, 0.25]], radii: vec![0.5] };
        assert_eq!(corridors_csv(&corr), "t,c0,c1,radius\n0,0,0.25,0.5\n");
    }
}
