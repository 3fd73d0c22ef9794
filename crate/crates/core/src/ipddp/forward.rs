use nalgebra::DVector;

use super::{ConstrainedOcp, Filter, GainSchedule, IpddpIterate, IpddpOptions, PassFailure};
use crate::dynamics::Trajectory;

/// An accepted forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardStep {
    pub iterate: IpddpIterate,
    pub alpha: f64,
    pub cost: f64,
    /// `cost - mu * sum(log s)`.
    pub barrier_cost: f64,
    /// `sum_t |g_t + s_t|_1`.
    pub violation: f64,
}

fn try_step(ocp: &ConstrainedOcp, it: &IpddpIterate, gains: &GainSchedule, alpha: f64, tau: f64) -> Option<ForwardStep> {
    let model = ocp.model.as_ref();
    let horizon = ocp.horizon;
    let old = &it.trajectory;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    let mut slacks = Vec::with_capacity(horizon);
    let mut duals = Vec::with_capacity(horizon);
    let mut x = ocp.x_init.clone();
    let (mut cost, mut log_sum, mut violation) = (0.0, 0.0, 0.0);

    for t in 0..horizon {
        let dx = &x - &old.states[t];
        let u = &old.controls[t] + &gains.du[t] * alpha + &gains.ku[t] * &dx;
        let k = ocp.constraint_count(t);
        if k > 0 {
            let s = &it.slacks[t] + &gains.ds[t] * alpha + &gains.ks[t] * &dx;
            let y = &it.duals[t] + &gains.dy[t] * alpha + &gains.ky[t] * &dx;
            let boundary = |new: &DVector<f64>, prev: &DVector<f64>| {
                new.iter().zip(prev.iter()).all(|(a, b)| *a >= (1.0 - tau) * b)
            };
            if !boundary(&s, &it.slacks[t]) || !boundary(&y, &it.duals[t]) {
                return None;
            }
            let g = ocp.constraint_values(t, x.as_slice(), u.as_slice());
            violation += (g + &s).lp_norm(1);
            log_sum += s.iter().map(|v| v.ln()).sum::<f64>();
            slacks.push(s);
            duals.push(y);
        } else {
            slacks.push(DVector::zeros(0));
            duals.push(DVector::zeros(0));
        }
        cost += ocp.stage_cost.value(t, x.as_slice(), u.as_slice());
        let mut next = DVector::zeros(x.len());
        model.step_into(x.as_slice(), u.as_slice(), next.as_mut_slice());
        states.push(x);
        controls.push(u);
        x = next;
    }
    cost += ocp.final_cost.value(x.as_slice());
    states.push(x);
    let barrier_cost = cost - it.mu * log_sum;
    if !(barrier_cost.is_finite() && violation.is_finite()) {
        return None;
    }
    Some(ForwardStep {
        iterate: IpddpIterate {
            trajectory: Trajectory { states, controls },
            slacks,
            duals,
            mu: it.mu,
            rho: it.rho,
        },
        alpha,
        cost,
        barrier_cost,
        violation,
    })
}

/// Line search over `alpha = 1, 1/2, ...`.
///
/// The closed-loop update is `u + alpha d_u + K_u dx` (same for `s`, `y`).
/// A step is rejected if it moves any slack or dual past the
/// fraction-to-boundary limit, or if `filter` does not accept its
/// `(barrier_cost, violation)` pair. The accepted pair is added to `filter`.
pub fn forward_pass(
    ocp: &ConstrainedOcp,
    it: &IpddpIterate,
    gains: &GainSchedule,
    filter: &mut Filter,
    opts: &IpddpOptions,
) -> Result<ForwardStep, PassFailure> {
    let mut alpha = 1.0;
    for _ in 0..opts.line_search_steps {
        if let Some(step) = try_step(ocp, it, gains, alpha, opts.tau) {
            if filter.accepts(step.barrier_cost, step.violation) {
                filter.push(step.barrier_cost, step.violation);
                return Ok(step);
            }
        }
        alpha *= 0.5;
    }
    Err(PassFailure::NoAcceptableStep)
}
