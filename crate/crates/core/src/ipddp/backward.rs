use nalgebra::{DMatrix, DVector};

use super::{ConstrainedOcp, GainSchedule, IpddpIterate, IpddpOptions, PassFailure, ValueExpansion};
use crate::dynamics::DynamicsModel;

/// Scales row `i` of `m` by `w[i]`.
fn scale_rows(m: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= w[i];
    }
    out
}

/// `V_x . f_xx`, `V_x . f_ux`, `V_x . f_uu` by central differences of the
/// Jacobians.
fn dynamics_curvature(
    model: &dyn DynamicsModel,
    x: &[f64],
    u: &[f64],
    vx: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (x.len(), u.len());
    let h = 1e-6;
    let mut txx = DMatrix::zeros(n, n);
    let mut tux = DMatrix::zeros(m, n);
    let mut tuu = DMatrix::zeros(m, m);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        let (fxp, fup) = model.jacobians(&xp, u);
        xp[j] = x[j] - h;
        let (fxm, fum) = model.jacobians(&xp, u);
        xp[j] = x[j];
        txx.set_column(j, &((fxp - fxm).tr_mul(vx) / (2.0 * h)));
        tux.set_column(j, &((fup - fum).tr_mul(vx) / (2.0 * h)));
    }
    let mut up = u.to_vec();
    for j in 0..m {
        up[j] = u[j] + h;
        let (_, fup) = model.jacobians(x, &up);
        up[j] = u[j] - h;
        let (_, fum) = model.jacobians(x, &up);
        up[j] = u[j];
        tuu.set_column(j, &((fup - fum).tr_mul(vx) / (2.0 * h)));
    }
    let txx = (&txx + txx.transpose()) * 0.5;
    let tuu = (&tuu + tuu.transpose()) * 0.5;
    (txx, tux, tuu)
}

/// Backward sweep over `t = T-1..0`.
///
/// Fails when the regularized `Q~_uu` is not positive definite at some
/// stage; the caller is expected to raise `rho` and retry.
pub fn backward_pass(ocp: &ConstrainedOcp, it: &IpddpIterate, opts: &IpddpOptions) -> Result<GainSchedule, PassFailure> {
    let horizon = ocp.horizon;
    let model = ocp.model.as_ref();
    let (n, m) = (model.state_dim(), model.control_dim());
    let xs = &it.trajectory.states;
    let us = &it.trajectory.controls;
    let mu = it.mu;

    let (mut vx, mut vxx) = ocp.final_cost.expansion(xs[horizon].as_slice());
    let mut value = vec![ValueExpansion { vx: vx.clone(), vxx: vxx.clone() }];
    let mut ku_all = Vec::with_capacity(horizon);
    let mut du_all = Vec::with_capacity(horizon);
    let mut ks_all = Vec::with_capacity(horizon);
    let mut ds_all = Vec::with_capacity(horizon);
    let mut ky_all = Vec::with_capacity(horizon);
    let mut dy_all = Vec::with_capacity(horizon);
    let mut qx_all = Vec::with_capacity(horizon);
    let mut qu_all = Vec::with_capacity(horizon);
    let (mut max_qu, mut max_rp, mut max_rd, mut max_asym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut delta_v = 0.0;

    for t in (0..horizon).rev() {
        let x = xs[t].as_slice();
        let u = us[t].as_slice();
        let (fx, fu) = model.jacobians(x, u);
        let e = ocp.stage_cost.expansion(t, x, u);
        let vxx_fx = &vxx * &fx;
        let vxx_fu = &vxx * &fu;
        let mut qx = &e.lx + fx.tr_mul(&vx);
        let mut qu = &e.lu + fu.tr_mul(&vx);
        let mut qxx = &e.lxx + fx.tr_mul(&vxx_fx);
        let mut qux = &e.lux + fu.tr_mul(&vxx_fx);
        let mut quu = &e.luu + fu.tr_mul(&vxx_fu);
        if opts.second_order_dynamics {
            let (txx, tux, tuu) = dynamics_curvature(model, x, u, &vx);
            qxx += txx;
            qux += tux;
            quu += tuu;
        }

        let k = ocp.constraint_count(t);
        let (qtx, qtu, qtxx, qtux, qtuu);
        let mut cons = None;
        if k > 0 {
            let c = ocp.constraints.as_ref().expect("constraint rows without a constraint set");
            let s = &it.slacks[t];
            let y = &it.duals[t];
            let mut g = DVector::zeros(k);
            c.evaluate(t, x, u, g.as_mut_slice());
            let (gx, gu) = c.jacobians(t, x, u);
            qx += gx.tr_mul(y);
            qu += gu.tr_mul(y);
            if let Some((hxx, hux, huu)) = c.weighted_hessians(t, x, u, y.as_slice()) {
                qxx += hxx;
                qux += hux;
                quu += huu;
            }
            let rp = &g + s;
            let rd = s.component_mul(y).add_scalar(-mu);
            let r = y.component_mul(&rp) - &rd;
            let sigma = y.component_div(s);
            let r_over_s = r.component_div(s);
            max_rp = max_rp.max(rp.amax());
            max_rd = max_rd.max(rd.amax());
            let sgx = scale_rows(&gx, &sigma);
            let sgu = scale_rows(&gu, &sigma);
            qtx = &qx + gx.tr_mul(&r_over_s);
            qtu = &qu + gu.tr_mul(&r_over_s);
            qtxx = &qxx + gx.tr_mul(&sgx);
            qtux = &qux + gu.tr_mul(&sgx);
            qtuu = &quu + gu.tr_mul(&sgu);
            delta_v += 0.5 * rp.dot(&sigma.component_mul(&rp)) - rd.dot(&rp.component_div(s));
            cons = Some((s, y, rp, r, sigma, gx, gu));
        } else {
            qtx = qx.clone();
            qtu = qu.clone();
            qtxx = qxx;
            qtux = qux;
            qtuu = quu;
        }
        max_qu = max_qu.max(qu.amax());

        let mut reg = qtuu.clone();
        for i in 0..m {
            reg[(i, i)] += it.rho;
        }
        let chol = reg.cholesky().ok_or(PassFailure::NotPositiveDefinite { stage: t })?;
        let ku = -chol.solve(&qtux);
        let du = -chol.solve(&qtu);
        if !du.iter().chain(ku.iter()).all(|v| v.is_finite()) {
            return Err(PassFailure::NotPositiveDefinite { stage: t });
        }

        match cons {
            Some((s, y, rp, r, sigma, gx, gu)) => {
                let gk = &gx + &gu * &ku;
                let gud = &gu * &du;
                ky_all.push(scale_rows(&gk, &sigma));
                dy_all.push((r + y.component_mul(&gud)).component_div(s));
                ks_all.push(-gk);
                ds_all.push(-(rp + gud));
            }
            None => {
                ks_all.push(DMatrix::zeros(0, n));
                ds_all.push(DVector::zeros(0));
                ky_all.push(DMatrix::zeros(0, n));
                dy_all.push(DVector::zeros(0));
            }
        }

        let quu_du = &qtuu * &du;
        delta_v += qtu.dot(&du) + 0.5 * du.dot(&quu_du);
        vx = &qtx + ku.tr_mul(&qtu) + qtux.tr_mul(&du) + ku.tr_mul(&quu_du);
        vxx = &qtxx + ku.tr_mul(&qtux) + qtux.tr_mul(&ku) + ku.tr_mul(&(&qtuu * &ku));
        let asym = (&vxx - vxx.transpose()).amax();
        max_asym = max_asym.max(asym);
        vxx = (&vxx + vxx.transpose()) * 0.5;

        value.push(ValueExpansion { vx: vx.clone(), vxx: vxx.clone() });
        ku_all.push(ku);
        du_all.push(du);
        qx_all.push(qx);
        qu_all.push(qu);
    }

    for v in [&mut ku_all, &mut ks_all, &mut ky_all] {
        v.reverse();
    }
    for v in [&mut du_all, &mut ds_all, &mut dy_all, &mut qx_all, &mut qu_all] {
        v.reverse();
    }
    value.reverse();
    Ok(GainSchedule {
        ku: ku_all,
        du: du_all,
        ks: ks_all,
        ds: ds_all,
        ky: ky_all,
        dy: dy_all,
        delta_v,
        qx: qx_all,
        qu: qu_all,
        value,
        max_qu,
        max_rp,
        max_rd,
        max_asymmetry: max_asym,
    })
}
