//! Pose recovery: mapping estimated channel parameters (delays and angles)
//! back to the MS position, array rotation, and scatterer locations.
//!
//! With a LOS path the position and rotation follow in closed form from
//! `(tau_0, aod_0, aoa_0)`; scatterer paths are then folded in by a weighted
//! nonlinear least-squares refinement (Levenberg-Marquardt) whose weight is
//! the Fisher information of the measured channel parameters, so the
//! refined pose asymptotically attains the accuracy of the full maximum
//! likelihood estimator. Without a LOS path the rotation is swept over a
//! trial grid; for each trial the geometry becomes linear in the position
//! and the per-path BS-to-scatterer ranges, and the best trial is polished
//! by the same LM routine. When the condition is unknown both hypotheses
//! are solved and the smaller weighted residual wins.

use nalgebra::{DMatrix, DVector};

use crate::error::{LocError, Result};
use crate::geometry::{wrap_pi, wrap_two_pi, ChannelParamSet, Pose, Vec2};
use crate::par;

/// Rotation-trial sweep for the OLOS solver.
#[derive(Debug, Clone, Copy)]
pub struct OlosSearchConfig {
    /// Half-width of the trial grid around `alpha_center`; `pi` sweeps the
    /// full circle.
    pub alpha_halfwidth: f64,
    /// Trial spacing in radians.
    pub alpha_step: f64,
    pub alpha_center: f64,
}

impl Default for OlosSearchConfig {
    fn default() -> Self {
        Self {
            alpha_halfwidth: std::f64::consts::PI,
            alpha_step: 2.0_f64.to_radians(),
            alpha_center: 0.0,
        }
    }
}

/// Recovered pose, scatterer map, and the weighted residual at the optimum.
#[derive(Debug, Clone)]
pub struct PoseSolution {
    pub pose: Pose,
    pub scatterers: Vec<Vec2>,
    /// Weighted EXIP cost `(eta_hat - f(x))^T W (eta_hat - f(x))`.
    pub cost: f64,
}

/// Levenberg-Marquardt minimization of `r(x)^T W r(x)` with
/// central-difference Jacobians.
pub fn lma_minimize(
    residual: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    weight: &DMatrix<f64>,
    x0: DVector<f64>,
    max_iters: usize,
) -> Result<(DVector<f64>, f64)> {
    let cost_of = |r: &DVector<f64>| (r.transpose() * weight * r)[(0, 0)];
    let n = x0.len();
    let mut x = x0;
    let mut r = residual(&x);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(LocError::LmDiverged);
    }
    let mut lambda = 1e-3;
    for _ in 0..max_iters {
        let m = r.len();
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (residual(&xp) - residual(&xm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let jtw = jac.transpose() * weight;
        let grad = &jtw * &r;
        let hess = &jtw * &jac;
        let mut improved = false;
        for _ in 0..12 {
            let mut damped = hess.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * hess[(i, i)].max(1e-12);
            }
            let step = match damped.lu().solve(&grad) {
                Some(s) => s,
                None => {
                    lambda = (lambda * 10.0).min(1e12);
                    continue;
                }
            };
            let x_new = &x - &step;
            let r_new = residual(&x_new);
            let c_new = cost_of(&r_new);
            if c_new.is_finite() && c_new < cost {
                x = x_new;
                r = r_new;
                let rel = (cost - c_new) / cost.max(1e-300);
                cost = c_new;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    return Ok((x, cost));
                }
                break;
            }
            lambda = (lambda * 10.0).min(1e12);
        }
        if !improved {
            break;
        }
    }
    Ok((x, cost))
}

fn bearing(from: Vec2, to: Vec2) -> f64 {
    let u = to - from;
    (u.x / u.norm()).clamp(-1.0, 1.0).acos()
}

/// Model `(tau, aod, aoa)` triples for the hypothesis encoded in `x`.
/// Layout: `[p_x, p_y, alpha, s_1x, s_1y, ...]`; `with_los` marks the
/// first measured path as LOS.
fn model_triples(x: &DVector<f64>, bs: Vec2, c: f64, with_los: bool, l: usize) -> Vec<[f64; 3]> {
    let p = Vec2::new(x[0], x[1]);
    let alpha = x[2];
    let mut out = Vec::with_capacity(l);
    let mut s_off = 3;
    if with_los {
        let aod = bearing(bs, p);
        out.push([p.distance(&bs) / c, aod, std::f64::consts::PI + aod - alpha]);
    }
    while out.len() < l {
        let s = Vec2::new(x[s_off], x[s_off + 1]);
        s_off += 2;
        let tau = (s.distance(&bs) + p.distance(&s)) / c;
        let aod = bearing(bs, s);
        let aoa = std::f64::consts::PI - bearing(s, p) - alpha;
        out.push([tau, aod, aoa]);
    }
    out
}

fn exip_residual(
    measured: &ChannelParamSet,
    x: &DVector<f64>,
    bs: Vec2,
    c: f64,
    with_los: bool,
) -> DVector<f64> {
    let l = measured.paths.len();
    let model = model_triples(x, bs, c, with_los, l);
    let mut r = DVector::zeros(3 * l);
    for (i, (p, m)) in measured.paths.iter().zip(model.iter()).enumerate() {
        r[3 * i] = p.delay - m[0];
        r[3 * i + 1] = wrap_pi(p.aod - m[1]);
        r[3 * i + 2] = wrap_pi(p.aoa - m[2]);
    }
    r
}

fn weighted_cost(r: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    (r.transpose() * w * r)[(0, 0)]
}

fn check_weight(measured: &ChannelParamSet, weight: &DMatrix<f64>) -> Result<()> {
    let want = 3 * measured.paths.len();
    if weight.nrows() != want || weight.ncols() != want {
        return Err(LocError::DimensionMismatch(format!(
            "weight is {}x{}, expected {want}x{want}",
            weight.nrows(),
            weight.ncols()
        )));
    }
    Ok(())
}

/// Closed-form pose from the LOS triple alone:
/// `p = q + c tau_0 [cos aod_0, sin aod_0]`, `alpha = pi + aod_0 - aoa_0`.
pub fn solve_los(measured: &ChannelParamSet, bs: Vec2, c: f64) -> Result<PoseSolution> {
    let p0 = measured
        .paths
        .first()
        .ok_or(LocError::EmptyParamSet)?;
    let range = c * p0.delay;
    let position = bs + Vec2::new(range * p0.aod.cos(), range * p0.aod.sin());
    let rotation = wrap_two_pi(std::f64::consts::PI + p0.aod - p0.aoa);
    Ok(PoseSolution {
        pose: Pose::new(position, rotation),
        scatterers: Vec::new(),
        cost: 0.0,
    })
}

/// Scatterer on the BS ray at `aod` whose total path length is `c tau`,
/// given the MS at `p`. Both folds of the arccos bearing are tried; the one
/// that better reproduces the measured AOA wins.
fn scatterer_from_triple(
    bs: Vec2,
    p: Vec2,
    alpha: f64,
    tau: f64,
    aod: f64,
    aoa: f64,
    c: f64,
) -> Vec2 {
    let mut best: Option<(f64, Vec2)> = None;
    for sign in [1.0, -1.0] {
        let u = Vec2::new(aod.cos(), sign * aod.sin());
        let w = p - bs;
        let ct = c * tau;
        let denom = 2.0 * (ct - w.x * u.x - w.y * u.y);
        if denom.abs() < 1e-12 {
            continue;
        }
        let t = (ct * ct - w.norm().powi(2)) / denom;
        if !(t > 0.0 && ct - t > 0.0) {
            continue;
        }
        let s = bs + u * t;
        let aoa_model = std::f64::consts::PI - bearing(s, p) - alpha;
        let err = wrap_pi(aoa - aoa_model).abs();
        if best.map_or(true, |(e, _)| err < e) {
            best = Some((err, s));
        }
    }
    match best {
        Some((_, s)) => s,
        // fall back to the ellipse midpoint on the positive fold
        None => bs + Vec2::new(aod.cos(), aod.sin()) * (0.5 * c * tau),
    }
}

/// LOS-plus-scatterers pose: closed-form LOS initialization, scatterers
/// from ellipse/ray intersection, then joint weighted LM over
/// `[p, alpha, s_1, ..., s_K]`.
pub fn solve_nlos(
    measured: &ChannelParamSet,
    bs: Vec2,
    weight: &DMatrix<f64>,
    c: f64,
) -> Result<PoseSolution> {
    check_weight(measured, weight)?;
    let init = solve_los(measured, bs, c)?;
    let k = measured.paths.len() - 1;
    if k == 0 {
        return Ok(init);
    }
    let mut x0 = DVector::zeros(3 + 2 * k);
    x0[0] = init.pose.position.x;
    x0[1] = init.pose.position.y;
    x0[2] = init.pose.rotation;
    for (i, p) in measured.paths[1..].iter().enumerate() {
        let s = scatterer_from_triple(
            bs,
            init.pose.position,
            init.pose.rotation,
            p.delay,
            p.aod,
            p.aoa,
            c,
        );
        x0[3 + 2 * i] = s.x;
        x0[4 + 2 * i] = s.y;
    }
    let residual = |x: &DVector<f64>| exip_residual(measured, x, bs, c, true);
    let (x, cost) = lma_minimize(&residual, weight, x0, 60)?;
    Ok(PoseSolution {
        pose: Pose::new(Vec2::new(x[0], x[1]), x[2]),
        scatterers: (0..k)
            .map(|i| Vec2::new(x[3 + 2 * i], x[4 + 2 * i]))
            .collect(),
        cost,
    })
}

/// Solves the per-trial linear system for a fixed rotation and a fixed
/// choice of bearing folds: `p = q + d_1 v_k + (c tau_k - d_1) u_k` for all
/// paths, unknowns `[p, d_{1,1}, ..., d_{K,1}]`.
fn olos_trial(
    measured: &ChannelParamSet,
    bs: Vec2,
    alpha: f64,
    weight: &DMatrix<f64>,
    c: f64,
) -> Option<(f64, DVector<f64>)> {
    let k = measured.paths.len();
    let combos: usize = if k <= 5 { 1 << (2 * k) } else { 1 };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for combo in 0..combos {
        let mut a = DMatrix::zeros(2 * k, 2 + k);
        let mut b = DVector::zeros(2 * k);
        let mut us = Vec::with_capacity(k);
        for (i, p) in measured.paths.iter().enumerate() {
            let sv = if combo >> (2 * i) & 1 == 0 { 1.0 } else { -1.0 };
            let su = if combo >> (2 * i + 1) & 1 == 0 { 1.0 } else { -1.0 };
            let v = Vec2::new(p.aod.cos(), sv * p.aod.sin());
            let beta = std::f64::consts::PI - p.aoa - alpha;
            let u = Vec2::new(beta.cos(), su * beta.sin());
            us.push(u);
            let ct = c * p.delay;
            a[(2 * i, 0)] = 1.0;
            a[(2 * i, 2 + i)] = u.x - v.x;
            b[2 * i] = bs.x + ct * u.x;
            a[(2 * i + 1, 1)] = 1.0;
            a[(2 * i + 1, 2 + i)] = u.y - v.y;
            b[2 * i + 1] = bs.y + ct * u.y;
        }
        let svd = a.clone().svd(true, true);
        let sol = match svd.solve(&b, 1e-10) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let p = Vec2::new(sol[0], sol[1]);
        let mut ss = Vec::with_capacity(k);
        let mut feasible = true;
        for (i, path) in measured.paths.iter().enumerate() {
            let d1 = sol[2 + i];
            let ct = c * path.delay;
            if !(d1 > 0.0 && ct - d1 > 0.0) {
                feasible = false;
                break;
            }
            ss.push(p - us[i] * (ct - d1));
        }
        if !feasible {
            continue;
        }
        // rank folds by the weighted EXIP cost; the linear system alone
        // cannot tell the folds apart (for small K it fits all of them
        // exactly) and only the model bearings discriminate
        let mut x = DVector::zeros(3 + 2 * k);
        x[0] = p.x;
        x[1] = p.y;
        x[2] = alpha;
        for (i, s) in ss.iter().enumerate() {
            x[3 + 2 * i] = s.x;
            x[4 + 2 * i] = s.y;
        }
        // canonicalize the exact mirror ambiguity to the upper half-plane
        if x[1] < bs.y {
            x[1] = 2.0 * bs.y - x[1];
            x[2] = wrap_two_pi(x[2]);
            for i in 0..k {
                x[4 + 2 * i] = 2.0 * bs.y - x[4 + 2 * i];
            }
        }
        // the folded bearings admit spurious exact solutions with scatterers
        // below the BS axis; such scenes are outside the canonical domain,
        // so push them to the back of the ranking
        let mut cost = weighted_cost(&exip_residual(measured, &x, bs, c, false), weight);
        for i in 0..k {
            let below = (bs.y - x[4 + 2 * i]).max(0.0);
            cost += 1e6 * below * below;
        }
        if cost.is_finite() && best.as_ref().map_or(true, |(f, _)| cost < *f) {
            best = Some((cost, x));
        }
    }
    best
}

/// OLOS pose: rotation-trial sweep with a linear solve per trial, weighted
/// EXIP ranking, and a final LM polish.
///
/// Requires at least three paths: each scatterer path contributes three
/// measurements but adds two unknowns, so only from `K = 3` do the
/// equations outnumber the `3 + 2K` unknowns and pin down the rotation.
pub fn solve_olos(
    measured: &ChannelParamSet,
    bs: Vec2,
    weight: &DMatrix<f64>,
    c: f64,
    ocfg: &OlosSearchConfig,
) -> Result<PoseSolution> {
    check_weight(measured, weight)?;
    let k = measured.paths.len();
    if k < 3 {
        return Err(LocError::InsufficientPaths { needed: 3, got: k });
    }
    let n_trials = ((2.0 * ocfg.alpha_halfwidth / ocfg.alpha_step).round() as usize).max(1);
    let alphas: Vec<f64> = (0..n_trials)
        .map(|i| ocfg.alpha_center - ocfg.alpha_halfwidth + i as f64 * ocfg.alpha_step)
        .collect();
    let evaluated = par::map_collect(alphas, |alpha| olos_trial(measured, bs, alpha, weight, c));
    let seed = evaluated
        .into_iter()
        .flatten()
        .filter(|(cost, _)| cost.is_finite())
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .ok_or(LocError::SingularLinearSystem)?;
    let residual = |x: &DVector<f64>| exip_residual(measured, x, bs, c, false);
    let (mut x, cost) = lma_minimize(&residual, weight, seed.1, 60)?;
    // the arccos bearings cannot distinguish a scene from its mirror image
    // across the horizontal through the BS; canonicalize to the upper
    // half-plane (the LOS closed form lands there by construction)
    if x[1] < bs.y {
        x[1] = 2.0 * bs.y - x[1];
        for i in 0..k {
            x[4 + 2 * i] = 2.0 * bs.y - x[4 + 2 * i];
        }
    }
    Ok(PoseSolution {
        pose: Pose::new(Vec2::new(x[0], x[1]), x[2]),
        scatterers: (0..k)
            .map(|i| Vec2::new(x[3 + 2 * i], x[4 + 2 * i]))
            .collect(),
        cost,
    })
}

/// Unknown condition: solves both hypotheses and keeps the smaller weighted
/// cost. Returns the winning solution and `true` when the LOS hypothesis
/// won.
pub fn solve_unknown(
    measured: &ChannelParamSet,
    bs: Vec2,
    weight: &DMatrix<f64>,
    c: f64,
    ocfg: &OlosSearchConfig,
) -> Result<(PoseSolution, bool)> {
    let nlos = solve_nlos(measured, bs, weight, c);
    let olos = if measured.paths.len() >= 3 {
        solve_olos(measured, bs, weight, c, ocfg)
    } else {
        Err(LocError::InsufficientPaths {
            needed: 3,
            got: measured.paths.len(),
        })
    };
    match (nlos, olos) {
        (Ok(a), Ok(b)) => {
            // The blocked-LOS model has more free parameters per path, so
            // prefer the LOS interpretation unless it fits distinctly worse.
            if a.cost <= b.cost + 1e-6 * (1.0 + b.cost) {
                Ok((a, true))
            } else {
                Ok((b, false))
            }
        }
        (Ok(a), Err(_)) => Ok((a, true)),
        (Err(_), Ok(b)) => Ok((b, false)),
        (Err(e), Err(_)) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{olos_param_subset, params_from_scenario, Scenario};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    const C: f64 = 0.299792e9;

    fn scene(los_blocked: bool) -> Scenario {
        Scenario {
            bs_pos: Vec2::new(0.0, 0.0),
            ms_pos: Vec2::new(4.0, 1.3),
            rotation: 0.4,
            scatterers: vec![
                Vec2::new(1.5, 2.4),
                Vec2::new(2.8, 0.6),
                Vec2::new(3.6, 2.6),
                Vec2::new(2.2, 1.9),
            ],
            los_blocked,
        }
    }

    fn measured(s: &Scenario) -> ChannelParamSet {
        let gains = vec![Complex64::new(1.0, 0.0); s.n_paths()];
        params_from_scenario(s, C, &gains).unwrap()
    }

    /// Delay residuals expressed in meters, angles in radians.
    fn meter_weight(l: usize) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(3 * l, 3 * l);
        for i in 0..l {
            w[(3 * i, 3 * i)] = C * C;
            w[(3 * i + 1, 3 * i + 1)] = 1.0;
            w[(3 * i + 2, 3 * i + 2)] = 1.0;
        }
        w
    }

    #[test]
    fn los_closed_form_is_exact() {
        let s = scene(false);
        let cp = measured(&s);
        let sol = solve_los(&cp, s.bs_pos, C).unwrap();
        assert_abs_diff_eq!(sol.pose.position.x, s.ms_pos.x, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.pose.position.y, s.ms_pos.y, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.pose.rotation, s.rotation, epsilon = 1e-9);
    }

    #[test]
    fn nlos_refinement_recovers_scene() {
        let s = scene(false);
        let cp = measured(&s);
        let w = meter_weight(cp.paths.len());
        let sol = solve_nlos(&cp, s.bs_pos, &w, C).unwrap();
        assert_abs_diff_eq!(sol.pose.position.x, s.ms_pos.x, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.pose.position.y, s.ms_pos.y, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.pose.rotation, s.rotation, epsilon = 1e-6);
        // scatterers come back in delay order
        let order = s.scatterer_order();
        for (i, &o) in order.iter().enumerate() {
            assert_abs_diff_eq!(sol.scatterers[i].x, s.scatterers[o].x, epsilon = 1e-4);
            assert_abs_diff_eq!(sol.scatterers[i].y, s.scatterers[o].y, epsilon = 1e-4);
        }
        assert!(sol.cost < 1e-10);
    }

    #[test]
    fn nlos_tolerates_measurement_noise() {
        let s = scene(false);
        let mut cp = measured(&s);
        for (i, p) in cp.paths.iter_mut().enumerate() {
            p.delay += 3e-12 * (1.0 + i as f64);
            p.aod += 1e-3;
            p.aoa -= 1e-3;
        }
        let w = meter_weight(cp.paths.len());
        let sol = solve_nlos(&cp, s.bs_pos, &w, C).unwrap();
        assert!(sol.pose.position.distance(&s.ms_pos) < 0.05);
        assert!(wrap_pi(sol.pose.rotation - s.rotation).abs() < 0.02);
    }

    #[test]
    fn olos_sweep_recovers_scene() {
        let s = scene(true);
        let cp = measured(&s);
        assert!(cp.olos);
        let w = meter_weight(cp.paths.len());
        let sol = solve_olos(&cp, s.bs_pos, &w, C, &OlosSearchConfig::default()).unwrap();
        assert!(
            sol.pose.position.distance(&s.ms_pos) < 1e-4,
            "position off by {}",
            sol.pose.position.distance(&s.ms_pos)
        );
        assert!(wrap_pi(sol.pose.rotation - s.rotation).abs() < 1e-4);
    }

    #[test]
    fn olos_requires_three_paths() {
        let s = scene(true);
        let mut cp = measured(&s);
        cp.paths.truncate(2);
        let w = meter_weight(2);
        assert!(matches!(
            solve_olos(&cp, s.bs_pos, &w, C, &OlosSearchConfig::default()),
            Err(LocError::InsufficientPaths { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn unknown_condition_classifies_both_ways() {
        let s_los = scene(false);
        let cp_los = measured(&s_los);
        let w = meter_weight(cp_los.paths.len());
        let (sol, is_los) =
            solve_unknown(&cp_los, s_los.bs_pos, &w, C, &OlosSearchConfig::default()).unwrap();
        assert!(is_los);
        assert!(sol.pose.position.distance(&s_los.ms_pos) < 1e-4);

        let s_olos = scene(true);
        let cp_olos = olos_param_subset(&measured(&scene(false))).unwrap();
        // same as the blocked-LOS parameter set
        assert_eq!(cp_olos.paths.len(), s_olos.n_paths());
        let w2 = meter_weight(cp_olos.paths.len());
        let (sol2, is_los2) =
            solve_unknown(&cp_olos, s_olos.bs_pos, &w2, C, &OlosSearchConfig::default()).unwrap();
        assert!(!is_los2);
        assert!(sol2.pose.position.distance(&s_olos.ms_pos) < 1e-3);
    }

    #[test]
    fn lma_minimizes_a_quadratic_bowl() {
        let target = DVector::from_vec(vec![1.5, -2.0]);
        let t = target.clone();
        let residual = move |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0] - t[0], (x[1] - t[1]) * 3.0, (x[0] - t[0]) * (x[1] - t[1])])
        };
        let w = DMatrix::identity(3, 3);
        let (x, cost) = lma_minimize(&residual, &w, DVector::from_vec(vec![0.0, 0.0]), 100).unwrap();
        assert!(cost < 1e-15);
        assert_abs_diff_eq!(x[0], target[0], epsilon = 1e-6);
        assert_abs_diff_eq!(x[1], target[1], epsilon = 1e-6);
    }
}
