//! Fisher information and Cramer-Rao bounds.
//!
//! The channel-domain FIM over the stacked per-path parameters
//! `[tau, aod, aoa, re(h), im(h)]` is computed from closed-form derivatives
//! of the noise-free observation `mu^{(g)}[n] = H[n] F^{(g)}[n] x^{(g)}[n]`:
//!
//! `J = (2/N_0) sum_{g,n} Re{ (d mu/d eta)^H (d mu/d eta) }`.
//!
//! The location-domain FIM follows by the chain rule through the geometry
//! Jacobian `T`: `J_loc = T J T^T`. PEB and REB are square roots of the
//! relevant diagonal entries of `J_loc^{-1}`.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::channel::{steering_vector, steering_vector_deriv, ArrayOfdmConfig, PilotBlock, Side};
use crate::error::{LocError, Result};
use crate::geometry::{
    params_from_scenario, transformation_matrix, ChannelParamSet, Scenario, PARAMS_PER_PATH,
};
use crate::par;

/// Antenna-index convention used in the steering-vector angle derivatives.
///
/// `Symmetric` matches steering vectors built on indices
/// `-(N-1)/2 ..= (N-1)/2` and is the exact analytic derivative.
/// `ZeroBased` uses indices `0 ..= N-1` and differs by an angle-dependent
/// phase ramp; it is kept as an A/B switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    #[default]
    Symmetric,
    ZeroBased,
}

/// A real symmetric information matrix with guarded inversion.
#[derive(Debug, Clone)]
pub struct FimMatrix {
    pub matrix: DMatrix<f64>,
}

impl FimMatrix {
    /// Inverse via SVD after Jacobi (diagonal) balancing, which removes the
    /// enormous scale disparity between delay entries (s^-2) and angle
    /// entries (rad^-2). Errors if the balanced condition number exceeds
    /// 1e14 or any diagonal entry is non-positive.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let n = self.matrix.nrows();
        let mut scale = Vec::with_capacity(n);
        for i in 0..n {
            let d = self.matrix[(i, i)];
            if !(d > 0.0) {
                return Err(LocError::SingularFim { cond: f64::INFINITY });
            }
            scale.push(1.0 / d.sqrt());
        }
        let balanced =
            DMatrix::from_fn(n, n, |i, j| self.matrix[(i, j)] * scale[i] * scale[j]);
        let svd = balanced.svd(true, true);
        let max = svd.singular_values.max();
        let min = svd.singular_values.min();
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if !cond.is_finite() || cond > 1e14 {
            return Err(LocError::SingularFim { cond });
        }
        let inv_balanced = svd
            .pseudo_inverse(0.0)
            .map_err(|e| LocError::SingularInput(e.to_string()))?;
        Ok(DMatrix::from_fn(n, n, |i, j| {
            inv_balanced[(i, j)] * scale[i] * scale[j]
        }))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn steering_deriv_centered(
    side: Side,
    cfg: &ArrayOfdmConfig,
    angle: f64,
    n: usize,
    centering: Centering,
) -> nalgebra::DVector<Complex64> {
    let mut d = steering_vector_deriv(side, cfg, angle, n);
    if centering == Centering::ZeroBased {
        // shift the index diagonal from -(N-1)/2..(N-1)/2 to 0..N-1
        let count = cfg.n_antennas(side);
        let scale =
            std::f64::consts::TAU * cfg.spacing * angle.cos() / cfg.wavelength_at(n);
        let center = (count as f64 - 1.0) / 2.0;
        let a = steering_vector(side, cfg, angle, n);
        d += a.map(|v| Complex64::new(0.0, scale * center) * v);
    }
    d
}

/// `N_r x 5L` matrix of derivatives of `mu^{(g)}[n]` w.r.t. every channel
/// parameter.
fn mu_derivatives(
    cp: &ChannelParamSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    g: usize,
    n: usize,
    centering: Centering,
) -> DMatrix<Complex64> {
    let f = pilots.effective(g, n);
    let l = cp.paths.len();
    let mut d = DMatrix::zeros(cfg.n_rx, PARAMS_PER_PATH * l);
    let delay_rate = -std::f64::consts::TAU * n as f64
        / (cfg.n_subcarriers as f64 * cfg.sample_period());
    for (k, p) in cp.paths.iter().enumerate() {
        let phase = crate::channel::path_phase(cfg, p.delay, n);
        let gamma = p.gain * phase;
        let a_rx = steering_vector(Side::Rx, cfg, p.aoa, n);
        let a_tx = steering_vector(Side::Tx, cfg, p.aod, n);
        let da_rx = steering_deriv_centered(Side::Rx, cfg, p.aoa, n, centering);
        let da_tx = steering_deriv_centered(Side::Tx, cfg, p.aod, n, centering);
        let b = a_tx.dotc(&f); // a_tx^H f
        let db = da_tx.dotc(&f);
        let col = PARAMS_PER_PATH * k;
        for r in 0..cfg.n_rx {
            let base = a_rx[r] * b;
            d[(r, col)] = Complex64::new(0.0, delay_rate) * gamma * base;
            d[(r, col + 1)] = gamma * a_rx[r] * db;
            d[(r, col + 2)] = gamma * da_rx[r] * b;
            d[(r, col + 3)] = phase * base;
            d[(r, col + 4)] = Complex64::new(0.0, 1.0) * phase * base;
        }
    }
    d
}

/// Channel-domain FIM with an explicit derivative centering convention.
pub fn fim_channel_params_with(
    cp: &ChannelParamSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    noise_psd: f64,
    centering: Centering,
) -> Result<FimMatrix> {
    if cp.paths.is_empty() {
        return Err(LocError::EmptyParamSet);
    }
    if noise_psd <= 0.0 {
        return Err(LocError::SingularInput(
            "noise PSD must be positive".into(),
        ));
    }
    let dim = PARAMS_PER_PATH * cp.paths.len();
    let indices: Vec<(usize, usize)> = (0..pilots.n_transmissions())
        .flat_map(|g| (0..cfg.n_subcarriers).map(move |n| (g, n)))
        .collect();
    let partials = par::map_collect(indices, |(g, n)| {
        let d = mu_derivatives(cp, cfg, pilots, g, n, centering);
        let prod = d.adjoint() * d;
        prod.map(|v| v.re)
    });
    let mut j = DMatrix::zeros(dim, dim);
    for p in partials {
        j += p;
    }
    j *= 2.0 / noise_psd;
    // enforce exact symmetry against round-off
    let jt = j.transpose();
    let j = (j + jt) * 0.5;
    Ok(FimMatrix { matrix: j })
}

/// Channel-domain FIM with the default symmetric centering.
pub fn fim_channel_params(
    cp: &ChannelParamSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    noise_psd: f64,
) -> Result<FimMatrix> {
    fim_channel_params_with(cp, cfg, pilots, noise_psd, Centering::Symmetric)
}

/// Location-domain FIM `T J T^T` over `[p, alpha, gains, scatterers]`.
pub fn fim_location(
    s: &Scenario,
    gains: &[Complex64],
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    noise_psd: f64,
) -> Result<FimMatrix> {
    let cp = params_from_scenario(s, cfg.light_speed, gains)?;
    let j_eta = fim_channel_params(&cp, cfg, pilots, noise_psd)?;
    let t = transformation_matrix(s, cfg.light_speed)?;
    Ok(FimMatrix {
        matrix: &t * &j_eta.matrix * t.transpose(),
    })
}

/// Position/rotation bounds plus per-path channel-parameter CRBs.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// Position error bound, meters.
    pub peb: f64,
    /// Rotation error bound, radians.
    pub reb: f64,
    /// Per-path delay CRBs, s^2.
    pub crb_delay: Vec<f64>,
    /// Per-path AOD CRBs, rad^2.
    pub crb_aod: Vec<f64>,
    /// Per-path AOA CRBs, rad^2.
    pub crb_aoa: Vec<f64>,
}

/// Evaluates PEB, REB, and channel CRBs for a scenario.
pub fn bounds(
    s: &Scenario,
    gains: &[Complex64],
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    noise_psd: f64,
) -> Result<BoundReport> {
    let cp = params_from_scenario(s, cfg.light_speed, gains)?;
    let j_eta = fim_channel_params(&cp, cfg, pilots, noise_psd)?;
    let t = transformation_matrix(s, cfg.light_speed)?;
    let j_loc = FimMatrix {
        matrix: &t * &j_eta.matrix * t.transpose(),
    };
    let inv_loc = j_loc.inverse()?;
    let inv_eta = j_eta.inverse()?;
    let l = cp.paths.len();
    let mut crb_delay = Vec::with_capacity(l);
    let mut crb_aod = Vec::with_capacity(l);
    let mut crb_aoa = Vec::with_capacity(l);
    for k in 0..l {
        let o = PARAMS_PER_PATH * k;
        crb_delay.push(inv_eta[(o, o)]);
        crb_aod.push(inv_eta[(o + 1, o + 1)]);
        crb_aoa.push(inv_eta[(o + 2, o + 2)]);
    }
    Ok(BoundReport {
        peb: (inv_loc[(0, 0)] + inv_loc[(1, 1)]).sqrt(),
        reb: inv_loc[(2, 2)].sqrt(),
        crb_delay,
        crb_aod,
        crb_aoa,
    })
}

/// Effective FIM of `[p_x, p_y, alpha]`: the Schur complement of the
/// nuisance block (gains and scatterer locations) in the location FIM.
pub fn efim_position_rotation(j_loc: &FimMatrix) -> Result<Matrix3<f64>> {
    let m = &j_loc.matrix;
    let dim = m.nrows();
    if dim < 3 {
        return Err(LocError::DimensionMismatch(format!(
            "location FIM of size {dim} has no pose block"
        )));
    }
    let a = m.view((0, 0), (3, 3)).into_owned();
    if dim == 3 {
        return Ok(Matrix3::from_iterator(a.iter().copied()));
    }
    let b = m.view((0, 3), (3, dim - 3)).into_owned();
    let d = m.view((3, 3), (dim - 3, dim - 3)).into_owned();
    let d_inv = FimMatrix { matrix: d }.inverse()?;
    let schur = a - &b * d_inv * b.transpose();
    Ok(Matrix3::from_iterator(schur.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random_pilots;
    use crate::geometry::Vec2;
    use approx::assert_abs_diff_eq;

    fn cfg_small() -> ArrayOfdmConfig {
        ArrayOfdmConfig::new_60ghz(3, 3, 4, 2)
    }

    fn scene() -> Scenario {
        Scenario {
            bs_pos: Vec2::new(0.0, 0.0),
            ms_pos: Vec2::new(4.0, 0.0),
            rotation: 0.1,
            scatterers: vec![Vec2::new(1.5, 0.4)],
            los_blocked: false,
        }
    }

    fn gains() -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.3), Complex64::new(0.2, -0.4)]
    }

    /// Noise-free observation stacked over (g, n), for FD oracles.
    fn stacked_mu(
        cp: &ChannelParamSet,
        cfg: &ArrayOfdmConfig,
        pilots: &PilotBlock,
    ) -> nalgebra::DVector<Complex64> {
        let mut out = Vec::new();
        for g in 0..pilots.n_transmissions() {
            for n in 0..cfg.n_subcarriers {
                let y = crate::channel::channel_matrix(cp, cfg, n) * pilots.effective(g, n);
                out.extend(y.iter().copied());
            }
        }
        nalgebra::DVector::from_vec(out)
    }

    #[test]
    fn analytic_fim_matches_finite_differences() {
        let cfg = cfg_small();
        let s = scene();
        let cp = params_from_scenario(&s, cfg.light_speed, &gains()).unwrap();
        let pilots = random_pilots(&cfg, 42);
        let n0 = 0.5;
        let j = fim_channel_params(&cp, &cfg, &pilots, n0).unwrap();

        let eta0 = cp.to_eta();
        let dim = eta0.len();
        let steps = [1e-13, 1e-7, 1e-7, 1e-7, 1e-7];
        let mut d_fd = DMatrix::<Complex64>::zeros(
            pilots.n_transmissions() * cfg.n_subcarriers * cfg.n_rx,
            dim,
        );
        for jx in 0..dim {
            let h = steps[jx % PARAMS_PER_PATH];
            let mut ep = eta0.clone();
            let mut em = eta0.clone();
            ep[jx] += h;
            em[jx] -= h;
            let mp = stacked_mu(&ChannelParamSet::from_eta(&ep, false).unwrap(), &cfg, &pilots);
            let mm = stacked_mu(&ChannelParamSet::from_eta(&em, false).unwrap(), &cfg, &pilots);
            let col = (mp - mm) / Complex64::new(2.0 * h, 0.0);
            d_fd.set_column(jx, &col);
        }
        let j_fd = (d_fd.adjoint() * d_fd).map(|v| v.re) * (2.0 / n0);
        let rel = (&j.matrix - &j_fd).norm() / j_fd.norm();
        assert!(rel < 1e-5, "relative FIM mismatch {rel}");
    }

    #[test]
    fn fim_is_symmetric_and_psd() {
        let cfg = cfg_small();
        let s = scene();
        let cp = params_from_scenario(&s, cfg.light_speed, &gains()).unwrap();
        let pilots = random_pilots(&cfg, 1);
        let j = fim_channel_params(&cp, &cfg, &pilots, 0.1).unwrap();
        assert_eq!(j.matrix, j.matrix.transpose());
        let eig = j.matrix.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        for ev in eig.eigenvalues.iter() {
            assert!(*ev >= -1e-10 * max, "negative eigenvalue {ev}");
        }
    }

    #[test]
    fn single_antenna_delay_information_closed_form() {
        let mut cfg = cfg_small();
        cfg.n_tx = 1;
        cfg.n_rx = 1;
        let cp = ChannelParamSet {
            paths: vec![crate::geometry::PathParams {
                delay: 3e-9,
                aod: 0.0,
                aoa: 0.0,
                gain: Complex64::new(0.8, -0.6), // |h| = 1
            }],
            olos: false,
        };
        let pilots = random_pilots(&cfg, 9);
        let n0 = 2.0;
        let j = fim_channel_params(&cp, &cfg, &pilots, n0).unwrap();
        // J_tt = (2/N0) sum_{g,n} (2 pi n/(N Ts))^2 |h|^2 |f_n x_n|^2,
        // and |F|_F = 1 with a single entry, |x| = 1.
        let mut oracle = 0.0;
        let nts = cfg.n_subcarriers as f64 * cfg.sample_period();
        for _g in 0..cfg.n_transmissions {
            for n in 0..cfg.n_subcarriers {
                oracle += (std::f64::consts::TAU * n as f64 / nts).powi(2);
            }
        }
        oracle *= 2.0 / n0;
        assert_abs_diff_eq!(j.matrix[(0, 0)], oracle, epsilon = 1e-6 * oracle);
    }

    #[test]
    fn transformation_matrix_matches_finite_differences() {
        let cfg = cfg_small();
        // off-axis geometry: the arccos bearing is differentiable only away
        // from the x-axis, where its fold sits
        let s = Scenario {
            ms_pos: Vec2::new(3.7, 1.2),
            scatterers: vec![Vec2::new(1.4, 2.1)],
            ..scene()
        };
        let t = transformation_matrix(&s, cfg.light_speed).unwrap();
        let eta = |s: &Scenario| {
            params_from_scenario(s, cfg.light_speed, &gains())
                .unwrap()
                .to_eta()
        };
        let h = 1e-7;
        let perturb: Vec<Box<dyn Fn(&mut Scenario, f64)>> = vec![
            Box::new(|s, d| s.ms_pos.x += d),
            Box::new(|s, d| s.ms_pos.y += d),
            Box::new(|s, d| s.rotation += d),
        ];
        for (row, f) in perturb.iter().enumerate() {
            let mut sp = s.clone();
            let mut sm = s.clone();
            f(&mut sp, h);
            f(&mut sm, -h);
            let grad = (eta(&sp) - eta(&sm)) / (2.0 * h);
            for c in 0..t.ncols() {
                assert_abs_diff_eq!(t[(row, c)], grad[c], epsilon = 1e-5);
            }
        }
        // scatterer coordinates occupy rows 5 and 6
        for (i, f) in [
            Box::new(|s: &mut Scenario, d: f64| s.scatterers[0].x += d)
                as Box<dyn Fn(&mut Scenario, f64)>,
            Box::new(|s: &mut Scenario, d: f64| s.scatterers[0].y += d),
        ]
        .iter()
        .enumerate()
        {
            let mut sp = s.clone();
            let mut sm = s.clone();
            f(&mut sp, h);
            f(&mut sm, -h);
            let grad = (eta(&sp) - eta(&sm)) / (2.0 * h);
            for c in 0..t.ncols() {
                assert_abs_diff_eq!(t[(5 + i, c)], grad[c], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn peb_scales_with_noise_level() {
        let cfg = cfg_small();
        let s = scene();
        let pilots = random_pilots(&cfg, 3);
        let b1 = bounds(&s, &gains(), &cfg, &pilots, 0.01).unwrap();
        let b2 = bounds(&s, &gains(), &cfg, &pilots, 0.02).unwrap();
        assert_abs_diff_eq!(b2.peb / b1.peb, 2f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(b2.reb / b1.reb, 2f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(
            b2.crb_delay[0] / b1.crb_delay[0],
            2.0,
            epsilon = 1e-9
        );
        assert!(b1.peb > 0.0 && b1.reb > 0.0);
        assert_eq!(b1.crb_aod.len(), 2);
    }

    #[test]
    fn efim_matches_inverse_block() {
        let cfg = cfg_small();
        let s = scene();
        let pilots = random_pilots(&cfg, 3);
        let j_loc = fim_location(&s, &gains(), &cfg, &pilots, 0.05).unwrap();
        let inv = j_loc.inverse().unwrap();
        let efim = efim_position_rotation(&j_loc).unwrap();
        // Schur identity: inv(EFIM) equals the pose block of the full inverse
        let efim_inv = efim.try_inverse().unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_abs_diff_eq!(
                    efim_inv[(r, c)],
                    inv[(r, c)],
                    epsilon = 1e-9 * inv[(r, c)].abs().max(1e-3)
                );
            }
        }
    }

    #[test]
    fn centering_variants_share_delay_information() {
        let cfg = cfg_small();
        let s = scene();
        let cp = params_from_scenario(&s, cfg.light_speed, &gains()).unwrap();
        let pilots = random_pilots(&cfg, 5);
        let js = fim_channel_params_with(&cp, &cfg, &pilots, 0.1, Centering::Symmetric).unwrap();
        let jz = fim_channel_params_with(&cp, &cfg, &pilots, 0.1, Centering::ZeroBased).unwrap();
        // delay and gain derivatives are centering-independent
        for k in 0..2 {
            let o = PARAMS_PER_PATH * k;
            assert_abs_diff_eq!(
                js.matrix[(o, o)],
                jz.matrix[(o, o)],
                epsilon = 1e-6 * js.matrix[(o, o)]
            );
        }
        // angle blocks differ
        assert!((js.matrix[(1, 1)] - jz.matrix[(1, 1)]).abs() > 1e-6 * js.matrix[(1, 1)]);
    }

    #[test]
    fn olos_scenario_bounds() {
        let cfg = cfg_small();
        // three scatterer paths: the minimum for an identifiable OLOS FIM
        // (each path brings three observables but two unknowns)
        let s = Scenario {
            los_blocked: true,
            scatterers: vec![
                Vec2::new(1.5, 0.4),
                Vec2::new(2.5, 0.9),
                Vec2::new(3.1, 2.0),
            ],
            ..scene()
        };
        let pilots = random_pilots(&cfg, 7);
        let g = vec![
            Complex64::new(0.5, 0.1),
            Complex64::new(-0.2, 0.3),
            Complex64::new(0.3, -0.2),
        ];
        let b = bounds(&s, &g, &cfg, &pilots, 0.01).unwrap();
        assert!(b.peb.is_finite() && b.peb > 0.0);
        assert!(b.reb.is_finite() && b.reb > 0.0);
        assert_eq!(b.crb_delay.len(), 3);
    }

    #[test]
    fn bad_inputs_rejected() {
        let cfg = cfg_small();
        let s = scene();
        let cp = params_from_scenario(&s, cfg.light_speed, &gains()).unwrap();
        let pilots = random_pilots(&cfg, 0);
        assert!(fim_channel_params(&cp, &cfg, &pilots, 0.0).is_err());
        let empty = ChannelParamSet {
            paths: vec![],
            olos: false,
        };
        assert!(matches!(
            fim_channel_params(&empty, &cfg, &pilots, 0.1),
            Err(LocError::EmptyParamSet)
        ));
    }
}
