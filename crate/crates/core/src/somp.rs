//! Joint-sparse coarse channel estimation: distributed-compressed-sensing
//! simultaneous orthogonal matching pursuit over all subcarriers, followed
//! by per-path delay/gain extraction from the recovered beamspace series.
//!
//! All `G` transmissions of a subcarrier are stacked into one vector; atoms
//! are shared across subcarriers so each iteration adds one (AOD, AOA) grid
//! pair for every `n` simultaneously. The stopping rule is calibrated to a
//! target false-alarm probability on the noise-only statistic, and the atom
//! selected on the iteration that trips the rule is discarded, so the rule
//! fires *before* committing a spurious path.

use nalgebra::DVector;
use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::beamspace::SensingSet;
use crate::channel::{ArrayOfdmConfig, ObservationSet};
use crate::error::{LocError, Result};

/// Detection calibration for the pursuit loop.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    /// Overall false-alarm probability for declaring any path in noise.
    pub p_fa: f64,
    /// Hard cap on the number of recovered paths.
    pub k_max: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            p_fa: 1e-2,
            k_max: 20,
        }
    }
}

/// Threshold on `sum_n |omega^H r[n]|^2 / ||omega[n]||^2` such that the max
/// over all atoms exceeds it with probability `p_fa` under noise only.
///
/// Each normalized term is exponential with mean `N_0`, so the sum is
/// Gamma(N, N_0)-distributed; the max over `n_atoms` independent atoms is
/// controlled by raising the per-atom CDF to `1/n_atoms`.
pub fn stopping_threshold(
    noise_psd: f64,
    n_subcarriers: usize,
    n_atoms: usize,
    p_fa: f64,
) -> f64 {
    if noise_psd <= 0.0 {
        return 0.0;
    }
    let p = (1.0 - p_fa).powf(1.0 / n_atoms as f64);
    let g = Gamma::new(n_subcarriers as f64, 1.0).expect("valid gamma shape");
    noise_psd * g.inverse_cdf(p)
}

/// One detected path in grid coordinates.
#[derive(Debug, Clone, Copy)]
pub struct CoarsePath {
    /// Flat beamspace atom index.
    pub atom: usize,
    pub delay: f64,
    /// AOD on the arcsin grid, `[-pi/2, pi/2]`.
    pub aod: f64,
    /// AOA on the arcsin grid, `[-pi/2, pi/2]`.
    pub aoa: f64,
    pub gain: Complex64,
}

/// Output of the pursuit: paths sorted by delay, plus the final residual.
#[derive(Debug, Clone)]
pub struct CoarseEstimate {
    pub paths: Vec<CoarsePath>,
    pub residual_energy: f64,
    pub threshold: f64,
}

fn stacked_observation(obs: &ObservationSet, n: usize) -> DVector<Complex64> {
    let g_n = obs.y.len();
    let n_rx = obs.y[0][n].len();
    let mut v = DVector::zeros(g_n * n_rx);
    for g in 0..g_n {
        v.rows_mut(g * n_rx, n_rx).copy_from(&obs.y[g][n]);
    }
    v
}

fn stacked_column(set: &SensingSet, n: usize, m: usize) -> DVector<Complex64> {
    let g_n = set.n_transmissions();
    let mut v = DVector::zeros(g_n * set.n_rx);
    for g in 0..g_n {
        v.rows_mut(g * set.n_rx, set.n_rx).copy_from(&set.column(g, n, m));
    }
    v
}

/// DCS-SOMP over the beamspace dictionary.
pub fn dcs_somp(
    obs: &ObservationSet,
    set: &SensingSet,
    cfg: &ArrayOfdmConfig,
    rule: &StopRule,
) -> Result<CoarseEstimate> {
    let n_sub = cfg.n_subcarriers;
    let n_atoms = set.n_atoms();
    let g_n = set.n_transmissions();
    let delta = stopping_threshold(obs.noise_psd, n_sub, n_atoms, rule.p_fa);

    let mut residual: Vec<DVector<Complex64>> =
        (0..n_sub).map(|n| stacked_observation(obs, n)).collect();
    let u_rx_h = set.u_rx.adjoint();

    // per-subcarrier orthonormal basis, upper-triangular factors, and
    // projection coefficients of the observation onto the basis
    let mut basis: Vec<Vec<DVector<Complex64>>> = vec![Vec::new(); n_sub];
    let mut r_fact: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); n_sub];
    let mut coeffs: Vec<Vec<Complex64>> = vec![Vec::new(); n_sub];
    let mut selected: Vec<usize> = Vec::new();
    let mut first_stat: Option<f64> = None;

    while selected.len() < rule.k_max {
        // correlations of the current residuals with every atom
        let mut metric = vec![0.0f64; n_atoms];
        let mut stat = vec![0.0f64; n_atoms];
        for n in 0..n_sub {
            let projected: Vec<DVector<Complex64>> = (0..g_n)
                .map(|g| &u_rx_h * residual[n].rows(g * set.n_rx, set.n_rx))
                .collect();
            let corr = set.correlations(n, &projected);
            for m in 0..n_atoms {
                let nsq = set.column_norm_sq(n, m);
                if nsq < 1e-30 {
                    continue;
                }
                metric[m] += corr[m].norm() / nsq.sqrt();
                stat[m] += corr[m].norm_sqr() / nsq;
            }
        }
        let best = (0..n_atoms)
            .max_by(|a, b| metric[*a].partial_cmp(&metric[*b]).unwrap())
            .unwrap();
        if selected.contains(&best) {
            break; // residual re-selects an orthogonalized atom: done
        }
        // detection test on the candidate before committing it
        if stat[best] < delta {
            if selected.is_empty() {
                return Err(LocError::NoPathDetected);
            }
            break;
        }
        match first_stat {
            None => first_stat = Some(stat[best]),
            // noiseless / vanishing-threshold guard: stop on relative decay
            Some(f) => {
                if stat[best] < 1e-10 * f {
                    break;
                }
            }
        }

        let i = selected.len();
        for n in 0..n_sub {
            let mut w = stacked_column(set, n, best);
            let mut r_col = Vec::with_capacity(i + 1);
            for q in &basis[n] {
                let c = q.dotc(&w);
                w -= q * c;
                r_col.push(c);
            }
            let norm = w.norm();
            let pivot = norm.max(1e-300);
            r_col.push(Complex64::new(pivot, 0.0));
            let q = w / Complex64::new(pivot, 0.0);
            let c = q.dotc(&residual[n]);
            residual[n] -= &q * c;
            basis[n].push(q);
            r_fact[n].push(r_col);
            coeffs[n].push(c);
        }
        selected.push(best);
    }

    // undo orthogonalization: back-substitute R x = w per subcarrier to get
    // the beamspace coefficient series of each selected atom
    let k = selected.len();
    let mut series: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); n_sub]; k];
    for n in 0..n_sub {
        let mut x = vec![Complex64::default(); k];
        for i in (0..k).rev() {
            let mut acc = coeffs[n][i];
            for j in (i + 1)..k {
                // r_fact[n][j] holds column j of R; entry i is R[i][j]
                acc -= r_fact[n][j][i] * x[j];
            }
            x[i] = acc / r_fact[n][i][i];
        }
        for (i, xi) in x.into_iter().enumerate() {
            series[i][n] = xi;
        }
    }

    let mut paths: Vec<CoarsePath> = selected
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let (t, r) = set.decode(m);
            let (delay, gain) = per_path_delay_gain(&series[i], cfg);
            CoarsePath {
                atom: m,
                delay,
                aod: set.aod_of(t),
                aoa: set.aoa_of(r),
                gain,
            }
        })
        .collect();
    paths.sort_by(|a, b| a.delay.partial_cmp(&b.delay).unwrap());

    Ok(CoarseEstimate {
        paths,
        residual_energy: residual.iter().map(|r| r.norm_squared()).sum(),
        threshold: delta,
    })
}

/// Delay and gain of one path from its beamspace coefficient series
/// `h[n] ~ gain * exp(-j 2 pi n tau / (N Ts))`.
///
/// The delay maximizes `|sum_n h[n] e^{+j 2 pi n tau/(N Ts)}|` over a dense
/// grid of `10 N` points on one delay period, refined by fitting a parabola
/// through the peak and its cyclic neighbors.
pub fn per_path_delay_gain(series: &[Complex64], cfg: &ArrayOfdmConfig) -> (f64, Complex64) {
    let n_sub = series.len();
    let period = n_sub as f64 * cfg.sample_period();
    let grid = 10 * n_sub;
    let score = |tau: f64| -> f64 {
        let mut acc = Complex64::default();
        for (n, h) in series.iter().enumerate() {
            let arg = std::f64::consts::TAU * n as f64 * tau / period;
            acc += h * Complex64::from_polar(1.0, arg);
        }
        acc.norm_sqr()
    };
    let step = period / grid as f64;
    let values: Vec<f64> = (0..grid).map(|d| score(d as f64 * step)).collect();
    let d_star = (0..grid)
        .max_by(|a, b| values[*a].partial_cmp(&values[*b]).unwrap())
        .unwrap();
    let ym = values[(d_star + grid - 1) % grid];
    let y0 = values[d_star];
    let yp = values[(d_star + 1) % grid];
    let denom = ym - 2.0 * y0 + yp;
    let offset = if denom.abs() > 1e-30 {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let tau = ((d_star as f64 + offset) * step).rem_euclid(period);
    let mut acc = Complex64::default();
    for (n, h) in series.iter().enumerate() {
        let arg = std::f64::consts::TAU * n as f64 * tau / period;
        acc += h * Complex64::from_polar(1.0, arg);
    }
    (tau, acc / n_sub as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamspace::{build_sensing, grid_angle};
    use crate::channel::{random_pilots, synthesize};
    use crate::geometry::{ChannelParamSet, PathParams};
    use approx::assert_abs_diff_eq;

    fn cfg_grid() -> ArrayOfdmConfig {
        let mut cfg = ArrayOfdmConfig::new_60ghz(8, 8, 16, 4);
        cfg.narrowband = true; // keep on-grid angles exactly on-grid per subcarrier
        cfg
    }

    fn on_grid_path(cfg: &ArrayOfdmConfig, t: usize, r: usize, d_idx: usize) -> PathParams {
        let dol = cfg.spacing / cfg.wavelength_carrier();
        let period = cfg.n_subcarriers as f64 * cfg.sample_period();
        PathParams {
            delay: d_idx as f64 * period / (10 * cfg.n_subcarriers) as f64,
            aod: grid_angle(cfg.n_tx, dol, t),
            aoa: grid_angle(cfg.n_rx, dol, r),
            gain: Complex64::new(0.9, -0.4),
        }
    }

    #[test]
    fn recovers_single_on_grid_path_noiseless() {
        let cfg = cfg_grid();
        let path = on_grid_path(&cfg, 5, 2, 30);
        let cp = ChannelParamSet {
            paths: vec![path],
            olos: false,
        };
        let pilots = random_pilots(&cfg, 11);
        let obs = synthesize(&cp, &cfg, &pilots, 0.0, 0).unwrap();
        let set = build_sensing(&cfg, &pilots);
        let est = dcs_somp(&obs, &set, &cfg, &StopRule::default()).unwrap();
        assert_eq!(est.paths.len(), 1);
        let p = &est.paths[0];
        assert_eq!(set.decode(p.atom), (5, 2));
        assert_abs_diff_eq!(p.delay, path.delay, epsilon = 1e-12);
        assert_abs_diff_eq!(p.aod, path.aod, epsilon = 1e-12);
        assert_abs_diff_eq!(p.aoa, path.aoa, epsilon = 1e-12);
        assert!((p.gain - path.gain).norm() < 1e-6);
        assert!(est.residual_energy < 1e-16);
    }

    #[test]
    fn recovers_two_paths_sorted_by_delay() {
        let cfg = cfg_grid();
        let p0 = on_grid_path(&cfg, 5, 2, 20);
        let mut p1 = on_grid_path(&cfg, 2, 6, 45);
        p1.gain = Complex64::new(0.3, 0.2);
        let cp = ChannelParamSet {
            paths: vec![p1, p0], // deliberately unsorted
            olos: false,
        };
        let pilots = random_pilots(&cfg, 5);
        let obs = synthesize(&cp, &cfg, &pilots, 0.0, 0).unwrap();
        let set = build_sensing(&cfg, &pilots);
        let est = dcs_somp(&obs, &set, &cfg, &StopRule::default()).unwrap();
        assert_eq!(est.paths.len(), 2);
        assert!(est.paths[0].delay < est.paths[1].delay);
        assert_eq!(set.decode(est.paths[0].atom), (5, 2));
        assert_eq!(set.decode(est.paths[1].atom), (2, 6));
    }

    #[test]
    fn noise_only_reports_no_path() {
        let cfg = cfg_grid();
        let cp = ChannelParamSet {
            paths: vec![PathParams {
                delay: 0.0,
                aod: 0.0,
                aoa: 0.0,
                gain: Complex64::default(),
            }],
            olos: false,
        };
        let pilots = random_pilots(&cfg, 2);
        let set = build_sensing(&cfg, &pilots);
        let rule = StopRule {
            p_fa: 1e-3,
            k_max: 20,
        };
        let mut rejections = 0;
        for seed in 0..20 {
            let obs = synthesize(&cp, &cfg, &pilots, 1.0, seed).unwrap();
            if matches!(dcs_somp(&obs, &set, &cfg, &rule), Err(LocError::NoPathDetected)) {
                rejections += 1;
            }
        }
        assert!(rejections >= 19, "only {rejections}/20 noise draws rejected");
    }

    #[test]
    fn detects_strong_path_in_noise() {
        let cfg = cfg_grid();
        let path = on_grid_path(&cfg, 4, 4, 25);
        let cp = ChannelParamSet {
            paths: vec![path],
            olos: false,
        };
        let pilots = random_pilots(&cfg, 8);
        let set = build_sensing(&cfg, &pilots);
        let n0 =
            crate::channel::noise_psd_for_snr(&cp, &cfg, &pilots, 10.0).unwrap();
        let obs = synthesize(&cp, &cfg, &pilots, n0, 3).unwrap();
        let est = dcs_somp(&obs, &set, &cfg, &StopRule::default()).unwrap();
        assert_eq!(set.decode(est.paths[0].atom), (4, 4));
        assert_abs_diff_eq!(est.paths[0].delay, path.delay, epsilon = 2e-10);
    }

    #[test]
    fn threshold_grows_as_p_fa_shrinks() {
        let d1 = stopping_threshold(0.5, 16, 64, 1e-1);
        let d2 = stopping_threshold(0.5, 16, 64, 1e-3);
        assert!(d2 > d1);
        assert!(d1 > 0.0);
        assert_eq!(stopping_threshold(0.0, 16, 64, 1e-2), 0.0);
        // scales linearly with the noise level
        let d3 = stopping_threshold(1.0, 16, 64, 1e-1);
        assert_abs_diff_eq!(d3 / d1, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn delay_extraction_on_synthetic_series() {
        let cfg = cfg_grid();
        let n = cfg.n_subcarriers;
        let period = n as f64 * cfg.sample_period();
        let gain = Complex64::new(-0.2, 0.7);
        let tau = 0.3217 * period; // off the coarse grid
        let series: Vec<Complex64> = (0..n)
            .map(|i| {
                gain * Complex64::from_polar(
                    1.0,
                    -std::f64::consts::TAU * i as f64 * tau / period,
                )
            })
            .collect();
        let (tau_hat, gain_hat) = per_path_delay_gain(&series, &cfg);
        assert_abs_diff_eq!(tau_hat / period, tau / period, epsilon = 2e-3);
        assert!((gain_hat - gain).norm() < 0.05);
    }
}
