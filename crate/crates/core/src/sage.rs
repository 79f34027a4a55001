//! Off-grid refinement of the coarse path estimates by a space-alternating
//! generalized EM sweep.
//!
//! For each path in turn the expectation step forms the per-path residual
//! `z_k = y - sum_{l != k} mu(eta_l)`, and the maximization step runs 1-D
//! golden-section searches over delay, AOD, and AOA (in the sine domain,
//! where the array response is exactly parametrized) with the complex gain
//! profiled out in closed form. Because the per-path objective equals the
//! full negative log-likelihood up to a constant, every accepted update is
//! guaranteed not to increase the total residual.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::{path_phase, steering_vector, ArrayOfdmConfig, ObservationSet, PilotBlock, Side};
use crate::error::{LocError, Result};
use crate::geometry::{ChannelParamSet, PathParams};
use crate::somp::CoarsePath;

/// Knobs for the refinement sweep.
#[derive(Debug, Clone, Copy)]
pub struct RefineConfig {
    /// Full passes over all paths.
    pub sweeps: usize,
    /// Golden-section iterations per 1-D search.
    pub golden_iters: usize,
    /// Early exit when the relative residual improvement of a sweep drops
    /// below this.
    pub tol: f64,
    /// Delay search half-width in sample periods around the current value.
    pub delay_halfwidth_samples: f64,
    /// Angle search half-width in units of the beamspace bin `lambda/(N d)`,
    /// measured in the sine domain.
    pub sin_halfwidth_bins: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            sweeps: 6,
            golden_iters: 28,
            tol: 1e-10,
            delay_halfwidth_samples: 1.0,
            sin_halfwidth_bins: 0.75,
        }
    }
}

/// Refined parameters; angles remain in the arcsin (front-hemisphere)
/// domain used by the beamspace grid.
#[derive(Debug, Clone)]
pub struct RefinedEstimate {
    pub params: ChannelParamSet,
    pub residual_energy: f64,
}

/// Unit-gain path contribution `v^{(g)}[n] = e^{-j2pi n tau/(NTs)}
/// a_Rx(aoa)[n] (a_Tx(aod)[n]^H F x)`.
pub fn path_response(
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    g: usize,
    n: usize,
    delay: f64,
    aod: f64,
    aoa: f64,
) -> DVector<Complex64> {
    let f = pilots.effective(g, n);
    let a_tx = steering_vector(Side::Tx, cfg, aod, n);
    let a_rx = steering_vector(Side::Rx, cfg, aoa, n);
    let b = a_tx.dotc(&f) * path_phase(cfg, delay, n);
    a_rx * b
}

/// Profiled-gain fit quality of `(delay, aod, aoa)` against the residuals:
/// returns `(score, optimal gain)` where score is `|<v, z>|^2 / ||v||^2`.
fn profiled_fit(
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    residual: &[Vec<DVector<Complex64>>],
    delay: f64,
    aod: f64,
    aoa: f64,
) -> (f64, Complex64) {
    let mut num = Complex64::default();
    let mut den = 0.0;
    for (g, per_n) in residual.iter().enumerate() {
        for (n, z) in per_n.iter().enumerate() {
            let v = path_response(cfg, pilots, g, n, delay, aod, aoa);
            num += v.dotc(z);
            den += v.norm_squared();
        }
    }
    if den < 1e-300 {
        return (0.0, Complex64::default());
    }
    (num.norm_sqr() / den, num / den)
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn total_residual_energy(residual: &[Vec<DVector<Complex64>>]) -> f64 {
    residual
        .iter()
        .flat_map(|per_n| per_n.iter())
        .map(|v| v.norm_squared())
        .sum()
}

/// Refines coarse grid estimates against the raw observations.
pub fn sage_refine(
    obs: &ObservationSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    coarse: &[CoarsePath],
    rcfg: &RefineConfig,
) -> Result<RefinedEstimate> {
    if coarse.is_empty() {
        return Err(LocError::EmptyParamSet);
    }
    let g_n = pilots.n_transmissions();
    let n_sub = cfg.n_subcarriers;
    let mut paths: Vec<PathParams> = coarse
        .iter()
        .map(|c| PathParams {
            delay: c.delay,
            aod: c.aod,
            aoa: c.aoa,
            gain: c.gain,
        })
        .collect();

    // cached per-path model contributions
    let model = |p: &PathParams, g: usize, n: usize| {
        path_response(cfg, pilots, g, n, p.delay, p.aod, p.aoa) * p.gain
    };
    let mut contrib: Vec<Vec<Vec<DVector<Complex64>>>> = paths
        .iter()
        .map(|p| {
            (0..g_n)
                .map(|g| (0..n_sub).map(|n| model(p, g, n)).collect())
                .collect()
        })
        .collect();

    let period = n_sub as f64 * cfg.sample_period();
    let delay_hw = rcfg.delay_halfwidth_samples * cfg.sample_period();
    let bin = cfg.wavelength_carrier() / (cfg.spacing);
    let sin_hw_tx = rcfg.sin_halfwidth_bins * bin / cfg.n_tx as f64;
    let sin_hw_rx = rcfg.sin_halfwidth_bins * bin / cfg.n_rx as f64;

    let residual_against = |skip: Option<usize>, contrib: &[Vec<Vec<DVector<Complex64>>>]| {
        (0..g_n)
            .map(|g| {
                (0..n_sub)
                    .map(|n| {
                        let mut r = obs.y[g][n].clone();
                        for (k, c) in contrib.iter().enumerate() {
                            if Some(k) != skip {
                                r -= &c[g][n];
                            }
                        }
                        r
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };

    let mut prev_energy = f64::INFINITY;
    for _sweep in 0..rcfg.sweeps {
        for k in 0..paths.len() {
            let z = residual_against(Some(k), &contrib);
            let cur = paths[k];
            let (mut best_score, _) =
                profiled_fit(cfg, pilots, &z, cur.delay, cur.aod, cur.aoa);
            let mut best = cur;

            // delay
            let lo = (cur.delay - delay_hw).max(0.0);
            let hi = (cur.delay + delay_hw).min(period);
            let (tau, s_tau) = golden_max(
                |t| profiled_fit(cfg, pilots, &z, t, best.aod, best.aoa).0,
                lo,
                hi,
                rcfg.golden_iters,
            );
            if s_tau > best_score {
                best_score = s_tau;
                best.delay = tau;
            }
            // AOD in the sine domain
            let s0 = best.aod.sin();
            let (s_opt, s_aod) = golden_max(
                |s| {
                    profiled_fit(cfg, pilots, &z, best.delay, s.asin(), best.aoa).0
                },
                (s0 - sin_hw_tx).max(-1.0),
                (s0 + sin_hw_tx).min(1.0),
                rcfg.golden_iters,
            );
            if s_aod > best_score {
                best_score = s_aod;
                best.aod = s_opt.asin();
            }
            // AOA in the sine domain
            let s0 = best.aoa.sin();
            let (s_opt, s_aoa) = golden_max(
                |s| {
                    profiled_fit(cfg, pilots, &z, best.delay, best.aod, s.asin()).0
                },
                (s0 - sin_hw_rx).max(-1.0),
                (s0 + sin_hw_rx).min(1.0),
                rcfg.golden_iters,
            );
            if s_aoa > best_score {
                best.aoa = s_opt.asin();
            }

            // closed-form gain at the accepted parameters
            let (_, gain) = profiled_fit(cfg, pilots, &z, best.delay, best.aod, best.aoa);
            best.gain = gain;
            if !best.delay.is_finite()
                || !best.aod.is_finite()
                || !best.aoa.is_finite()
                || !gain.re.is_finite()
                || !gain.im.is_finite()
            {
                return Err(LocError::NonFinite(k));
            }
            paths[k] = best;
            contrib[k] = (0..g_n)
                .map(|g| (0..n_sub).map(|n| model(&best, g, n)).collect())
                .collect();
        }
        let energy = total_residual_energy(&residual_against(None, &contrib));
        let converged =
            prev_energy.is_finite() && prev_energy - energy <= rcfg.tol * prev_energy.max(1e-300);
        prev_energy = energy;
        if converged {
            break;
        }
    }

    let residual_energy = total_residual_energy(&residual_against(None, &contrib));
    Ok(RefinedEstimate {
        params: ChannelParamSet {
            paths,
            olos: false,
        },
        residual_energy,
    })
}
