//! Campaign runners: bound sweeps, single estimation trials, and Monte
//! Carlo RMSE campaigns, plus the CSV emitters for their artifacts.
//!
//! Determinism contract: identical config and base seed produce
//! byte-identical CSV output. Every random draw flows from a seed derived
//! with [`derive_seed`], and trial aggregation keeps the trial order.

use crate::config::{CampaignConfig, MsPlacement};
use crate::par;
use mmloc::channel::{
    draw_gains, noise_psd_for_snr, path_loss, random_pilots, synthesize, ArrayOfdmConfig,
    GainLaw, PilotBlock,
};
use mmloc::crb::{bounds, BoundReport};
use mmloc::estimator::{channel_weight, estimate, Condition, EstimatorOptions};
use mmloc::geometry::{params_from_scenario, wrap_pi, ChannelParamSet, PathParams, Scenario};
use mmloc::pose::{solve_los, solve_nlos, solve_olos, solve_unknown, OlosSearchConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Splits one base seed into independent per-use streams. `stream` tags the
/// purpose (scenario, gains, noise, ...), `index` the trial or sample.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    // SplitMix64 finalizer: cheap, well-mixed, and stable across platforms.
    let mut z = base ^ stream.wrapping_mul(0x9e3779b97f4a7c15) ^ index.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Gains with the reflection loss pinned at its -10 dB mean; used for bound
/// evaluation and low-variance Monte Carlo runs.
pub fn gains_mean_reflection(
    s: &Scenario,
    cfg: &ArrayOfdmConfig,
    law: GainLaw,
    seed: u64,
) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt_nr = (cfg.n_tx * cfg.n_rx) as f64;
    (0..s.n_paths())
        .map(|k| {
            let rho = path_loss(k, s, cfg, -10.0);
            let h = match law {
                GainLaw::FixedMagnitude => {
                    Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
                }
                GainLaw::ComplexNormal => {
                    let re: f64 = rng.gen_range(-1.0..1.0);
                    let im: f64 = rng.gen_range(-1.0..1.0);
                    let z = Complex64::new(re, im);
                    if z.norm() > 1e-12 {
                        z / z.norm()
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                }
            };
            h * (nt_nr / rho).sqrt()
        })
        .collect()
}

/// Unit-magnitude gains with seeded random phases (no path loss).
pub fn gains_equal_power(s: &Scenario, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..s.n_paths())
        .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect()
}

/// Per-trial gain draw honoring the campaign's gain settings.
pub fn trial_gains(
    cfg: &CampaignConfig,
    s: &Scenario,
    ch: &ArrayOfdmConfig,
    seed: u64,
) -> Vec<Complex64> {
    if !cfg.apply_path_loss {
        gains_equal_power(s, seed)
    } else if cfg.randomize_reflection {
        draw_gains(s, ch, cfg.gain_law, seed)
    } else {
        gains_mean_reflection(s, ch, cfg.gain_law, seed)
    }
}

/// Deterministic zero-phase gains for bound tables, matching the power
/// profile the trials use.
fn gains_for_bounds(s: &Scenario, cfg: &ArrayOfdmConfig, apply_path_loss: bool) -> Vec<Complex64> {
    let nt_nr = (cfg.n_tx * cfg.n_rx) as f64;
    (0..s.n_paths())
        .map(|k| {
            if apply_path_loss {
                let rho = path_loss(k, s, cfg, -10.0);
                Complex64::new((nt_nr / rho).sqrt(), 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BoundsRow {
    pub n_beams: usize,
    pub snr_db: f64,
    pub ms_x: f64,
    pub ms_y: f64,
    pub ok: bool,
    pub peb_m: f64,
    pub reb_rad: f64,
    pub crb_tau0_ns: f64,
    pub crb_aod0_rad: f64,
    pub crb_aoa0_rad: f64,
}

#[derive(Debug, Clone)]
pub struct BeamsSummaryRow {
    pub n_beams: usize,
    pub snr_db: f64,
    pub peb_cdf90_m: f64,
}

#[derive(Debug, Clone)]
pub struct BoundsResult {
    pub rows: Vec<BoundsRow>,
    pub beams_summary: Vec<BeamsSummaryRow>,
}

/// Noise level that puts the reference configuration at the target SNR;
/// beam-count sweeps reuse it so SNR labels stay anchored to one setup.
fn reference_noise_psd(
    s: &Scenario,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    snr_db: f64,
    apply_path_loss: bool,
) -> Option<f64> {
    let gains = gains_for_bounds(s, cfg, apply_path_loss);
    let cp = params_from_scenario(s, cfg.light_speed, &gains).ok()?;
    noise_psd_for_snr(&cp, cfg, pilots, snr_db).ok()
}

fn bound_report(
    s: &Scenario,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    noise_psd: f64,
    apply_path_loss: bool,
) -> Option<BoundReport> {
    let gains = gains_for_bounds(s, cfg, apply_path_loss);
    bounds(s, &gains, cfg, pilots, noise_psd).ok()
}

/// PEB/REB/CRB tables per beam count, SNR, and MS position sample.
pub fn run_bounds(cfg: &CampaignConfig) -> BoundsResult {
    let beam_counts = cfg
        .beams_grid
        .clone()
        .unwrap_or_else(|| vec![cfg.arrays.n_transmissions]);
    let n_positions = match cfg.scenario.ms {
        MsPlacement::Fixed { .. } => 1,
        MsPlacement::Rectangle { .. } => cfg.position_samples,
    };
    // one shared position set so CDF curves are comparable across G and SNR
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.base_seed, 0xB0, 0));
    let scenes: Vec<Scenario> = (0..n_positions)
        .map(|_| cfg.scenario.sample(&mut rng))
        .collect();

    let mut jobs = Vec::new();
    for &g in &beam_counts {
        for &snr in &cfg.snr_grid_db {
            for (idx, scene) in scenes.iter().enumerate() {
                jobs.push((g, snr, idx, scene.clone()));
            }
        }
    }
    let arrays = cfg.arrays.clone();
    let base_seed = cfg.base_seed;
    let apply_path_loss = cfg.apply_path_loss;
    let g_ref = cfg.arrays.n_transmissions;
    let rows = par::map_collect(jobs, move |(g, snr, idx, scene)| {
        // fresh random beam selection per position sample, so CDF curves
        // average over the beam draw as well as the MS placement; the first
        // sample keeps the per-G seed that the Monte Carlo summary uses, so
        // fixed-placement bound rows stay byte-identical across subcommands
        let seed_for = |g: usize| {
            if idx == 0 {
                derive_seed(base_seed, 0xA1, g as u64)
            } else {
                derive_seed(base_seed, 0xA1, ((idx as u64) << 32) | g as u64)
            }
        };
        // SNR (and therefore N_0) is defined at the reference beam count;
        // other beam counts share the total transmit energy budget, so their
        // pilots are scaled by sqrt(G_ref / G).
        let ch_ref = arrays.with_beams(g_ref).channel_config();
        let pilots_ref = random_pilots(&ch_ref, seed_for(g_ref));
        let n0 = reference_noise_psd(&scene, &ch_ref, &pilots_ref, snr, apply_path_loss);
        let ch = arrays.with_beams(g).channel_config();
        let pilots = if g == g_ref {
            pilots_ref
        } else {
            random_pilots(&ch, seed_for(g)).scaled((g_ref as f64 / g as f64).sqrt())
        };
        let rep = n0.and_then(|n0| bound_report(&scene, &ch, &pilots, n0, apply_path_loss));
        match rep {
            Some(r) => BoundsRow {
                n_beams: g,
                snr_db: snr,
                ms_x: scene.ms_pos.x,
                ms_y: scene.ms_pos.y,
                ok: true,
                peb_m: r.peb,
                reb_rad: r.reb,
                crb_tau0_ns: r.crb_delay[0].sqrt() * 1e9,
                crb_aod0_rad: r.crb_aod[0].sqrt(),
                crb_aoa0_rad: r.crb_aoa[0].sqrt(),
            },
            None => BoundsRow {
                n_beams: g,
                snr_db: snr,
                ms_x: scene.ms_pos.x,
                ms_y: scene.ms_pos.y,
                ok: false,
                peb_m: f64::NAN,
                reb_rad: f64::NAN,
                crb_tau0_ns: f64::NAN,
                crb_aod0_rad: f64::NAN,
                crb_aoa0_rad: f64::NAN,
            },
        }
    });

    let mut beams_summary = Vec::new();
    for &g in &beam_counts {
        for &snr in &cfg.snr_grid_db {
            let mut pebs: Vec<f64> = rows
                .iter()
                .filter(|r| r.n_beams == g && r.snr_db == snr && r.ok)
                .map(|r| r.peb_m)
                .collect();
            pebs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if !pebs.is_empty() {
                let idx = ((pebs.len() as f64) * 0.9).ceil() as usize - 1;
                beams_summary.push(BeamsSummaryRow {
                    n_beams: g,
                    snr_db: snr,
                    peb_cdf90_m: pebs[idx.min(pebs.len() - 1)],
                });
            }
        }
    }
    BoundsResult {
        rows,
        beams_summary,
    }
}

// ---------------------------------------------------------------------------
// trials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub n_paths_true: usize,
    pub n_paths_est: usize,
    pub ok: bool,
    pub used_los: bool,
    pub err_p_m: f64,
    pub err_alpha_rad: f64,
    pub err_tau0_ns: f64,
    pub err_aod0_rad: f64,
    pub err_aoa0_rad: f64,
    pub cost: f64,
    /// NLOS-hypothesis cost over OLOS-hypothesis cost; NaN when either
    /// branch failed or LOS is present.
    pub dv: f64,
}

/// Minimum-cost assignment of estimated to true paths; returns the
/// permutation `assign[true_idx] = est_idx`. Exhaustive over permutations
/// (path counts are single digits), matching in a weighted
/// (c*tau, aod, aoa) metric.
pub fn match_paths(truth: &[PathParams], est: &[PathParams], light_speed: f64) -> Vec<usize> {
    let n = truth.len();
    assert_eq!(n, est.len());
    let cost = |t: &PathParams, e: &PathParams| -> f64 {
        let dm = light_speed * (t.delay - e.delay);
        let da = wrap_pi(t.aod - e.aod);
        let db = wrap_pi(t.aoa - e.aoa);
        dm * dm + da * da + db * db
    };
    let mut best: Vec<usize> = (0..n).collect();
    if n > 9 {
        return best; // delay-sorted identity; beyond exhaustive range
    }
    let mut best_cost = f64::INFINITY;
    let mut idx: Vec<usize> = (0..n).collect();
    permute(&mut idx, 0, &mut |perm| {
        let c: f64 = (0..n).map(|i| cost(&truth[i], &est[perm[i]])).sum();
        if c < best_cost {
            best_cost = c;
            best = perm.to_vec();
        }
    });
    best
}

fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}

fn olos_search(cfg: &CampaignConfig) -> OlosSearchConfig {
    OlosSearchConfig {
        alpha_step: cfg.alpha_step,
        ..OlosSearchConfig::default()
    }
}

/// Runs one synthesize -> estimate -> match cycle.
pub fn run_trial(cfg: &CampaignConfig, trial: usize, snr_db: f64, seed: u64) -> TrialRecord {
    let ch = cfg.arrays.channel_config();
    let pilots = random_pilots(&ch, derive_seed(cfg.base_seed, 0xA1, ch.n_transmissions as u64));
    let mut scene_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5C, 0));
    let scene = cfg.scenario.sample(&mut scene_rng);
    let gains = trial_gains(cfg, &scene, &ch, derive_seed(seed, 0x6A, 0));

    let mut record = TrialRecord {
        trial,
        snr_db,
        seed,
        n_paths_true: scene.n_paths(),
        n_paths_est: 0,
        ok: false,
        used_los: false,
        err_p_m: f64::NAN,
        err_alpha_rad: f64::NAN,
        err_tau0_ns: f64::NAN,
        err_aod0_rad: f64::NAN,
        err_aoa0_rad: f64::NAN,
        cost: f64::NAN,
        dv: f64::NAN,
    };

    let truth = match params_from_scenario(&scene, ch.light_speed, &gains) {
        Ok(t) => t,
        Err(_) => return record,
    };
    let n0 = match noise_psd_for_snr(&truth, &ch, &pilots, snr_db) {
        Ok(v) => v,
        Err(_) => return record,
    };
    let obs = match synthesize(&truth, &ch, &pilots, n0, derive_seed(seed, 0x0E, 0)) {
        Ok(o) => o,
        Err(_) => return record,
    };

    let defaults = EstimatorOptions::default();
    let opts = EstimatorOptions {
        condition: cfg.condition.to_condition(),
        olos_search: olos_search(cfg),
        stop: mmloc::somp::StopRule {
            p_fa: cfg.p_fa,
            k_max: cfg.k_max.unwrap_or(defaults.stop.k_max),
        },
        elim_margin: cfg.elim_margin.unwrap_or(defaults.elim_margin),
        ..defaults
    };
    let res = if cfg.use_sage {
        estimate(&obs, &ch, &pilots, scene.bs_pos, &opts)
    } else {
        coarse_only_estimate(&obs, &ch, &pilots, &scene, &opts)
    };
    let res = match res {
        Ok(r) => r,
        Err(_) => return record,
    };

    record.n_paths_est = res.channel.paths.len();
    record.used_los = res.used_los;
    record.cost = res.cost;
    record.err_p_m = res.pose.position.distance(&scene.ms_pos);
    record.err_alpha_rad = wrap_pi(res.pose.rotation - scene.rotation).abs();
    record.ok = res.channel.paths.len() == truth.paths.len();
    if record.ok {
        let assign = match_paths(&truth.paths, &res.channel.paths, ch.light_speed);
        let e0 = &res.channel.paths[assign[0]];
        let t0 = &truth.paths[0];
        record.err_tau0_ns = (e0.delay - t0.delay).abs() * 1e9;
        record.err_aod0_rad = wrap_pi(e0.aod - t0.aod).abs();
        record.err_aoa0_rad = wrap_pi(e0.aoa - t0.aoa).abs();
    }

    // condition identification ratio for blocked-LOS scenes
    if scene.los_blocked && res.channel.paths.len() >= 3 {
        let psd = if obs.noise_psd > 0.0 { obs.noise_psd } else { 1.0 };
        if let Ok(weight) = channel_weight(&res.channel, &ch, &pilots, psd) {
            let as_nlos = ChannelParamSet {
                paths: res.channel.paths.clone(),
                olos: false,
            };
            let as_olos = ChannelParamSet {
                paths: res.channel.paths.clone(),
                olos: true,
            };
            let nlos_cost = solve_nlos(&as_nlos, scene.bs_pos, &weight, ch.light_speed)
                .map(|s| s.cost);
            let olos_cost =
                solve_olos(&as_olos, scene.bs_pos, &weight, ch.light_speed, &olos_search(cfg))
                    .map(|s| s.cost);
            if let (Ok(vn), Ok(vo)) = (nlos_cost, olos_cost) {
                if vo > 0.0 {
                    record.dv = vn / vo;
                }
            }
        }
    }
    record
}

/// Pose recovery straight from the coarse beamspace stage (no SAGE); used
/// by the `use_sage = false` estimator toggle.
fn coarse_only_estimate(
    obs: &mmloc::channel::ObservationSet,
    ch: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    scene: &Scenario,
    opts: &EstimatorOptions,
) -> mmloc::error::Result<mmloc::estimator::EstimationResult> {
    let set = mmloc::beamspace::build_sensing(ch, pilots);
    let coarse = mmloc::somp::dcs_somp(obs, &set, ch, &opts.stop)?;
    let mut paths: Vec<PathParams> = coarse
        .paths
        .iter()
        .map(|p| PathParams {
            delay: p.delay,
            aod: p.aod,
            aoa: std::f64::consts::PI - p.aoa,
            gain: p.gain,
        })
        .collect();
    paths.sort_by(|a, b| a.delay.partial_cmp(&b.delay).unwrap());
    let channel = ChannelParamSet {
        paths,
        olos: opts.condition == Condition::Olos,
    };
    let psd = if obs.noise_psd > 0.0 { obs.noise_psd } else { 1.0 };
    let weight = channel_weight(&channel, ch, pilots, psd)?;
    let c = ch.light_speed;
    let (solution, used_los) = match opts.condition {
        Condition::Los => (solve_los(&channel, scene.bs_pos, c)?, true),
        Condition::Nlos => (solve_nlos(&channel, scene.bs_pos, &weight, c)?, true),
        Condition::Olos => (
            solve_olos(&channel, scene.bs_pos, &weight, c, &opts.olos_search)?,
            false,
        ),
        Condition::Unknown => {
            solve_unknown(&channel, scene.bs_pos, &weight, c, &opts.olos_search)?
        }
    };
    Ok(mmloc::estimator::EstimationResult {
        channel,
        pose: solution.pose,
        scatterers: solution.scatterers,
        used_los,
        cost: solution.cost,
        residual_energy: coarse.residual_energy,
    })
}

// ---------------------------------------------------------------------------
// monte carlo aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub n_trials: usize,
    pub n_ok: usize,
    pub rmse_p_m: f64,
    pub rmse_p_capped_m: f64,
    pub peb_m: f64,
    pub rmse_alpha_rad: f64,
    pub reb_rad: f64,
    pub rmse_tau0_ns: f64,
    pub crb_tau0_ns: f64,
    pub rmse_aod0_rad: f64,
    pub crb_aod0_rad: f64,
    pub rmse_aoa0_rad: f64,
    pub crb_aoa0_rad: f64,
    pub mean_dv: f64,
    pub olos_win_rate: f64,
}

#[derive(Debug, Clone)]
pub struct CdfRow {
    pub snr_db: f64,
    pub err_p_m: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub cdf: Vec<CdfRow>,
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Builds the per-SNR summary and CDF tables from raw trial records.
pub fn summarize(cfg: &CampaignConfig, records: &[TrialRecord]) -> (Vec<SummaryRow>, Vec<CdfRow>) {
    let ch = cfg.arrays.channel_config();
    let pilots = random_pilots(&ch, derive_seed(cfg.base_seed, 0xA1, ch.n_transmissions as u64));
    let reference = cfg.scenario.representative();
    let mut summary = Vec::new();
    let mut cdf = Vec::new();
    for &snr in &cfg.snr_grid_db {
        let in_snr: Vec<&TrialRecord> = records.iter().filter(|r| r.snr_db == snr).collect();
        let ok: Vec<&TrialRecord> = in_snr.iter().copied().filter(|r| r.ok).collect();
        let bound = reference_noise_psd(&reference, &ch, &pilots, snr, cfg.apply_path_loss)
            .and_then(|n0| bound_report(&reference, &ch, &pilots, n0, cfg.apply_path_loss));
        let capped = in_snr.iter().map(|r| {
            if r.err_p_m.is_finite() {
                r.err_p_m.min(cfg.outage_cap_m)
            } else {
                cfg.outage_cap_m
            }
        });
        let dvs: Vec<f64> = ok.iter().map(|r| r.dv).filter(|v| v.is_finite()).collect();
        let wins = dvs.iter().filter(|&&v| v > 1.0).count();
        summary.push(SummaryRow {
            snr_db: snr,
            n_trials: in_snr.len(),
            n_ok: ok.len(),
            rmse_p_m: rmse(ok.iter().map(|r| r.err_p_m)),
            rmse_p_capped_m: rmse(capped),
            peb_m: bound.as_ref().map(|b| b.peb).unwrap_or(f64::NAN),
            rmse_alpha_rad: rmse(ok.iter().map(|r| r.err_alpha_rad)),
            reb_rad: bound.as_ref().map(|b| b.reb).unwrap_or(f64::NAN),
            rmse_tau0_ns: rmse(ok.iter().map(|r| r.err_tau0_ns)),
            crb_tau0_ns: bound
                .as_ref()
                .map(|b| b.crb_delay[0].sqrt() * 1e9)
                .unwrap_or(f64::NAN),
            rmse_aod0_rad: rmse(ok.iter().map(|r| r.err_aod0_rad)),
            crb_aod0_rad: bound
                .as_ref()
                .map(|b| b.crb_aod[0].sqrt())
                .unwrap_or(f64::NAN),
            rmse_aoa0_rad: rmse(ok.iter().map(|r| r.err_aoa0_rad)),
            crb_aoa0_rad: bound
                .as_ref()
                .map(|b| b.crb_aoa[0].sqrt())
                .unwrap_or(f64::NAN),
            mean_dv: if dvs.is_empty() {
                f64::NAN
            } else {
                dvs.iter().sum::<f64>() / dvs.len() as f64
            },
            olos_win_rate: if dvs.is_empty() {
                f64::NAN
            } else {
                wins as f64 / dvs.len() as f64
            },
        });
        let mut errs: Vec<f64> = ok.iter().map(|r| r.err_p_m).collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = errs.len();
        for (i, e) in errs.into_iter().enumerate() {
            cdf.push(CdfRow {
                snr_db: snr,
                err_p_m: e,
                cdf: (i + 1) as f64 / n as f64,
            });
        }
    }
    (summary, cdf)
}

/// Full Monte Carlo campaign across the SNR grid.
pub fn run_montecarlo(cfg: &CampaignConfig) -> MonteCarloResult {
    let mut jobs = Vec::new();
    for (si, &snr) in cfg.snr_grid_db.iter().enumerate() {
        for trial in 0..cfg.n_trials {
            jobs.push((trial, snr, derive_seed(cfg.base_seed, si as u64 + 1, trial as u64)));
        }
    }
    let cfg_owned = cfg.clone();
    let records = par::map_collect(jobs, move |(trial, snr, seed)| {
        run_trial(&cfg_owned, trial, snr, seed)
    });
    let (summary, cdf) = summarize(cfg, &records);
    MonteCarloResult {
        records,
        summary,
        cdf,
    }
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        "NaN".to_string()
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)
}

pub fn write_bounds(dir: &Path, result: &BoundsResult) -> std::io::Result<()> {
    let mut out = String::from("n_beams,snr_db,ms_x,ms_y,ok,peb_m,reb_rad,crb_tau0_ns,crb_aod0_rad,crb_aoa0_rad\n");
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n_beams,
            fmt(r.snr_db),
            fmt(r.ms_x),
            fmt(r.ms_y),
            r.ok,
            fmt(r.peb_m),
            fmt(r.reb_rad),
            fmt(r.crb_tau0_ns),
            fmt(r.crb_aod0_rad),
            fmt(r.crb_aoa0_rad),
        ));
    }
    write_file(dir, "bounds.csv", &out)?;
    let mut out = String::from("n_beams,snr_db,peb_cdf90_m\n");
    for r in &result.beams_summary {
        out.push_str(&format!(
            "{},{},{}\n",
            r.n_beams,
            fmt(r.snr_db),
            fmt(r.peb_cdf90_m)
        ));
    }
    write_file(dir, "beams_summary.csv", &out)
}

pub fn write_montecarlo(dir: &Path, result: &MonteCarloResult) -> std::io::Result<()> {
    let mut out = String::from(
        "trial,snr_db,seed,n_paths_true,n_paths_est,ok,used_los,err_p_m,err_alpha_rad,err_tau0_ns,err_aod0_rad,err_aoa0_rad,cost,dv\n",
    );
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.trial,
            fmt(r.snr_db),
            r.seed,
            r.n_paths_true,
            r.n_paths_est,
            r.ok,
            r.used_los,
            fmt(r.err_p_m),
            fmt(r.err_alpha_rad),
            fmt(r.err_tau0_ns),
            fmt(r.err_aod0_rad),
            fmt(r.err_aoa0_rad),
            fmt(r.cost),
            fmt(r.dv),
        ));
    }
    write_file(dir, "trials.csv", &out)?;

    let mut out = String::from(
        "snr_db,n_trials,n_ok,rmse_p_m,rmse_p_capped_m,peb_m,rmse_alpha_rad,reb_rad,rmse_tau0_ns,crb_tau0_ns,rmse_aod0_rad,crb_aod0_rad,rmse_aoa0_rad,crb_aoa0_rad,mean_dv,olos_win_rate\n",
    );
    for r in &result.summary {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt(r.snr_db),
            r.n_trials,
            r.n_ok,
            fmt(r.rmse_p_m),
            fmt(r.rmse_p_capped_m),
            fmt(r.peb_m),
            fmt(r.rmse_alpha_rad),
            fmt(r.reb_rad),
            fmt(r.rmse_tau0_ns),
            fmt(r.crb_tau0_ns),
            fmt(r.rmse_aod0_rad),
            fmt(r.crb_aod0_rad),
            fmt(r.rmse_aoa0_rad),
            fmt(r.crb_aoa0_rad),
            fmt(r.mean_dv),
            fmt(r.olos_win_rate),
        ));
    }
    write_file(dir, "summary.csv", &out)?;

    let mut out = String::from("snr_db,err_p_m,cdf\n");
    for r in &result.cdf {
        out.push_str(&format!("{},{},{}\n", fmt(r.snr_db), fmt(r.err_p_m), fmt(r.cdf)));
    }
    write_file(dir, "cdf.csv", &out)
}

pub fn write_estimate(dir: &Path, cfg: &CampaignConfig, record: &TrialRecord) -> std::io::Result<()> {
    let mut out = String::from(
        "trial,snr_db,seed,n_paths_true,n_paths_est,ok,used_los,err_p_m,err_alpha_rad,err_tau0_ns,err_aod0_rad,err_aoa0_rad,cost,dv\n",
    );
    let r = record;
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        r.trial,
        fmt(r.snr_db),
        r.seed,
        r.n_paths_true,
        r.n_paths_est,
        r.ok,
        r.used_los,
        fmt(r.err_p_m),
        fmt(r.err_alpha_rad),
        fmt(r.err_tau0_ns),
        fmt(r.err_aod0_rad),
        fmt(r.err_aoa0_rad),
        fmt(r.cost),
        fmt(r.dv),
    ));
    write_file(dir, "estimate.csv", &out)?;
    cfg.save(&dir.join("config.json"))
        .map_err(|e| std::io::Error::other(e))
}
