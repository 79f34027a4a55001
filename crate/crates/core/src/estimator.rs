//! End-to-end estimator: coarse beamspace recovery, SAGE refinement, weak-
//! path pruning, angle-domain conversion, and pose recovery under the
//! requested visibility condition.
//!
//! The beamspace stages measure angles in the arcsin domain
//! `[-pi/2, pi/2]`, which is all a ULA can observe. The geometric model
//! places the BS boresight toward the scene (departure angles in the front
//! hemisphere) and the MS facing back toward the BS (arrival angles in the
//! rear hemisphere), so the conversion to model angles is `aod = theta_tx`
//! and `aoa = pi - theta_rx`.

use crate::beamspace::build_sensing;
use crate::channel::{ArrayOfdmConfig, ObservationSet, PilotBlock};
use crate::crb::fim_channel_params;
use crate::error::Result;
use crate::geometry::{ChannelParamSet, PathParams, Pose, Vec2, PARAMS_PER_PATH};
use crate::pose::{solve_los, solve_nlos, solve_olos, solve_unknown, OlosSearchConfig};
use crate::sage::{sage_refine, RefineConfig};
use crate::somp::{dcs_somp, StopRule};

/// Prior knowledge about LOS visibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Condition {
    /// LOS known present; pose from the first path's closed form only.
    Los,
    /// LOS known present; scatterer paths folded in by weighted LS.
    #[default]
    Nlos,
    /// LOS known blocked; rotation-trial solver.
    Olos,
    /// Visibility unknown; both hypotheses solved, best cost wins.
    Unknown,
}

#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    pub stop: StopRule,
    pub refine: RefineConfig,
    pub olos_search: OlosSearchConfig,
    pub condition: Condition,
    /// Paths with `|gain|^2` below this fraction of the strongest path are
    /// dropped after refinement.
    pub prune_rel_power: f64,
    /// Backward elimination keeps removing the weakest path while the
    /// re-refined residual stays below this multiple of the expected noise
    /// energy.
    pub elim_margin: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            stop: StopRule::default(),
            refine: RefineConfig::default(),
            olos_search: OlosSearchConfig::default(),
            condition: Condition::Nlos,
            prune_rel_power: 1e-3,
            elim_margin: 1.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Refined channel parameters in the geometric (model) angle domain,
    /// sorted by delay.
    pub channel: ChannelParamSet,
    pub pose: Pose,
    pub scatterers: Vec<Vec2>,
    /// `true` when the pose came from the LOS hypothesis.
    pub used_los: bool,
    /// Weighted EXIP cost at the pose optimum.
    pub cost: f64,
    /// Residual signal energy after SAGE.
    pub residual_energy: f64,
}

/// Strongest-first duplicate merge plus relative-power prune. Two paths are
/// duplicates when they are within half a delay tap and well under one
/// beamspace bin of each other in both angle sines.
fn merge_and_prune(
    paths: &[PathParams],
    cfg: &ArrayOfdmConfig,
    prune_rel_power: f64,
) -> Vec<crate::somp::CoarsePath> {
    let d_tau = 0.5 * cfg.sample_period();
    let d_sin_tx = 1.2 / cfg.n_tx as f64;
    let d_sin_rx = 1.2 / cfg.n_rx as f64;
    let mut order: Vec<&PathParams> = paths.iter().collect();
    order.sort_by(|a, b| b.gain.norm_sqr().partial_cmp(&a.gain.norm_sqr()).unwrap());
    let peak = order
        .first()
        .map(|p| p.gain.norm_sqr())
        .unwrap_or_default();
    let mut kept: Vec<&PathParams> = Vec::new();
    for p in order {
        if p.gain.norm_sqr() < prune_rel_power * peak {
            break;
        }
        let dup = kept.iter().any(|q| {
            (p.delay - q.delay).abs() < d_tau
                && (p.aod.sin() - q.aod.sin()).abs() < d_sin_tx
                && (p.aoa.sin() - q.aoa.sin()).abs() < d_sin_rx
        });
        if !dup {
            kept.push(p);
        }
    }
    kept.into_iter()
        .map(|p| crate::somp::CoarsePath {
            atom: 0,
            delay: p.delay,
            aod: p.aod,
            aoa: p.aoa,
            gain: p.gain,
        })
        .collect()
}

/// Collapses groups of paths that agree tightly in delay and departure sine
/// onto the strongest member of each group, ignoring the arrival angle. A
/// delay together with a departure direction pins down a single reflection
/// point (ellipse-ray intersection), so such a group is one physical path
/// whose arrival energy leaked across several grid atoms. The caller must
/// verify the collapse against the data residual before accepting it.
fn collapse_departure_clusters(
    paths: &[crate::somp::CoarsePath],
    cfg: &ArrayOfdmConfig,
) -> Vec<crate::somp::CoarsePath> {
    let d_tau = 0.5 * cfg.sample_period();
    let d_sin_tx = 0.6 / cfg.n_tx as f64;
    let mut order: Vec<&crate::somp::CoarsePath> = paths.iter().collect();
    order.sort_by(|a, b| b.gain.norm_sqr().partial_cmp(&a.gain.norm_sqr()).unwrap());
    let mut kept: Vec<crate::somp::CoarsePath> = Vec::new();
    for p in order {
        let dup = kept.iter().any(|q| {
            (p.delay - q.delay).abs() < d_tau && (p.aod.sin() - q.aod.sin()).abs() < d_sin_tx
        });
        if !dup {
            kept.push(p.clone());
        }
    }
    kept
}

/// Weighting matrix for the pose least squares: the delay/angle sub-block
/// of the channel-parameter FIM evaluated at the given channel estimate.
pub fn channel_weight(
    channel: &ChannelParamSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    noise_psd: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    let j = fim_channel_params(channel, cfg, pilots, noise_psd)?;
    let l = channel.paths.len();
    let mut weight = nalgebra::DMatrix::zeros(3 * l, 3 * l);
    for bi in 0..l {
        for bj in 0..l {
            for i in 0..3 {
                for jx in 0..3 {
                    weight[(3 * bi + i, 3 * bj + jx)] =
                        j.matrix[(PARAMS_PER_PATH * bi + i, PARAMS_PER_PATH * bj + jx)];
                }
            }
        }
    }
    Ok(weight)
}

/// Runs the full three-stage estimator on one observation block.
pub fn estimate(
    obs: &ObservationSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    bs_pos: Vec2,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let set = build_sensing(cfg, pilots);
    let rule = StopRule {
        k_max: opts.stop.k_max.min(pilots.n_transmissions() * cfg.n_rx),
        ..opts.stop
    };
    let coarse = dcs_somp(obs, &set, cfg, &rule)?;
    // the first passes only have to settle paths near their atoms before
    // duplicates are merged; full-quality refinement happens at the end
    let settle_refine = RefineConfig {
        sweeps: opts.refine.sweeps.min(3),
        golden_iters: opts.refine.golden_iters.min(20),
        ..opts.refine.clone()
    };
    let mut refined = sage_refine(obs, cfg, pilots, &coarse.paths, &settle_refine)?;

    // Coarse grids make the pursuit pick up leakage atoms of paths it has
    // already found; after refinement those collapse onto (nearly) the same
    // parameters as the path they leaked from. Merge such duplicates, drop
    // near-zero-gain artifacts, and re-refine so the survivors re-absorb
    // the freed energy; repeat until the path list is stable.
    let mut survivors = merge_and_prune(&refined.params.paths, cfg, opts.prune_rel_power);
    for _ in 0..4 {
        if survivors.len() == refined.params.paths.len() {
            break;
        }
        refined = sage_refine(obs, cfg, pilots, &survivors, &settle_refine)?;
        survivors = merge_and_prune(&refined.params.paths, cfg, opts.prune_rel_power);
    }

    // A path lying between grid points can also be represented exactly as a
    // superposition of several on-grid atoms, which amplitude pruning alone
    // cannot undo: the atoms are orthogonal, so every fragment keeps a
    // nonzero share. Two residual-verified cleanups follow. First, collapse
    // clusters that share delay and departure direction onto their strongest
    // member and keep the collapse only if the re-refined fit still reaches
    // the noise floor. Second, backward elimination removes the weakest path
    // while the refit stays noise-consistent.
    let n_samples = (pilots.n_transmissions() * cfg.n_subcarriers * cfg.n_rx) as f64;
    let obs_energy: f64 = obs
        .y
        .iter()
        .flatten()
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    let elim_floor = opts.elim_margin * obs.noise_psd * n_samples + 1e-8 * obs_energy;
    let trial_refine = RefineConfig {
        sweeps: opts.refine.sweeps.min(4),
        ..opts.refine.clone()
    };
    // whether `refined` was produced at reduced sweep count and deserves a
    // final full-quality pass; the settling passes above always are
    let mut refit_pending = true;

    for _ in 0..3 {
        let collapsed = collapse_departure_clusters(&survivors, cfg);
        if collapsed.len() == survivors.len() {
            break;
        }
        let trial = sage_refine(obs, cfg, pilots, &collapsed, &opts.refine)?;
        let accept = trial.residual_energy
            <= elim_floor.max(1.02 * refined.residual_energy);
        if !accept {
            break;
        }
        refined = trial;
        survivors = merge_and_prune(&refined.params.paths, cfg, opts.prune_rel_power);
    }

    while survivors.len() > 1 {
        let weakest = survivors
            .iter()
            .enumerate()
            .min_by(|a, b| {
                a.1.gain
                    .norm_sqr()
                    .partial_cmp(&b.1.gain.norm_sqr())
                    .unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let mut trial = survivors.clone();
        trial.remove(weakest);
        let trial_refined = sage_refine(obs, cfg, pilots, &trial, &trial_refine)?;
        if trial_refined.residual_energy > elim_floor {
            break;
        }
        refined = trial_refined;
        survivors = merge_and_prune(&refined.params.paths, cfg, opts.prune_rel_power);
        refit_pending = true;
    }
    if refit_pending || survivors.len() != refined.params.paths.len() {
        refined = sage_refine(obs, cfg, pilots, &survivors, &opts.refine)?;
        survivors = merge_and_prune(&refined.params.paths, cfg, opts.prune_rel_power);
    }

    let mut kept: Vec<PathParams> = survivors
        .iter()
        .map(|p| PathParams {
            delay: p.delay,
            aod: p.aod,
            aoa: p.aoa,
            gain: p.gain,
        })
        .collect();
    kept.sort_by(|a, b| a.delay.partial_cmp(&b.delay).unwrap());

    // arcsin-domain angles -> geometric model angles
    let olos_hyp = opts.condition == Condition::Olos;
    let channel = ChannelParamSet {
        paths: kept
            .iter()
            .map(|p| PathParams {
                delay: p.delay,
                aod: p.aod,
                aoa: std::f64::consts::PI - p.aoa,
                gain: p.gain,
            })
            .collect(),
        olos: olos_hyp,
    };

    // weight: the delay/angle sub-block of the channel FIM at the estimate
    let n0 = if obs.noise_psd > 0.0 { obs.noise_psd } else { 1.0 };
    let weight = channel_weight(&channel, cfg, pilots, n0)?;

    let c = cfg.light_speed;
    let (solution, used_los) = match opts.condition {
        Condition::Los => (solve_los(&channel, bs_pos, c)?, true),
        Condition::Nlos => (solve_nlos(&channel, bs_pos, &weight, c)?, true),
        Condition::Olos => (
            solve_olos(&channel, bs_pos, &weight, c, &opts.olos_search)?,
            false,
        ),
        Condition::Unknown => solve_unknown(&channel, bs_pos, &weight, c, &opts.olos_search)?,
    };

    Ok(EstimationResult {
        channel,
        pose: solution.pose,
        scatterers: solution.scatterers,
        used_los,
        cost: solution.cost,
        residual_energy: refined.residual_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{noise_psd_for_snr, random_pilots, synthesize};
    use crate::geometry::{olos_param_subset, params_from_scenario, wrap_pi, Scenario};
    use num_complex::Complex64;

    fn cfg_small() -> ArrayOfdmConfig {
        ArrayOfdmConfig::new_60ghz(8, 8, 16, 8)
    }

    fn scene(los_blocked: bool) -> Scenario {
        Scenario {
            bs_pos: Vec2::new(0.0, 0.0),
            ms_pos: Vec2::new(4.0, 1.1),
            rotation: 0.3,
            scatterers: vec![
                Vec2::new(2.9, 0.4),
                Vec2::new(3.4, 1.65),
                Vec2::new(2.2, 1.9),
                Vec2::new(0.91, 1.78),
            ],
            los_blocked,
        }
    }

    fn observe(
        s: &Scenario,
        cfg: &ArrayOfdmConfig,
        snr_db: f64,
        seed: u64,
    ) -> (ObservationSet, crate::channel::PilotBlock) {
        let gains: Vec<Complex64> = (0..s.n_paths())
            .map(|i| Complex64::from_polar(if i == 0 && !s.los_blocked { 1.0 } else { 0.4 }, 0.7 * i as f64))
            .collect();
        let full = params_from_scenario(s, cfg.light_speed, &gains).unwrap();
        let cp = if s.los_blocked {
            ChannelParamSet {
                olos: true,
                ..full
            }
        } else {
            full
        };
        let pilots = random_pilots(cfg, seed);
        let n0 = noise_psd_for_snr(&cp, cfg, &pilots, snr_db).unwrap();
        let obs = synthesize(&cp, cfg, &pilots, n0, seed).unwrap();
        (obs, pilots)
    }

    #[test]
    fn nlos_pipeline_localizes_at_high_snr() {
        let cfg = cfg_small();
        let s = scene(false);
        let (obs, pilots) = observe(&s, &cfg, 25.0, 7);
        let res = estimate(&obs, &cfg, &pilots, s.bs_pos, &EstimatorOptions::default()).unwrap();
        assert!(res.used_los);
        let err = res.pose.position.distance(&s.ms_pos);
        assert!(err < 0.1, "position error {err} m");
        assert!(
            wrap_pi(res.pose.rotation - s.rotation).abs() < 0.05,
            "rotation error {}",
            wrap_pi(res.pose.rotation - s.rotation)
        );
    }

    #[test]
    fn los_condition_uses_first_path_only() {
        let cfg = cfg_small();
        let s = scene(false);
        let (obs, pilots) = observe(&s, &cfg, 25.0, 3);
        let opts = EstimatorOptions {
            condition: Condition::Los,
            ..EstimatorOptions::default()
        };
        let res = estimate(&obs, &cfg, &pilots, s.bs_pos, &opts).unwrap();
        assert!(res.scatterers.is_empty());
        assert!(res.pose.position.distance(&s.ms_pos) < 0.1);
    }

    #[test]
    fn olos_pipeline_localizes() {
        let cfg = cfg_small();
        let s = scene(true);
        let (obs, pilots) = observe(&s, &cfg, 30.0, 11);
        let opts = EstimatorOptions {
            condition: Condition::Olos,
            ..EstimatorOptions::default()
        };
        let res = estimate(&obs, &cfg, &pilots, s.bs_pos, &opts).unwrap();
        assert!(!res.used_los);
        let err = res.pose.position.distance(&s.ms_pos);
        assert!(err < 0.3, "position error {err} m");
    }

    #[test]
    fn unknown_condition_detects_los_presence() {
        let cfg = cfg_small();
        let opts = EstimatorOptions {
            condition: Condition::Unknown,
            ..EstimatorOptions::default()
        };
        let s_los = scene(false);
        let (obs, pilots) = observe(&s_los, &cfg, 25.0, 5);
        let res = estimate(&obs, &cfg, &pilots, s_los.bs_pos, &opts).unwrap();
        assert!(res.used_los);

        let s_olos = scene(true);
        let (obs2, pilots2) = observe(&s_olos, &cfg, 30.0, 5);
        let res2 = estimate(&obs2, &cfg, &pilots2, s_olos.bs_pos, &opts).unwrap();
        assert!(!res2.used_los);
    }

    #[test]
    fn channel_estimates_match_ground_truth() {
        let cfg = cfg_small();
        let s = scene(false);
        let (obs, pilots) = observe(&s, &cfg, 30.0, 13);
        let res = estimate(&obs, &cfg, &pilots, s.bs_pos, &EstimatorOptions::default()).unwrap();
        let gains: Vec<Complex64> = (0..s.n_paths())
            .map(|i| Complex64::from_polar(if i == 0 { 1.0 } else { 0.4 }, 0.7 * i as f64))
            .collect();
        let truth = params_from_scenario(&s, cfg.light_speed, &gains).unwrap();
        assert_eq!(res.channel.paths.len(), truth.paths.len());
        for (e, t) in res.channel.paths.iter().zip(&truth.paths) {
            assert!((e.delay - t.delay).abs() < 2e-10, "delay");
            assert!(wrap_pi(e.aod - t.aod).abs() < 0.03, "aod");
            assert!(wrap_pi(e.aoa - t.aoa).abs() < 0.03, "aoa");
        }
        let _ = olos_param_subset(&truth).unwrap();
    }
}
