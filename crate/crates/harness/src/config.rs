//! Campaign configuration: JSON-backed, with desk- and paper-scale
//! presets.
//!
//! Units: positions in meters, rotation and angles in radians, SNR in dB,
//! carrier/bandwidth in Hz, delays in the emitted CSVs in nanoseconds.

use mmloc::channel::{ArrayOfdmConfig, GainLaw};
use mmloc::estimator::Condition;
use mmloc::geometry::{Scenario, Vec2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Array and OFDM dimensions; everything else (60 GHz carrier, 100 MHz
/// bandwidth, half-wavelength spacing) follows the fixed link preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArraySpec {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
    pub n_transmissions: usize,
}

impl ArraySpec {
    pub fn channel_config(&self) -> ArrayOfdmConfig {
        ArrayOfdmConfig::new_60ghz(
            self.n_tx,
            self.n_rx,
            self.n_subcarriers,
            self.n_transmissions,
        )
    }

    pub fn with_beams(&self, n_transmissions: usize) -> ArraySpec {
        ArraySpec {
            n_transmissions,
            ..self.clone()
        }
    }
}

/// Where the MS sits: a fixed point or uniform samples from a rectangle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MsPlacement {
    Fixed { position: [f64; 2] },
    Rectangle { min: [f64; 2], max: [f64; 2] },
}

impl MsPlacement {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec2 {
        match self {
            MsPlacement::Fixed { position } => Vec2::new(position[0], position[1]),
            MsPlacement::Rectangle { min, max } => Vec2::new(
                rng.gen_range(min[0]..=max[0]),
                rng.gen_range(min[1]..=max[1]),
            ),
        }
    }
}

/// Scene description shared by every trial of a campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub bs: [f64; 2],
    pub ms: MsPlacement,
    pub rotation: f64,
    pub scatterers: Vec<[f64; 2]>,
    pub los_blocked: bool,
}

impl ScenarioSpec {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Scenario {
        Scenario {
            bs_pos: Vec2::new(self.bs[0], self.bs[1]),
            ms_pos: self.ms.sample(rng),
            rotation: self.rotation,
            scatterers: self
                .scatterers
                .iter()
                .map(|s| Vec2::new(s[0], s[1]))
                .collect(),
            los_blocked: self.los_blocked,
        }
    }

    /// Representative scene (rectangle center) used for the bound columns
    /// reported next to Monte Carlo summaries.
    pub fn representative(&self) -> Scenario {
        let ms = match &self.ms {
            MsPlacement::Fixed { position } => Vec2::new(position[0], position[1]),
            MsPlacement::Rectangle { min, max } => {
                Vec2::new(0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1]))
            }
        };
        Scenario {
            bs_pos: Vec2::new(self.bs[0], self.bs[1]),
            ms_pos: ms,
            rotation: self.rotation,
            scatterers: self
                .scatterers
                .iter()
                .map(|s| Vec2::new(s[0], s[1]))
                .collect(),
            los_blocked: self.los_blocked,
        }
    }
}

/// LOS visibility assumption handed to the pose stage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ConditionSpec {
    Los,
    Nlos,
    Olos,
    Unknown,
}

impl ConditionSpec {
    pub fn to_condition(self) -> Condition {
        match self {
            ConditionSpec::Los => Condition::Los,
            ConditionSpec::Nlos => Condition::Nlos,
            ConditionSpec::Olos => Condition::Olos,
            ConditionSpec::Unknown => Condition::Unknown,
        }
    }
}

/// Everything a campaign run needs; serializable so result files can be
/// reproduced from config plus base seed alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub arrays: ArraySpec,
    pub scenario: ScenarioSpec,
    /// SNR grid in dB; one summary row per entry.
    pub snr_grid_db: Vec<f64>,
    pub n_trials: usize,
    pub condition: ConditionSpec,
    /// `false` skips SAGE and feeds the coarse beamspace estimates straight
    /// into the pose stage.
    pub use_sage: bool,
    pub gain_law: GainLaw,
    /// Scale path gains by the geometric path-loss law. At desk-scale
    /// array sizes the scattered paths then sit ~20 dB below the LOS path
    /// and fall under the detection threshold, so the desk preset uses
    /// equal-power paths instead.
    pub apply_path_loss: bool,
    /// Draw the per-path reflection loss (mean -10 dB, RMS 4 dB) instead of
    /// pinning it at the mean; only meaningful with `apply_path_loss`.
    pub randomize_reflection: bool,
    /// Rotation-trial grid step for the OLOS search, radians.
    pub alpha_step: f64,
    /// Detector false-alarm probability for the pursuit stopping rule.
    #[serde(default = "default_p_fa")]
    pub p_fa: f64,
    /// Hard cap on detected paths; `None` keeps the estimator default. Set
    /// to the true path count for campaigns with known model order.
    #[serde(default)]
    pub k_max: Option<usize>,
    /// Backward-elimination margin override; `None` keeps the estimator
    /// default, `Some(0.0)` disables noise-floor elimination (useful at low
    /// SNR with known model order).
    #[serde(default)]
    pub elim_margin: Option<f64>,
    pub base_seed: u64,
    /// Beam counts swept by the bounds subcommand; `None` keeps the single
    /// configured `n_transmissions`.
    pub beams_grid: Option<Vec<usize>>,
    /// MS positions sampled per SNR point when the placement is a rectangle.
    pub position_samples: usize,
    /// Position error assigned to outage trials in the capped RMSE column.
    pub outage_cap_m: f64,
}

fn default_p_fa() -> f64 {
    1e-2
}

impl CampaignConfig {
    /// Reduced scale for fast iteration: 16x16 arrays, 16 beams, 10
    /// subcarriers, 200 trials.
    pub fn desk() -> Self {
        CampaignConfig {
            arrays: ArraySpec {
                n_tx: 16,
                n_rx: 16,
                n_subcarriers: 10,
                n_transmissions: 16,
            },
            scenario: ScenarioSpec {
                bs: [0.0, 0.0],
                ms: MsPlacement::Rectangle {
                    min: [2.0, 0.01],
                    max: [4.0, 0.3],
                },
                rotation: 0.1,
                scatterers: vec![[1.5, 0.4]],
                los_blocked: false,
            },
            snr_grid_db: vec![-10.0, 0.0, 10.0],
            n_trials: 200,
            condition: ConditionSpec::Nlos,
            use_sage: true,
            gain_law: GainLaw::FixedMagnitude,
            apply_path_loss: false,
            randomize_reflection: false,
            alpha_step: 0.05,
            p_fa: default_p_fa(),
            k_max: None,
            elim_margin: None,
            base_seed: 1,
            beams_grid: None,
            position_samples: 40,
            outage_cap_m: 8.0,
        }
    }

    /// Full published scale: 65x65 arrays, 32 beams, 20 subcarriers, 1000
    /// trials.
    pub fn paper() -> Self {
        CampaignConfig {
            arrays: ArraySpec {
                n_tx: 65,
                n_rx: 65,
                n_subcarriers: 20,
                n_transmissions: 32,
            },
            snr_grid_db: vec![-20.0, -10.0, 0.0, 10.0],
            n_trials: 1000,
            apply_path_loss: true,
            ..CampaignConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_trials == 0 {
            return Err("n_trials must be >= 1".into());
        }
        if self.snr_grid_db.is_empty() {
            return Err("snr_grid_db must be non-empty".into());
        }
        if self.position_samples == 0 {
            return Err("position_samples must be >= 1".into());
        }
        if self.alpha_step <= 0.0 {
            return Err("alpha_step must be positive".into());
        }
        if !(0.0..1.0).contains(&self.p_fa) || self.p_fa == 0.0 {
            return Err("p_fa must lie in (0, 1)".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cfg: CampaignConfig = serde_json::from_str(&text)
            .map_err(|e| format!("cannot parse {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        assert!(CampaignConfig::desk().validate().is_ok());
        assert!(CampaignConfig::paper().validate().is_ok());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = CampaignConfig::desk();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: CampaignConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n_trials, cfg.n_trials);
        assert_eq!(back.snr_grid_db, cfg.snr_grid_db);
        assert_eq!(back.arrays.n_tx, cfg.arrays.n_tx);
    }

    #[test]
    fn rectangle_sampling_stays_inside() {
        use rand::SeedableRng;
        let ms = MsPlacement::Rectangle {
            min: [2.0, 0.0],
            max: [4.0, 0.3],
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p = ms.sample(&mut rng);
            assert!((2.0..=4.0).contains(&p.x));
            assert!((0.0..=0.3).contains(&p.y));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = CampaignConfig::desk();
        cfg.n_trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = CampaignConfig::desk();
        cfg.snr_grid_db.clear();
        assert!(cfg.validate().is_err());
    }
}
