use mmloc_harness::campaign::{derive_seed, run_trial};
use mmloc_harness::config::{CampaignConfig, MsPlacement};
use std::time::Instant;

fn main() {
    let mut cfg = CampaignConfig::desk();
    cfg.scenario.ms = MsPlacement::Fixed { position: [3.5, 0.2] };
    for &(label, los) in &[("los", true), ("nlos", false)] {
        if los {
            cfg.scenario.scatterers = vec![];
        } else {
            cfg.scenario.scatterers = vec![[1.5, 0.4]];
        }
        cfg.condition = if los {
            mmloc_harness::config::ConditionSpec::Los
        } else {
            mmloc_harness::config::ConditionSpec::Nlos
        };
        for &snr in &[0.0, 10.0] {
            let t0 = Instant::now();
            let mut n_ok = 0;
            for trial in 0..4 {
                let r = run_trial(&cfg, trial, snr, derive_seed(7, 1, trial as u64));
                if r.ok {
                    n_ok += 1;
                }
            }
            println!("{label} snr {snr}: 4 trials in {:?} ok {n_ok}", t0.elapsed());
        }
    }
}
