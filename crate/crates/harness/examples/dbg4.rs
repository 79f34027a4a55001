use mmloc::channel::{random_pilots, synthesize, ArrayOfdmConfig};
use mmloc::estimator::{estimate, Condition, EstimatorOptions};
use mmloc::geometry::{params_from_scenario, Scenario, Vec2};
use mmloc::sage::RefineConfig;
use num_complex::Complex64;

fn main() {
    let cfg = ArrayOfdmConfig::new_60ghz(16, 16, 10, 16);
    let pilots = random_pilots(&cfg, 21);
    let refine = RefineConfig {
        sweeps: 10,
        golden_iters: 60,
        ..RefineConfig::default()
    };
    for (scatterers, condition) in [
        (vec![], Condition::Los),
        (vec![Vec2::new(2.9, 0.4)], Condition::Nlos),
    ] {
        let s = Scenario {
            bs_pos: Vec2::new(0.0, 0.0),
            ms_pos: Vec2::new(4.0, 1.1),
            rotation: 0.3,
            scatterers,
            los_blocked: false,
        };
        let gains: Vec<Complex64> = (0..s.n_paths())
            .map(|i| Complex64::from_polar(if i == 0 { 1.0 } else { 0.5 }, 0.7 * i as f64))
            .collect();
        let cp = params_from_scenario(&s, cfg.light_speed, &gains).unwrap();
        println!("truth:");
        for p in &cp.paths {
            println!(
                "  tau {:.6e} aod {:.6} aoa {:.6} |g| {:.4}",
                p.delay, p.aod, p.aoa, p.gain.norm()
            );
        }
        let obs = synthesize(&cp, &cfg, &pilots, 0.0, 0).unwrap();
        let opts = EstimatorOptions {
            condition,
            refine: refine.clone(),
            ..EstimatorOptions::default()
        };
        let res = estimate(&obs, &cfg, &pilots, s.bs_pos, &opts).unwrap();
        println!(
            "{condition:?}: {} paths, residual {:.3e}, pose ({:.6},{:.6}) alpha {:.6}",
            res.channel.paths.len(),
            res.residual_energy,
            res.pose.position.x,
            res.pose.position.y,
            res.pose.rotation
        );
        for p in &res.channel.paths {
            println!(
                "  est tau {:.6e} aod {:.6} aoa {:.6} |g| {:.4}",
                p.delay, p.aod, p.aoa, p.gain.norm()
            );
        }
    }
}
