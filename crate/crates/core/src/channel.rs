//! Frequency-dependent ULA steering vectors, per-subcarrier channel
//! matrices, beamformed pilots, geometric path loss, and noisy received
//! observations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LocError, Result};
use crate::geometry::{ChannelParamSet, Scenario};

/// Radio and OFDM constants for a ULA-to-ULA link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayOfdmConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Element spacing in meters.
    pub spacing: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    /// Simultaneous beams per transmission (M_t).
    pub n_beams_per_tx: usize,
    /// Sequential transmissions (G).
    pub n_transmissions: usize,
    /// Cyclic prefix length in samples.
    pub cp_len_symbols: usize,
    pub light_speed: f64,
    /// Force the carrier wavelength on every subcarrier (A/B switch for the
    /// wideband array response).
    #[serde(default)]
    pub narrowband: bool,
}

impl ArrayOfdmConfig {
    /// 60 GHz / 100 MHz setup with half-wavelength spacing.
    pub fn new_60ghz(n_tx: usize, n_rx: usize, n_subcarriers: usize, n_transmissions: usize) -> Self {
        let light_speed = 0.299792e9;
        let carrier_hz = 60e9;
        Self {
            n_tx,
            n_rx,
            spacing: light_speed / carrier_hz / 2.0,
            carrier_hz,
            bandwidth_hz: 100e6,
            n_subcarriers,
            n_beams_per_tx: 1,
            n_transmissions,
            cp_len_symbols: 16,
            light_speed,
            narrowband: false,
        }
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn wavelength_carrier(&self) -> f64 {
        self.light_speed / self.carrier_hz
    }

    /// Wavelength at subcarrier n: `c / (n/(N*Ts) + f_c)`.
    pub fn wavelength_at(&self, subcarrier: usize) -> f64 {
        if self.narrowband {
            return self.wavelength_carrier();
        }
        let n = subcarrier as f64;
        let offset = n / (self.n_subcarriers as f64 * self.sample_period());
        self.light_speed / (offset + self.carrier_hz)
    }

    pub fn n_antennas(&self, side: Side) -> usize {
        match side {
            Side::Tx => self.n_tx,
            Side::Rx => self.n_rx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

/// Unit-norm ULA response with symmetric element indices
/// `-(N-1)/2 ..= (N-1)/2`.
pub fn steering_vector(
    side: Side,
    cfg: &ArrayOfdmConfig,
    angle: f64,
    subcarrier: usize,
) -> DVector<Complex64> {
    let n = cfg.n_antennas(side);
    let phase = std::f64::consts::TAU * cfg.spacing * angle.sin() / cfg.wavelength_at(subcarrier);
    let center = (n as f64 - 1.0) / 2.0;
    DVector::from_iterator(
        n,
        (0..n).map(|i| {
            Complex64::from_polar(1.0 / (n as f64).sqrt(), phase * (i as f64 - center))
        }),
    )
}

/// Derivative of [`steering_vector`] with respect to the angle.
pub fn steering_vector_deriv(
    side: Side,
    cfg: &ArrayOfdmConfig,
    angle: f64,
    subcarrier: usize,
) -> DVector<Complex64> {
    let n = cfg.n_antennas(side);
    let a = steering_vector(side, cfg, angle, subcarrier);
    let scale = std::f64::consts::TAU * cfg.spacing * angle.cos() / cfg.wavelength_at(subcarrier);
    let center = (n as f64 - 1.0) / 2.0;
    DVector::from_iterator(
        n,
        a.iter()
            .enumerate()
            .map(|(i, v)| Complex64::new(0.0, scale * (i as f64 - center)) * v),
    )
}

/// Per-path frequency response factor `h_k * exp(-j 2 pi n tau_k / (N Ts))`.
pub fn path_phase(cfg: &ArrayOfdmConfig, delay: f64, subcarrier: usize) -> Complex64 {
    let arg = -std::f64::consts::TAU * subcarrier as f64 * delay
        / (cfg.n_subcarriers as f64 * cfg.sample_period());
    Complex64::from_polar(1.0, arg)
}

/// `H[n] = sum_k gain_k e^{-j 2 pi n tau_k/(N Ts)} a_Rx(aoa_k) a_Tx^H(aod_k)`.
pub fn channel_matrix(
    cp: &ChannelParamSet,
    cfg: &ArrayOfdmConfig,
    subcarrier: usize,
) -> DMatrix<Complex64> {
    let mut h = DMatrix::zeros(cfg.n_rx, cfg.n_tx);
    for p in &cp.paths {
        let gamma = p.gain * path_phase(cfg, p.delay, subcarrier);
        let a_rx = steering_vector(Side::Rx, cfg, p.aoa, subcarrier);
        let a_tx = steering_vector(Side::Tx, cfg, p.aod, subcarrier);
        for c in 0..cfg.n_tx {
            let w = gamma * a_tx[c].conj();
            for r in 0..cfg.n_rx {
                h[(r, c)] += a_rx[r] * w;
            }
        }
    }
    h
}

/// Geometric path loss `rho_k` (linear power ratio, >= 1 in practice).
///
/// LOS: `1/rho_0 = xi^2(d_0) (lambda_c/(4 pi d_0))^2`. Scatterer path:
/// `1/rho_k = sigma_0^2 (g_r d_{k,2})^2 e^{-g_r d_{k,2}} xi^2(d_k)
/// (lambda_c/(4 pi d_k))^2` with reflector density `g_r = 1/7` and
/// atmospheric attenuation 16 dB/km. `reflection_loss_db` is the drawn
/// reflection loss (mean -10 dB, RMS deviation 4 dB); ignored for k = 0.
pub fn path_loss(k: usize, s: &Scenario, cfg: &ArrayOfdmConfig, reflection_loss_db: f64) -> f64 {
    const GAMMA_R: f64 = 1.0 / 7.0;
    const ATMOSPHERIC_DB_PER_KM: f64 = 16.0;
    let lambda_c = cfg.wavelength_carrier();
    let free_space = |d: f64| (lambda_c / (4.0 * std::f64::consts::PI * d)).powi(2);
    let xi2 = |d: f64| 10f64.powf(-ATMOSPHERIC_DB_PER_KM * (d / 1000.0) / 10.0);
    if k == 0 && !s.los_blocked {
        let d0 = s.ms_pos.distance(&s.bs_pos);
        1.0 / (xi2(d0) * free_space(d0))
    } else {
        let idx = if s.los_blocked { k } else { k - 1 };
        let sk = &s.scatterers[idx];
        let d2 = s.ms_pos.distance(sk);
        let dk = sk.distance(&s.bs_pos) + d2;
        let sigma0 = 10f64.powf(reflection_loss_db / 10.0);
        let poisson = (GAMMA_R * d2).powi(2) * (-GAMMA_R * d2).exp();
        1.0 / (sigma0 * poisson * xi2(dk) * free_space(dk))
    }
}

/// How per-path small-scale gains are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainLaw {
    /// Unit magnitude, uniform random phase; isolates path-loss effects.
    FixedMagnitude,
    /// Circular complex normal with unit mean power.
    ComplexNormal,
}

/// Draws per-path normalized gains `sqrt(Nt Nr / rho_k) h_k` in the same
/// order as the scenario declares its paths (LOS first when present).
pub fn draw_gains(s: &Scenario, cfg: &ArrayOfdmConfig, law: GainLaw, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt_nr = (cfg.n_tx * cfg.n_rx) as f64;
    let mut gains = Vec::with_capacity(s.n_paths());
    let path_ids: Vec<usize> = if s.los_blocked {
        (0..s.scatterers.len()).collect()
    } else {
        (0..=s.scatterers.len()).collect()
    };
    for k in path_ids {
        let refl_db = -10.0 + 4.0 * rng.sample::<f64, _>(StandardNormal);
        let rho = path_loss(k, s, cfg, refl_db);
        let h = match law {
            GainLaw::FixedMagnitude => {
                Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
            }
            GainLaw::ComplexNormal => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) / 2f64.sqrt()
            }
        };
        gains.push(h * (nt_nr / rho).sqrt());
    }
    gains
}

/// Beamformers and pilot symbols for every transmission and subcarrier.
#[derive(Debug, Clone)]
pub struct PilotBlock {
    /// `beamformers[g][n]`: `N_t x M_t`, Frobenius norm 1.
    pub beamformers: Vec<Vec<DMatrix<Complex64>>>,
    /// `symbols[g][n]`: length `M_t`, unit-modulus entries.
    pub symbols: Vec<Vec<DVector<Complex64>>>,
}

impl PilotBlock {
    /// The product `F^{(g)}[n] x^{(g)}[n]` consumed by all downstream math.
    pub fn effective(&self, g: usize, n: usize) -> DVector<Complex64> {
        &self.beamformers[g][n] * &self.symbols[g][n]
    }

    pub fn n_transmissions(&self) -> usize {
        self.beamformers.len()
    }

    /// Scales every beamformer by `s` (e.g. `1/sqrt(G)` to hold the total
    /// transmit power constant across beam counts).
    pub fn scaled(&self, s: f64) -> PilotBlock {
        let beamformers = self
            .beamformers
            .iter()
            .map(|per_n| per_n.iter().map(|f| f.map(|v| v * s)).collect())
            .collect();
        PilotBlock {
            beamformers,
            symbols: self.symbols.clone(),
        }
    }

    /// Keeps only the first `g` transmissions.
    pub fn truncated(&self, g: usize) -> PilotBlock {
        PilotBlock {
            beamformers: self.beamformers[..g].to_vec(),
            symbols: self.symbols[..g].to_vec(),
        }
    }
}

/// Unit-modulus random-phase beamformers (normalized to Frobenius norm 1)
/// and unit-modulus random pilot symbols. Deterministic in the seed.
pub fn random_pilots(cfg: &ArrayOfdmConfig, seed: u64) -> PilotBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = 1.0 / ((cfg.n_tx * cfg.n_beams_per_tx) as f64).sqrt();
    let mut beamformers = Vec::with_capacity(cfg.n_transmissions);
    let mut symbols = Vec::with_capacity(cfg.n_transmissions);
    for _ in 0..cfg.n_transmissions {
        let mut per_n_f = Vec::with_capacity(cfg.n_subcarriers);
        let mut per_n_x = Vec::with_capacity(cfg.n_subcarriers);
        for _ in 0..cfg.n_subcarriers {
            let f = DMatrix::from_fn(cfg.n_tx, cfg.n_beams_per_tx, |_, _| {
                Complex64::from_polar(norm, rng.gen_range(0.0..std::f64::consts::TAU))
            });
            let x = DVector::from_fn(cfg.n_beams_per_tx, |_, _| {
                Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
            });
            per_n_f.push(f);
            per_n_x.push(x);
        }
        beamformers.push(per_n_f);
        symbols.push(per_n_x);
    }
    PilotBlock {
        beamformers,
        symbols,
    }
}

/// Post-FFT received pilots.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    /// `y[g][n]`: length `N_r`.
    pub y: Vec<Vec<DVector<Complex64>>>,
    /// Per-complex-sample noise variance `N_0` (`N_0/2` per real dimension).
    pub noise_psd: f64,
}

/// `y^{(g)}[n] = H[n] F^{(g)}[n] x^{(g)}[n] + n^{(g)}[n]`.
pub fn synthesize(
    cp: &ChannelParamSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    noise_psd: f64,
    seed: u64,
) -> Result<ObservationSet> {
    let cp_duration = cfg.cp_len_symbols as f64 * cfg.sample_period();
    let max_delay = cp.paths.iter().map(|p| p.delay).fold(0.0, f64::max);
    if max_delay >= cp_duration {
        return Err(LocError::DelayExceedsCp {
            delay_s: max_delay,
            cp_s: cp_duration,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (noise_psd / 2.0).sqrt();
    let g_n = pilots.n_transmissions();
    let mut y = Vec::with_capacity(g_n);
    for g in 0..g_n {
        let mut per_n = Vec::with_capacity(cfg.n_subcarriers);
        for n in 0..cfg.n_subcarriers {
            let h = channel_matrix(cp, cfg, n);
            let mut v = h * pilots.effective(g, n);
            for e in v.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *e += Complex64::new(sigma * re, sigma * im);
            }
            per_n.push(v);
        }
        y.push(per_n);
    }
    Ok(ObservationSet { y, noise_psd })
}

/// Deterministic (noise-free) signal energy `sum_{g,n} ||H F x||^2`.
pub fn signal_energy(cp: &ChannelParamSet, cfg: &ArrayOfdmConfig, pilots: &PilotBlock) -> f64 {
    let mut e = 0.0;
    for n in 0..cfg.n_subcarriers {
        let h = channel_matrix(cp, cfg, n);
        for g in 0..pilots.n_transmissions() {
            e += (&h * pilots.effective(g, n)).norm_squared();
        }
    }
    e
}

/// Noise level `N_0` that puts the stacked observation at the target SNR:
/// `SNR = E_sig / (G N N_r N_0)`.
pub fn noise_psd_for_snr(
    cp: &ChannelParamSet,
    cfg: &ArrayOfdmConfig,
    pilots: &PilotBlock,
    target_snr_db: f64,
) -> Result<f64> {
    let e_sig = signal_energy(cp, cfg, pilots);
    if e_sig <= 0.0 || !e_sig.is_finite() {
        return Err(LocError::ZeroSignal);
    }
    let samples = (pilots.n_transmissions() * cfg.n_subcarriers * cfg.n_rx) as f64;
    Ok(e_sig / (samples * 10f64.powf(target_snr_db / 10.0)))
}
