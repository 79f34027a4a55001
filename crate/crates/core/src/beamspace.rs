//! Virtual (beamspace) channel representation and the structured sensing
//! operator for sparse recovery.
//!
//! The unitary transform `U` (per array side) has columns that are steering
//! vectors on the integer spatial-frequency grid `p = i - (N-1)/2`. In this
//! basis the channel matrix is approximately sparse: each path contributes a
//! Dirichlet-kernel blob centered on its angle pair. The sensing operator
//! `Omega^{(g)}[n] = (z^{(g)}[n])^T kron U_Rx` with `z = U_Tx^H F x` is never
//! materialized; [`SensingSet`] stores `z` and `U_Rx` and exposes columns and
//! correlations directly, which keeps memory linear in `G N (N_t + N_r)`
//! instead of quadratic in the array sizes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ArrayOfdmConfig, PilotBlock};

/// `N x N` unitary beamspace transform; column `i` is the unit-norm steering
/// vector at spatial frequency `p_i/N`, `p_i = i - (N-1)/2`.
pub fn unitary_matrix(n: usize) -> DMatrix<Complex64> {
    let center = (n as f64 - 1.0) / 2.0;
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |m, i| {
        let arg = std::f64::consts::TAU * (m as f64 - center) * (i as f64 - center) / n as f64;
        Complex64::from_polar(scale, arg)
    })
}

/// Dirichlet kernel `sin(pi N phi) / (sqrt(N) sin(pi phi))`, the beamspace
/// leakage pattern of an off-grid angle; `phi` is in normalized spatial
/// frequency. The removable singularities at integer `phi` are handled
/// explicitly.
pub fn dirichlet(n: usize, phi: f64) -> f64 {
    let den = (std::f64::consts::PI * phi).sin();
    if den.abs() < 1e-12 {
        let q = phi.round() as i64;
        let sign = if (q * (n as i64 - 1)) % 2 == 0 { 1.0 } else { -1.0 };
        return sign * (n as f64).sqrt();
    }
    (std::f64::consts::PI * n as f64 * phi).sin() / ((n as f64).sqrt() * den)
}

/// Physical angle of grid column `i`: `arcsin(p_i lambda_c / (N d))`.
pub fn grid_angle(n: usize, d_over_lambda: f64, i: usize) -> f64 {
    let p = i as f64 - (n as f64 - 1.0) / 2.0;
    (p / (n as f64 * d_over_lambda)).clamp(-1.0, 1.0).asin()
}

/// Structured storage of the beamspace sensing operator.
///
/// Atom `m` (column of the implicit `Omega`) factors as
/// `omega_m^{(g)}[n] = z_t^{(g)}[n] u_r` where `t = m / N_r`,
/// `r = m mod N_r`, and `u_r` is the r-th (unit-norm) column of `U_Rx`.
#[derive(Debug, Clone)]
pub struct SensingSet {
    /// `z[g][n] = U_Tx^H F^{(g)}[n] x^{(g)}[n]`, length `N_t`.
    pub z: Vec<Vec<DVector<Complex64>>>,
    pub u_rx: DMatrix<Complex64>,
    pub n_tx: usize,
    pub n_rx: usize,
    pub d_over_lambda: f64,
}

impl SensingSet {
    pub fn n_atoms(&self) -> usize {
        self.n_tx * self.n_rx
    }

    pub fn n_transmissions(&self) -> usize {
        self.z.len()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.z[0].len()
    }

    /// Splits an atom index into (tx grid index, rx grid index).
    pub fn decode(&self, m: usize) -> (usize, usize) {
        (m / self.n_rx, m % self.n_rx)
    }

    /// The `N_r`-vector `omega_m^{(g)}[n]`.
    pub fn column(&self, g: usize, n: usize, m: usize) -> DVector<Complex64> {
        let (t, r) = self.decode(m);
        let zt = self.z[g][n][t];
        DVector::from_iterator(self.n_rx, self.u_rx.column(r).iter().map(|u| u * zt))
    }

    /// `sum_g ||omega_m^{(g)}[n]||^2` (the `U_Rx` columns are unit norm).
    pub fn column_norm_sq(&self, n: usize, m: usize) -> f64 {
        let (t, _) = self.decode(m);
        (0..self.n_transmissions())
            .map(|g| self.z[g][n][t].norm_sqr())
            .sum()
    }

    /// Correlations `sum_g omega_m^H r^{(g)}[n]` for every atom `m`, given
    /// the beamspace-projected residuals `c[g] = U_Rx^H r^{(g)}[n]`.
    pub fn correlations(&self, n: usize, projected: &[DVector<Complex64>]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_atoms()];
        for (g, c) in projected.iter().enumerate() {
            let z = &self.z[g][n];
            for t in 0..self.n_tx {
                let zc = z[t].conj();
                let base = t * self.n_rx;
                for r in 0..self.n_rx {
                    out[base + r] += zc * c[r];
                }
            }
        }
        out
    }

    /// Off-grid angle of transmit grid index `t`.
    pub fn aod_of(&self, t: usize) -> f64 {
        grid_angle(self.n_tx, self.d_over_lambda, t)
    }

    /// Off-grid angle of receive grid index `r`.
    pub fn aoa_of(&self, r: usize) -> f64 {
        grid_angle(self.n_rx, self.d_over_lambda, r)
    }
}

/// Precomputes `z` and `U_Rx` for a pilot block.
pub fn build_sensing(cfg: &ArrayOfdmConfig, pilots: &PilotBlock) -> SensingSet {
    let u_tx = unitary_matrix(cfg.n_tx);
    let u_rx = unitary_matrix(cfg.n_rx);
    let u_tx_h = u_tx.adjoint();
    let z = (0..pilots.n_transmissions())
        .map(|g| {
            (0..cfg.n_subcarriers)
                .map(|n| &u_tx_h * pilots.effective(g, n))
                .collect()
        })
        .collect();
    SensingSet {
        z,
        u_rx,
        n_tx: cfg.n_tx,
        n_rx: cfg.n_rx,
        d_over_lambda: cfg.spacing / cfg.wavelength_carrier(),
    }
}
