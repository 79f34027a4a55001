//! Scene geometry and the mapping between channel and location parameters.
//!
//! The channel parameter vector stacks, per path, `[delay, aod, aoa,
//! re(gain), im(gain)]` with the LOS path first when present. The location
//! parameter vector stacks `[p, alpha, gain_0]` for the LOS path and
//! `[s_k, gain_k]` per scatterer path. [`transformation_matrix`] is the
//! Jacobian of the channel parameters with respect to the location
//! parameters and carries the Fisher information into position space.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LocError, Result};

/// Distances below this are treated as coincident nodes.
pub const GEOMETRY_EPS: f64 = 1e-9;

/// Entries of the channel parameter vector per path.
pub const PARAMS_PER_PATH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Vec2) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Ground-truth scene: known BS, unknown MS pose, single-bounce scatterers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub bs_pos: Vec2,
    pub ms_pos: Vec2,
    /// MS array rotation in `[0, 2*pi)`.
    pub rotation: f64,
    pub scatterers: Vec<Vec2>,
    pub los_blocked: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !self.bs_pos.is_finite() || !self.ms_pos.is_finite() {
            return Err(LocError::DegenerateGeometry("non-finite position".into()));
        }
        if self.ms_pos.distance(&self.bs_pos) < GEOMETRY_EPS {
            return Err(LocError::DegenerateGeometry(
                "MS coincides with BS".into(),
            ));
        }
        for (k, s) in self.scatterers.iter().enumerate() {
            if s.distance(&self.bs_pos) < GEOMETRY_EPS || s.distance(&self.ms_pos) < GEOMETRY_EPS {
                return Err(LocError::DegenerateGeometry(format!(
                    "scatterer {k} coincides with an endpoint"
                )));
            }
        }
        if self.los_blocked && self.scatterers.is_empty() {
            return Err(LocError::DegenerateGeometry(
                "blocked LOS with no scatterers".into(),
            ));
        }
        Ok(())
    }

    /// Number of propagation paths (LOS counted iff not blocked).
    pub fn n_paths(&self) -> usize {
        self.scatterers.len() + usize::from(!self.los_blocked)
    }

    /// Scatterer indices sorted by path delay ascending, ties by AOD.
    pub fn scatterer_order(&self) -> Vec<usize> {
        let mut keyed: Vec<(usize, f64, f64)> = self
            .scatterers
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let d = s.distance(&self.bs_pos) + s.distance(&self.ms_pos);
                let aod = bearing_arccos(&self.bs_pos, s);
                (k, d, aod)
            })
            .collect();
        keyed.sort_by(|a, b| (a.1, a.2).partial_cmp(&(b.1, b.2)).unwrap());
        keyed.into_iter().map(|(k, _, _)| k).collect()
    }
}

/// Channel parameters of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Time of arrival in seconds.
    pub delay: f64,
    /// Angle of departure at the BS, radians.
    pub aod: f64,
    /// Angle of arrival at the MS, radians.
    pub aoa: f64,
    /// Normalized complex gain (includes the sqrt(NtNr/rho) factor).
    pub gain: Complex64,
}

/// The full per-path channel parameter vector; index 0 is LOS unless `olos`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParamSet {
    pub paths: Vec<PathParams>,
    pub olos: bool,
}

impl ChannelParamSet {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn has_los(&self) -> bool {
        !self.olos && !self.paths.is_empty()
    }

    /// Flattens to `[tau, aod, aoa, re(h), im(h)]` per path.
    pub fn to_eta(&self) -> nalgebra::DVector<f64> {
        let mut v = nalgebra::DVector::zeros(PARAMS_PER_PATH * self.paths.len());
        for (k, p) in self.paths.iter().enumerate() {
            let o = PARAMS_PER_PATH * k;
            v[o] = p.delay;
            v[o + 1] = p.aod;
            v[o + 2] = p.aoa;
            v[o + 3] = p.gain.re;
            v[o + 4] = p.gain.im;
        }
        v
    }

    pub fn from_eta(eta: &nalgebra::DVector<f64>, olos: bool) -> Result<Self> {
        if eta.len() % PARAMS_PER_PATH != 0 {
            return Err(LocError::DimensionMismatch(format!(
                "eta length {} is not a multiple of {PARAMS_PER_PATH}",
                eta.len()
            )));
        }
        let paths = (0..eta.len() / PARAMS_PER_PATH)
            .map(|k| {
                let o = PARAMS_PER_PATH * k;
                PathParams {
                    delay: eta[o],
                    aod: eta[o + 1],
                    aoa: eta[o + 2],
                    gain: Complex64::new(eta[o + 3], eta[o + 4]),
                }
            })
            .collect();
        Ok(Self { paths, olos })
    }
}

/// MS position and array rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    /// Wrapped to `[0, 2*pi)`.
    pub rotation: f64,
}

impl Pose {
    pub fn new(position: Vec2, rotation: f64) -> Self {
        Self {
            position,
            rotation: wrap_two_pi(rotation),
        }
    }
}

pub fn wrap_two_pi(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    r
}

/// Wraps to `(-pi, pi]`.
pub fn wrap_pi(a: f64) -> f64 {
    let mut r = wrap_two_pi(a);
    if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    r
}

/// arccos-convention bearing of `to` as seen from `from`, in `[0, pi]`.
fn bearing_arccos(from: &Vec2, to: &Vec2) -> f64 {
    let u = *to - *from;
    (u.x / u.norm()).clamp(-1.0, 1.0).acos()
}

/// Gradient of [`bearing_arccos`] with respect to `to`.
///
/// For the angle `acos(u_x/|u|)` with `u = to - from` this is
/// `[-|u_y|, sign(u_y) u_x] / |u|^2`; the gradient w.r.t. `from` is its
/// negative. On the axis (`u_y = 0`) the positive-sign branch is used.
fn bearing_grad(from: &Vec2, to: &Vec2) -> Vec2 {
    let u = *to - *from;
    let d2 = u.norm().powi(2);
    let sign = if u.y < 0.0 { -1.0 } else { 1.0 };
    Vec2::new(-u.y.abs() / d2, sign * u.x / d2)
}

/// Maps scene geometry and per-path gains to channel parameters.
///
/// LOS: `tau_0 = |p-q|/c`, `aod_0 = acos((p_x-q_x)/|p-q|)`,
/// `aoa_0 = pi + aod_0 - alpha`. Scatterer path k: `tau_k = (|s_k-q| +
/// |p-s_k|)/c`, `aod_k = acos((s_kx-q_x)/|s_k-q|)`, `aoa_k = pi -
/// acos((p_x-s_kx)/|p-s_k|) - alpha`. Scatterer paths are ordered by delay
/// ascending.
pub fn params_from_scenario(
    s: &Scenario,
    light_speed: f64,
    gains: &[Complex64],
) -> Result<ChannelParamSet> {
    s.validate()?;
    if gains.len() != s.n_paths() {
        return Err(LocError::DimensionMismatch(format!(
            "{} gains for {} paths",
            gains.len(),
            s.n_paths()
        )));
    }
    let mut paths = Vec::with_capacity(s.n_paths());
    let mut gain_iter = gains.iter();
    if !s.los_blocked {
        let aod = bearing_arccos(&s.bs_pos, &s.ms_pos);
        paths.push(PathParams {
            delay: s.ms_pos.distance(&s.bs_pos) / light_speed,
            aod,
            aoa: std::f64::consts::PI + aod - s.rotation,
            gain: *gain_iter.next().unwrap(),
        });
    }
    // gains for scatterer paths follow the scenario's declared order
    let mut scat_paths: Vec<PathParams> = s
        .scatterers
        .iter()
        .map(|sk| {
            let d1 = sk.distance(&s.bs_pos);
            let d2 = s.ms_pos.distance(sk);
            PathParams {
                delay: (d1 + d2) / light_speed,
                aod: bearing_arccos(&s.bs_pos, sk),
                aoa: std::f64::consts::PI - bearing_arccos(sk, &s.ms_pos) - s.rotation,
                gain: *gain_iter.next().unwrap(),
            }
        })
        .collect();
    scat_paths.sort_by(|a, b| (a.delay, a.aod).partial_cmp(&(b.delay, b.aod)).unwrap());
    paths.extend(scat_paths);
    Ok(ChannelParamSet {
        paths,
        olos: s.los_blocked,
    })
}

/// Removes the LOS path, leaving the scatterer-only parameter vector.
pub fn olos_param_subset(cp: &ChannelParamSet) -> Result<ChannelParamSet> {
    if cp.olos {
        return Ok(cp.clone());
    }
    if cp.paths.len() < 2 {
        return Err(LocError::EmptyParamSet);
    }
    Ok(ChannelParamSet {
        paths: cp.paths[1..].to_vec(),
        olos: true,
    })
}

/// Per-path Jacobian blocks of the channel parameters.
struct PathJacobian {
    /// d tau / d p etc.; columns are (tau, aod, aoa), rows the location vars.
    wrt_pose: [[f64; 3]; 3], // rows p_x, p_y, alpha
    wrt_scatterer: Option<[[f64; 3]; 2]>, // rows s_x, s_y
}

fn path_jacobian(s: &Scenario, scatterer: Option<&Vec2>, light_speed: f64) -> PathJacobian {
    let c = light_speed;
    match scatterer {
        None => {
            let u = s.ms_pos - s.bs_pos;
            let d0 = u.norm();
            let g = bearing_grad(&s.bs_pos, &s.ms_pos);
            PathJacobian {
                wrt_pose: [
                    [u.x / (c * d0), g.x, g.x],
                    [u.y / (c * d0), g.y, g.y],
                    [0.0, 0.0, -1.0],
                ],
                wrt_scatterer: None,
            }
        }
        Some(sk) => {
            let v = s.ms_pos - *sk; // MS relative to scatterer
            let d2 = v.norm();
            let d1 = sk.distance(&s.bs_pos);
            let w = *sk - s.bs_pos;
            // aoa_k = pi - acos((p_x-s_x)/|p-s|) - alpha
            let gp = bearing_grad(sk, &s.ms_pos);
            let gtx = bearing_grad(&s.bs_pos, sk);
            PathJacobian {
                wrt_pose: [
                    [v.x / (c * d2), 0.0, -gp.x],
                    [v.y / (c * d2), 0.0, -gp.y],
                    [0.0, 0.0, -1.0],
                ],
                wrt_scatterer: Some([
                    [(w.x / d1 - v.x / d2) / c, gtx.x, gp.x],
                    [(w.y / d1 - v.y / d2) / c, gtx.y, gp.y],
                ]),
            }
        }
    }
}

/// Jacobian of the channel parameters with respect to the location
/// parameters, `(4K+5) x 5(K+1)` for K scatterers plus a LOS path.
///
/// Row blocks: `[p, alpha, gain_0]`, then `[s_k, gain_k]` per scatterer
/// path (delay-sorted order). Column blocks: the per-path channel
/// parameters in the same order as [`params_from_scenario`].
pub fn transformation_matrix(s: &Scenario, light_speed: f64) -> Result<DMatrix<f64>> {
    s.validate()?;
    if s.los_blocked {
        return olos_transformation_matrix(s, light_speed);
    }
    let order = s.scatterer_order();
    let k_n = order.len();
    let rows = 4 * k_n + 5;
    let cols = PARAMS_PER_PATH * (k_n + 1);
    let mut t = DMatrix::zeros(rows, cols);

    // LOS block
    let j0 = path_jacobian(s, None, light_speed);
    for (r, row) in j0.wrt_pose.iter().enumerate() {
        for (cix, val) in row.iter().enumerate() {
            t[(r, cix)] = *val;
        }
    }
    t[(3, 3)] = 1.0;
    t[(4, 4)] = 1.0;

    for (slot, &orig) in order.iter().enumerate() {
        let sk = &s.scatterers[orig];
        let jk = path_jacobian(s, Some(sk), light_speed);
        let col0 = PARAMS_PER_PATH * (slot + 1);
        // derivatives w.r.t. the MS pose (rows 0..3)
        for (r, row) in jk.wrt_pose.iter().enumerate() {
            for (cix, val) in row.iter().enumerate() {
                t[(r, col0 + cix)] = *val;
            }
        }
        // derivatives w.r.t. the scatterer location
        let row0 = 5 + 4 * slot;
        for (r, row) in jk.wrt_scatterer.as_ref().unwrap().iter().enumerate() {
            for (cix, val) in row.iter().enumerate() {
                t[(row0 + r, col0 + cix)] = *val;
            }
        }
        t[(row0 + 2, col0 + 3)] = 1.0;
        t[(row0 + 3, col0 + 4)] = 1.0;
    }
    Ok(t)
}

/// OLOS variant: location vector `[p, alpha, (s_k, gain_k)...]` of size
/// `3 + 4K`, channel vector of size `5K`.
fn olos_transformation_matrix(s: &Scenario, light_speed: f64) -> Result<DMatrix<f64>> {
    let order = s.scatterer_order();
    let k_n = order.len();
    let rows = 3 + 4 * k_n;
    let cols = PARAMS_PER_PATH * k_n;
    let mut t = DMatrix::zeros(rows, cols);
    for (slot, &orig) in order.iter().enumerate() {
        let sk = &s.scatterers[orig];
        let jk = path_jacobian(s, Some(sk), light_speed);
        let col0 = PARAMS_PER_PATH * slot;
        for (r, row) in jk.wrt_pose.iter().enumerate() {
            for (cix, val) in row.iter().enumerate() {
                t[(r, col0 + cix)] = *val;
            }
        }
        let row0 = 3 + 4 * slot;
        for (r, row) in jk.wrt_scatterer.as_ref().unwrap().iter().enumerate() {
            for (cix, val) in row.iter().enumerate() {
                t[(row0 + r, col0 + cix)] = *val;
            }
        }
        t[(row0 + 2, col0 + 3)] = 1.0;
        t[(row0 + 3, col0 + 4)] = 1.0;
    }
    Ok(t)
}
