//! Domain types and closed-form maps: chain labels, actuation-to-cable
//! splits, bend-to-configuration geometry, and the error metrics used in
//! the result tables.
//!
//! A module configuration is the unit vector from the module base to the
//! module end, expressed in the module's own base frame. The 3D cable plant
//! uses `[v_x, v_y, v_z]`; the 2D chamber plant uses `[v_x, v_z]`.

use crate::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-9;

/// Configuration-space dimensionality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn len(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }
}

/// Unit vector from a module's base to its end, in the module base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModuleConfig {
    v: [f64; 3],
    dim: Dim,
}

impl ModuleConfig {
    /// 3D configuration; rejects vectors that are not unit-norm within 1e-9.
    pub fn new3(vx: f64, vy: f64, vz: f64) -> Result<Self> {
        let c = Self::raw3(vx, vy, vz);
        c.check_unit()?;
        Ok(c)
    }

    /// 2D configuration `(v_x, v_z)`; same unit-norm check.
    pub fn new2(vx: f64, vz: f64) -> Result<Self> {
        let c = Self::raw2(vx, vz);
        c.check_unit()?;
        Ok(c)
    }

    /// Unchecked 3D constructor, for file loading and raw measurements.
    pub fn raw3(vx: f64, vy: f64, vz: f64) -> Self {
        ModuleConfig {
            v: [vx, vy, vz],
            dim: Dim::Three,
        }
    }

    /// Unchecked 2D constructor.
    pub fn raw2(vx: f64, vz: f64) -> Self {
        ModuleConfig {
            v: [vx, vz, 0.0],
            dim: Dim::Two,
        }
    }

    pub fn from_comps(comps: &[f64]) -> Result<Self> {
        match comps {
            [vx, vz] => Ok(Self::raw2(*vx, *vz)),
            [vx, vy, vz] => Ok(Self::raw3(*vx, *vy, *vz)),
            _ => Err(Error::DimMismatch {
                expected: 3,
                got: comps.len(),
            }),
        }
    }

    fn check_unit(&self) -> Result<()> {
        let norm = self.comps().iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "configuration norm {norm} not within {UNIT_NORM_TOL} of 1"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Components in storage order: `[v_x, v_y, v_z]` or `[v_x, v_z]`.
    pub fn comps(&self) -> &[f64] {
        &self.v[..self.dim.len()]
    }

    pub fn vx(&self) -> f64 {
        self.v[0]
    }

    /// `v_y`; only present for 3D configurations.
    pub fn vy(&self) -> Option<f64> {
        match self.dim {
            Dim::Three => Some(self.v[1]),
            Dim::Two => None,
        }
    }

    pub fn vz(&self) -> f64 {
        match self.dim {
            Dim::Three => self.v[2],
            Dim::Two => self.v[1],
        }
    }

    /// Bending angle `atan2(v_x, v_z)` in degrees — the scalar view of a 2D
    /// configuration used by the planar error tables.
    pub fn bending_angle_deg(&self) -> f64 {
        self.vx().atan2(self.vz()).to_degrees()
    }
}

/// Per-module actuation. The 3D plant drives two antagonistic cable pairs
/// from `(a0, a1)`; the 2D plant has a single chamber pair driven by `a0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModuleAction {
    a: [f64; 2],
    a_dim: usize,
}

impl ModuleAction {
    /// Two-component action, clamped to `[-1, 1]`.
    pub fn pair(a0: f64, a1: f64) -> Self {
        ModuleAction {
            a: [a0.clamp(-1.0, 1.0), a1.clamp(-1.0, 1.0)],
            a_dim: 2,
        }
    }

    /// Single-component action for the 2D plant, clamped to `[-1, 1]`.
    pub fn single(a0: f64) -> Self {
        ModuleAction {
            a: [a0.clamp(-1.0, 1.0), 0.0],
            a_dim: 1,
        }
    }

    pub fn from_comps(comps: &[f64]) -> Result<Self> {
        match comps {
            [a0] => Ok(Self::single(*a0)),
            [a0, a1] => Ok(Self::pair(*a0, *a1)),
            _ => Err(Error::DimMismatch {
                expected: 2,
                got: comps.len(),
            }),
        }
    }

    pub fn a0(&self) -> f64 {
        self.a[0]
    }

    pub fn a1(&self) -> Option<f64> {
        (self.a_dim == 2).then_some(self.a[1])
    }

    pub fn a_dim(&self) -> usize {
        self.a_dim
    }

    pub fn comps(&self) -> &[f64] {
        &self.a[..self.a_dim]
    }
}

/// Activations of the four cables (I/II and III/IV are antagonistic pairs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CableActs {
    pub a_i: f64,
    pub a_ii: f64,
    pub a_iii: f64,
    pub a_iv: f64,
}

impl CableActs {
    /// Net drive per bending axis: `(a_I - a_II, a_III - a_IV)`.
    pub fn net_drive(&self) -> (f64, f64) {
        (self.a_i - self.a_ii, self.a_iii - self.a_iv)
    }
}

/// Normalized position of a module along the chain, in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModuleLabel(f64);

impl ModuleLabel {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// All module configurations observed at one control step.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotConfig {
    pub t: u64,
    pub configs: Vec<ModuleConfig>,
}

impl RobotConfig {
    pub fn n_sum(&self) -> usize {
        self.configs.len()
    }
}

/// Chain label of module `i` (1-based) in a chain of `n_sum` modules:
/// `2(i-1)/(n_sum-1) - 1`, so the base module maps to -1 and the end module
/// to +1. A single-module chain maps to the midpoint 0.
pub fn module_label(i: usize, n_sum: usize) -> Result<ModuleLabel> {
    if i < 1 || i > n_sum {
        return Err(Error::IndexOutOfRange { index: i, n_sum });
    }
    if n_sum == 1 {
        return Ok(ModuleLabel(0.0));
    }
    Ok(ModuleLabel(
        2.0 * (i as f64 - 1.0) / (n_sum as f64 - 1.0) - 1.0,
    ))
}

/// Splits a signed action pair into four non-negative cable activations:
/// `a_I = max(0, a0)`, `a_II = max(0, -a0)`, `a_III = max(0, a1)`,
/// `a_IV = max(0, -a1)`. Antagonistic cables are never co-active.
pub fn action_to_cables(a: ModuleAction) -> CableActs {
    let a1 = a.a1().unwrap_or(0.0);
    CableActs {
        a_i: a.a0().max(0.0),
        a_ii: (-a.a0()).max(0.0),
        a_iii: a1.max(0.0),
        a_iv: (-a1).max(0.0),
    }
}

/// 3D configuration of a module bent by `(theta_x, theta_y)` radians:
/// with `theta = sqrt(theta_x^2 + theta_y^2)`, the end unit vector is
/// `(theta_x/theta * sin(theta), theta_y/theta * sin(theta), cos(theta))`.
/// Rejects bends of magnitude >= pi where the direction is ill-conditioned.
pub fn config_from_bend(theta_x: f64, theta_y: f64) -> Result<ModuleConfig> {
    let theta = theta_x.hypot(theta_y);
    if !theta.is_finite() || theta >= std::f64::consts::PI {
        return Err(Error::BendOutOfRange { magnitude: theta });
    }
    if theta == 0.0 {
        return Ok(ModuleConfig::raw3(0.0, 0.0, 1.0));
    }
    let s = theta.sin() / theta;
    Ok(ModuleConfig::raw3(theta_x * s, theta_y * s, theta.cos()))
}

/// Configuration error as a percentage of the unit-vector length:
/// `100 * ||v - v_d||`.
pub fn config_error_pct(desired: &ModuleConfig, actual: &ModuleConfig) -> Result<f64> {
    if desired.dim() != actual.dim() {
        return Err(Error::DimMismatch {
            expected: desired.dim().len(),
            got: actual.dim().len(),
        });
    }
    let sq: f64 = desired
        .comps()
        .iter()
        .zip(actual.comps())
        .map(|(d, a)| (a - d) * (a - d))
        .sum();
    Ok(100.0 * sq.sqrt())
}

/// Absolute bending-angle error in degrees.
pub fn angle_error_deg(desired_deg: f64, actual_deg: f64) -> f64 {
    (actual_deg - desired_deg).abs()
}

/// Rotation matrix (row-major) carried by a bend `(theta_x, theta_y)`: the
/// rotation that maps the base-frame z axis onto the module end vector.
/// Uses series guards near zero so the map is smooth through the rest pose.
pub fn bend_rotation(theta_x: f64, theta_y: f64) -> [[f64; 3]; 3] {
    let theta_sq = theta_x * theta_x + theta_y * theta_y;
    let theta = theta_sq.sqrt();
    // sin(theta)/theta and (1-cos(theta))/theta^2 with small-angle series
    let (s, c2) = if theta < 1e-6 {
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    // axis direction scaled by theta: w = (-theta_y, theta_x, 0)
    let (wx, wy) = (-theta_y, theta_x);
    [
        [
            1.0 - c2 * wy * wy,
            c2 * wx * wy,
            s * wy,
        ],
        [
            c2 * wx * wy,
            1.0 - c2 * wx * wx,
            -s * wx,
        ],
        [-s * wy, s * wx, 1.0 - c2 * theta_sq],
    ]
}

pub(crate) fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn mat_vec(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Transpose-multiply: `a^T v`.
pub(crate) fn mat_t_vec(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
        a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
        a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
    ]
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// World-frame end positions of every module, obtained by chaining the
/// local configurations with unit module length. 2D chains live in the
/// x-z plane (y = 0).
pub fn chain_world_positions(configs: &[ModuleConfig]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(configs.len());
    match configs.first().map(|c| c.dim()) {
        Some(Dim::Three) => {
            let mut rot = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            let mut pos = [0.0; 3];
            for c in configs {
                let local = [c.vx(), c.vy().unwrap_or(0.0), c.vz()];
                let world = mat_vec(&rot, &local);
                pos = [pos[0] + world[0], pos[1] + world[1], pos[2] + world[2]];
                out.push(pos);
                let (bx, by) = bend_from_config(c);
                rot = mat_mul(&rot, &bend_rotation(bx, by));
            }
        }
        Some(Dim::Two) => {
            let mut phi = 0.0;
            let mut pos = [0.0; 3];
            for c in configs {
                phi += c.vx().atan2(c.vz());
                pos = [pos[0] + phi.sin(), 0.0, pos[2] + phi.cos()];
                out.push(pos);
            }
        }
        None => {}
    }
    out
}

/// Inverse of [`config_from_bend`]: recovers `(theta_x, theta_y)` from a
/// configuration with `v_z > -1`.
pub fn bend_from_config(c: &ModuleConfig) -> (f64, f64) {
    match c.dim() {
        Dim::Two => (c.vx().atan2(c.vz()), 0.0),
        Dim::Three => {
            let theta = c.vz().clamp(-1.0, 1.0).acos();
            let vy = c.vy().unwrap_or(0.0);
            let planar = c.vx().hypot(vy);
            if planar < 1e-15 {
                (0.0, 0.0)
            } else {
                (theta * c.vx() / planar, theta * vy / planar)
            }
        }
    }
}
