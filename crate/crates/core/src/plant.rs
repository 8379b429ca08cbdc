//! Deterministic surrogate simulator of a modular soft arm.
//!
//! Each module is a piecewise-constant-curvature segment whose bend
//! coordinates follow a damped second-order response toward a target set by
//! the actuation and by three chain couplings:
//!
//! ```text
//! s_j    = b_ss,j - b_j                      (unresolved elastic strain)
//! b_ss,i = theta_max * u_i
//!        + g_gain * m_i * P_i
//!        + coupling_gain * sum_{j>i} coupling_decay^(j-i) * s_j
//!        + whip_gain * sum_{j<i} whip_decay^(i-j) * s_j
//! b''    = omega^2 * (b_ss - b) - 2 * zeta * omega * b'
//! ```
//!
//! `u_i` is the net cable drive from the antagonistic split. The gravity
//! term loads module `i` with the `m_i` modules it carries (`P_i` is the
//! bend-axis moment of gravity about the module base, from the unit vector
//! toward the carried chain's centroid), so proximal modules sag hardest.
//! The strain couplings transmit the chain's elastic transients: a module
//! feels the unresolved strain of the modules it carries (routed cable
//! reaction, strongest near the base) and, scaled by the mass it carries,
//! the strain of the modules underneath it accelerating it around
//! (strongest where the carried mass is large). The targets therefore form
//! a small linear system solved each step; couplings vanish at steady
//! state, and every module's motion depends on the rest of the chain in
//! both directions.

use crate::geom::{
    self, bend_rotation, config_from_bend, cross, mat_mul, mat_t_vec, mat_vec, Dim, ModuleAction,
    ModuleConfig, RobotConfig,
};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Plant flavor: the four-cable 3D module or the two-chamber planar module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlantMode {
    Cable3D,
    Chamber2D,
}

impl PlantMode {
    pub fn state_dim(self) -> usize {
        match self {
            PlantMode::Cable3D => 3,
            PlantMode::Chamber2D => 2,
        }
    }

    pub fn a_dim(self) -> usize {
        match self {
            PlantMode::Cable3D => 2,
            PlantMode::Chamber2D => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlantMode::Cable3D => "cable3d",
            PlantMode::Chamber2D => "chamber2d",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "cable3d" => Ok(PlantMode::Cable3D),
            "chamber2d" => Ok(PlantMode::Chamber2D),
            other => Err(Error::InvalidArgument(format!("unknown plant mode {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantParams {
    pub n_sum: usize,
    /// Bend (rad) produced by a unit cable drive at steady state.
    pub theta_max: f64,
    /// Natural frequency of the bend response, 1/s.
    pub omega: f64,
    /// Damping ratio.
    pub zeta: f64,
    /// Bend (rad) per unit of gravity moment per carried module.
    pub g_gain: f64,
    /// Gravity direction in the world frame (unit vector).
    pub gravity_dir: [f64; 3],
    /// Bend (rad) per rad of unresolved distal strain routed through the
    /// module.
    pub coupling_gain: f64,
    /// Geometric attenuation per module of the routed cable reaction.
    pub coupling_decay: f64,
    /// Bend (rad) per rad of unresolved proximal strain transmitted up
    /// the chain.
    pub whip_gain: f64,
    /// Geometric attenuation per module of the proximal strain coupling.
    pub whip_decay: f64,
    /// Control period, s.
    pub dt_control: f64,
    /// Inner integrator steps per control period.
    pub substeps: usize,
    pub mode: PlantMode,
}

impl PlantParams {
    pub fn new(n_sum: usize, mode: PlantMode) -> Self {
        PlantParams {
            n_sum,
            theta_max: 0.6,
            omega: 4.0,
            zeta: 0.9,
            g_gain: 0.05,
            gravity_dir: [0.0, 0.0, -1.0],
            // four-cable modules route distal tendons through every
            // proximal module; the planar chamber stack does not
            coupling_gain: match mode {
                PlantMode::Cable3D => 0.15,
                PlantMode::Chamber2D => 0.08,
            },
            coupling_decay: 0.8,
            whip_gain: 0.02,
            whip_decay: 1.0,
            dt_control: 0.04,
            substeps: 4,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sum == 0 {
            return Err(Error::InvalidParams("n_sum must be at least 1".into()));
        }
        if !(self.omega > 0.0) {
            return Err(Error::InvalidParams(format!("omega {} not > 0", self.omega)));
        }
        if !(self.zeta > 0.0 && self.zeta < 2.0) {
            return Err(Error::InvalidParams(format!(
                "zeta {} not in (0, 2)",
                self.zeta
            )));
        }
        if !(self.theta_max > 0.0) {
            return Err(Error::InvalidParams("theta_max must be positive".into()));
        }
        if self.g_gain < 0.0 {
            return Err(Error::InvalidParams("g_gain must be non-negative".into()));
        }
        if self.coupling_gain < 0.0 || self.whip_gain < 0.0 {
            return Err(Error::InvalidParams(
                "coupling_gain and whip_gain must be non-negative".into(),
            ));
        }
        if !(self.coupling_decay > 0.0 && self.coupling_decay <= 1.0)
            || !(self.whip_decay > 0.0 && self.whip_decay <= 1.0)
        {
            return Err(Error::InvalidParams(format!(
                "coupling_decay {} and whip_decay {} must be in (0, 1]",
                self.coupling_decay, self.whip_decay
            )));
        }
        // Strain couplings vanish at steady state, so the static bound is
        // actuation plus gravity; transients are guarded by the runtime
        // saturation error.
        let static_part = self.theta_max + self.g_gain * self.n_sum as f64;
        if static_part >= PI {
            return Err(Error::InvalidParams(format!(
                "theta_max + g_gain * n_sum = {static_part} must stay below pi"
            )));
        }
        // The per-step target system (I - W) t = base - W b needs a
        // dominant diagonal: every row's coupling weights must sum below 1.
        let row_bound = (1..=self.n_sum)
            .map(|i| {
                let distal: f64 = (1..=self.n_sum - i)
                    .map(|k| self.coupling_decay.powi(k as i32))
                    .sum();
                let proximal: f64 =
                    (1..i).map(|k| self.whip_decay.powi(k as i32)).sum();
                self.coupling_gain * distal + self.whip_gain * proximal
            })
            .fold(0.0f64, f64::max);
        if row_bound > 0.9 {
            return Err(Error::InvalidParams(format!(
                "coupling row weight {row_bound} must stay at or below 0.9"
            )));
        }
        if !(self.dt_control > 0.0) || self.substeps == 0 {
            return Err(Error::InvalidParams(
                "dt_control must be positive and substeps >= 1".into(),
            ));
        }
        let g_norm = self
            .gravity_dir
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if (g_norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParams(format!(
                "gravity_dir norm {g_norm} must be 1"
            )));
        }
        Ok(())
    }

    /// Digest of every parameter, recorded in dataset and run-log headers.
    pub fn digest(&self) -> u64 {
        let repr = format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            self.n_sum,
            crate::fmt_f64(self.theta_max),
            crate::fmt_f64(self.omega),
            crate::fmt_f64(self.zeta),
            crate::fmt_f64(self.g_gain),
            crate::fmt_f64(self.gravity_dir[0]),
            crate::fmt_f64(self.gravity_dir[1]),
            crate::fmt_f64(self.gravity_dir[2]),
            crate::fmt_f64(self.coupling_gain),
            crate::fmt_f64(self.coupling_decay),
            crate::fmt_f64(self.whip_gain),
            crate::fmt_f64(self.whip_decay),
            crate::fmt_f64(self.dt_control),
            self.substeps,
            self.mode.name(),
        );
        crate::fnv1a(repr.as_bytes())
    }

    /// Coupling weight from module `j`'s strain into module `i`'s target
    /// (0-based indices).
    pub(crate) fn strain_weight(&self, i: usize, j: usize) -> f64 {
        if j > i {
            self.coupling_gain * self.coupling_decay.powi((j - i) as i32)
        } else if j < i {
            self.whip_gain * self.whip_decay.powi((i - j) as i32)
        } else {
            0.0
        }
    }
}

/// Bend coordinates and bend rates of every module. Advanced by
/// [`plant_step`]; a value type, so independent rollouts never share state.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    pub params: PlantParams,
    bends: Vec<[f64; 2]>,
    rates: Vec<[f64; 2]>,
    step: u64,
}

impl PlantState {
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn bend(&self, module: usize) -> [f64; 2] {
        self.bends[module]
    }
}

/// Creates a plant at rest: all bends and bend rates zero.
pub fn plant_init(params: PlantParams) -> Result<PlantState> {
    params.validate()?;
    let n = params.n_sum;
    Ok(PlantState {
        params,
        bends: vec![[0.0; 2]; n],
        rates: vec![[0.0; 2]; n],
        step: 0,
    })
}

/// World pose of the chain: per-module base rotation and end position.
fn chain_poses(state: &PlantState) -> (Vec<[[f64; 3]; 3]>, Vec<[f64; 3]>) {
    let n = state.params.n_sum;
    let mut base_rots = Vec::with_capacity(n);
    let mut ends = Vec::with_capacity(n);
    match state.params.mode {
        PlantMode::Cable3D => {
            let mut rot = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            let mut pos = [0.0; 3];
            for b in &state.bends {
                base_rots.push(rot);
                let local = config_from_bend(b[0], b[1]).expect("bend inside chart");
                let l = [local.vx(), local.vy().unwrap_or(0.0), local.vz()];
                let w = mat_vec(&rot, &l);
                pos = [pos[0] + w[0], pos[1] + w[1], pos[2] + w[2]];
                ends.push(pos);
                rot = mat_mul(&rot, &bend_rotation(b[0], b[1]));
            }
        }
        PlantMode::Chamber2D => {
            let mut phi = 0.0;
            let mut pos = [0.0; 3];
            for b in &state.bends {
                base_rots.push(rot_y(phi));
                phi += b[0];
                pos = [pos[0] + phi.sin(), 0.0, pos[2] + phi.cos()];
                ends.push(pos);
            }
        }
    }
    (base_rots, ends)
}

fn rot_y(phi: f64) -> [[f64; 3]; 3] {
    // x-z plane rotation used by the 2D chain (y is the bend axis)
    [
        [phi.cos(), 0.0, phi.sin()],
        [0.0, 1.0, 0.0],
        [-phi.sin(), 0.0, phi.cos()],
    ]
}

/// Per-module gravity moment `P_i`: the bend-axis component of the torque
/// of gravity about module `i`'s base, taken from the unit vector toward
/// the centroid of all module ends carried by `i` (itself included).
pub fn gravity_moments(state: &PlantState) -> Vec<[f64; 2]> {
    let n = state.params.n_sum;
    let g = &state.params.gravity_dir;
    let (base_rots, ends) = chain_poses(state);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let base = if i == 0 { [0.0; 3] } else { ends[i - 1] };
        let m = (n - i) as f64;
        let mut c = [0.0; 3];
        for e in &ends[i..] {
            c = [c[0] + e[0], c[1] + e[1], c[2] + e[2]];
        }
        c = [c[0] / m - base[0], c[1] / m - base[1], c[2] / m - base[2]];
        let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if norm < 1e-12 {
            out.push([0.0; 2]);
            continue;
        }
        let c_hat = [c[0] / norm, c[1] / norm, c[2] / norm];
        match state.params.mode {
            PlantMode::Cable3D => {
                let torque_world = cross(&c_hat, g);
                let t = mat_t_vec(&base_rots[i], &torque_world);
                // torque about axis (a_x, a_y) drives bend direction (a_y, -a_x)
                out.push([t[1], -t[0]]);
            }
            PlantMode::Chamber2D => {
                // planar cross product is rotation invariant
                out.push([c_hat[2] * g[0] - c_hat[0] * g[2], 0.0]);
            }
        }
    }
    out
}

/// Advances the plant by one control period under the given per-module
/// actions. The cable route is taken literally: actions are split into
/// antagonistic cable activations, whose differences form the net drive.
pub fn plant_step(state: &PlantState, actions: &[ModuleAction]) -> Result<PlantState> {
    let p = &state.params;
    let n = p.n_sum;
    if actions.len() != n {
        return Err(Error::ShapeMismatch {
            context: "plant_step actions",
            expected: n,
            got: actions.len(),
        });
    }
    let expected_a_dim = p.mode.a_dim();
    for a in actions {
        if a.a_dim() != expected_a_dim {
            return Err(Error::ShapeMismatch {
                context: "plant_step action components",
                expected: expected_a_dim,
                got: a.a_dim(),
            });
        }
    }

    let moments = gravity_moments(state);
    let drives: Vec<(f64, f64)> = actions
        .iter()
        .map(|a| geom::action_to_cables(*a).net_drive())
        .collect();
    // Targets couple through the strains (t_j - b_j), so they solve the
    // linear system (I - W) t = base - W b per bend axis.
    let mut matrix = vec![vec![0.0; n]; n];
    let mut rhs = vec![(0.0, 0.0); n];
    for i in 0..n {
        let (ux, uy) = drives[i];
        let m = (n - i) as f64;
        let mut rx = p.theta_max * ux + p.g_gain * m * moments[i][0];
        let mut ry = p.theta_max * uy + p.g_gain * m * moments[i][1];
        for j in 0..n {
            let w = p.strain_weight(i, j);
            matrix[i][j] = if i == j { 1.0 } else { -w };
            rx -= w * state.bends[j][0];
            ry -= w * state.bends[j][1];
        }
        rhs[i] = (rx, ry);
    }
    let solved = solve_linear(matrix, rhs);
    let targets: Vec<[f64; 2]> = solved.iter().map(|(x, y)| [*x, *y]).collect();

    let mut next = state.clone();
    let h = p.dt_control / p.substeps as f64;
    let omega_sq = p.omega * p.omega;
    let damp = 2.0 * p.zeta * p.omega;
    for _ in 0..p.substeps {
        for i in 0..n {
            for axis in 0..2 {
                let acc = omega_sq * (targets[i][axis] - next.bends[i][axis])
                    - damp * next.rates[i][axis];
                next.rates[i][axis] += h * acc;
                next.bends[i][axis] += h * next.rates[i][axis];
            }
            let mag = next.bends[i][0].hypot(next.bends[i][1]);
            if mag >= PI {
                return Err(Error::Saturated {
                    module: i + 1,
                    step: state.step,
                });
            }
        }
    }
    next.step += 1;
    Ok(next)
}

/// Reads every module's configuration in its own base frame.
pub fn plant_observe(state: &PlantState) -> RobotConfig {
    let configs = state
        .bends
        .iter()
        .map(|b| match state.params.mode {
            PlantMode::Cable3D => config_from_bend(b[0], b[1]).expect("bend inside chart"),
            PlantMode::Chamber2D => ModuleConfig::raw2(b[0].sin(), b[0].cos()),
        })
        .collect();
    RobotConfig {
        t: state.step,
        configs,
    }
}

/// Steady-state inverse at the current pose: the actions whose target
/// bends equal `desired`, given the present gravity moments, bend rates,
/// and cable routing. Solved tip to base because each module's drive must
/// cancel the routed reaction of the drives distal to it. Used by the
/// reference controller and by oracle tests.
pub fn invert_at_state(state: &PlantState, desired: &[ModuleConfig]) -> Result<Vec<ModuleAction>> {
    let p = &state.params;
    let n = p.n_sum;
    if desired.len() != n {
        return Err(Error::ShapeMismatch {
            context: "invert_at_state desired",
            expected: n,
            got: desired.len(),
        });
    }
    let want_dim = match p.mode {
        PlantMode::Cable3D => Dim::Three,
        PlantMode::Chamber2D => Dim::Two,
    };
    let moments = gravity_moments(state);
    let desired_bends: Vec<(f64, f64)> = desired
        .iter()
        .map(|d| {
            if d.dim() != want_dim {
                Err(Error::DimMismatch {
                    expected: want_dim.len(),
                    got: d.dim().len(),
                })
            } else {
                Ok(geom::bend_from_config(d))
            }
        })
        .collect::<Result<_>>()?;
    // At the solution every target equals its desired bend, so the strain
    // couplings are known values and each drive follows directly.
    let mut drives = Vec::with_capacity(n);
    for i in 0..n {
        let (bx, by) = desired_bends[i];
        let m = (n - i) as f64;
        let mut rx = bx - p.g_gain * m * moments[i][0];
        let mut ry = by - p.g_gain * m * moments[i][1];
        for j in 0..n {
            let w = p.strain_weight(i, j);
            if w != 0.0 {
                rx -= w * (desired_bends[j].0 - state.bends[j][0]);
                ry -= w * (desired_bends[j].1 - state.bends[j][1]);
            }
        }
        drives.push((
            (rx / p.theta_max).clamp(-1.0, 1.0),
            (ry / p.theta_max).clamp(-1.0, 1.0),
        ));
    }
    Ok(drives
        .into_iter()
        .map(|(ux, uy)| match p.mode {
            PlantMode::Cable3D => ModuleAction::pair(ux, uy),
            PlantMode::Chamber2D => ModuleAction::single(ux),
        })
        .collect())
}

/// Gaussian elimination with partial pivoting, two right-hand sides (one
/// per bend axis). Row weights are validated below 0.9, so the system is
/// diagonally dominant.
fn solve_linear(mut a: Vec<Vec<f64>>, mut rhs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let n = rhs.len();
    for col in 0..n {
        let mut best = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[best][col].abs() {
                best = r;
            }
        }
        a.swap(col, best);
        rhs.swap(col, best);
        let pivot = a[col][col];
        for r in 0..n {
            if r == col || a[r][col] == 0.0 {
                continue;
            }
            let f = a[r][col] / pivot;
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            rhs[r].0 -= f * rhs[col].0;
            rhs[r].1 -= f * rhs[col].1;
        }
    }
    (0..n)
        .map(|i| (rhs[i].0 / a[i][i], rhs[i].1 / a[i][i]))
        .collect()
}
