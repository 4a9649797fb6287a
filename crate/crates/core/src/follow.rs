//! Image-plane path following in Frenet coordinates.
//!
//! The spot moves at a speed set by the operator; the controller only turns
//! its direction. With `(z1, z2, z3) = (s, d, (1 - dC) tan theta_e)` the
//! kinematics become the chained form `z1' = u1, z2' = u1 z3, z3' = u2`, and
//! `u2 = -u1 g1 z2 - |u1| g2 z3` makes the lateral error decay with the
//! travelled arc length.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Rotation2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::path::{orientation_error, predict_abscissa, project_onto_path, PathCurve, PathProjection};

const TUBE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetState {
    pub s: f64,
    pub d: f64,
    pub theta_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainedState {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

/// Source of the lateral rate fed to the inversion of `u2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LateralRate {
    /// `v sin(theta_e)`.
    #[default]
    Model,
    /// Backward difference of consecutive `d` measurements.
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowGains {
    pub gamma1: f64,
    pub gamma2: f64,
    pub te: f64,
    /// Half-width of the projection search, in mean sample spacings.
    pub window: usize,
    pub lateral_rate: LateralRate,
}

impl FollowGains {
    pub fn new(gamma1: f64, gamma2: f64, te: f64, window: usize, lateral_rate: LateralRate) -> Result<Self> {
        if !(gamma1 > 0.0) {
            return Err(Error::invalid("gamma1", "must be positive"));
        }
        if !(gamma2 > 0.0) {
            return Err(Error::invalid("gamma2", "must be positive"));
        }
        if !(te > 0.0) {
            return Err(Error::invalid("Te", "must be positive"));
        }
        if window < 2 {
            return Err(Error::invalid("window", "must be at least 2"));
        }
        Ok(Self {
            gamma1,
            gamma2,
            te,
            window,
            lateral_rate,
        })
    }
}

impl Default for FollowGains {
    fn default() -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 1.0,
            te: 1.0 / 500.0,
            window: 16,
            lateral_rate: LateralRate::Model,
        }
    }
}

fn tube(d: f64, c: f64) -> Result<f64> {
    let k = 1.0 - d * c;
    if k.abs() <= TUBE_EPS {
        return Err(Error::SingularTube(k.abs()));
    }
    Ok(k)
}

fn check_domain(theta_e: f64) -> Result<()> {
    if !(theta_e.abs() < FRAC_PI_2) {
        return Err(Error::OutOfDomain(theta_e));
    }
    Ok(())
}

/// `(s_dot, d_dot, theta_e_dot)` of the unicycle-like spot.
pub fn frenet_dynamics(state: &FrenetState, v: f64, omega: f64, c: f64, _dcds: f64) -> Result<(f64, f64, f64)> {
    let k = tube(state.d, c)?;
    let s_dot = v * state.theta_e.cos() / k;
    Ok((s_dot, v * state.theta_e.sin(), omega - s_dot * c))
}

pub fn to_chained(state: &FrenetState, c: f64) -> Result<ChainedState> {
    check_domain(state.theta_e)?;
    Ok(ChainedState {
        z1: state.s,
        z2: state.d,
        z3: (1.0 - state.d * c) * state.theta_e.tan(),
    })
}

/// `u1 = v cos(theta_e) / (1 - d C)`.
pub fn u1_of(v: f64, d: f64, c: f64, theta_e: f64) -> Result<f64> {
    Ok(v * theta_e.cos() / tube(d, c)?)
}

/// `u2 = -u1 g1 z2 - |u1| g2 z3`.
pub fn control_u2(u1: f64, z2: f64, z3: f64, gains: &FollowGains) -> f64 {
    -u1 * gains.gamma1 * z2 - u1.abs() * gains.gamma2 * z3
}

/// Rotation rate of the spot direction that produces `z3' = u2`.
pub fn omega_from_u2(
    u2: f64,
    state: &FrenetState,
    c: f64,
    dcds: f64,
    s_dot: f64,
    d_dot: f64,
) -> Result<f64> {
    check_domain(state.theta_e)?;
    let k = tube(state.d, c)?;
    let tan = state.theta_e.tan();
    Ok((u2 + (d_dot * c + state.d * dcds * s_dot) * tan) / (k * (1.0 + tan * tan)) + s_dot * c)
}

/// Inverse of [`omega_from_u2`]: the `z3` rate produced by a given `omega`.
pub fn u2_from_omega(
    omega: f64,
    state: &FrenetState,
    c: f64,
    dcds: f64,
    s_dot: f64,
    d_dot: f64,
) -> Result<f64> {
    check_domain(state.theta_e)?;
    let k = tube(state.d, c)?;
    let tan = state.theta_e.tan();
    Ok(k * (1.0 + tan * tan) * (omega - s_dot * c) - (d_dot * c + state.d * dcds * s_dot) * tan)
}

/// `normalize(v + omega Te z x v)`.
pub fn advance_direction(v: &Vec2, omega: f64, te: f64) -> Vec2 {
    let a = omega * te;
    (v + Vec2::new(-v.y, v.x) * a).normalize()
}

/// Everything produced by one follower iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowOutput {
    pub direction: Vec2,
    /// `v * direction`, pixels per second.
    pub velocity: Vec2,
    pub state: FrenetState,
    pub s_dot: f64,
    pub omega: f64,
    pub u1: f64,
    pub u2: f64,
    pub stalled: bool,
    pub completed: bool,
    pub projection: PathProjection,
}

/// Abscissa memory between iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowMemory {
    pub s: f64,
    pub s_dot: f64,
    pub d: Option<f64>,
}

/// One iteration: predict the abscissa, project the spot, compute the
/// direction update and the commanded velocity.
pub fn follow_step(
    spot: &Vec2,
    direction: &Vec2,
    path: &PathCurve,
    gains: &FollowGains,
    v: f64,
    memory: &FollowMemory,
) -> Result<FollowOutput> {
    let s_pred = predict_abscissa(path, memory.s, memory.s_dot, gains.te);
    let proj = project_onto_path(spot, path, s_pred, gains.window)?;
    let completed = !path.is_closed() && proj.s >= path.length() - 0.5 * path.mean_spacing();
    let mut out = follow_law(&proj, direction, gains, v, memory)?;
    out.completed = completed;
    Ok(out)
}

/// The control law proper, given the projection of the spot.
pub fn follow_law(
    proj: &PathProjection,
    direction: &Vec2,
    gains: &FollowGains,
    v: f64,
    memory: &FollowMemory,
) -> Result<FollowOutput> {
    let theta_e = orientation_error(direction, &proj.x_s, &proj.y_s);
    let state = FrenetState {
        s: proj.s,
        d: proj.d,
        theta_e,
    };
    let u1 = if theta_e.abs() < FRAC_PI_2 {
        u1_of(v, proj.d, proj.c, theta_e)?
    } else {
        0.0
    };
    let (new_dir, omega, u2, stalled) = if u1.abs() < 1e-9 * v.abs() || theta_e.abs() >= FRAC_PI_2 {
        let turn = -theta_e.signum() * theta_e.abs().min(FRAC_PI_2);
        (Rotation2::new(turn) * direction, turn / gains.te, 0.0, true)
    } else {
        let z = to_chained(&state, proj.c)?;
        let u2 = control_u2(u1, z.z2, z.z3, gains);
        let d_dot = match (gains.lateral_rate, memory.d) {
            (LateralRate::Difference, Some(prev)) => (proj.d - prev) / gains.te,
            _ => v * theta_e.sin(),
        };
        let omega = omega_from_u2(u2, &state, proj.c, proj.dcds, u1, d_dot)?;
        (advance_direction(direction, omega, gains.te), omega, u2, false)
    };
    Ok(FollowOutput {
        direction: new_dir,
        velocity: new_dir * v,
        state,
        s_dot: u1,
        omega,
        u1,
        u2,
        stalled,
        completed: false,
        projection: *proj,
    })
}

/// Stateful wrapper around [`follow_step`] for one image.
#[derive(Debug, Clone)]
pub struct PathFollower {
    pub path: PathCurve,
    pub gains: FollowGains,
    pub direction: Vec2,
    pub memory: FollowMemory,
}

impl PathFollower {
    /// Starts at the global projection of `spot`, heading along the tangent
    /// unless `direction` is given.
    pub fn new(path: PathCurve, gains: FollowGains, spot: &Vec2, direction: Option<Vec2>) -> Result<Self> {
        let proj = project_global(spot, &path)?;
        let direction = match direction {
            Some(d) if d.norm() > 1e-12 => d.normalize(),
            Some(_) => return Err(Error::ZeroVelocity),
            None => proj.x_s,
        };
        Ok(Self {
            path,
            gains,
            direction,
            memory: FollowMemory {
                s: proj.s,
                s_dot: 0.0,
                d: None,
            },
        })
    }

    /// Runs one iteration with the spot at `spot`, moving along `direction`
    /// (the follower's own command when `None`).
    pub fn step(&mut self, spot: &Vec2, measured_direction: Option<Vec2>, v: f64) -> Result<FollowOutput> {
        let dir = measured_direction.unwrap_or(self.direction);
        let out = follow_step(spot, &dir, &self.path, &self.gains, v, &self.memory)?;
        self.direction = out.direction;
        self.memory = FollowMemory {
            s: out.state.s,
            s_dot: out.s_dot,
            d: Some(out.state.d),
        };
        Ok(out)
    }
}

/// Projection with a window covering the whole curve.
pub fn project_global(p: &Vec2, path: &PathCurve) -> Result<PathProjection> {
    project_onto_path(p, path, 0.5 * path.length(), path.segment_count() / 2 + 2)
}
