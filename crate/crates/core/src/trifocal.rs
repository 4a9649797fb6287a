//! Three-view constraint between two cameras and the mirror, and the
//! point-to-point servo law derived from it.
//!
//! Each image pixel `p_i` of the spot defines the epipolar plane through the
//! pivot, the camera centre and the spot; its normal is `h_i = F_0i p_i`. The
//! beam lies in both planes, so `z0` is parallel to `h_R x h_L` and the
//! constraint reads `z0 x (h_R x h_L) = 0`.

use nalgebra::Unit;

use crate::error::{Error, Result};
use crate::geometry::{
    epipole_of, fundamental_between, fundamental_to_virtual, BeamDirection, CameraModel, Epipole,
    FundamentalMatrix, HomogPixel, Vec2, Vec3,
};
use crate::optics::SpotObservation;

/// Normal of an epipolar plane through the pivot, `h = F_0i p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarNormal(pub Vec3);

impl EpipolarNormal {
    pub fn vec(&self) -> &Vec3 {
        &self.0
    }
}

/// Calibration seen by the controller: both cameras, the pivot and the three
/// fundamental matrices between the two cameras and the mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrifocalRig {
    pub cam_l: CameraModel,
    pub cam_r: CameraModel,
    pub pivot: Vec3,
    /// `z0^T F_0L p_L = 0`.
    pub f_0l: FundamentalMatrix,
    /// `z0^T F_0R p_R = 0`.
    pub f_0r: FundamentalMatrix,
    /// `p_L^T F_LR p_R = 0`.
    pub f_lr: FundamentalMatrix,
    /// Image of the pivot in the left camera (`F_0L e_L = 0`).
    pub e_l: Epipole,
    /// Image of the pivot in the right camera (`F_0R e_R = 0`).
    pub e_r: Epipole,
    /// Unit direction from the pivot toward the left camera centre, the
    /// mirror-side epipole (`F_0L^T m_L = 0`).
    pub m_l: Vec3,
    /// Same for the right camera.
    pub m_r: Vec3,
}

impl TrifocalRig {
    pub fn new(cam_l: CameraModel, cam_r: CameraModel, pivot: Vec3) -> Result<Self> {
        let f_0l = fundamental_to_virtual(&cam_l, &pivot)?;
        let f_0r = fundamental_to_virtual(&cam_r, &pivot)?;
        let f_lr = fundamental_between(&cam_r, &cam_l)?;
        let mirror_epipole = |f: &FundamentalMatrix, toward: Vec3| -> Result<Vec3> {
            let m = epipole_of(&f.transposed())?.to_vec().normalize();
            Ok(if m.dot(&toward) < 0.0 { -m } else { m })
        };
        Ok(Self {
            e_l: epipole_of(&f_0l)?,
            e_r: epipole_of(&f_0r)?,
            m_l: mirror_epipole(&f_0l, cam_l.center - pivot)?,
            m_r: mirror_epipole(&f_0r, cam_r.center - pivot)?,
            cam_l,
            cam_r,
            pivot,
            f_0l,
            f_0r,
            f_lr,
        })
    }

    /// Normal of the baseline plane through both camera centres and the pivot.
    pub fn baseline_normal(&self) -> Vec3 {
        self.m_l.cross(&self.m_r)
    }
}

/// Gains of the point-to-point servo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoGains {
    pub lambda: f64,
    pub te: f64,
    pub sing_eps: f64,
}

impl ServoGains {
    pub fn new(lambda: f64, te: f64, sing_eps: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(te > 0.0) {
            return Err(Error::invalid("Te", "must be positive"));
        }
        if !(sing_eps > 0.0 && sing_eps < 1e-3) {
            return Err(Error::invalid("sing_eps", "must lie in (0, 1e-3)"));
        }
        Ok(Self { lambda, te, sing_eps })
    }
}

impl Default for ServoGains {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            te: 0.1,
            sing_eps: 1e-8,
        }
    }
}

/// `h = F_0i p`. When `sign_ref = (m_i, z0)` is given the normal is flipped so
/// that `h . (m_i x z0) > 0`.
pub fn h_of(f: &FundamentalMatrix, p: &HomogPixel, sign_ref: Option<(&Vec3, &Vec3)>) -> Result<EpipolarNormal> {
    let pv = p.normalize().to_vec();
    let h = f.apply(&pv);
    if h.norm() <= 1e-12 * pv.norm() {
        return Err(Error::ZeroVector);
    }
    Ok(match sign_ref {
        Some((m, z0)) if h.dot(&m.cross(z0)) < 0.0 => EpipolarNormal(-h),
        _ => EpipolarNormal(h),
    })
}

/// `z0 = eps (h_R x h_L) / |h_R x h_L|`, with `eps` the sign that keeps the
/// estimate on the side of `reference` (the previous beam). Returns the beam
/// and `eps`.
pub fn beam_from_normals(
    hl: &EpipolarNormal,
    hr: &EpipolarNormal,
    reference: &Vec3,
    sing_eps: f64,
) -> Result<(BeamDirection, f64)> {
    let n = hr.0.cross(&hl.0);
    if !(n.norm() >= sing_eps * hr.0.norm() * hl.0.norm()) {
        return Err(Error::BaselineSingularity);
    }
    let eps = if n.dot(reference) < 0.0 { -1.0 } else { 1.0 };
    Ok((Unit::new_normalize(n * eps), eps))
}

/// `z0 x (h_R x h_L)`; zero on consistent data.
pub fn trifocal_residual(z0: &Vec3, hl: &EpipolarNormal, hr: &EpipolarNormal) -> Vec3 {
    z0.cross(&hr.0.cross(&hl.0))
}

/// First-order pixel error dynamics with feed-forward: `-lambda (p - p*) + p*_dot`.
pub fn desired_pixel_velocity(p: &HomogPixel, p_star: &HomogPixel, p_star_dot: &Vec2, lambda: f64) -> Vec2 {
    -(p.normalize().xy() - p_star.normalize().xy()) * lambda + p_star_dot
}

fn eta(hl: &EpipolarNormal, hr: &EpipolarNormal, sing_eps: f64) -> Result<Vec3> {
    let n = hr.0.cross(&hl.0);
    let n2 = n.norm_squared();
    if !(n2.sqrt() >= sing_eps * hr.0.norm() * hl.0.norm()) {
        return Err(Error::BaselineSingularity);
    }
    Ok(n / n2)
}

/// Servo law `-lambda eta x (h_L x h*_R - h_R x h*_L) - eta x (h_L x h*_R_dot - h_R x h*_L_dot)`
/// with `eta = (h_R x h_L) / |h_R x h_L|^2`.
#[allow(clippy::too_many_arguments)]
pub fn control_omega(
    hl: &EpipolarNormal,
    hr: &EpipolarNormal,
    hl_star: &EpipolarNormal,
    hr_star: &EpipolarNormal,
    hl_star_dot: &Vec3,
    hr_star_dot: &Vec3,
    lambda: f64,
    sing_eps: f64,
) -> Result<Vec3> {
    let eta = eta(hl, hr, sing_eps)?;
    let (l, r) = (&hl.0, &hr.0);
    let fb = l.cross(&hr_star.0) - r.cross(&hl_star.0);
    let ff = l.cross(hr_star_dot) - r.cross(hl_star_dot);
    Ok(-eta.cross(&fb) * lambda - eta.cross(&ff))
}

/// Mirror rate that realizes the image velocities `v_l`, `v_r` (pixels/s):
/// `-eta x (h_L x F_0R v_R - h_R x F_0L v_L)` with velocities lifted to `w = 0`.
pub fn omega_from_image_velocities(
    rig: &TrifocalRig,
    hl: &EpipolarNormal,
    hr: &EpipolarNormal,
    v_l: &Vec2,
    v_r: &Vec2,
    sing_eps: f64,
) -> Result<Vec3> {
    let eta = eta(hl, hr, sing_eps)?;
    let dl = rig.f_0l.apply(&Vec3::new(v_l.x, v_l.y, 0.0));
    let dr = rig.f_0r.apply(&Vec3::new(v_r.x, v_r.y, 0.0));
    Ok(-eta.cross(&(hl.0.cross(&dr) - hr.0.cross(&dl))))
}

/// Desired spot position in both images, with its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoTarget {
    pub p_l: HomogPixel,
    pub p_r: HomogPixel,
    pub p_l_dot: Vec2,
    pub p_r_dot: Vec2,
}

impl ServoTarget {
    pub fn fixed(p_l: HomogPixel, p_r: HomogPixel) -> Self {
        Self {
            p_l,
            p_r,
            p_l_dot: Vec2::zeros(),
            p_r_dot: Vec2::zeros(),
        }
    }

    /// Target moving from `prev` to `next` during one period `te`; the
    /// feed-forward is the first-order difference.
    pub fn moving(prev: &ServoTarget, p_l: HomogPixel, p_r: HomogPixel, te: f64) -> Self {
        Self {
            p_l,
            p_r,
            p_l_dot: (p_l.normalize().xy() - prev.p_l.normalize().xy()) / te,
            p_r_dot: (p_r.normalize().xy() - prev.p_r.normalize().xy()) / te,
        }
    }
}

/// One iteration of the point-to-point servo: mirror angular velocity from the
/// observed spot and the target.
pub fn servo_step(rig: &TrifocalRig, obs: &SpotObservation, target: &ServoTarget, gains: &ServoGains) -> Result<Vec3> {
    let hl = h_of(&rig.f_0l, &obs.p_l, None)?;
    let hr = h_of(&rig.f_0r, &obs.p_r, None)?;
    let lift = |v: &Vec2| Vec3::new(v.x, v.y, 0.0);
    control_omega(
        &hl,
        &hr,
        &h_of(&rig.f_0l, &target.p_l, None)?,
        &h_of(&rig.f_0r, &target.p_r, None)?,
        &rig.f_0l.apply(&lift(&target.p_l_dot)),
        &rig.f_0r.apply(&lift(&target.p_r_dot)),
        gains.lambda,
        gains.sing_eps,
    )
}

/// Tracks the beam estimate across iterations and reports a baseline crossing.
///
/// The sign of `h_R x h_L` relative to the beam flips when the beam crosses
/// the plane through both camera centres and the pivot; the estimate is kept
/// continuous, so the crossing shows up as a change of `eps` or as a vanishing
/// cross product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityMonitor {
    pub estimate: Vec3,
    eps: Option<f64>,
    sing_eps: f64,
}

impl SingularityMonitor {
    /// Seeded with the true initial beam.
    pub fn new(seed: &Vec3, sing_eps: f64) -> Self {
        Self {
            estimate: *seed,
            eps: None,
            sing_eps,
        }
    }

    pub fn update(&mut self, rig: &TrifocalRig, obs: &SpotObservation) -> Result<BeamDirection> {
        let hl = h_of(&rig.f_0l, &obs.p_l, None)?;
        let hr = h_of(&rig.f_0r, &obs.p_r, None)?;
        let (z0, eps) = beam_from_normals(&hl, &hr, &self.estimate, self.sing_eps)?;
        if let Some(prev) = self.eps {
            if prev != eps {
                return Err(Error::BaselineSingularity);
            }
        }
        self.eps = Some(eps);
        self.estimate = z0.into_inner();
        Ok(z0)
    }
}
