//! 3D path following by running a 2D follower in each image and fusing their
//! direction commands through the three-view constraint.

use crate::error::{Error, Result};
use crate::follow::{advance_direction, FollowOutput, PathFollower};
use crate::geometry::{project, CameraModel, HomogPixel, Vec2, Vec3};
use crate::optics::{SpotObservation, Surface};
use crate::path::{build_path, PathCurve};
use crate::trifocal::{h_of, omega_from_image_velocities, TrifocalRig};
use nalgebra::Unit;

/// The same curve seen in both images, aligned sample by sample, with the
/// surface points it was transferred through.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPathPair {
    pub left: PathCurve,
    pub right: PathCurve,
    pub world: Vec<Vec3>,
}

/// Back-projects every left sample through the left camera onto `surface`
/// and projects the hits into the right camera.
pub fn transfer_path(
    left: &PathCurve,
    surface: &Surface,
    cam_l: &CameraModel,
    cam_r: &CameraModel,
    time: f64,
) -> Result<StereoPathPair> {
    let mut world = Vec::with_capacity(left.len());
    let mut right = Vec::with_capacity(left.len());
    for q in left.samples() {
        let ray = cam_l.ray_direction(&HomogPixel::new(q.x, q.y));
        let hit = surface.intersect(&cam_l.center, &Unit::new_normalize(ray), time)?;
        right.push(project(cam_r, &hit)?.xy());
        world.push(hit);
    }
    Ok(StereoPathPair {
        left: left.clone(),
        right: build_path(&right, left.is_closed())?,
        world,
    })
}

/// Direction of the next image velocity: `p_dot` turned by `omega Te`.
pub fn image_advance_velocity(p_dot: &Vec2, omega: f64, te: f64) -> Result<Vec2> {
    let n = p_dot.norm();
    if n <= 1e-12 {
        return Err(Error::ZeroVelocity);
    }
    Ok(advance_direction(&(p_dot / n), omega, te))
}

/// Mirror angular velocity that moves the spot along `speed * v_l` in the
/// left image and `speed * v_r` in the right image.
pub fn hybrid_omega(
    rig: &TrifocalRig,
    obs: &SpotObservation,
    v_l: &Vec2,
    v_r: &Vec2,
    speed: f64,
    sing_eps: f64,
) -> Result<Vec3> {
    let hl = h_of(&rig.f_0l, &obs.p_l, None)?;
    let hr = h_of(&rig.f_0r, &obs.p_r, None)?;
    omega_from_image_velocities(rig, &hl, &hr, &(v_l * speed), &(v_r * speed), sing_eps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridOutput {
    pub omega: Vec3,
    pub left: FollowOutput,
    pub right: FollowOutput,
}

/// Runs both followers on the observed spot and fuses their commands.
///
/// `measured_l` / `measured_r` are the observed image directions of the spot
/// motion; each follower turns its own image direction and the results drive
/// the mirror through [`hybrid_omega`].
#[allow(clippy::too_many_arguments)]
pub fn hybrid_step(
    rig: &TrifocalRig,
    obs: &SpotObservation,
    follower_l: &mut PathFollower,
    follower_r: &mut PathFollower,
    measured_l: Option<Vec2>,
    measured_r: Option<Vec2>,
    speed: f64,
    sing_eps: f64,
) -> Result<HybridOutput> {
    let left = follower_l.step(&obs.p_l.xy(), measured_l, speed)?;
    let right = follower_r.step(&obs.p_r.xy(), measured_r, speed)?;
    let omega = hybrid_omega(rig, obs, &left.direction, &right.direction, speed, sing_eps)?;
    Ok(HybridOutput { omega, left, right })
}

/// Distance from `p` to the polyline through `points`.
pub fn distance_to_polyline(p: &Vec3, points: &[Vec3], closed: bool) -> f64 {
    let n = points.len();
    let segs = if closed { n } else { n.saturating_sub(1) };
    let mut best = f64::INFINITY;
    for j in 0..segs {
        let (a, b) = (points[j], points[(j + 1) % n]);
        let ab = b - a;
        let t = ((p - a).dot(&ab) / ab.norm_squared().max(1e-300)).clamp(0.0, 1.0);
        best = best.min((p - (a + ab * t)).norm());
    }
    best
}
