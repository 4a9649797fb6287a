//! Projective primitives: homogeneous pixels, pinhole cameras, fundamental
//! matrices and their epipoles, triangulation.
//!
//! Fundamental matrices follow one direction rule everywhere: a matrix built
//! from `src` to `dst` satisfies `p_dst^T F p_src = 0`. The actuated mirror is
//! modelled as a virtual view without intrinsics whose "pixel" is the unit beam
//! direction, so `F_0L` (camera L to the mirror) maps a left pixel to the
//! normal of the epipolar plane that contains the beam.

use nalgebra::{Matrix3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Unit vector from the mirror pivot toward the scene.
pub type BeamDirection = Unit<Vec3>;

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Homogeneous image point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogPixel {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl HomogPixel {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, w: 1.0 }
    }

    pub fn from_vec(v: &Vec3) -> Self {
        Self {
            x: v.x,
            y: v.y,
            w: v.z,
        }
    }

    pub fn to_vec(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.w)
    }

    /// Affine part, only meaningful once normalized.
    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Scales to `w = 1` whenever `|w| > 1e-12`; points at infinity are left
    /// untouched.
    pub fn normalize(&self) -> Self {
        if self.w.abs() > 1e-12 {
            Self {
                x: self.x / self.w,
                y: self.y / self.w,
                w: 1.0,
            }
        } else {
            *self
        }
    }
}

impl From<Vec2> for HomogPixel {
    fn from(p: Vec2) -> Self {
        HomogPixel::new(p.x, p.y)
    }
}

/// Pinhole intrinsics (no skew, no distortion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse(&self) -> Result<Mat3> {
        if self.fx.abs() < 1e-12 || self.fy.abs() < 1e-12 {
            return Err(Error::SingularIntrinsics);
        }
        Ok(Mat3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        ))
    }
}

/// A calibrated pinhole camera.
///
/// `rotation` maps camera axes into the world frame (its columns are the
/// camera axes expressed in world coordinates), `center` is the optical centre
/// in world millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub rotation: Mat3,
    pub center: Vec3,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, rotation: Mat3, center: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        intrinsics.inverse()?;
        Ok(Self {
            intrinsics,
            rotation,
            center,
        })
    }

    /// World-to-camera translation `t`, so that `X_cam = R^T X_world + t`.
    pub fn translation(&self) -> Vec3 {
        -(self.rotation.transpose() * self.center)
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation.transpose() * (world - self.center)
    }

    /// World-frame direction of the ray through `pixel` (not normalized).
    pub fn ray_direction(&self, pixel: &HomogPixel) -> Vec3 {
        let k_inv = self.intrinsics.inverse().expect("validated at construction");
        self.rotation * (k_inv * pixel.normalize().to_vec())
    }
}

pub(crate) fn check_rotation(r: &Mat3) -> Result<()> {
    let ortho = (r * r.transpose() - Mat3::identity()).abs().max();
    if !(ortho <= 1e-10) || (r.determinant() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidRotation);
    }
    Ok(())
}

/// Pinhole projection of a world point; the result has `w = 1`.
pub fn project(cam: &CameraModel, world: &Vec3) -> Result<HomogPixel> {
    let pc = cam.to_camera(world);
    if pc.z <= 0.0 {
        return Err(Error::BehindCamera(pc.z));
    }
    let k = &cam.intrinsics;
    Ok(HomogPixel::new(
        k.fx * pc.x / pc.z + k.cx,
        k.fy * pc.y / pc.z + k.cy,
    ))
}

/// Rank-2 fundamental matrix with unit Frobenius norm and its largest-magnitude
/// entry positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Mat3);

impl FundamentalMatrix {
    /// Normalizes `m` and checks that it has rank at most two.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let norm = m.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::RankDeficient);
        }
        let mut n = m / norm;
        let (mut best, mut best_abs) = (0.0, -1.0);
        for v in n.iter() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = *v;
            }
        }
        if best < 0.0 {
            n = -n;
        }
        let sv = n.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if smin > 1e-9 * smax {
            return Err(Error::NotRankTwo(smin / smax));
        }
        Ok(Self(n))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// The same epipolar geometry with source and destination swapped.
    pub fn transposed(&self) -> Self {
        Self::from_matrix(self.0.transpose()).expect("transpose keeps rank and norm")
    }

    /// `F * v` on raw homogeneous vectors.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> [f64; 3] {
        let mut s: Vec<f64> = self.0.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        [s[0], s[1], s[2]]
    }
}

/// Builds `F = K_dst^-T [t]x R K_src^-1`.
///
/// `r` and `t` map source-camera coordinates into destination-camera
/// coordinates (`X_dst = R X_src + t`), so `t` is the source centre seen from
/// the destination. A view without intrinsics (`None`) is the virtual mirror
/// view; for a camera-to-mirror pair this reduces to `[t]x R K^-1`.
pub fn fundamental_from_poses(
    k_src: Option<&Intrinsics>,
    k_dst: Option<&Intrinsics>,
    r: &Mat3,
    t: &Vec3,
) -> Result<FundamentalMatrix> {
    if t.norm() < 1e-12 {
        return Err(Error::ZeroBaseline);
    }
    check_rotation(r)?;
    let src_inv = match k_src {
        Some(k) => k.inverse()?,
        None => Mat3::identity(),
    };
    let dst_inv_t = match k_dst {
        Some(k) => k.inverse()?.transpose(),
        None => Mat3::identity(),
    };
    FundamentalMatrix::from_matrix(dst_inv_t * skew(t) * r * src_inv)
}

/// Fundamental matrix with `p_dst^T F p_src = 0` between two cameras.
pub fn fundamental_between(src: &CameraModel, dst: &CameraModel) -> Result<FundamentalMatrix> {
    let r = dst.rotation.transpose() * src.rotation;
    let t = dst.rotation.transpose() * (src.center - dst.center);
    fundamental_from_poses(Some(&src.intrinsics), Some(&dst.intrinsics), &r, &t)
}

/// Fundamental matrix from a camera to the virtual mirror view whose centre is
/// `pivot` and whose axes are the world axes: `z0^T F p_cam = 0`.
pub fn fundamental_to_virtual(src: &CameraModel, pivot: &Vec3) -> Result<FundamentalMatrix> {
    fundamental_from_poses(
        Some(&src.intrinsics),
        None,
        &src.rotation,
        &(src.center - pivot),
    )
}

/// Null vector of a fundamental matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epipole(pub HomogPixel);

impl Epipole {
    pub fn to_vec(&self) -> Vec3 {
        self.0.to_vec()
    }
}

/// Right null vector `e` with `F e = 0`: the epipole in the source view.
///
/// Use `epipole_of(&f.transposed())` for the destination-side epipole.
pub fn epipole_of(f: &FundamentalMatrix) -> Result<Epipole> {
    let m = f.matrix();
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let candidates = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("three candidates");
    // rows have unit Frobenius norm in total, so this compares sigma1 * sigma2
    if best.norm() < 1e-10 {
        return Err(Error::RankDeficient);
    }
    let unit = best / best.norm();
    Ok(Epipole(HomogPixel::from_vec(&unit).normalize()))
}

/// Bilinear epipolar form `p_dst^T F p_src` on normalized points.
pub fn epipolar_residual(f: &FundamentalMatrix, p_dst: &HomogPixel, p_src: &HomogPixel) -> f64 {
    p_dst.normalize().to_vec().dot(&(f.matrix() * p_src.normalize().to_vec()))
}

/// Pixel distance from `p_dst` to the epipolar line of `p_src`.
pub fn epipolar_distance(f: &FundamentalMatrix, p_dst: &HomogPixel, p_src: &HomogPixel) -> f64 {
    let line = f.matrix() * p_src.normalize().to_vec();
    let scale = line.xy().norm();
    if scale < 1e-300 {
        return f64::INFINITY;
    }
    epipolar_residual(f, p_dst, p_src).abs() / scale
}

/// Closest-approach triangulation of two viewing rays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    /// Midpoint of the common perpendicular.
    pub point: Vec3,
    /// Length of the common perpendicular (mm).
    pub gap: f64,
}

pub fn triangulate(
    p_l: &HomogPixel,
    p_r: &HomogPixel,
    cam_l: &CameraModel,
    cam_r: &CameraModel,
) -> Result<Triangulation> {
    let d1 = cam_l.ray_direction(p_l);
    let d2 = cam_r.ray_direction(p_r);
    if d1.cross(&d2).norm() <= 1e-10 * d1.norm() * d2.norm() {
        return Err(Error::Degenerate);
    }
    let w0 = cam_l.center - cam_r.center;
    let (a, b, c) = (d1.dot(&d1), d1.dot(&d2), d2.dot(&d2));
    let (d, e) = (d1.dot(&w0), d2.dot(&w0));
    let denom = a * c - b * b;
    let s = (b * e - c * d) / denom;
    let t = (a * e - b * d) / denom;
    let q1 = cam_l.center + d1 * s;
    let q2 = cam_r.center + d2 * t;
    Ok(Triangulation {
        point: (q1 + q2) * 0.5,
        gap: (q1 - q2).norm(),
    })
}

/// Beam direction from `mirror_pivot` toward the triangulated spot.
pub fn triangulate_direction(
    p_l: &HomogPixel,
    p_r: &HomogPixel,
    cam_l: &CameraModel,
    cam_r: &CameraModel,
    mirror_pivot: &Vec3,
) -> Result<BeamDirection> {
    let tri = triangulate(p_l, p_r, cam_l, cam_r)?;
    let dir = tri.point - mirror_pivot;
    if dir.norm() < 1e-12 {
        return Err(Error::Degenerate);
    }
    Ok(Unit::new_normalize(dir))
}

/// Angle between two directions, robust near zero.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn reference_k() -> Intrinsics {
        Intrinsics::new(900.0, 900.0, 320.0, 240.0)
    }

    fn camera_at(center: Vec3) -> CameraModel {
        CameraModel::new(reference_k(), Mat3::identity(), center).unwrap()
    }

    #[test]
    fn skew_matches_definition() {
        let s = skew(&Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(s, Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        let v = Vec3::new(1.0, 2.0, 3.0);
        let w = Vec3::new(4.0, 5.0, 6.0);
        assert_eq!(skew(&v) * w, Vec3::new(-3.0, 6.0, -3.0));
        assert_eq!(skew(&v).transpose(), -skew(&v));
        assert_eq!(skew(&v) * v, Vec3::zeros());
    }

    #[test]
    fn mat3_algebra_against_hand_values() {
        let m = Mat3::new(2.0, 0.0, 1.0, 1.0, 3.0, 0.0, 0.0, 1.0, 4.0);
        assert_abs_diff_eq!(m.determinant(), 25.0, epsilon = 1e-12);
        let id = Mat3::identity();
        assert_eq!(m * id, m);
        assert_eq!(m.transpose()[(0, 1)], 1.0);
        let p = m * m;
        assert_eq!(p[(0, 0)], 4.0);
        assert_eq!(p[(1, 1)], 9.0);
        assert_eq!(p[(2, 2)], 16.0);
    }

    #[test]
    fn homog_normalize() {
        let p = HomogPixel { x: 4.0, y: 2.0, w: 2.0 }.normalize();
        assert_eq!((p.x, p.y, p.w), (2.0, 1.0, 1.0));
        let inf = HomogPixel { x: 1.0, y: 0.0, w: 0.0 }.normalize();
        assert_eq!(inf.w, 0.0);
    }

    #[test]
    fn identity_intrinsics_give_normalized_skew() {
        let k = Intrinsics::new(1.0, 1.0, 0.0, 0.0);
        let f = fundamental_from_poses(Some(&k), None, &Mat3::identity(), &Vec3::new(1.0, 0.0, 0.0))
            .unwrap();
        let expected = skew(&Vec3::new(1.0, 0.0, 0.0)) / 2f64.sqrt();
        // largest-magnitude entry positive: entry (2,1) = +1
        assert_abs_diff_eq!(*f.matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn reference_rig_fundamentals_are_rank_two_and_normalized() {
        for t in [Vec3::new(-40.0, 35.0, -20.0), Vec3::new(40.0, 35.0, -20.0)] {
            let f = fundamental_from_poses(Some(&reference_k()), None, &Mat3::identity(), &t).unwrap();
            let sv = f.singular_values();
            assert!(sv[2] <= 1e-9 * sv[0]);
            assert_abs_diff_eq!(f.matrix().norm(), 1.0, epsilon = 1e-14);
            let largest = f.matrix().iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(largest > 0.0);
            // printed form [t]x K^-1, up to scale
            let raw = skew(&t) * reference_k().inverse().unwrap();
            let scaled = raw / raw.norm();
            let same = (scaled - f.matrix()).norm().min((scaled + f.matrix()).norm());
            assert!(same < 1e-14);
        }
    }

    #[test]
    fn zero_baseline_rejected() {
        let err = fundamental_from_poses(Some(&reference_k()), None, &Mat3::identity(), &Vec3::zeros());
        assert_eq!(err.unwrap_err(), Error::ZeroBaseline);
    }

    #[test]
    fn epipole_equals_k_times_t() {
        // oracle 1: brute-force search for the null direction on a sphere grid,
        // refined by the smallest |F e| among candidates
        let t = Vec3::new(-40.0, 35.0, -20.0);
        let f = fundamental_from_poses(Some(&reference_k()), None, &Mat3::identity(), &t).unwrap();
        let e = epipole_of(&f).unwrap();
        assert_abs_diff_eq!(e.0.x, 2120.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.0.y, -1335.0, epsilon = 1e-9);
        assert_eq!(e.0.w, 1.0);
        assert!(f.apply(&e.to_vec()).norm() <= 1e-8);

        // coarse-to-fine grid search of min |F p|/|p| over finite pixels
        let (mut cx, mut cy, mut half) = (0.0, 0.0, 5000.0);
        for _ in 0..8 {
            let mut best = (f64::INFINITY, cx, cy);
            for i in -100..=100 {
                for j in -100..=100 {
                    let p = Vec3::new(cx + half * i as f64 / 100.0, cy + half * j as f64 / 100.0, 1.0);
                    let r = f.apply(&p).norm() / p.norm();
                    if r < best.0 {
                        best = (r, p.x, p.y);
                    }
                }
            }
            cx = best.1;
            cy = best.2;
            half /= 10.0;
        }
        assert_abs_diff_eq!(cx, e.0.x, epsilon = 1e-3);
        assert_abs_diff_eq!(cy, e.0.y, epsilon = 1e-3);

        let t = Vec3::new(40.0, 35.0, -20.0);
        let f = fundamental_from_poses(Some(&reference_k()), None, &Mat3::identity(), &t).unwrap();
        let e = epipole_of(&f).unwrap();
        assert_abs_diff_eq!(e.0.x, 29600.0 / -20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.0.y, 26700.0 / -20.0, epsilon = 1e-9);
    }

    #[test]
    fn epipole_at_infinity_and_rank_deficiency() {
        let f = FundamentalMatrix::from_matrix(skew(&Vec3::new(1.0, 0.0, 0.0))).unwrap();
        let e = epipole_of(&f).unwrap();
        assert_abs_diff_eq!(e.to_vec().normalize().x.abs(), 1.0, epsilon = 1e-15);
        assert_eq!(e.0.w, 0.0);

        let rank_one = Mat3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 0.0);
        let f = FundamentalMatrix::from_matrix(rank_one).unwrap();
        assert_eq!(epipole_of(&f).unwrap_err(), Error::RankDeficient);
        assert!(matches!(
            FundamentalMatrix::from_matrix(Mat3::identity()),
            Err(Error::NotRankTwo(_))
        ));
    }

    #[test]
    fn project_pinhole() {
        let cam = camera_at(Vec3::zeros());
        let p = project(&cam, &Vec3::new(0.0, 0.0, 37.0)).unwrap();
        assert_eq!((p.x, p.y, p.w), (320.0, 240.0, 1.0));
        let p = project(&cam, &Vec3::new(10.0, 0.0, 100.0)).unwrap();
        assert_abs_diff_eq!(p.x, 410.0, epsilon = 1e-12);
        assert!(matches!(
            project(&cam, &Vec3::new(0.0, 0.0, -5.0)),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn camera_rejects_bad_rotation() {
        let r = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert_eq!(
            CameraModel::new(reference_k(), r, Vec3::zeros()).unwrap_err(),
            Error::InvalidRotation
        );
    }

    #[test]
    fn stereo_residuals() {
        let cam_l = camera_at(Vec3::new(-40.0, 35.0, -20.0));
        let cam_r = camera_at(Vec3::new(40.0, 35.0, -20.0));
        let f_lr = fundamental_between(&cam_r, &cam_l).unwrap();
        let world = Vec3::new(3.0, 30.0, 140.0);
        let pl = project(&cam_l, &world).unwrap();
        let pr = project(&cam_r, &world).unwrap();
        assert!(epipolar_residual(&f_lr, &pl, &pr).abs() <= 1e-9);

        // left epipole of F_LR annihilates every right pixel
        let e_l = epipole_of(&f_lr.transposed()).unwrap();
        for pr in [pr, HomogPixel::new(10.0, 400.0), HomogPixel::new(-3.0, 7.0)] {
            let r = e_l.to_vec().dot(&(f_lr.matrix() * pr.to_vec()));
            assert!(r.abs() <= 1e-9 * e_l.to_vec().norm());
        }

        // move 5 px off the epipolar line
        let line = f_lr.matrix().transpose() * pl.to_vec();
        let normal = line.xy().normalize();
        let off = HomogPixel::new(pr.x + 5.0 * normal.x, pr.y + 5.0 * normal.y);
        let r = epipolar_residual(&f_lr, &pl, &off);
        assert!(r.abs() > 1e-6);
        assert_abs_diff_eq!(epipolar_distance(&f_lr.transposed(), &off, &pl), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn triangulation_recovers_direction() {
        let cam_l = camera_at(Vec3::new(-40.0, 35.0, -20.0));
        let cam_r = camera_at(Vec3::new(40.0, 35.0, -20.0));
        let pivot = Vec3::zeros();
        let world = Vec3::new(-6.0, 41.0, 128.0);
        let pl = project(&cam_l, &world).unwrap();
        let pr = project(&cam_r, &world).unwrap();
        let z0 = triangulate_direction(&pl, &pr, &cam_l, &cam_r, &pivot).unwrap();
        assert!(angle_between(&z0, &world) < 1e-9);

        assert_eq!(
            triangulate_direction(&pl, &pl, &cam_l, &cam_l, &pivot).unwrap_err(),
            Error::Degenerate
        );
    }

    #[test]
    fn triangulation_noise_monte_carlo() {
        let cam_l = camera_at(Vec3::new(-40.0, 35.0, -20.0));
        let cam_r = camera_at(Vec3::new(40.0, 35.0, -20.0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut errors = Vec::with_capacity(1000);
        for _ in 0..1000 {
            // front cap of the reference sphere: centre (0, 35, 150), radius 40
            let (x, y): (f64, f64) = (rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
            let z = 150.0 - (1600.0 - x * x - y * y).sqrt();
            let world = Vec3::new(x, 35.0 + y, z);
            let mut pl = project(&cam_l, &world).unwrap();
            let mut pr = project(&cam_r, &world).unwrap();
            pl.x += noise.sample(&mut rng);
            pl.y += noise.sample(&mut rng);
            pr.x += noise.sample(&mut rng);
            pr.y += noise.sample(&mut rng);
            let z0 = triangulate_direction(&pl, &pr, &cam_l, &cam_r, &Vec3::zeros()).unwrap();
            errors.push(angle_between(&z0, &world));
        }
        errors.sort_by(f64::total_cmp);
        let rms = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
        let p99 = errors[989];
        // a single 4-sigma draw can exceed the bound, so the bound applies to the
        // RMS and the 99th percentile
        assert!(rms < 2e-3, "rms angular error {rms}");
        assert!(p99 < 2e-3, "p99 angular error {p99}, max {}", errors[999]);
        assert!(rms < 1e-3, "rms angular error {rms}");
    }
}
