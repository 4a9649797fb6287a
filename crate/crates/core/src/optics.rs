//! Scene model: target surfaces, the laser spot, mirror kinematics and the
//! stereo observation of the spot.

use std::io::Read;
use std::path::Path;

use nalgebra::{Matrix2, Matrix2x3, Unit, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{project, BeamDirection, CameraModel, HomogPixel, Vec3};

/// Regular or irregular grid of heights `z = h(x, y)`, bilinear in each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major, `z[j * xs.len() + i]` is the height at `(xs[i], ys[j])`.
    z: Vec<f64>,
    z_min: f64,
    z_max: f64,
}

impl Heightfield {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::invalid("heightfield", "grid needs at least 2x2 nodes"));
        }
        if z.len() != xs.len() * ys.len() {
            return Err(Error::invalid("heightfield", "grid is not rectangular"));
        }
        for axis in [&xs, &ys] {
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid("heightfield", "grid axes must be strictly increasing"));
            }
        }
        if z.iter().chain(&xs).chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("heightfield", "non-finite value"));
        }
        let z_min = z.iter().copied().fold(f64::INFINITY, f64::min);
        let z_max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { xs, ys, z, z_min, z_max })
    }

    pub fn from_fn(xs: Vec<f64>, ys: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut z = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                z.push(f(x, y));
            }
        }
        Self::new(xs, ys, z)
    }

    /// Reads `x,y,z` rows (any order) covering a full rectangular grid. Lines
    /// starting with `#` are skipped.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut pts = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::invalid(
                    "heightfield",
                    format!("record {} has {} fields, expected x,y,z", line + 1, rec.len()),
                ));
            }
            let mut v = [0.0; 3];
            for (k, field) in rec.iter().enumerate() {
                v[k] = field.parse().map_err(|_| {
                    Error::invalid("heightfield", format!("record {}: bad number {field:?}", line + 1))
                })?;
            }
            pts.push(v);
        }
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        for axis in [&mut xs, &mut ys] {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        if xs.len() * ys.len() != pts.len() {
            return Err(Error::invalid("heightfield", "points do not form a rectangular grid"));
        }
        let mut z = vec![f64::NAN; pts.len()];
        for p in &pts {
            let i = xs.binary_search_by(|v| v.total_cmp(&p[0])).expect("present");
            let j = ys.binary_search_by(|v| v.total_cmp(&p[1])).expect("present");
            z[j * xs.len() + i] = p[2];
        }
        if z.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("heightfield", "duplicate grid node"));
        }
        Self::new(xs, ys, z)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(file)
    }

    fn cell(axis: &[f64], v: f64) -> (usize, f64) {
        let n = axis.len();
        let i = match axis.binary_search_by(|a| a.total_cmp(&v)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let r = ((v - axis[i]) / (axis[i + 1] - axis[i])).clamp(0.0, 1.0);
        (i, r)
    }

    /// Bilinear height; positions outside the grid are clamped to its border.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let (i, rx) = Self::cell(&self.xs, x);
        let (j, ry) = Self::cell(&self.ys, y);
        let nx = self.xs.len();
        let z00 = self.z[j * nx + i];
        let z10 = self.z[j * nx + i + 1];
        let z01 = self.z[(j + 1) * nx + i];
        let z11 = self.z[(j + 1) * nx + i + 1];
        (z00 * (1.0 - rx) + z10 * rx) * (1.0 - ry) + (z01 * (1.0 - rx) + z11 * rx) * ry
    }

    fn min_spacing(&self) -> f64 {
        self.xs
            .windows(2)
            .chain(self.ys.windows(2))
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    fn intersect(&self, o: &Vec3, u: &Vec3) -> Result<Vec3> {
        let bounds = [
            (o.x, u.x, self.xs[0], *self.xs.last().unwrap()),
            (o.y, u.y, self.ys[0], *self.ys.last().unwrap()),
            (o.z, u.z, self.z_min, self.z_max),
        ];
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for (p, d, lo, hi) in bounds {
            if d.abs() < 1e-15 {
                if p < lo || p > hi {
                    return Err(Error::NoHit);
                }
            } else {
                let (a, b) = ((lo - p) / d, (hi - p) / d);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if !(t1 >= t0) || !t1.is_finite() {
            return Err(Error::NoHit);
        }
        let g = |t: f64| {
            let p = o + u * t;
            p.z - self.height(p.x, p.y)
        };
        let horiz = (u.x * u.x + u.y * u.y).sqrt();
        let step = if horiz > 1e-12 {
            (self.min_spacing() / (4.0 * horiz)).min((t1 - t0) / 16.0)
        } else {
            (t1 - t0) / 16.0
        };
        let n = (((t1 - t0) / step.max(1e-300)).ceil() as usize).clamp(1, 1_000_000);
        let h = (t1 - t0) / n as f64;
        let mut a = t0;
        let mut ga = g(a);
        if ga == 0.0 && a > 0.0 {
            return Ok(o + u * a);
        }
        for k in 1..=n {
            let b = t0 + h * k as f64;
            let gb = g(b);
            if gb == 0.0 {
                return Ok(o + u * b);
            }
            if ga.signum() != gb.signum() {
                let (mut lo, mut hi, mut glo) = (a, b, ga);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let gm = g(mid);
                    if gm.signum() == glo.signum() {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                        break;
                    }
                }
                return Ok(o + u * (0.5 * (lo + hi)));
            }
            a = b;
            ga = gb;
        }
        Err(Error::NoHit)
    }
}

/// Target surfaces hit by the laser.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    Plane { point: Vec3, normal: Unit<Vec3> },
    Sphere { center: Vec3, radius: f64 },
    Heightfield(Heightfield),
    /// `base` uniformly scaled about `anchor` by
    /// `1 + (amplitude - 1) (1 - cos(2 pi t / period)) / 2`, which sweeps
    /// `[1, amplitude]` once per period.
    TimeVarying {
        base: Box<Surface>,
        amplitude: f64,
        period: f64,
        anchor: Vec3,
    },
}

impl Surface {
    pub fn plane(point: Vec3, normal: Vec3) -> Result<Self> {
        if normal.norm() < 1e-12 {
            return Err(Error::invalid("normal", "must be non-zero"));
        }
        Ok(Surface::Plane {
            point,
            normal: Unit::new_normalize(normal),
        })
    }

    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid("radius", "must be positive"));
        }
        Ok(Surface::Sphere { center, radius })
    }

    /// Wraps `base` in a scaling law. The default anchor of a sphere is its pole
    /// facing `-z` (toward the rig).
    pub fn time_varying(base: Surface, amplitude: f64, period: f64, anchor: Option<Vec3>) -> Result<Self> {
        if !(amplitude >= 1.0) || !amplitude.is_finite() {
            return Err(Error::invalid("amplitude", "must be >= 1"));
        }
        if !(period > 0.0) {
            return Err(Error::invalid("period", "must be positive"));
        }
        let anchor = match (anchor, &base) {
            (Some(a), _) => a,
            (None, Surface::Sphere { center, radius }) => center - Vec3::z() * *radius,
            (None, Surface::Plane { point, .. }) => *point,
            (None, _) => Vec3::zeros(),
        };
        Ok(Surface::TimeVarying {
            base: Box::new(base),
            amplitude,
            period,
            anchor,
        })
    }

    /// Scale factor of the time-varying law at `time` (1 for static surfaces).
    pub fn scale_at(&self, time: f64) -> f64 {
        match self {
            Surface::TimeVarying { amplitude, period, .. } => {
                let phase = 2.0 * std::f64::consts::PI * time / period;
                1.0 + (amplitude - 1.0) * 0.5 * (1.0 - phase.cos())
            }
            _ => 1.0,
        }
    }

    /// Signed distance-like residual; zero on the surface.
    pub fn residual(&self, p: &Vec3, time: f64) -> f64 {
        match self {
            Surface::Plane { point, normal } => normal.dot(&(p - point)),
            Surface::Sphere { center, radius } => (p - center).norm() - radius,
            Surface::Heightfield(hf) => p.z - hf.height(p.x, p.y),
            Surface::TimeVarying { base, anchor, .. } => {
                let s = self.scale_at(time);
                s * base.residual(&(anchor + (p - anchor) / s), time)
            }
        }
    }

    /// Nearest hit with positive ray parameter along the unit direction `dir`.
    pub fn intersect(&self, origin: &Vec3, dir: &BeamDirection, time: f64) -> Result<Vec3> {
        let u = dir.into_inner();
        match self {
            Surface::Plane { point, normal } => {
                let denom = normal.dot(&u);
                if denom.abs() < 1e-15 {
                    return Err(Error::NoHit);
                }
                let t = normal.dot(&(point - origin)) / denom;
                if t <= 0.0 {
                    return Err(Error::NoHit);
                }
                Ok(origin + u * t)
            }
            Surface::Sphere { center, radius } => {
                let oc = origin - center;
                let b = u.dot(&oc);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return Err(Error::NoHit);
                }
                let sq = disc.sqrt();
                let t = if -b - sq > 0.0 {
                    -b - sq
                } else if -b + sq > 0.0 {
                    -b + sq
                } else {
                    return Err(Error::NoHit);
                };
                Ok(origin + u * t)
            }
            Surface::Heightfield(hf) => hf.intersect(origin, &u),
            Surface::TimeVarying { base, anchor, .. } => {
                let s = self.scale_at(time);
                let o = anchor + (origin - anchor) / s;
                let hit = base.intersect(&o, dir, time)?;
                Ok(anchor + (hit - anchor) * s)
            }
        }
    }
}

/// Nearest hit of the ray on `surface`.
pub fn intersect(surface: &Surface, origin: &Vec3, dir: &BeamDirection, time: f64) -> Result<Vec3> {
    surface.intersect(origin, dir, time)
}

/// Mirror pivot and current beam direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorState {
    pub pivot: Vec3,
    pub z0: BeamDirection,
}

impl MirrorState {
    pub fn new(pivot: Vec3, z0: Vec3) -> Result<Self> {
        if z0.norm() < 1e-12 {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            pivot,
            z0: Unit::new_normalize(z0),
        })
    }

    /// Beam pointing from the pivot at `target`.
    pub fn aimed_at(pivot: Vec3, target: &Vec3) -> Result<Self> {
        Self::new(pivot, target - pivot)
    }
}

/// One explicit Euler step of `z0' = omega x z0`, renormalized.
pub fn mirror_step(state: &MirrorState, omega: &Vec3, dt: f64) -> MirrorState {
    let z = state.z0.into_inner();
    MirrorState {
        pivot: state.pivot,
        z0: Unit::new_normalize(z + omega.cross(&z) * dt),
    }
}

/// The spot in the world and in both images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotObservation {
    pub world: Vec3,
    pub p_l: HomogPixel,
    pub p_r: HomogPixel,
    pub noise_sigma: f64,
}

/// Casts the beam, projects the spot into both cameras and adds independent
/// Gaussian pixel noise (no random draws when `noise_sigma == 0`).
pub fn observe_spot<R: Rng + ?Sized>(
    surface: &Surface,
    mirror: &MirrorState,
    cam_l: &CameraModel,
    cam_r: &CameraModel,
    noise_sigma: f64,
    time: f64,
    rng: &mut R,
) -> Result<SpotObservation> {
    let world = surface.intersect(&mirror.pivot, &mirror.z0, time)?;
    let mut p_l = project(cam_l, &world)?;
    let mut p_r = project(cam_r, &world)?;
    if noise_sigma > 0.0 {
        let n = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
        p_l.x += n.sample(rng);
        p_l.y += n.sample(rng);
        p_r.x += n.sample(rng);
        p_r.y += n.sample(rng);
    }
    Ok(SpotObservation {
        world,
        p_l,
        p_r,
        noise_sigma,
    })
}

/// Two orthonormal axes spanning the plane orthogonal to `z`.
pub fn tangent_axes(z: &Vec3) -> (Vec3, Vec3) {
    let z = z.normalize();
    let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let a1 = helper.cross(&z).normalize();
    let a2 = z.cross(&a1);
    (a1, a2)
}

/// Inverse differential map of the mirror: joint rates from the beam angular
/// velocity, plus symmetric joint limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorModel {
    pub d_inv: Matrix2x3<f64>,
    pub joint_limit: f64,
}

impl MirrorModel {
    pub fn new(d_inv: Matrix2x3<f64>, joint_limit: f64) -> Result<Self> {
        let sv = d_inv.singular_values();
        if sv.min() <= 1e-12 * sv.max().max(1e-300) {
            return Err(Error::invalid("d_inv", "must have full row rank"));
        }
        if !(joint_limit > 0.0) {
            return Err(Error::invalid("joint_limit", "must be positive"));
        }
        Ok(Self { d_inv, joint_limit })
    }

    /// Rows are the tangent axes of the nominal beam, so spin about the beam
    /// maps to zero joint motion.
    pub fn default_for(nominal_z0: &Vec3, joint_limit: f64) -> Result<Self> {
        let (a1, a2) = tangent_axes(nominal_z0);
        Self::new(Matrix2x3::from_rows(&[a1.transpose(), a2.transpose()]), joint_limit)
    }

    /// Advances the joint angles by one step and enforces the limits.
    pub fn integrate(&self, q: &Vector2<f64>, omega: &Vec3, dt: f64) -> Result<Vector2<f64>> {
        let next = q + joint_rates(self, omega) * dt;
        for (joint, value) in next.iter().enumerate() {
            if value.abs() > self.joint_limit {
                return Err(Error::JointLimit { joint, value: *value });
            }
        }
        Ok(next)
    }
}

/// `q_dot = D_inv omega`.
pub fn joint_rates(model: &MirrorModel, omega: &Vec3) -> Vector2<f64> {
    model.d_inv * omega
}

/// Pixel Jacobian of the spot in `cam` with respect to small beam rotations
/// about the two tangent axes of the current beam, by central differences.
pub fn image_jacobian(
    surface: &Surface,
    mirror: &MirrorState,
    cam: &CameraModel,
    time: f64,
) -> Result<(Matrix2<f64>, [Vec3; 2])> {
    const DELTA: f64 = 1e-6;
    let (a1, a2) = tangent_axes(&mirror.z0);
    let mut jac = Matrix2::zeros();
    for (col, axis) in [a1, a2].iter().enumerate() {
        let plus = mirror_step(mirror, &(axis * DELTA), 1.0);
        let minus = mirror_step(mirror, &(axis * -DELTA), 1.0);
        let pp = project(cam, &surface.intersect(&plus.pivot, &plus.z0, time)?)?;
        let pm = project(cam, &surface.intersect(&minus.pivot, &minus.z0, time)?)?;
        jac.set_column(col, &((pp.xy() - pm.xy()) / (2.0 * DELTA)));
    }
    Ok((jac, [a1, a2]))
}

/// Beam angular velocity (orthogonal to the beam) that moves the spot in `cam`
/// with pixel velocity `pixel_velocity` to first order.
pub fn omega_for_pixel_velocity(
    surface: &Surface,
    mirror: &MirrorState,
    cam: &CameraModel,
    time: f64,
    pixel_velocity: &Vector2<f64>,
) -> Result<Vec3> {
    let (jac, [a1, a2]) = image_jacobian(surface, mirror, cam, time)?;
    let w = jac.lu().solve(pixel_velocity).ok_or(Error::Degenerate)?;
    Ok(a1 * w.x + a2 * w.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{epipolar_residual, fundamental_between, triangulate_direction, Intrinsics, Mat3};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rig() -> (CameraModel, CameraModel) {
        let k = Intrinsics::new(900.0, 900.0, 320.0, 240.0);
        (
            CameraModel::new(k, Mat3::identity(), Vec3::new(-40.0, 35.0, -20.0)).unwrap(),
            CameraModel::new(k, Mat3::identity(), Vec3::new(40.0, 35.0, -20.0)).unwrap(),
        )
    }

    fn down() -> BeamDirection {
        Unit::new_normalize(Vec3::new(0.0, 0.0, -1.0))
    }

    #[test]
    fn plane_and_sphere_hits() {
        let plane = Surface::plane(Vec3::zeros(), Vec3::z()).unwrap();
        let hit = plane.intersect(&Vec3::new(0.0, 0.0, 100.0), &down(), 0.0).unwrap();
        assert_eq!(hit, Vec3::zeros());

        let sphere = Surface::sphere(Vec3::zeros(), 10.0).unwrap();
        let hit = sphere.intersect(&Vec3::new(0.0, 0.0, 100.0), &down(), 0.0).unwrap();
        assert_eq!(hit, Vec3::new(0.0, 0.0, 10.0));
        let up = Unit::new_normalize(Vec3::z());
        assert_eq!(sphere.intersect(&Vec3::new(0.0, 0.0, 100.0), &up, 0.0), Err(Error::NoHit));
    }

    #[test]
    fn sphere_tangent_boundary() {
        let sphere = Surface::sphere(Vec3::zeros(), 10.0).unwrap();
        let hit = sphere.intersect(&Vec3::new(10.0, 0.0, 100.0), &down(), 0.0).unwrap();
        assert_eq!(hit, Vec3::new(10.0, 0.0, 0.0));
        let miss = sphere.intersect(&Vec3::new(10.0 + 1e-9, 0.0, 100.0), &down(), 0.0);
        assert_eq!(miss, Err(Error::NoHit));
    }

    #[test]
    fn heightfield_hits_lie_on_surface() {
        let xs: Vec<f64> = (0..=40).map(|i| -50.0 + 2.5 * i as f64).collect();
        let ys = xs.clone();
        let hf = Heightfield::from_fn(xs, ys, |x, y| 120.0 + 5.0 * (x / 15.0).sin() * (y / 20.0).cos()).unwrap();
        let surface = Surface::Heightfield(hf);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let target = Vec3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), 120.0);
            let dir = Unit::new_normalize(target);
            let p = surface.intersect(&Vec3::zeros(), &dir, 0.0).unwrap();
            assert!(surface.residual(&p, 0.0).abs() <= 1e-9);
            assert!((p.normalize() - dir.into_inner()).norm() < 1e-12);
        }
        let away = Unit::new_normalize(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(surface.intersect(&Vec3::zeros(), &away, 0.0), Err(Error::NoHit));
    }

    #[test]
    fn heightfield_csv_round_trip() {
        let text = "# x,y,z\n0,0,1\n1,0,2\n0,1,3\n1,1,4\n";
        let hf = Heightfield::from_csv(text.as_bytes()).unwrap();
        assert_abs_diff_eq!(hf.height(0.5, 0.5), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hf.height(1.0, 0.0), 2.0, epsilon = 1e-15);
        assert!(Heightfield::from_csv("0,0,1\n1,0,2\n0,1,3\n".as_bytes()).is_err());
    }

    #[test]
    fn time_varying_scale_law() {
        let base = Surface::sphere(Vec3::new(0.0, 35.0, 150.0), 40.0).unwrap();
        let tv = Surface::time_varying(base, 8.0, 10.0, None).unwrap();
        assert_eq!(tv.scale_at(0.0), 1.0);
        assert_abs_diff_eq!(tv.scale_at(5.0), 8.0, epsilon = 1e-12);
        for k in 0..100 {
            let s = tv.scale_at(k as f64 * 0.37);
            assert!((1.0..=8.0).contains(&s));
        }
        let dir = Unit::new_normalize(Vec3::new(0.1, 35.0, 110.0));
        for t in [0.0, 1.3, 5.0, 7.7] {
            let p = tv.intersect(&Vec3::zeros(), &dir, t).unwrap();
            assert!(tv.residual(&p, t).abs() <= 1e-9);
            assert!((p.normalize() - dir.into_inner()).norm() < 1e-12);
        }
        // at the largest scale the radius is 320 about the front pole
        let p = tv.intersect(&Vec3::new(0.0, 35.0, 0.0), &Unit::new_normalize(Vec3::z()), 5.0).unwrap();
        assert_abs_diff_eq!(p.z, 110.0, epsilon = 1e-9);
    }

    #[test]
    fn mirror_step_examples() {
        let s = MirrorState::new(Vec3::zeros(), Vec3::z()).unwrap();
        assert_eq!(mirror_step(&s, &Vec3::zeros(), 0.01), s);
        let next = mirror_step(&s, &Vec3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0), 1.0);
        assert_abs_diff_eq!(next.z0.x, 0.8436, epsilon = 1e-4);
        assert_abs_diff_eq!(next.z0.z, 0.5370, epsilon = 1e-4);
        assert_eq!(next.z0.y, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut st = s;
        for _ in 0..100_000 {
            let w = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            st = mirror_step(&st, &w, 0.002);
            assert!((st.z0.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn observation_consistency() {
        let (cl, cr) = rig();
        let sphere = Surface::sphere(Vec3::new(0.0, 35.0, 150.0), 40.0).unwrap();
        let mirror = MirrorState::aimed_at(Vec3::zeros(), &Vec3::new(5.0, 40.0, 110.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = observe_spot(&sphere, &mirror, &cl, &cr, 0.0, 0.0, &mut rng).unwrap();
        let f_lr = fundamental_between(&cr, &cl).unwrap();
        assert!(epipolar_residual(&f_lr, &obs.p_l, &obs.p_r).abs() <= 1e-9);
        let z = triangulate_direction(&obs.p_l, &obs.p_r, &cl, &cr, &mirror.pivot).unwrap();
        assert!(crate::geometry::angle_between(&z, &mirror.z0) <= 1e-8);

        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            observe_spot(&sphere, &mirror, &cl, &cr, 0.5, 0.0, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));

        let behind = Surface::plane(Vec3::new(0.0, 0.0, -50.0), Vec3::z()).unwrap();
        let back = MirrorState::new(Vec3::zeros(), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(matches!(
            observe_spot(&behind, &back, &cl, &cr, 0.0, 0.0, &mut rng),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn joint_rate_examples() {
        let model = MirrorModel::default_for(&Vec3::z(), 1.0).unwrap();
        assert_eq!(joint_rates(&model, &Vec3::zeros()), Vector2::zeros());
        let spin = joint_rates(&model, &(Vec3::z() * 3.0));
        assert!(spin.norm() <= 1e-15);

        let proj = MirrorModel::new(Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0), 1.0).unwrap();
        assert_eq!(joint_rates(&proj, &Vec3::new(2.0, -3.0, 7.0)), Vector2::new(2.0, -3.0));
        assert!(MirrorModel::new(Matrix2x3::new(1.0, 0.0, 0.0, 2.0, 0.0, 0.0), 1.0).is_err());

        let q = proj.integrate(&Vector2::zeros(), &Vec3::new(0.5, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(q, Vector2::new(0.5, 0.0));
        assert!(matches!(
            proj.integrate(&q, &Vec3::new(0.6, 0.0, 0.0), 1.0),
            Err(Error::JointLimit { joint: 0, .. })
        ));
    }

    #[test]
    fn pixel_velocity_inverse() {
        let (cl, _) = rig();
        let sphere = Surface::sphere(Vec3::new(0.0, 35.0, 150.0), 40.0).unwrap();
        let mirror = MirrorState::aimed_at(Vec3::zeros(), &Vec3::new(5.0, 40.0, 110.0)).unwrap();
        let want = Vector2::new(100.0, -30.0);
        let omega = omega_for_pixel_velocity(&sphere, &mirror, &cl, 0.0, &want).unwrap();
        assert!(omega.dot(&mirror.z0).abs() < 1e-12);
        let dt = 1e-5;
        let p0 = project(&cl, &sphere.intersect(&mirror.pivot, &mirror.z0, 0.0).unwrap()).unwrap();
        let next = mirror_step(&mirror, &omega, dt);
        let p1 = project(&cl, &sphere.intersect(&next.pivot, &next.z0, 0.0).unwrap()).unwrap();
        let got = (p1.xy() - p0.xy()) / dt;
        assert!((got - want).norm() < 1e-3 * want.norm());
    }
}
