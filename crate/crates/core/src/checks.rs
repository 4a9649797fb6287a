//! Randomized property suites behind `beamsteer check`.

use std::time::{Duration, Instant};

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::follow::{frenet_dynamics, to_chained, u1_of, u2_from_omega, FrenetState};
use crate::geometry::{epipolar_residual, fundamental_between, project, CameraModel, Intrinsics, Mat3, Vec2, Vec3};
use crate::path::{build_path, shapes};
use crate::trifocal::{control_omega, h_of, EpipolarNormal, TrifocalRig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: usize,
    /// Largest residual seen.
    pub worst: f64,
    pub tolerance: f64,
    pub elapsed: Duration,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn timed(name: &'static str, cases: usize, tolerance: f64, f: impl FnOnce() -> f64) -> CheckReport {
    let start = Instant::now();
    let worst = f();
    CheckReport {
        name,
        cases,
        worst,
        tolerance,
        elapsed: start.elapsed(),
    }
}

fn random_camera(rng: &mut ChaCha8Rng) -> CameraModel {
    let k = Intrinsics::new(
        rng.random_range(300.0..1500.0),
        rng.random_range(300.0..1500.0),
        rng.random_range(200.0..500.0),
        rng.random_range(150.0..400.0),
    );
    let axis = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let c = Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-60.0..0.0));
    CameraModel::new(k, *Rotation3::from_scaled_axis(axis).matrix(), c).expect("rotation is orthonormal")
}

/// Projections of random points through random rigs satisfy the epipolar
/// constraint of the rig's fundamental matrix.
pub fn geometry_round_trip(rigs: usize, seed: u64) -> CheckReport {
    timed("epipolar round trip", rigs, 1e-9, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut done = 0;
        while done < rigs {
            let (a, b) = (random_camera(&mut rng), random_camera(&mut rng));
            if (a.center - b.center).norm() < 10.0 {
                continue;
            }
            let f = fundamental_between(&b, &a).expect("baseline is non-zero");
            for _ in 0..5 {
                let p = Vec3::new(rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0), rng.random_range(150.0..400.0));
                let (Ok(pa), Ok(pb)) = (project(&a, &p), project(&b, &p)) else {
                    continue;
                };
                worst = worst.max(epipolar_residual(&f, &pa, &pb).abs());
            }
            done += 1;
        }
        worst
    })
}

fn reference_rig() -> TrifocalRig {
    let k = Intrinsics::new(900.0, 900.0, 320.0, 240.0);
    TrifocalRig::new(
        CameraModel::new(k, Mat3::identity(), Vec3::new(-40.0, 35.0, -20.0)).expect("valid camera"),
        CameraModel::new(k, Mat3::identity(), Vec3::new(40.0, 35.0, -20.0)).expect("valid camera"),
        Vec3::zeros(),
    )
    .expect("valid rig")
}

fn random_spot(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.random_range(-40.0..40.0), rng.random_range(5.0..65.0), rng.random_range(100.0..200.0))
}

/// Normals oriented by `h_i . (m_i x z0) > 0`.
fn normals(rig: &TrifocalRig, world: &Vec3) -> (EpipolarNormal, EpipolarNormal) {
    let pl = project(&rig.cam_l, world).expect("in front of the left camera");
    let pr = project(&rig.cam_r, world).expect("in front of the right camera");
    let z0 = world.normalize();
    (
        h_of(&rig.f_0l, &pl, Some((&rig.m_l, &z0))).expect("off the epipole"),
        h_of(&rig.f_0r, &pr, Some((&rig.m_r, &z0))).expect("off the epipole"),
    )
}

/// `u_R x u_L = -(z0 . (m_L x m_R)) z0` with the normals rescaled to
/// `|u_i| = |m_i x z0|`.
pub fn normal_identity(cases: usize, seed: u64) -> CheckReport {
    timed("epipolar normal identity", cases, 1e-9, || {
        let rig = reference_rig();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let world = random_spot(&mut rng);
            let z0 = world.normalize();
            let (hl, hr) = normals(&rig, &world);
            let ul = hl.0 / hl.0.norm() * rig.m_l.cross(&z0).norm();
            let ur = hr.0 / hr.0.norm() * rig.m_r.cross(&z0).norm();
            worst = worst.max((ur.cross(&ul) + z0 * z0.dot(&rig.m_l.cross(&rig.m_r))).norm());
        }
        worst
    })
}

fn rk4(x: &[f64; 3], h: f64, rate: impl Fn(&[f64; 3]) -> [f64; 3]) -> [f64; 3] {
    let add = |x: &[f64; 3], k: &[f64; 3], c: f64| [x[0] + c * k[0], x[1] + c * k[1], x[2] + c * k[2]];
    let k1 = rate(x);
    let k2 = rate(&add(x, &k1, h / 2.0));
    let k3 = rate(&add(x, &k2, h / 2.0));
    let k4 = rate(&add(x, &k3, h));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// One RK4 step of the Frenet kinematics, mapped to chained coordinates,
/// against one RK4 step of `(z1, z2, z3)' = (u1, u1 z3, u2)` driven by the
/// same mirror rate. Reports the gap relative to the step's displacement.
pub fn chained_form_equivalence(cases: usize, seed: u64) -> CheckReport {
    timed("chained form vs Frenet", cases, 1e-6, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        const DT: f64 = 1e-4;
        for _ in 0..cases {
            let (a, b) = (rng.random_range(-0.05..0.05), rng.random_range(-1e-3..1e-3));
            let curv = move |s: f64| a + b * s;
            let (v, omega) = (rng.random_range(10.0..200.0), rng.random_range(-3.0..3.0));
            let x0 = [rng.random_range(0.0..20.0), rng.random_range(-5.0..5.0), rng.random_range(-1.2..1.2)];
            let frenet = |x: &[f64; 3]| -> [f64; 3] {
                let st = FrenetState { s: x[0], d: x[1], theta_e: x[2] };
                let (sd, dd, td) = frenet_dynamics(&st, v, omega, curv(x[0]), b).expect("inside the tube");
                [sd, dd, td]
            };
            let to_z = |x: &[f64; 3]| {
                let z = to_chained(&FrenetState { s: x[0], d: x[1], theta_e: x[2] }, curv(x[0])).expect("in domain");
                [z.z1, z.z2, z.z3]
            };
            let chained = |z: &[f64; 3]| -> [f64; 3] {
                let c = curv(z[0]);
                let st = FrenetState {
                    s: z[0],
                    d: z[1],
                    theta_e: (z[2] / (1.0 - z[1] * c)).atan(),
                };
                let u1 = u1_of(v, st.d, c, st.theta_e).expect("inside the tube");
                let (s_dot, d_dot, _) = frenet_dynamics(&st, v, omega, c, b).expect("inside the tube");
                let u2 = u2_from_omega(omega, &st, c, b, s_dot, d_dot).expect("in domain");
                [u1, u1 * z[2], u2]
            };
            let z0 = to_z(&x0);
            let via_frenet = to_z(&rk4(&x0, DT, frenet));
            let via_chained = rk4(&z0, DT, chained);
            let gap = (0..3).map(|i| (via_frenet[i] - via_chained[i]).powi(2)).sum::<f64>().sqrt();
            let step = (0..3).map(|i| (via_frenet[i] - z0[i]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(gap / step);
        }
        worst
    })
}

/// Three-point curvature of uniformly sampled circles equals `1/R`.
pub fn circle_curvature(cases: usize, seed: u64) -> CheckReport {
    timed("circle curvature oracle", cases, 1e-6, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let r = rng.random_range(20.0..500.0);
            let n = rng.random_range(20..2000);
            let centre = Vec2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let path = build_path(&shapes::circle(n, centre, r), true).expect("distinct samples");
            for q in path.samples() {
                worst = worst.max((q.c - 1.0 / r).abs());
            }
        }
        worst
    })
}

/// The servo command has no component along the beam.
pub fn omega_orthogonality(cases: usize, seed: u64) -> CheckReport {
    timed("mirror rate orthogonal to beam", cases, 1e-12, || {
        let rig = reference_rig();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let world = random_spot(&mut rng);
            let goal = world + Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0);
            let (hl, hr) = normals(&rig, &world);
            let (hls, hrs) = normals(&rig, &goal);
            let w = control_omega(&hl, &hr, &hls, &hrs, &Vec3::zeros(), &Vec3::zeros(), 0.5, 1e-8)
                .expect("away from the baseline plane");
            worst = worst.max(w.dot(&world.normalize()).abs() / w.norm().max(1e-300));
        }
        worst
    })
}

/// All suites with their standard sizes.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    vec![
        geometry_round_trip(1000, seed),
        normal_identity(10_000, seed.wrapping_add(1)),
        chained_form_equivalence(10_000, seed.wrapping_add(2)),
        circle_curvature(200, seed.wrapping_add(3)),
        omega_orthogonality(10_000, seed.wrapping_add(4)),
    ]
}
