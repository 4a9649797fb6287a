use beamsteer_core::config::{ControllerKind, ScenarioConfig, SurfaceConfig};
use beamsteer_core::follow::{advance_direction, follow_law, project_global, FollowGains, FollowMemory, LateralRate};
use beamsteer_core::geometry::{
    epipolar_distance, fundamental_between, project, triangulate, CameraModel, HomogPixel, Intrinsics, Mat3, Vec2, Vec3,
};
use beamsteer_core::hybrid::transfer_path;
use beamsteer_core::metrics::{mean, rms, std_pop};
use beamsteer_core::optics::Surface;
use beamsteer_core::path::{build_path, shapes};
use beamsteer_core::sim::run;
use nalgebra::Rotation3;
use nalgebra::Unit;
use proptest::prelude::*;

fn camera(f: f64, center: Vec3, yaw: f64) -> CameraModel {
    let r: Mat3 = Rotation3::from_euler_angles(0.0, yaw, 0.0).into_inner();
    CameraModel::new(Intrinsics::new(f, f, 320.0, 240.0), r, center).unwrap()
}

proptest! {
    #[test]
    fn rms_splits_into_mean_and_spread(xs in prop::collection::vec(-1e3..1e3f64, 2..200)) {
        let (m, s, r) = (mean(&xs).unwrap(), std_pop(&xs).unwrap(), rms(&xs).unwrap());
        prop_assert!((r * r - (m * m + s * s)).abs() <= 1e-9 * (r * r).max(1.0));
    }

    #[test]
    fn stereo_pairs_satisfy_the_epipolar_constraint(
        f in 400.0..2000.0f64,
        base in 20.0..120.0f64,
        yaw in -0.2..0.2f64,
        x in -60.0..60.0f64,
        y in -40.0..80.0f64,
        z in 80.0..400.0f64,
    ) {
        let cl = camera(f, Vec3::new(-base / 2.0, 35.0, -20.0), yaw);
        let cr = camera(f, Vec3::new(base / 2.0, 35.0, -20.0), -yaw);
        let w = Vec3::new(x, y, z);
        let (pl, pr) = (project(&cl, &w).unwrap(), project(&cr, &w).unwrap());
        let f_lr = fundamental_between(&cl, &cr).unwrap();
        prop_assert!(epipolar_distance(&f_lr, &pr, &pl) < 1e-6);
        let tri = triangulate(&pl, &pr, &cl, &cr).unwrap();
        prop_assert!((tri.point - w).norm() < 1e-6 * z);
        prop_assert!(tri.gap < 1e-6 * z);
    }

    #[test]
    fn direction_update_stays_unit(theta in -3.2..3.2f64, omega in -50.0..50.0f64, te in 1e-4..0.1f64) {
        let v = Vec2::new(theta.cos(), theta.sin());
        let w = advance_direction(&v, omega, te);
        prop_assert!((w.norm() - 1.0).abs() < 1e-12);
        let turn = v.perp(&w).atan2(v.dot(&w));
        prop_assert!((turn - (omega * te).atan()).abs() < 1e-12);
    }

    #[test]
    fn command_does_not_depend_on_sampling_density(
        n in 3usize..400,
        factor in 2usize..6,
        angle in 0.0..std::f64::consts::TAU,
        along in 0.05..0.95f64,
        offset in -5.0..5.0f64,
        heading in -0.6..0.6f64,
    ) {
        let from = Vec2::new(100.0, 200.0);
        let to = from + Vec2::new(angle.cos(), angle.sin()) * 300.0;
        let coarse = build_path(&shapes::line(n, from, to), false).unwrap();
        let fine = build_path(&shapes::line(n * factor, from, to), false).unwrap();
        let tangent = (to - from).normalize();
        let spot = from + (to - from) * along + Vec2::new(-tangent.y, tangent.x) * offset;
        let dir = advance_direction(&tangent, heading, 1.0);
        let (a, b) = (law_omega(&coarse, &spot, &dir), law_omega(&fine, &spot, &dir));
        prop_assert!((a - b).abs() <= 1e-3 * a.abs().max(b.abs()).max(1e-6), "{} vs {}", a, b);
    }

    #[test]
    fn rays_hit_the_sphere_on_its_surface(dx in -0.15..0.15f64, dy in -0.15..0.15f64, t in 0.0..10.0f64) {
        let s = Surface::sphere(Vec3::new(0.0, 35.0, 150.0), 40.0).unwrap();
        let dir = Unit::new_normalize(Vec3::new(dx, 35.0 / 150.0 + dy, 1.0));
        let hit = s.intersect(&Vec3::zeros(), &dir, t).unwrap();
        prop_assert!(s.residual(&hit, t).abs() < 1e-9);
        prop_assert!((hit - Vec3::new(0.0, 35.0, 150.0)).norm() - 40.0 < 1e-9);
        prop_assert!(hit.normalize().dot(&dir) > 1.0 - 1e-12);
    }
}

#[test]
fn transferred_path_is_a_stereo_pair() {
    let cl = camera(900.0, Vec3::new(-40.0, 35.0, -20.0), 0.0);
    let cr = camera(900.0, Vec3::new(40.0, 35.0, -20.0), 0.0);
    let sphere = Surface::sphere(Vec3::new(0.0, 35.0, 150.0), 40.0).unwrap();
    let left = build_path(&shapes::spiral(400, Vec2::new(532.0, 240.0), 5.0, 80.0, 2.5), false).unwrap();
    let pair = transfer_path(&left, &sphere, &cl, &cr, 0.0).unwrap();
    let f_lr = fundamental_between(&cl, &cr).unwrap();
    for ((l, r), w) in left.samples().iter().zip(pair.right.samples()).zip(&pair.world) {
        let (pl, pr) = (HomogPixel::new(l.x, l.y), HomogPixel::new(r.x, r.y));
        assert!(epipolar_distance(&f_lr, &pr, &pl) < 1e-6);
        assert!(sphere.residual(w, 0.0).abs() < 1e-9);
        assert!((triangulate(&pl, &pr, &cl, &cr).unwrap().point - w).norm() < 1e-6);
    }
}

fn law_omega(path: &beamsteer_core::path::PathCurve, spot: &Vec2, dir: &Vec2) -> f64 {
    let gains = FollowGains::new(1.0, 1.0, 1.0 / 500.0, 16, LateralRate::Model).unwrap();
    let memory = FollowMemory { s: 0.0, s_dot: 0.0, d: None };
    let proj = project_global(spot, path).unwrap();
    follow_law(&proj, dir, &gains, 100.0, &memory).unwrap().omega
}

/// On a curve the command converges to the one computed from the exact
/// Frenet state as the sampling gets denser.
#[test]
fn command_converges_with_sampling_density_on_a_circle() {
    let (c, r, v) = (Vec2::new(320.0, 240.0), 100.0, 100.0);
    let gains = FollowGains::new(1.0, 1.0, 1.0 / 500.0, 16, LateralRate::Model).unwrap();
    let memory = FollowMemory { s: 0.0, s_dot: 0.0, d: None };
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let states: Vec<(f64, f64, f64)> = (0..2000)
        .map(|k| {
            let angle = std::f64::consts::TAU * (k as f64 * golden).fract();
            (angle, 2.0 * ((k % 5) as f64 - 2.0), 0.05 * ((k % 7) as f64 - 3.0))
        })
        .collect();
    let rms_error = |n: usize| {
        let path = build_path(&shapes::circle(n, c, r), true).unwrap();
        let mut errors = Vec::with_capacity(states.len());
        for &(angle, offset, heading) in &states {
            let radial = Vec2::new(angle.cos(), angle.sin());
            let tangent = Vec2::new(-radial.y, radial.x);
            let spot = c + radial * (r - offset);
            let dir = advance_direction(&tangent, heading, 1.0);
            let mut exact = project_global(&spot, &path).unwrap();
            exact.d = offset;
            exact.c = 1.0 / r;
            exact.dcds = 0.0;
            exact.x_s = tangent;
            exact.y_s = -radial;
            let truth = follow_law(&exact, &dir, &gains, v, &memory).unwrap().omega;
            errors.push((law_omega(&path, &spot, &dir) - truth) / truth.abs().max(1.0));
        }
        rms(&errors).unwrap()
    };
    let errors: Vec<f64> = [500, 1000, 2000, 4000].iter().map(|&n| rms_error(n)).collect();
    for pair in errors.windows(2) {
        assert!(pair[1] <= 0.6 * pair[0], "{errors:?}");
    }
}

/// Consecutive spots can only move as far as the beam rotation allows.
fn assert_kinematic_bound(config: &ScenarioConfig) {
    let r = run(config, None).unwrap();
    assert!(r.records.len() > 100);
    let cam = camera(900.0, Vec3::new(-40.0, 35.0, -20.0), 0.0);
    let te = config.te();
    for pair in r.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let rate = a.omega.norm().max(b.omega.norm());
        let range = a.world.norm().max(b.world.norm());
        let depth = cam.to_camera(&a.world).z.min(cam.to_camera(&b.world).z);
        let bound = 10.0 * rate * te * range * 900.0 / depth + 1e-9;
        let moved = (b.p_l - a.p_l).norm();
        assert!(moved <= bound, "iteration {}: moved {moved} px, bound {bound}", b.iter);
    }
}

#[test]
fn spot_motion_is_bounded_by_beam_rate() {
    let mut tri = ScenarioConfig::new(ControllerKind::Trifocal);
    tri.trifocal.offset_px = [40.0, -30.0];
    assert_kinematic_bound(&tri);

    let mut path = ScenarioConfig::new(ControllerKind::Path2d);
    path.surface = SurfaceConfig::Plane { point: [0.0, 0.0, 150.0], normal: [0.0, 0.0, 1.0] };
    path.follow.start_offset_px = 5.0;
    path.max_iters = 1500;
    assert_kinematic_bound(&path);

    let mut hybrid = ScenarioConfig::new(ControllerKind::Hybrid3d);
    hybrid.path = beamsteer_core::config::PathSpec::Circle { samples: 600, center: [532.0, 240.0], radius: 60.0 };
    hybrid.max_iters = 1500;
    assert_kinematic_bound(&hybrid);
}

#[test]
fn property_suites_hold_for_other_seeds() {
    for seed in [1, 7, 99] {
        for report in beamsteer_core::checks::run_all(seed) {
            assert!(report.passed(), "seed {seed}: {} worst {:e}", report.name, report.worst);
        }
    }
}
