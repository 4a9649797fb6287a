//! Timing of the per-iteration control computations.

use std::hint::black_box;
use std::time::Instant;

use crate::follow::{follow_law, FollowGains, FollowMemory};
use crate::geometry::{project, Vec2, Vec3};
use crate::path::{build_path, project_onto_path, shapes};
use crate::trifocal::{control_omega, h_of};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub name: &'static str,
    pub calls: usize,
    /// Median over batches of the mean time per call.
    pub median_ns: f64,
    pub bound_ns: f64,
    /// Published cost of the same computation, when there is one.
    pub reference_ns: Option<f64>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.median_ns < self.bound_ns
    }
}

const BATCHES: usize = 101;

/// Median over batches of the per-call time of `f`, after a warm-up batch.
pub fn measure(calls: usize, mut f: impl FnMut(usize)) -> f64 {
    let per_batch = calls.div_ceil(BATCHES).max(1);
    for i in 0..per_batch {
        f(i);
    }
    let mut means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let start = Instant::now();
            for i in 0..per_batch {
                f(b * per_batch + i);
            }
            start.elapsed().as_nanos() as f64 / per_batch as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    means[BATCHES / 2]
}

/// The mirror rate from the two observed and two desired epipolar normals.
pub fn bench_control_omega(calls: usize) -> BenchReport {
    let config = crate::config::ScenarioConfig::new(crate::config::ControllerKind::Trifocal);
    let rig = config.rig.rig().expect("default rig is valid");
    let states: Vec<_> = (0..64)
        .map(|i| {
            let a = i as f64 * 0.1;
            let world = Vec3::new(10.0 * a.cos(), 35.0 + 10.0 * a.sin(), 115.0);
            let goal = Vec3::new(2.0, 33.0, 112.0);
            let h = |w: &Vec3| {
                (
                    h_of(&rig.f_0l, &project(&rig.cam_l, w).expect("visible"), None).expect("off epipole"),
                    h_of(&rig.f_0r, &project(&rig.cam_r, w).expect("visible"), None).expect("off epipole"),
                )
            };
            (h(&world), h(&goal))
        })
        .collect();
    let median_ns = measure(calls, |i| {
        let ((hl, hr), (hls, hrs)) = &states[i % states.len()];
        let w = control_omega(
            black_box(hl),
            black_box(hr),
            black_box(hls),
            black_box(hrs),
            &Vec3::zeros(),
            &Vec3::zeros(),
            0.5,
            1e-8,
        );
        black_box(w).ok();
    });
    BenchReport {
        name: "control_omega",
        calls,
        median_ns,
        bound_ns: 50_000.0,
        reference_ns: Some(2_000.0),
    }
}

fn long_path() -> crate::path::PathCurve {
    build_path(&shapes::handdrawn(10_000, Vec2::new(60.0, 240.0), 520.0), false).expect("valid curve")
}

/// The path-following law for one image, projection excluded.
pub fn bench_follow_law(calls: usize) -> BenchReport {
    let path = long_path();
    let gains = FollowGains::default();
    let projections: Vec<_> = (0..64)
        .map(|i| {
            let s = path.length() * (i as f64 + 0.5) / 64.0;
            let p = path.point_at(s) + Vec2::new(0.3, -0.2);
            project_onto_path(&p, &path, s, 32).expect("inside the window")
        })
        .collect();
    let memory = FollowMemory {
        s: 0.0,
        s_dot: 100.0,
        d: None,
    };
    let median_ns = measure(calls, |i| {
        let proj = &projections[i % projections.len()];
        let dir = Vec2::new(0.995, 0.0998);
        black_box(follow_law(black_box(proj), &dir, &gains, 100.0, &memory)).ok();
    });
    BenchReport {
        name: "follow_law",
        calls,
        median_ns,
        bound_ns: 50_000.0,
        reference_ns: None,
    }
}

/// Windowed projection (32 spacings) on a 10 000-sample curve.
pub fn bench_projection(calls: usize) -> BenchReport {
    let path = long_path();
    let queries: Vec<(Vec2, f64)> = (0..64)
        .map(|i| {
            let s = path.length() * (i as f64 + 0.5) / 64.0;
            (path.point_at(s) + Vec2::new(0.4, 0.7), s)
        })
        .collect();
    let median_ns = measure(calls, |i| {
        let (p, s) = &queries[i % queries.len()];
        black_box(project_onto_path(black_box(p), &path, *s, 32)).ok();
    });
    BenchReport {
        name: "project_onto_path",
        calls,
        median_ns,
        bound_ns: 200_000.0,
        reference_ns: None,
    }
}

pub fn run_all(calls: usize) -> Vec<BenchReport> {
    vec![bench_control_omega(calls), bench_follow_law(calls), bench_projection(calls)]
}
