//! Fixed-step closed-loop simulation.
//!
//! Every iteration observes the spot, runs the selected controller, moves the
//! mirror by one explicit Euler step of length `Te` and advances time. Errors
//! end the run but are kept as data: the offending iteration carries the
//! error tag in its `status` and the result is tagged as failed.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Unit, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ControllerKind, ScenarioConfig, SpeedProfile};
use crate::error::{Error, Result};
use crate::follow::{FollowGains, PathFollower};
use crate::geometry::{project, CameraModel, HomogPixel, Vec2, Vec3};
use crate::hybrid::{distance_to_polyline, hybrid_step, transfer_path, StereoPathPair};
use crate::metrics::{chord_deviation, correlation, exp_fit, mean, rms, std_pop};
use crate::optics::{mirror_step, observe_spot, omega_for_pixel_velocity, MirrorModel, MirrorState, Surface};
use crate::path::{project_onto_path, PathCurve};
use crate::trifocal::{servo_step, ServoGains, ServoTarget, SingularityMonitor, TrifocalRig};

/// State of one iteration. Pixel positions are the noise-free projections of
/// the spot; the controller itself sees the noisy ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub iter: usize,
    pub t: f64,
    pub p_l: Vec2,
    pub p_r: Vec2,
    /// Desired spot (servoing) or foot point on the curve (path following).
    pub target_l: Vec2,
    pub target_r: Vec2,
    pub world: Vec3,
    pub d: f64,
    pub theta_e: f64,
    pub d_r: f64,
    pub theta_r: f64,
    /// Distance of the spot from the 3D curve (hybrid runs).
    pub err3d: f64,
    pub speed: f64,
    pub omega: Vec3,
    pub status: &'static str,
}

impl Record {
    pub fn error_l(&self) -> Vec2 {
        self.p_l - self.target_l
    }

    pub fn error_r(&self) -> Vec2 {
        self.p_r - self.target_r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Converged,
    /// End of an open curve reached.
    Completed,
    MaxIters,
    Failed(Error),
}

impl Outcome {
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::Completed => "completed",
            Outcome::MaxIters => "max_iters",
            Outcome::Failed(e) => e.tag(),
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Outcome::Failed(_))
    }
}

/// Constants of a run that the summary needs besides the records.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunContext {
    /// Bounding-box diagonal of the 3D curve at the start.
    pub bbox3d: Option<f64>,
    /// First iteration at which the true beam lies across the baseline plane.
    pub crossing_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub controller: ControllerKind,
    pub records: Vec<Record>,
    pub outcome: Outcome,
    pub context: RunContext,
    pub summary: BTreeMap<String, f64>,
}

impl ScenarioResult {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    /// `key=value` lines, sorted by key, with the outcome first.
    pub fn summary_report(&self) -> String {
        let mut out = format!("name={}\noutcome={}\n", self.name, self.outcome.tag());
        for (k, v) in &self.summary {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// Multiplies every intrinsic entry and every camera offset from the pivot
/// by `1 + u`, `u ~ U(-eps, eps)`, and rebuilds the fundamental matrices.
pub fn perturb_calibration<R: Rng + ?Sized>(rig: &TrifocalRig, eps: f64, rng: &mut R) -> Result<TrifocalRig> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::invalid("calibration_error", "must lie in [0, 1)"));
    }
    if eps == 0.0 {
        return Ok(*rig);
    }
    let mut jitter = |x: f64| x * (1.0 + rng.random_range(-eps..eps));
    let mut perturb = |cam: &CameraModel| -> Result<CameraModel> {
        let k = cam.intrinsics;
        let k = crate::geometry::Intrinsics::new(jitter(k.fx), jitter(k.fy), jitter(k.cx), jitter(k.cy));
        let off = cam.center - rig.pivot;
        let off = Vec3::new(jitter(off.x), jitter(off.y), jitter(off.z));
        CameraModel::new(k, cam.rotation, rig.pivot + off)
    };
    let (l, r) = (perturb(&rig.cam_l)?, perturb(&rig.cam_r)?);
    TrifocalRig::new(l, r, rig.pivot)
}

const CALIBRATION_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Ground truth shared by every controller.
struct World {
    cam_l: CameraModel,
    cam_r: CameraModel,
    surface: Surface,
    noise: f64,
    te: f64,
}

impl World {
    fn observe(&self, mirror: &MirrorState, t: f64, rng: &mut ChaCha8Rng) -> Result<(crate::optics::SpotObservation, Vec2, Vec2)> {
        let obs = observe_spot(&self.surface, mirror, &self.cam_l, &self.cam_r, self.noise, t, rng)?;
        let tl = project(&self.cam_l, &obs.world)?.xy();
        let tr = project(&self.cam_r, &obs.world)?.xy();
        Ok((obs, tl, tr))
    }

    /// Surface point seen at `pixel` by the left camera.
    fn back_project(&self, pixel: &Vec2, t: f64) -> Result<Vec3> {
        let ray = self.cam_l.ray_direction(&HomogPixel::new(pixel.x, pixel.y));
        self.surface.intersect(&self.cam_l.center, &Unit::new_normalize(ray), t)
    }
}

struct Actuator {
    mirror: MirrorState,
    model: MirrorModel,
    q: Vector2<f64>,
}

impl Actuator {
    fn new(mirror: MirrorState, joint_limit: f64) -> Result<Self> {
        Ok(Self {
            model: MirrorModel::default_for(&mirror.z0, joint_limit)?,
            mirror,
            q: Vector2::zeros(),
        })
    }

    fn apply(&mut self, omega: &Vec3, te: f64) -> Result<()> {
        self.q = self.model.integrate(&self.q, omega, te)?;
        self.mirror = mirror_step(&self.mirror, omega, te);
        Ok(())
    }
}

enum Flow {
    Continue,
    Stop(Outcome),
}

trait Loop {
    fn step(&mut self, k: usize, t: f64, records: &mut Vec<Record>) -> Result<Flow>;
}

fn blank(k: usize, t: f64, p_l: Vec2, p_r: Vec2, world: Vec3) -> Record {
    Record {
        iter: k,
        t,
        p_l,
        p_r,
        target_l: p_l,
        target_r: p_r,
        world,
        d: 0.0,
        theta_e: 0.0,
        d_r: 0.0,
        theta_r: 0.0,
        err3d: 0.0,
        speed: 0.0,
        omega: Vec3::zeros(),
        status: "ok",
    }
}

struct Trifocal {
    world: World,
    rig: TrifocalRig,
    act: Actuator,
    rng: ChaCha8Rng,
    gains: ServoGains,
    targets: Vec<(Vec2, Vec2)>,
    index: usize,
    converge_px: f64,
}

impl Loop for Trifocal {
    fn step(&mut self, k: usize, t: f64, records: &mut Vec<Record>) -> Result<Flow> {
        let (obs, tl, tr) = self.world.observe(&self.act.mirror, t, &mut self.rng)?;
        let (gl, gr) = self.targets[self.index];
        let mut rec = blank(k, t, tl, tr, obs.world);
        rec.target_l = gl;
        rec.target_r = gr;
        records.push(rec);
        let reached = |gl: &Vec2, gr: &Vec2| {
            (obs.p_l.xy() - gl).norm() < self.converge_px && (obs.p_r.xy() - gr).norm() < self.converge_px
        };
        if reached(&gl, &gr) {
            if self.index + 1 == self.targets.len() {
                return Ok(Flow::Stop(Outcome::Converged));
            }
            self.index += 1;
        }
        let (gl, gr) = self.targets[self.index];
        let target = ServoTarget::fixed(HomogPixel::new(gl.x, gl.y), HomogPixel::new(gr.x, gr.y));
        let omega = servo_step(&self.rig, &obs, &target, &self.gains)?;
        records.last_mut().expect("pushed above").omega = omega;
        self.act.apply(&omega, self.world.te)?;
        Ok(Flow::Continue)
    }
}

struct Path2d {
    world: World,
    act: Actuator,
    rng: ChaCha8Rng,
    follower: PathFollower,
    speed: SpeedProfile,
}

impl Loop for Path2d {
    fn step(&mut self, k: usize, t: f64, records: &mut Vec<Record>) -> Result<Flow> {
        let (obs, tl, tr) = self.world.observe(&self.act.mirror, t, &mut self.rng)?;
        let v = self.speed.at(t);
        let out = self.follower.step(&obs.p_l.xy(), None, v)?;
        let truth = project_onto_path(&tl, &self.follower.path, out.state.s, self.follower.gains.window)?;
        let mut rec = blank(k, t, tl, tr, obs.world);
        rec.target_l = truth.foot;
        rec.d = truth.d;
        rec.theta_e = out.state.theta_e;
        rec.speed = v;
        records.push(rec);
        if out.completed {
            return Ok(Flow::Stop(Outcome::Completed));
        }
        let omega = omega_for_pixel_velocity(&self.world.surface, &self.act.mirror, &self.world.cam_l, t, &out.velocity)?;
        records.last_mut().expect("pushed above").omega = omega;
        self.act.apply(&omega, self.world.te)?;
        Ok(Flow::Continue)
    }
}

struct Hybrid {
    world: World,
    rig: TrifocalRig,
    act: Actuator,
    rng: ChaCha8Rng,
    pair: StereoPathPair,
    left: PathFollower,
    right: PathFollower,
    speed: SpeedProfile,
    sing_eps: f64,
    moving_surface: bool,
    previous: Option<(Vec2, Vec2)>,
}

fn heading(delta: Vec2) -> Option<Vec2> {
    let n = delta.norm();
    (n > 1e-9).then(|| delta / n)
}

impl Loop for Hybrid {
    fn step(&mut self, k: usize, t: f64, records: &mut Vec<Record>) -> Result<Flow> {
        if self.moving_surface && k > 0 {
            self.pair = transfer_path(&self.pair.left, &self.world.surface, &self.world.cam_l, &self.world.cam_r, t)?;
            self.right.path = self.pair.right.clone();
        }
        let (obs, tl, tr) = self.world.observe(&self.act.mirror, t, &mut self.rng)?;
        let (pl, pr) = (obs.p_l.xy(), obs.p_r.xy());
        let (ml, mr) = match self.previous {
            Some((a, b)) => (heading(pl - a), heading(pr - b)),
            None => (None, None),
        };
        self.previous = Some((pl, pr));
        let v = self.speed.at(t);
        let out = hybrid_step(&self.rig, &obs, &mut self.left, &mut self.right, ml, mr, v, self.sing_eps)?;
        let window = self.left.gains.window;
        let truth_l = project_onto_path(&tl, &self.left.path, out.left.state.s, window)?;
        let truth_r = project_onto_path(&tr, &self.right.path, out.right.state.s, window)?;
        let mut rec = blank(k, t, tl, tr, obs.world);
        rec.target_l = truth_l.foot;
        rec.target_r = truth_r.foot;
        rec.d = truth_l.d;
        rec.d_r = truth_r.d;
        rec.theta_e = out.left.state.theta_e;
        rec.theta_r = out.right.state.theta_e;
        rec.err3d = distance_to_polyline(&obs.world, &self.pair.world, self.pair.left.is_closed());
        rec.speed = v;
        rec.omega = out.omega;
        records.push(rec);
        if out.left.completed {
            records.last_mut().expect("pushed above").omega = Vec3::zeros();
            return Ok(Flow::Stop(Outcome::Completed));
        }
        self.act.apply(&out.omega, self.world.te)?;
        Ok(Flow::Continue)
    }
}

struct Scripted {
    world: World,
    rig: TrifocalRig,
    act: Actuator,
    rng: ChaCha8Rng,
    monitor: SingularityMonitor,
    omega: Vec3,
}

impl Loop for Scripted {
    fn step(&mut self, k: usize, t: f64, records: &mut Vec<Record>) -> Result<Flow> {
        let (obs, tl, tr) = self.world.observe(&self.act.mirror, t, &mut self.rng)?;
        let mut rec = blank(k, t, tl, tr, obs.world);
        rec.omega = self.omega;
        records.push(rec);
        self.monitor.update(&self.rig, &obs)?;
        self.act.apply(&self.omega, self.world.te)?;
        Ok(Flow::Continue)
    }
}

fn drive(lp: &mut dyn Loop, max_iters: usize, te: f64, records: &mut Vec<Record>) -> Outcome {
    for k in 0..max_iters {
        let t = k as f64 * te;
        match lp.step(k, t, records) {
            Ok(Flow::Continue) => {}
            Ok(Flow::Stop(outcome)) => return outcome,
            Err(e) => {
                match records.last() {
                    Some(last) if last.iter == k => {}
                    Some(last) => {
                        let mut copy = *last;
                        copy.iter = k;
                        copy.t = t;
                        records.push(copy);
                    }
                    None => {}
                }
                return Outcome::Failed(e);
            }
        }
    }
    Outcome::MaxIters
}

fn rot90(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Start pixel and heading of a follower from the `[follow]` table.
fn start_pose(config: &ScenarioConfig, path: &PathCurve) -> (Vec2, Vec2) {
    let f = &config.follow;
    let tangent = path.tangent_at(f.start_abscissa);
    let p0 = path.point_at(f.start_abscissa) + rot90(&tangent) * f.start_offset_px;
    let (s, c) = f.start_heading.sin_cos();
    (p0, Vec2::new(c * tangent.x - s * tangent.y, s * tangent.x + c * tangent.y))
}

fn gains(config: &ScenarioConfig) -> Result<FollowGains> {
    let f = &config.follow;
    FollowGains::new(f.gamma1, f.gamma2, config.te(), f.window, f.lateral_rate)
}

/// First iteration at which the beam, driven by a constant angular velocity
/// from its initial direction, lies on the other side of the baseline plane.
fn scripted_crossing(rig: &TrifocalRig, start: &MirrorState, omega: &Vec3, te: f64, limit: usize) -> Option<usize> {
    let n = (rig.cam_l.center - rig.pivot).cross(&(rig.cam_r.center - rig.pivot));
    let side0 = n.dot(&start.z0).signum();
    let mut m = *start;
    for k in 0..limit {
        if n.dot(&m.z0).signum() != side0 {
            return Some(k);
        }
        m = mirror_step(&m, omega, te);
    }
    None
}

/// Runs one scenario. Configuration and setup problems are returned as
/// errors; anything that goes wrong inside the loop ends up in the result.
pub fn run(config: &ScenarioConfig, base_dir: Option<&Path>) -> Result<ScenarioResult> {
    config.validate()?;
    let te = config.te();
    let (cam_l, cam_r) = config.rig.cameras()?;
    let pivot = Vec3::from(config.rig.pivot);
    let truth_rig = TrifocalRig::new(cam_l, cam_r, pivot)?;
    let mut cal_rng = ChaCha8Rng::seed_from_u64(config.seed ^ CALIBRATION_STREAM);
    let rig = perturb_calibration(&truth_rig, config.rig.calibration_error, &mut cal_rng)?;
    let world = World {
        cam_l,
        cam_r,
        surface: config.build_surface(base_dir)?,
        noise: config.noise_sigma,
        te,
    };
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    let limit = config.mirror.joint_limit;
    let mut context = RunContext::default();
    let mut records = Vec::with_capacity(config.max_iters.min(1 << 16));

    let outcome = match config.controller {
        ControllerKind::Trifocal => {
            let mirror = MirrorState::aimed_at(pivot, &Vec3::from(config.mirror.aim))?;
            let start = project(&world.cam_l, &world.surface.intersect(&pivot, &mirror.z0, 0.0)?)?.xy();
            let lefts: Vec<Vec2> = if config.trifocal.targets_px.is_empty() {
                vec![start + Vec2::from(config.trifocal.offset_px)]
            } else {
                config.trifocal.targets_px.iter().map(|p| Vec2::from(*p)).collect()
            };
            let mut targets = Vec::with_capacity(lefts.len());
            for gl in lefts {
                let hit = world.back_project(&gl, 0.0)?;
                targets.push((gl, project(&world.cam_r, &hit)?.xy()));
            }
            let mut lp = Trifocal {
                act: Actuator::new(mirror, limit)?,
                world,
                rig,
                rng,
                gains: config.servo_gains(),
                targets,
                index: 0,
                converge_px: config.trifocal.converge_px,
            };
            drive(&mut lp, config.max_iters, te, &mut records)
        }
        ControllerKind::Path2d => {
            let path = config.path.build(base_dir)?;
            let (p0, dir0) = start_pose(config, &path);
            let mirror = MirrorState::aimed_at(pivot, &world.back_project(&p0, 0.0)?)?;
            let follower = PathFollower::new(path, gains(config)?, &p0, Some(dir0))?;
            let mut lp = Path2d {
                act: Actuator::new(mirror, limit)?,
                world,
                rng,
                follower,
                speed: config.speed.clone(),
            };
            drive(&mut lp, config.max_iters, te, &mut records)
        }
        ControllerKind::Hybrid3d => {
            let left = config.path.build(base_dir)?;
            let pair = transfer_path(&left, &world.surface, &world.cam_l, &world.cam_r, 0.0)?;
            context.bbox3d = Some(bbox_diagonal(&pair.world));
            let (p0, dir0) = start_pose(config, &left);
            let hit = world.back_project(&p0, 0.0)?;
            let mirror = MirrorState::aimed_at(pivot, &hit)?;
            let p0_r = project(&world.cam_r, &hit)?.xy();
            let g = gains(config)?;
            let fl = PathFollower::new(left, g, &p0, Some(dir0))?;
            let fr = PathFollower::new(pair.right.clone(), g, &p0_r, None)?;
            let mut lp = Hybrid {
                act: Actuator::new(mirror, limit)?,
                moving_surface: config.time_varying.is_some(),
                world,
                rig,
                rng,
                pair,
                left: fl,
                right: fr,
                speed: config.speed.clone(),
                sing_eps: config.trifocal.sing_eps,
                previous: None,
            };
            drive(&mut lp, config.max_iters, te, &mut records)
        }
        ControllerKind::Scripted => {
            let mirror = MirrorState::aimed_at(pivot, &Vec3::from(config.mirror.aim))?;
            let omega = Vec3::from(config.scripted.omega);
            context.crossing_iter = scripted_crossing(&truth_rig, &mirror, &omega, te, config.max_iters);
            let mut lp = Scripted {
                act: Actuator::new(mirror, limit)?,
                monitor: SingularityMonitor::new(&mirror.z0, config.trifocal.sing_eps),
                world,
                rig,
                rng,
                omega,
            };
            drive(&mut lp, config.max_iters, te, &mut records)
        }
    };

    if let Some(last) = records.last_mut() {
        last.status = outcome.tag();
    }
    let summary = summarize(config, &records, &context);
    Ok(ScenarioResult {
        name: config.name.clone(),
        controller: config.controller,
        records,
        outcome,
        context,
        summary,
    })
}

fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Summary statistics; a pure function of the records and the run context.
pub fn summarize(config: &ScenarioConfig, records: &[Record], context: &RunContext) -> BTreeMap<String, f64> {
    let mut s = BTreeMap::new();
    s.insert("iterations".to_string(), records.len() as f64);
    let Some(last) = records.last() else {
        return s;
    };
    let mut put = |k: &str, v: Result<f64>| {
        if let Ok(v) = v {
            if v.is_finite() {
                s.insert(k.to_string(), v);
            }
        }
    };
    let (el, er) = (last.error_l().norm(), last.error_r().norm());
    put("final_error_l", Ok(el));
    put("final_error_r", Ok(er));
    put("final_error_px", Ok(el.max(er)));

    match config.controller {
        ControllerKind::Trifocal => {
            let tol = config.trifocal.converge_px;
            if let Some(r) = records.iter().find(|r| r.error_l().norm() < tol && r.error_r().norm() < tol) {
                put("converge_iter", Ok(r.iter as f64));
            }
            let first = records[0].target_l;
            let seg: Vec<&Record> = records.iter().take_while(|r| r.target_l == first).collect();
            let errs_l: Vec<f64> = seg.iter().map(|r| r.error_l().norm()).collect();
            let errs_r: Vec<f64> = seg.iter().map(|r| r.error_r().norm()).collect();
            for (side, errs) in [("l", &errs_l), ("r", &errs_r)] {
                if let Ok(fit) = exp_fit(errs) {
                    put(&format!("fit_rate_{side}"), Ok(fit.rate));
                    put(&format!("fit_r2_{side}"), Ok(fit.r2));
                }
            }
            let mut dev: f64 = 0.0;
            for chunk in records.chunk_by(|a, b| a.target_l == b.target_l) {
                let tl: Vec<Vec2> = chunk.iter().map(|r| r.p_l).collect();
                let tr: Vec<Vec2> = chunk.iter().map(|r| r.p_r).collect();
                dev = dev.max(chord_deviation(&tl, &tl[0], &chunk[0].target_l));
                dev = dev.max(chord_deviation(&tr, &tr[0], &chunk[0].target_r));
            }
            put("chord_dev_px", Ok(dev));
        }
        ControllerKind::Path2d | ControllerKind::Hybrid3d => {
            let steady: Vec<&Record> = records.iter().filter(|r| r.iter >= config.follow.transient_iters).collect();
            let col = |f: fn(&Record) -> f64, rs: &[&Record]| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let d = col(|r| r.d, &steady);
            let th = col(|r| r.theta_e, &steady);
            put("rms_d", rms(&d));
            put("std_d", std_pop(&d));
            put("rms_theta", rms(&th));
            put("std_theta", std_pop(&th));
            put("max_abs_d", Ok(records.iter().map(|r| r.d.abs()).fold(0.0, f64::max)));
            put("final_t", Ok(last.t));
            if config.controller == ControllerKind::Hybrid3d {
                let dr = col(|r| r.d_r, &steady);
                put("rms_d_r", rms(&dr));
                put("std_d_r", std_pop(&dr));
                put("rms_theta_r", rms(&col(|r| r.theta_r, &steady)));
                put("max_abs_d_r", Ok(records.iter().map(|r| r.d_r.abs()).fold(0.0, f64::max)));
                let all_l: Vec<f64> = records.iter().map(|r| r.d).collect();
                let all_r: Vec<f64> = records.iter().map(|r| r.d_r).collect();
                put("corr_d_lr", correlation(&all_l, &all_r));
                let e3: Vec<f64> = records.iter().map(|r| r.err3d).collect();
                let m3 = mean(&e3);
                put("mean_err3d", m3.clone());
                put("rms_err3d", rms(&e3));
                if let (Ok(m), Some(b)) = (m3, context.bbox3d) {
                    put("bbox3d", Ok(b));
                    put("err3d_ratio", Ok(m / b));
                }
            }
        }
        ControllerKind::Scripted => {
            if let Some(c) = context.crossing_iter {
                put("crossing_iter", Ok(c as f64));
            }
            if let Some(r) = records.iter().find(|r| r.status == Error::BaselineSingularity.tag()) {
                put("detect_iter", Ok(r.iter as f64));
                if let Some(c) = context.crossing_iter {
                    put("detect_lag", Ok(r.iter as f64 - c as f64));
                }
            }
        }
    }
    s
}
