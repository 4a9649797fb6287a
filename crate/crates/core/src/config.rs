//! Scenario description shared by the engine and the command line.
//!
//! Every table rejects unknown keys and fills omitted ones with the simulated
//! rig of the reference setup: 900 px focal length, principal point
//! (320, 240), cameras at (-40, 35, -20) and (40, 35, -20) mm around a mirror
//! pivot at the origin, and a 40 mm sphere 110 mm in front of the pivot.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::follow::{FollowGains, LateralRate};
use crate::geometry::{CameraModel, Intrinsics, Mat3, Vec2, Vec3};
use crate::optics::{Heightfield, Surface};
use crate::path::{build_path, load_path, shapes, PathCurve};
use crate::trifocal::{ServoGains, TrifocalRig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Point-to-point positioning with the three-view law.
    Trifocal,
    /// Path following in the left image.
    Path2d,
    /// Path following in both images fused into one mirror command.
    Hybrid3d,
    /// Constant mirror rate with the beam estimator running as an observer.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub controller: ControllerKind,
    #[serde(default)]
    pub seed: u64,
    /// Control period in seconds; 0.1 for `trifocal`, 1/500 otherwise.
    #[serde(rename = "Te", default, skip_serializing_if = "Option::is_none")]
    pub te: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rig: RigConfig,
    #[serde(default)]
    pub surface: SurfaceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_varying: Option<TimeVaryingConfig>,
    #[serde(default)]
    pub mirror: MirrorConfig,
    #[serde(default)]
    pub trifocal: TrifocalConfig,
    #[serde(default)]
    pub follow: FollowConfig,
    #[serde(default)]
    pub path: PathSpec,
    #[serde(default)]
    pub speed: SpeedProfile,
    #[serde(default)]
    pub scripted: ScriptedConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_max_iters() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    pub focal_length: [f64; 2],
    pub principal_point: [f64; 2],
    pub left_center: [f64; 3],
    pub right_center: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_rotation: Option<[[f64; 3]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right_rotation: Option<[[f64; 3]; 3]>,
    pub pivot: [f64; 3],
    /// Relative perturbation of every intrinsic and translation entry in the
    /// controller's copy of the calibration.
    pub calibration_error: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            focal_length: [900.0, 900.0],
            principal_point: [320.0, 240.0],
            left_center: [-40.0, 35.0, -20.0],
            right_center: [40.0, 35.0, -20.0],
            left_rotation: None,
            right_rotation: None,
            pivot: [0.0; 3],
            calibration_error: 0.0,
        }
    }
}

impl RigConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::new(
            self.focal_length[0],
            self.focal_length[1],
            self.principal_point[0],
            self.principal_point[1],
        )
    }

    pub fn cameras(&self) -> Result<(CameraModel, CameraModel)> {
        let rot = |r: &Option<[[f64; 3]; 3]>| match r {
            Some(m) => Mat3::from_fn(|i, j| m[i][j]),
            None => Mat3::identity(),
        };
        Ok((
            CameraModel::new(self.intrinsics(), rot(&self.left_rotation), Vec3::from(self.left_center))?,
            CameraModel::new(self.intrinsics(), rot(&self.right_rotation), Vec3::from(self.right_center))?,
        ))
    }

    pub fn rig(&self) -> Result<TrifocalRig> {
        let (l, r) = self.cameras()?;
        TrifocalRig::new(l, r, Vec3::from(self.pivot))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceConfig {
    Plane { point: [f64; 3], normal: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    /// CSV of `x,y,z` grid nodes; relative paths resolve against the config file.
    Heightfield { file: PathBuf },
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig::Sphere {
            center: [0.0, 35.0, 150.0],
            radius: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeVaryingConfig {
    /// Peak scale factor (>= 1).
    pub amplitude: f64,
    /// Period of the scaling law, seconds.
    pub period: f64,
    /// Fixed point of the scaling; a sphere's pole facing the rig by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MirrorConfig {
    /// World point hit by the beam at start (trifocal and scripted runs).
    pub aim: [f64; 3],
    /// Symmetric range of both mirror joints, radians.
    pub joint_limit: f64,
}

impl Default for MirrorConfig {
    fn default() -> Self {
        Self {
            aim: [0.0, 35.0, 110.0],
            joint_limit: std::f64::consts::FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrifocalConfig {
    pub lambda: f64,
    pub sing_eps: f64,
    /// A target counts as reached when both image errors are below this.
    pub converge_px: f64,
    /// Target in the left image relative to the start, used when
    /// `targets_px` is empty.
    pub offset_px: [f64; 2],
    /// Absolute left-image targets visited in order.
    pub targets_px: Vec<[f64; 2]>,
}

impl Default for TrifocalConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            sing_eps: 1e-8,
            converge_px: 0.05,
            offset_px: [50.0, 0.0],
            targets_px: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FollowConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    pub window: usize,
    pub lateral_rate: LateralRate,
    /// Signed lateral offset of the start from the curve, pixels.
    pub start_offset_px: f64,
    /// Abscissa of the start foot point, pixels.
    pub start_abscissa: f64,
    /// Initial heading relative to the tangent, radians.
    pub start_heading: f64,
    /// Records before this iteration are excluded from steady-state metrics.
    pub transient_iters: usize,
}

impl Default for FollowConfig {
    fn default() -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 1.0,
            window: 16,
            lateral_rate: LateralRate::Model,
            start_offset_px: 0.0,
            start_abscissa: 0.0,
            start_heading: 0.0,
            transient_iters: 500,
        }
    }
}

/// Reference curve in the left image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    File { file: PathBuf },
    Line { samples: usize, from: [f64; 2], to: [f64; 2] },
    Circle { samples: usize, center: [f64; 2], radius: f64 },
    Sinusoid { samples: usize, start: [f64; 2], length: f64, amplitude: f64, wavelength: f64 },
    Spiral { samples: usize, center: [f64; 2], r0: f64, r1: f64, turns: f64 },
    Sigma { samples: usize, center: [f64; 2], radius: f64 },
    Handdrawn { samples: usize, start: [f64; 2], length: f64 },
    Figure8 { samples: usize, center: [f64; 2], width: f64, height: f64 },
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec::Handdrawn {
            samples: 2000,
            start: [60.0, 240.0],
            length: 520.0,
        }
    }
}

impl PathSpec {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<PathCurve> {
        let v = |a: &[f64; 2]| Vec2::new(a[0], a[1]);
        let check = |n: usize| if n < 3 { Err(Error::TooFewPoints(n)) } else { Ok(n) };
        match self {
            PathSpec::File { file } => load_path(&resolve(base_dir, file)),
            PathSpec::Line { samples, from, to } => build_path(&shapes::line(check(*samples)?, v(from), v(to)), false),
            PathSpec::Circle { samples, center, radius } => {
                build_path(&shapes::circle(check(*samples)?, v(center), *radius), true)
            }
            PathSpec::Sinusoid { samples, start, length, amplitude, wavelength } => build_path(
                &shapes::sinusoid(check(*samples)?, v(start), *length, *amplitude, *wavelength),
                false,
            ),
            PathSpec::Spiral { samples, center, r0, r1, turns } => {
                build_path(&shapes::spiral(check(*samples)?, v(center), *r0, *r1, *turns), false)
            }
            PathSpec::Sigma { samples, center, radius } => {
                build_path(&shapes::sigma(check(*samples)?, v(center), *radius), false)
            }
            PathSpec::Handdrawn { samples, start, length } => {
                build_path(&shapes::handdrawn(check(*samples)?, v(start), *length), false)
            }
            PathSpec::Figure8 { samples, center, width, height } => {
                build_path(&shapes::figure8(check(*samples)?, v(center), *width, *height), true)
            }
        }
    }
}

/// Operator-defined spot speed in pixels per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedProfile {
    Constant { v: f64 },
    /// `v0 + amplitude sin(omega t)`.
    Sinusoid { v0: f64, amplitude: f64, omega: f64 },
    /// Cycles through `values`, each held for `duration` seconds.
    Steps { values: Vec<f64>, duration: f64 },
}

impl Default for SpeedProfile {
    fn default() -> Self {
        SpeedProfile::Constant { v: 100.0 }
    }
}

impl SpeedProfile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            SpeedProfile::Constant { v } => *v,
            SpeedProfile::Sinusoid { v0, amplitude, omega } => v0 + amplitude * (omega * t).sin(),
            SpeedProfile::Steps { values, duration } => {
                let k = (t / duration).floor().max(0.0) as usize;
                values[k % values.len()]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpeedProfile::Constant { v } if !(v.abs() > 0.0) || !v.is_finite() => {
                Err(Error::invalid("speed.v", "must be non-zero"))
            }
            SpeedProfile::Sinusoid { v0, amplitude, .. } if !(v0.abs() > amplitude.abs()) => {
                Err(Error::invalid("speed.amplitude", "must be smaller than |v0| so the speed never vanishes"))
            }
            SpeedProfile::Steps { values, .. } if values.is_empty() || values.iter().any(|v| !(v.abs() > 0.0)) => {
                Err(Error::invalid("speed.values", "must be a non-empty list of non-zero speeds"))
            }
            SpeedProfile::Steps { duration, .. } if !(*duration > 0.0) => {
                Err(Error::invalid("speed.duration", "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptedConfig {
    /// Constant mirror angular velocity, rad/s.
    pub omega: [f64; 3],
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        Self { omega: [0.2, 0.0, 0.0] }
    }
}

pub(crate) fn resolve(base_dir: Option<&Path>, file: &Path) -> PathBuf {
    match base_dir {
        Some(dir) if file.is_relative() => dir.join(file),
        _ => file.to_path_buf(),
    }
}

impl ScenarioConfig {
    /// Minimal configuration of the given kind with every default applied.
    pub fn new(controller: ControllerKind) -> Self {
        let mut c = Self {
            name: default_name(),
            controller,
            seed: 0,
            te: None,
            max_iters: default_max_iters(),
            noise_sigma: 0.0,
            rig: RigConfig::default(),
            surface: SurfaceConfig::default(),
            time_varying: None,
            mirror: MirrorConfig::default(),
            trifocal: TrifocalConfig::default(),
            follow: FollowConfig::default(),
            path: PathSpec::default(),
            speed: SpeedProfile::default(),
            scripted: ScriptedConfig::default(),
        };
        c.resolve_defaults();
        c
    }

    /// Fills the controller-dependent defaults.
    pub fn resolve_defaults(&mut self) {
        if self.te.is_none() {
            self.te = Some(match self.controller {
                ControllerKind::Trifocal => 0.1,
                _ => 1.0 / 500.0,
            });
        }
    }

    pub fn te(&self) -> f64 {
        self.te.unwrap_or(match self.controller {
            ControllerKind::Trifocal => 0.1,
            _ => 1.0 / 500.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let te = self.te();
        if !(te > 0.0) || !te.is_finite() {
            return Err(Error::invalid("Te", "must be positive"));
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be non-negative"));
        }
        let r = &self.rig;
        if !(r.focal_length[0] > 0.0 && r.focal_length[1] > 0.0) {
            return Err(Error::invalid("rig.focal_length", "must be positive"));
        }
        if !(0.0..1.0).contains(&r.calibration_error) {
            return Err(Error::invalid("rig.calibration_error", "must lie in [0, 1)"));
        }
        self.rig.cameras().map_err(|e| Error::invalid("rig", e.to_string()))?;
        match &self.surface {
            SurfaceConfig::Sphere { radius, .. } if !(*radius > 0.0) => {
                return Err(Error::invalid("surface.radius", "must be positive"))
            }
            SurfaceConfig::Plane { normal, .. } if Vec3::from(*normal).norm() < 1e-12 => {
                return Err(Error::invalid("surface.normal", "must be non-zero"))
            }
            _ => {}
        }
        if let Some(tv) = &self.time_varying {
            if !(tv.amplitude >= 1.0) {
                return Err(Error::invalid("time_varying.amplitude", "must be >= 1"));
            }
            if !(tv.period > 0.0) {
                return Err(Error::invalid("time_varying.period", "must be positive"));
            }
        }
        if !(self.mirror.joint_limit > 0.0) {
            return Err(Error::invalid("mirror.joint_limit", "must be positive"));
        }
        let t = &self.trifocal;
        ServoGains::new(t.lambda, te, t.sing_eps).map_err(|e| prefix("trifocal", e))?;
        if !(t.converge_px > 0.0) {
            return Err(Error::invalid("trifocal.converge_px", "must be positive"));
        }
        let f = &self.follow;
        FollowGains::new(f.gamma1, f.gamma2, te, f.window, f.lateral_rate).map_err(|e| prefix("follow", e))?;
        self.speed.validate()?;
        Ok(())
    }

    pub fn servo_gains(&self) -> ServoGains {
        ServoGains {
            lambda: self.trifocal.lambda,
            te: self.te(),
            sing_eps: self.trifocal.sing_eps,
        }
    }

    pub fn follow_gains(&self) -> FollowGains {
        FollowGains {
            gamma1: self.follow.gamma1,
            gamma2: self.follow.gamma2,
            te: self.te(),
            window: self.follow.window,
            lateral_rate: self.follow.lateral_rate,
        }
    }

    pub fn build_surface(&self, base_dir: Option<&Path>) -> Result<Surface> {
        let base = match &self.surface {
            SurfaceConfig::Plane { point, normal } => Surface::plane(Vec3::from(*point), Vec3::from(*normal))?,
            SurfaceConfig::Sphere { center, radius } => Surface::sphere(Vec3::from(*center), *radius)?,
            SurfaceConfig::Heightfield { file } => Surface::Heightfield(Heightfield::load(&resolve(base_dir, file))?),
        };
        match &self.time_varying {
            Some(tv) => Surface::time_varying(base, tv.amplitude, tv.period, tv.anchor.map(Vec3::from)),
            None => Ok(base),
        }
    }
}

fn prefix(table: &str, e: Error) -> Error {
    match e {
        Error::Invalid { field, reason } => Error::Invalid {
            field: format!("{table}.{field}"),
            reason,
        },
        other => other,
    }
}
