use thiserror::Error;

/// Every failure mode of the geometry, control and simulation layers.
///
/// The simulator treats most of these as terminal events for a scenario and
/// records [`Error::tag`] in the trace instead of aborting the batch.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("baseline between the two views is zero")]
    ZeroBaseline,
    #[error("matrix has rank below two")]
    RankDeficient,
    #[error("matrix is not a rank-2 fundamental matrix (sigma3/sigma1 = {0:e})")]
    NotRankTwo(f64),
    #[error("rotation matrix is not orthonormal with det = +1")]
    InvalidRotation,
    #[error("intrinsic matrix is singular")]
    SingularIntrinsics,
    #[error("point lies behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("rays are parallel, triangulation is degenerate")]
    Degenerate,
    #[error("beam misses the surface")]
    NoHit,
    #[error("joint {joint} would leave its range ({value:.4} rad)")]
    JointLimit { joint: usize, value: f64 },
    #[error("epipolar normal vanishes (pixel sits on the epipole)")]
    ZeroVector,
    #[error("beam crosses the plane through both camera centres and the pivot")]
    BaselineSingularity,
    #[error("a path needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("consecutive path points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("no path sample within the search window")]
    EmptyWindow,
    #[error("spot sits on the curvature centre (|1 - dC| = {0:e})")]
    SingularTube(f64),
    #[error("orientation error {0} rad is outside (-pi/2, pi/2)")]
    OutOfDomain(f64),
    #[error("image velocity is zero")]
    ZeroVelocity,
    #[error("not enough records to compute metrics ({0})")]
    InsufficientData(usize),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Short machine tag written to the `status` column of traces.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::ZeroBaseline => "zero_baseline",
            Error::RankDeficient => "rank_deficient",
            Error::NotRankTwo(_) => "not_rank_two",
            Error::InvalidRotation => "invalid_rotation",
            Error::SingularIntrinsics => "singular_intrinsics",
            Error::BehindCamera(_) => "behind_camera",
            Error::Degenerate => "degenerate",
            Error::NoHit => "no_hit",
            Error::JointLimit { .. } => "joint_limit",
            Error::ZeroVector => "zero_vector",
            Error::BaselineSingularity => "baseline_singularity",
            Error::TooFewPoints(_) => "too_few_points",
            Error::DuplicatePoints(..) => "duplicate_points",
            Error::EmptyWindow => "empty_window",
            Error::SingularTube(_) => "singular_tube",
            Error::OutOfDomain(_) => "out_of_domain",
            Error::ZeroVelocity => "zero_velocity",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Invalid { .. } => "invalid",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
