//! Registration of per-camera local frames into one global frame.
//!
//! With `Y = R·X + T` relating local points `X` to global points `Y`,
//! differencing every pair against the first eliminates `T`:
//! `(yᵢ − y₁)ᵀ = (xᵢ − x₁)ᵀ·Rᵀ`. The stacked rows form `A·Z = b` with
//! `Z = Rᵀ`, solved in the least-squares sense; then `T = y₁ − R·x₁`.

use thiserror::Error;

use crate::geometry::{apply_rigid, compose, inverse, Point2, Point3, RigidTransform};
use crate::numeric::{nearest_rotation, singular_values, solve_least_squares, Matrix, NumericError};
use crate::projection::{image_to_framebuffer, project, Camera, ProjectionError, SensorModel};

/// Fewest point pairs: three difference rows are needed to pin down `Rᵀ`.
pub const MIN_FRAME_PAIRS: usize = 4;

/// Relative singular-value floor below which the difference rows are taken
/// not to span 3D.
pub const SPAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("frame pair lists differ in length ({local} local, {global} global)")]
    LengthMismatch { local: usize, global: usize },
    #[error("need at least {MIN_FRAME_PAIRS} point pairs, got {0}")]
    TooFewPairs(usize),
    #[error("non-finite coordinate in point pair {0}")]
    NonFinite(usize),
    #[error("DegenerateGeometry: point differences do not span 3D (singular values {0:?})")]
    DegenerateGeometry(Vec<f64>),
    #[error("no cameras to unify")]
    NoCameras,
    #[error("point is not visible to any camera")]
    NotVisible,
    #[error("NoConsensus: cameras disagree on the image coordinate (max deviation {:.6})", .0.max_deviation)]
    NoConsensus(Box<Unification>),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// The same physical points measured in a camera's local frame and in the
/// global frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    local: Vec<Point3>,
    global: Vec<Point3>,
}

impl FramePair {
    pub fn new(local: Vec<Point3>, global: Vec<Point3>) -> Result<Self, RegistrationError> {
        if local.len() != global.len() {
            return Err(RegistrationError::LengthMismatch {
                local: local.len(),
                global: global.len(),
            });
        }
        if local.len() < MIN_FRAME_PAIRS {
            return Err(RegistrationError::TooFewPairs(local.len()));
        }
        if let Some(i) = local
            .iter()
            .zip(&global)
            .position(|(l, g)| !(l.is_finite() && g.is_finite()))
        {
            return Err(RegistrationError::NonFinite(i));
        }
        Ok(Self { local, global })
    }

    pub fn local(&self) -> &[Point3] {
        &self.local
    }

    pub fn global(&self) -> &[Point3] {
        &self.global
    }

    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }
}

/// A camera whose extrinsics now map global coordinates to camera
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisteredCamera {
    pub camera: Camera,
    /// Local → global.
    pub frame_transform: RigidTransform,
}

fn difference_rows(points: &[Point3]) -> Matrix {
    let first = points[0];
    let data = points[1..]
        .iter()
        .flat_map(|p| [p.x - first.x, p.y - first.y, p.z - first.z])
        .collect();
    Matrix::new(points.len() - 1, 3, data).expect("finite points give a valid matrix")
}

/// `(A, b)` with rows `xᵢ₊₁ − x₁` and `yᵢ₊₁ − y₁`.
pub fn build_difference_system(fp: &FramePair) -> (Matrix, Matrix) {
    (difference_rows(&fp.local), difference_rows(&fp.global))
}

/// Least-squares local → global transform.
pub fn estimate_registration(fp: &FramePair) -> Result<RigidTransform, RegistrationError> {
    let (a, b) = build_difference_system(fp);
    let sv = singular_values(&a)?;
    if sv.len() < 3 || sv[2] <= SPAN_TOLERANCE * sv[0] {
        return Err(RegistrationError::DegenerateGeometry(sv));
    }
    let z = solve_least_squares(&a, &b)?;
    let candidate = nalgebra::Matrix3::from_fn(|i, j| z[(j, i)]);
    let rotation = nearest_rotation(&candidate)?;
    let (x1, y1) = (fp.local[0].to_vector(), fp.global[0].to_vector());
    let translation = y1 - rotation.rotate(&x1);
    Ok(RigidTransform::new(rotation, translation))
}

/// Re-expresses `cam` against the global frame, given `frame` mapping the
/// camera's local world frame to the global one.
pub fn register_camera(cam: &Camera, frame: &RigidTransform) -> RegisteredCamera {
    RegisteredCamera {
        camera: Camera::new(cam.intrinsics, compose(&cam.extrinsics, &inverse(frame))),
        frame_transform: *frame,
    }
}

/// Largest `‖yᵢ − (R·xᵢ + T)‖` over the pairs.
pub fn max_residual(fp: &FramePair, t: &RigidTransform) -> f64 {
    fp.local
        .iter()
        .zip(&fp.global)
        .map(|(x, y)| apply_rigid(t, x).distance(y))
        .fold(0.0, f64::max)
}

/// Image coordinates of one global point through every registered camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Unification {
    /// Per camera, in input order; rounded when rounding was requested.
    pub per_camera: Vec<Result<Point2, ProjectionError>>,
    /// Unrounded projections, `None` where the camera cannot see the point.
    pub raw: Vec<Option<Point2>>,
    /// The first visible camera's value.
    pub consensus: Point2,
    /// Largest distance between any two unrounded projections.
    pub max_deviation: f64,
    pub rounded: bool,
}

/// Projects `p_global` through each camera and checks that they agree.
///
/// With `round_to_int`, coordinates are rounded half away from zero and any
/// disagreement among visible cameras is [`RegistrationError::NoConsensus`].
/// Cameras that cannot see the point are reported per entry and do not take
/// part in the vote.
pub fn unify_point(
    cams: &[RegisteredCamera],
    p_global: &Point3,
    round_to_int: bool,
) -> Result<Unification, RegistrationError> {
    unify_point_on_sensor(cams, p_global, round_to_int, None)
}

/// [`unify_point`] with each projection first mapped through `sensor` into
/// frame-buffer coordinates.
pub fn unify_point_on_sensor(
    cams: &[RegisteredCamera],
    p_global: &Point3,
    round_to_int: bool,
    sensor: Option<&SensorModel>,
) -> Result<Unification, RegistrationError> {
    if cams.is_empty() {
        return Err(RegistrationError::NoCameras);
    }
    let raw_results: Vec<Result<Point2, ProjectionError>> = cams
        .iter()
        .map(|c| {
            let p = project(&c.camera, p_global)?;
            Ok(sensor.map_or(p, |s| image_to_framebuffer(s, &p)))
        })
        .collect();
    let raw: Vec<Option<Point2>> = raw_results.iter().map(|r| r.as_ref().ok().copied()).collect();
    let visible: Vec<Point2> = raw.iter().flatten().copied().collect();
    if visible.is_empty() {
        return Err(RegistrationError::NotVisible);
    }
    let mut max_deviation = 0.0f64;
    for (i, a) in visible.iter().enumerate() {
        for b in &visible[i + 1..] {
            max_deviation = max_deviation.max(a.distance(b));
        }
    }
    let finish = |p: Point2| {
        if round_to_int {
            Point2::new(p.u.round(), p.v.round())
        } else {
            p
        }
    };
    let per_camera: Vec<Result<Point2, ProjectionError>> =
        raw_results.into_iter().map(|r| r.map(finish)).collect();
    let consensus = finish(visible[0]);
    let unification = Unification {
        per_camera,
        raw,
        consensus,
        max_deviation,
        rounded: round_to_int,
    };
    let agree = unification
        .per_camera
        .iter()
        .flatten()
        .all(|p| *p == consensus);
    if round_to_int && !agree {
        return Err(RegistrationError::NoConsensus(Box::new(unification)));
    }
    Ok(unification)
}
