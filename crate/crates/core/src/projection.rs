//! Forward pinhole model: world → camera → pixel, plus the frame-buffer
//! conversion and reprojection statistics.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use thiserror::Error;

use crate::geometry::{apply_rigid, Point2, Point3, RigidTransform};

/// Depths (camera `Z`, or the homogeneous scale of `M·p̃`) at or below this
/// magnitude cannot be projected.
pub const DEPTH_EPSILON: f64 = 1e-12;

/// Tolerance on `‖(m₃₁, m₃₂, m₃₃)‖ = 1` for a normalized matrix.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("point is behind the camera (depth {0:e})")]
    BehindCamera(f64),
    #[error("degenerate projective depth {0:e}")]
    DegenerateDepth(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid sensor model: {0}")]
    InvalidSensor(String),
}

/// Focal scales and principal point, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub u0: f64,
    pub v0: f64,
}

impl CameraIntrinsics {
    pub fn new(alpha_u: f64, alpha_v: f64, u0: f64, v0: f64) -> Result<Self, ProjectionError> {
        let k = Self {
            alpha_u,
            alpha_v,
            u0,
            v0,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        let all_finite = [self.alpha_u, self.alpha_v, self.u0, self.v0]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(ProjectionError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.alpha_u <= 0.0 || self.alpha_v <= 0.0 {
            return Err(ProjectionError::InvalidIntrinsics(format!(
                "focal scales must be positive, got ({}, {})",
                self.alpha_u, self.alpha_v
            )));
        }
        Ok(())
    }

    pub fn unit() -> Self {
        Self {
            alpha_u: 1.0,
            alpha_v: 1.0,
            u0: 0.0,
            v0: 0.0,
        }
    }

    /// The upper-triangular calibration matrix, zero skew.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.alpha_u, 0.0, self.u0, //
            0.0, self.alpha_v, self.v0, //
            0.0, 0.0, 1.0,
        )
    }
}

/// Physical reading of the focal scales: `alpha_u = f / sx`,
/// `alpha_v = f / sy`. A linear calibration only ever determines the
/// quotients, so this type is never produced by calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalModel {
    pub focal_length: f64,
    pub sx: f64,
    pub sy: f64,
}

impl FocalModel {
    pub fn intrinsics(&self, u0: f64, v0: f64) -> Result<CameraIntrinsics, ProjectionError> {
        if !(self.focal_length > 0.0 && self.sx > 0.0 && self.sy > 0.0) {
            return Err(ProjectionError::InvalidIntrinsics(
                "focal length and pixel pitch must be positive".into(),
            ));
        }
        CameraIntrinsics::new(self.focal_length / self.sx, self.focal_length / self.sy, u0, v0)
    }
}

/// A pinhole camera; `extrinsics` maps world coordinates to camera
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: RigidTransform,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, extrinsics: RigidTransform) -> Self {
        Self {
            intrinsics,
            extrinsics,
        }
    }
}

/// 3×4 projection matrix `M`, defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn new(m: Matrix3x4<f64>) -> Result<Self, ProjectionError> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(ProjectionError::ShapeMismatch("non-finite matrix entry".into()));
        }
        Ok(Self(m))
    }

    /// From the 12 entries `m₁₁ … m₃₄` in row-major order.
    pub fn from_row_slice(entries: &[f64]) -> Result<Self, ProjectionError> {
        if entries.len() != 12 {
            return Err(ProjectionError::ShapeMismatch(format!(
                "projection matrix needs 12 entries, got {}",
                entries.len()
            )));
        }
        Self::new(Matrix3x4::from_row_slice(entries))
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 4]; 3] {
        let m = &self.0;
        std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }

    /// `‖(m₃₁, m₃₂, m₃₃)‖₂`.
    pub fn third_row_norm(&self) -> f64 {
        self.0.fixed_view::<1, 3>(2, 0).norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.third_row_norm() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }

    /// Rescaled by a positive factor so that `‖(m₃₁, m₃₂, m₃₃)‖ = 1`.
    /// `None` when that row is zero.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.third_row_norm();
        (n > 0.0).then(|| self.scaled(1.0 / n))
    }
}

/// Converts image-plane coordinates to frame-buffer pixels:
/// `Xf = sx·Xd/dx + cx`, `Yf = Yd/dy + cy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub dx: f64,
    pub dy: f64,
    /// Horizontal uncertainty factor, held at 1.
    pub sx: f64,
    pub cx: f64,
    pub cy: f64,
}

impl SensorModel {
    pub fn new(dx: f64, dy: f64, cx: f64, cy: f64) -> Result<Self, ProjectionError> {
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(ProjectionError::InvalidSensor(format!(
                "sensor pitch must be positive, got ({dx}, {dy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(ProjectionError::InvalidSensor("non-finite image center".into()));
        }
        Ok(Self {
            dx,
            dy,
            sx: 1.0,
            cx,
            cy,
        })
    }

    /// Unit pitch with the center at the middle of a `width × height` frame.
    pub fn centered(width: u32, height: u32) -> Self {
        Self {
            dx: 1.0,
            dy: 1.0,
            sx: 1.0,
            cx: f64::from(width) / 2.0,
            cy: f64::from(height) / 2.0,
        }
    }
}

pub fn world_to_camera(cam: &Camera, p: &Point3) -> Point3 {
    apply_rigid(&cam.extrinsics, p)
}

pub fn camera_to_pixel(cam: &Camera, pc: &Point3) -> Result<Point2, ProjectionError> {
    if pc.z <= DEPTH_EPSILON {
        return Err(ProjectionError::BehindCamera(pc.z));
    }
    let k = &cam.intrinsics;
    Ok(Point2::new(
        k.alpha_u * pc.x / pc.z + k.u0,
        k.alpha_v * pc.y / pc.z + k.v0,
    ))
}

pub fn project(cam: &Camera, p: &Point3) -> Result<Point2, ProjectionError> {
    camera_to_pixel(cam, &world_to_camera(cam, p))
}

/// `M = K·[R | T]`. The third row is `(r₃ᵀ | T_z)`, so the result is
/// normalized by construction.
pub fn to_matrix(cam: &Camera) -> ProjectionMatrix {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(cam.extrinsics.rotation.matrix());
    rt.fixed_view_mut::<3, 1>(0, 3)
        .copy_from(&cam.extrinsics.translation);
    ProjectionMatrix(cam.intrinsics.matrix() * rt)
}

pub fn project_matrix(m: &ProjectionMatrix, p: &Point3) -> Result<Point2, ProjectionError> {
    let h: Vector3<f64> = m.0 * Vector4::new(p.x, p.y, p.z, 1.0);
    if h.z.abs() <= DEPTH_EPSILON {
        return Err(ProjectionError::DegenerateDepth(h.z));
    }
    Ok(Point2::new(h.x / h.z, h.y / h.z))
}

pub fn image_to_framebuffer(s: &SensorModel, p: &Point2) -> Point2 {
    Point2::new(s.sx * p.u / s.dx + s.cx, p.v / s.dy + s.cy)
}

/// Per-axis mean of `observed − projected`, and the root mean square of the
/// per-point Euclidean residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprojectionReport {
    pub mean_x: f64,
    pub mean_y: f64,
    pub rms: f64,
    pub residuals: Vec<Point2>,
}

pub fn reprojection_errors(
    m: &ProjectionMatrix,
    world: &[Point3],
    observed: &[Point2],
) -> Result<ReprojectionReport, ProjectionError> {
    if world.len() != observed.len() || world.is_empty() {
        return Err(ProjectionError::ShapeMismatch(format!(
            "{} world points vs {} observations",
            world.len(),
            observed.len()
        )));
    }
    let residuals = world
        .iter()
        .zip(observed)
        .map(|(p, obs)| {
            project_matrix(m, p).map(|proj| Point2::new(obs.u - proj.u, obs.v - proj.v))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = residuals.len() as f64;
    let mean_x = residuals.iter().map(|r| r.u).sum::<f64>() / n;
    let mean_y = residuals.iter().map(|r| r.v).sum::<f64>() / n;
    let rms = (residuals.iter().map(|r| r.u * r.u + r.v * r.v).sum::<f64>() / n).sqrt();
    Ok(ReprojectionReport {
        mean_x,
        mean_y,
        rms,
        residuals,
    })
}
