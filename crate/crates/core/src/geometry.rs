//! Points, rotations and rigid transforms shared by the rest of the crate.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Maximum Frobenius deviation of `RᵀR` from identity, and of `det R` from 1.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a proper rotation (orthonormality error {orthonormality:e}, det {det})")]
    NotRotation { orthonormality: f64, det: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A point in 3D, in world length units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn origin() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// A point on the image plane. Whether the units are image-plane units or
/// pixels depends on where the value came from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub u: f64,
    pub v: f64,
}

impl Point2 {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

/// A proper rotation matrix, stored row-major so that row `i` is `Rᵢᵀ` in
/// `X = R₁ᵀ·P + Tx`, `Y = R₂ᵀ·P + Ty`, `Z = R₃ᵀ·P + Tz`.
///
/// Construction checks orthonormality and `det = +1` to [`ROTATION_TOLERANCE`].
/// Near-orthogonal data should be repaired with
/// [`nearest_rotation`](crate::numeric::nearest_rotation) first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        let orthonormality = orthonormality_error(&m);
        let det = m.determinant();
        if orthonormality > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotRotation { orthonormality, det });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    /// Rotation by `angle` radians about the unit-normalized `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self(*r.matrix())
    }

    /// Skips validation. Only for products and transposes of values that
    /// already satisfy the invariant.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn mul(&self, other: &Rotation3) -> Self {
        Self(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

/// `‖RᵀR − I‖_F`.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// `p ↦ R·p + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Rotation3, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation3::identity(), t)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        apply_rigid(self, p)
    }
}

pub fn apply_rigid(t: &RigidTransform, p: &Point3) -> Point3 {
    let r = t.rotation.matrix();
    let tr = &t.translation;
    Point3::new(
        r[(0, 0)] * p.x + r[(0, 1)] * p.y + r[(0, 2)] * p.z + tr.x,
        r[(1, 0)] * p.x + r[(1, 1)] * p.y + r[(1, 2)] * p.z + tr.y,
        r[(2, 0)] * p.x + r[(2, 1)] * p.y + r[(2, 2)] * p.z + tr.z,
    )
}

/// `a ∘ b`: applies `b` first, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: a.rotation.mul(&b.rotation),
        translation: a.rotation.rotate(&b.translation) + a.translation,
    }
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        translation: -rt.rotate(&t.translation),
        rotation: rt,
    }
}
