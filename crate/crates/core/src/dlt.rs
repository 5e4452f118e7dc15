//! Direct Linear Transformation calibration.
//!
//! Each 3D–2D correspondence contributes two rows to a homogeneous system
//! `L·a = 0` in the twelve entries of `M`. The system is solved by SVD under
//! the constraint `‖(m₃₁, m₃₂, m₃₃)‖ = 1`, and intrinsics and extrinsics are
//! then read off `M` in closed form:
//!
//! ```text
//! u0 = m1·m3            v0 = m2·m3
//! αu = √(m1·m1 − u0²)   αv = √(m2·m2 − v0²)
//! r1 = (m1 − u0·m3)/αu  r2 = (m2 − v0·m3)/αv  r3 = m3
//! Tx = (m14 − u0·m34)/αu  Ty = (m24 − v0·m34)/αv  Tz = m34
//! ```
//!
//! The rotation assembled from `r1, r2, r3` is only approximately orthogonal
//! on noisy data, so it is replaced by its nearest rotation.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{Point2, Point3, RigidTransform};
use crate::numeric::{nearest_rotation, solve_homogeneous, Matrix, NumericError};
use crate::projection::{
    reprojection_errors, Camera, CameraIntrinsics, ProjectionError, ProjectionMatrix,
    ReprojectionReport, DEPTH_EPSILON,
};

/// Fewest correspondences that determine the 11 degrees of freedom of `M`.
pub const MIN_CORRESPONDENCES: usize = 6;

/// Smallest admissible argument of the focal-scale square roots.
pub const FOCAL_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DltError {
    #[error("TooFewPoints: need at least {MIN_CORRESPONDENCES} correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("DegenerateConfiguration: calibration points do not determine the projection ({0})")]
    DegenerateConfiguration(NumericError),
    #[error("BadGeometry: {0}")]
    BadGeometry(String),
    #[error("NotNormalized: third row norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("DegenerateFocal: focal scale argument {0:e} is not positive")]
    DegenerateFocal(f64),
    #[error("non-finite correspondence {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Numeric(NumericError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// A world point and the pixel where it was observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world: Point3,
    pub pixel: Point2,
}

impl Correspondence {
    pub fn new(world: Point3, pixel: Point2) -> Self {
        Self { world, pixel }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// The normalized DLT solution.
    pub matrix: ProjectionMatrix,
    pub camera: Camera,
    /// Rows `r1, r2, r3` before projection onto the rotation group.
    pub raw_rotation: Matrix3<f64>,
    pub errors: ReprojectionReport,
}

/// Parameters recovered from a normalized projection matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedParameters {
    pub camera: Camera,
    pub raw_rotation: Matrix3<f64>,
}

/// Stacks two rows per correspondence over the unknowns
/// `(m11..m14, m21..m24, m31..m34)`.
pub fn build_design_matrix(corrs: &[Correspondence]) -> Result<Matrix, DltError> {
    if corrs.len() < MIN_CORRESPONDENCES {
        return Err(DltError::TooFewPoints(corrs.len()));
    }
    design_rows(corrs)
}

fn design_rows(corrs: &[Correspondence]) -> Result<Matrix, DltError> {
    let mut data = Vec::with_capacity(corrs.len() * 24);
    for (i, c) in corrs.iter().enumerate() {
        if !(c.world.is_finite() && c.pixel.is_finite()) {
            return Err(DltError::NonFinite(i));
        }
        let Point3 { x, y, z } = c.world;
        let Point2 { u, v } = c.pixel;
        data.extend_from_slice(&[x, y, z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u * z, -u]);
        data.extend_from_slice(&[0.0, 0.0, 0.0, 0.0, x, y, z, 1.0, -v * x, -v * y, -v * z, -v]);
    }
    Matrix::new(2 * corrs.len(), 12, data).map_err(DltError::Numeric)
}

pub fn calibrate(corrs: &[Correspondence]) -> Result<CalibrationResult, DltError> {
    let design = build_design_matrix(corrs)?;
    let solution = solve_homogeneous(&design).map_err(|e| match e {
        NumericError::RankDeficient { .. } => DltError::DegenerateConfiguration(e),
        other => DltError::Numeric(other),
    })?;
    let raw = ProjectionMatrix::from_row_slice(&solution)?;
    let mut matrix = raw.normalized().ok_or_else(|| {
        DltError::BadGeometry("solution has a zero third row".into())
    })?;
    let tz = matrix.matrix()[(2, 3)];
    if tz.abs() <= DEPTH_EPSILON {
        return Err(DltError::BadGeometry(format!(
            "world origin has depth {tz:e} under both signs of the solution"
        )));
    }
    if tz < 0.0 {
        matrix = matrix.scaled(-1.0);
    }
    let ExtractedParameters {
        camera,
        raw_rotation,
    } = extract_parameters(&matrix)?;
    let world: Vec<Point3> = corrs.iter().map(|c| c.world).collect();
    let observed: Vec<Point2> = corrs.iter().map(|c| c.pixel).collect();
    let errors = reprojection_errors(&matrix, &world, &observed)?;
    Ok(CalibrationResult {
        matrix,
        camera,
        raw_rotation,
        errors,
    })
}

pub fn extract_parameters(m: &ProjectionMatrix) -> Result<ExtractedParameters, DltError> {
    if !m.is_normalized() {
        return Err(DltError::NotNormalized(m.third_row_norm()));
    }
    let mm = m.matrix();
    let row = |i: usize| Vector3::new(mm[(i, 0)], mm[(i, 1)], mm[(i, 2)]);
    let (m1, m2, m3) = (row(0), row(1), row(2));
    let (m14, m24, m34) = (mm[(0, 3)], mm[(1, 3)], mm[(2, 3)]);

    let u0 = m1.dot(&m3);
    let v0 = m2.dot(&m3);
    let au_sq = m1.dot(&m1) - u0 * u0;
    let av_sq = m2.dot(&m2) - v0 * v0;
    for arg in [au_sq, av_sq] {
        if arg <= FOCAL_EPSILON {
            return Err(DltError::DegenerateFocal(arg));
        }
    }
    let alpha_u = au_sq.sqrt();
    let alpha_v = av_sq.sqrt();

    let r1 = (m1 - m3 * u0) / alpha_u;
    let r2 = (m2 - m3 * v0) / alpha_v;
    let raw_rotation = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), m3.transpose()]);
    let translation = Vector3::new((m14 - u0 * m34) / alpha_u, (m24 - v0 * m34) / alpha_v, m34);
    let rotation = nearest_rotation(&raw_rotation).map_err(DltError::Numeric)?;

    Ok(ExtractedParameters {
        camera: Camera::new(
            CameraIntrinsics::new(alpha_u, alpha_v, u0, v0)?,
            RigidTransform::new(rotation, translation),
        ),
        raw_rotation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation3;
    use crate::numeric::{residual_norm, singular_values};
    use crate::projection::{project, to_matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    fn random_rotation(rng: &mut impl Rng) -> Rotation3 {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Rotation3::from_axis_angle(&(axis + Vector3::new(0.0, 0.0, 1e-3)), rng.random_range(-0.6..0.6))
    }

    fn reference_camera(rng: &mut impl Rng) -> Camera {
        Camera::new(
            CameraIntrinsics::new(800.0, 820.0, 320.0, 240.0).unwrap(),
            RigidTransform::new(
                random_rotation(rng),
                Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 10.0),
            ),
        )
    }

    fn random_camera(rng: &mut impl Rng) -> Camera {
        Camera::new(
            CameraIntrinsics::new(
                rng.random_range(200.0..2000.0),
                rng.random_range(200.0..2000.0),
                rng.random_range(-100.0..900.0),
                rng.random_range(-100.0..900.0),
            )
            .unwrap(),
            RigidTransform::new(
                random_rotation(rng),
                Vector3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(4.0..20.0),
                ),
            ),
        )
    }

    fn cube_points(rng: &mut impl Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn observe(cam: &Camera, pts: &[Point3]) -> Vec<Correspondence> {
        pts.iter()
            .map(|p| Correspondence::new(*p, project(cam, p).unwrap()))
            .collect()
    }

    fn assert_cameras_close(got: &Camera, want: &Camera, tol: f64) {
        let (g, w) = (&got.intrinsics, &want.intrinsics);
        assert!(rel(g.alpha_u, w.alpha_u) < tol, "alpha_u {} vs {}", g.alpha_u, w.alpha_u);
        assert!(rel(g.alpha_v, w.alpha_v) < tol, "alpha_v {} vs {}", g.alpha_v, w.alpha_v);
        assert!(rel(g.u0, w.u0) < tol, "u0 {} vs {}", g.u0, w.u0);
        assert!(rel(g.v0, w.v0) < tol, "v0 {} vs {}", g.v0, w.v0);
        let dr = (got.extrinsics.rotation.matrix() - want.extrinsics.rotation.matrix()).norm();
        assert!(dr < tol, "rotation error {dr}");
        let dt = (got.extrinsics.translation - want.extrinsics.translation).norm();
        assert!(dt < tol * want.extrinsics.translation.norm().max(1.0), "translation error {dt}");
    }

    #[test]
    fn design_rows_by_substitution() {
        let zero = Correspondence::new(Point3::origin(), Point2::new(0.0, 0.0));
        let l = design_rows(&[zero]).unwrap();
        assert_eq!(l.row(0), &[0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(l.row(1), &[0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0.]);

        let c = Correspondence::new(Point3::new(1.0, 0.0, 0.0), Point2::new(2.0, 3.0));
        let l = design_rows(&[c]).unwrap();
        assert_eq!(l.row(0), &[1., 0., 0., 1., 0., 0., 0., 0., -2., 0., 0., -2.]);
        assert_eq!(l.row(1), &[0., 0., 0., 0., 1., 0., 0., 1., -3., 0., 0., -3.]);
    }

    #[test]
    fn design_matrix_shape_and_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cam = reference_camera(&mut rng);
        let corrs = observe(&cam, &cube_points(&mut rng, 8));
        let l = build_design_matrix(&corrs).unwrap();
        assert_eq!((l.rows(), l.cols()), (16, 12));
        assert_eq!(build_design_matrix(&corrs[..5]), Err(DltError::TooFewPoints(5)));
        let mut bad = corrs.clone();
        bad[2].pixel.u = f64::NAN;
        assert_eq!(build_design_matrix(&bad), Err(DltError::NonFinite(2)));
    }

    #[test]
    fn true_matrix_lies_in_design_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let cam = random_camera(&mut rng);
            let corrs = observe(&cam, &cube_points(&mut rng, 12));
            let l = build_design_matrix(&corrs).unwrap();
            let m = to_matrix(&cam);
            let vec_m: Vec<f64> = m.rows().iter().flatten().copied().collect();
            let m_norm = vec_m.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(residual_norm(&l, &vec_m) < 1e-9 * l.frobenius_norm() * m_norm);
        }
    }

    #[test]
    fn extract_identity_matrix() {
        let m = ProjectionMatrix::from_row_slice(&[
            1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0.,
        ])
        .unwrap();
        let cam = extract_parameters(&m).unwrap().camera;
        assert_eq!(cam.intrinsics, CameraIntrinsics::unit());
        assert_eq!(cam.extrinsics.translation, Vector3::zeros());
        assert!((cam.extrinsics.rotation.matrix() - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn extract_hand_built_matrix() {
        let m = ProjectionMatrix::from_row_slice(&[
            2., 0., 3., 15., 0., 1., 0., 0., 0., 0., 1., 5.,
        ])
        .unwrap();
        let cam = extract_parameters(&m).unwrap().camera;
        let k = cam.intrinsics;
        assert_eq!((k.alpha_u, k.alpha_v, k.u0, k.v0), (2.0, 1.0, 3.0, 0.0));
        assert_eq!(cam.extrinsics.translation, Vector3::new(0.0, 0.0, 5.0));
        assert!((cam.extrinsics.rotation.matrix() - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn extract_rejects_bad_input() {
        let m = ProjectionMatrix::from_row_slice(&[
            1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 2., 0.,
        ])
        .unwrap();
        assert!(matches!(extract_parameters(&m), Err(DltError::NotNormalized(_))));
        // first row parallel to the third: zero horizontal focal scale
        let m = ProjectionMatrix::from_row_slice(&[
            0., 0., 3., 0., 0., 1., 0., 0., 0., 0., 1., 0.,
        ])
        .unwrap();
        assert!(matches!(extract_parameters(&m), Err(DltError::DegenerateFocal(_))));
    }

    #[test]
    fn extract_inverts_to_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let cam = random_camera(&mut rng);
            let got = extract_parameters(&to_matrix(&cam)).unwrap();
            assert_cameras_close(&got.camera, &cam, 1e-9);
        }
    }

    #[test]
    fn extraction_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let m = to_matrix(&random_camera(&mut rng));
            let a = extract_parameters(&m).unwrap().camera;
            let lambda = rng.random_range(0.01..100.0);
            let b = extract_parameters(&m.scaled(lambda).normalized().unwrap())
                .unwrap()
                .camera;
            assert_cameras_close(&b, &a, 1e-10);
        }
    }

    #[test]
    fn calibrate_exact_reference_camera() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let cam = reference_camera(&mut rng);
            let result = calibrate(&observe(&cam, &cube_points(&mut rng, 8))).unwrap();
            assert_cameras_close(&result.camera, &cam, 1e-8);
            assert!(result.matrix.is_normalized());
            assert!((result.raw_rotation - result.camera.extrinsics.rotation.matrix()).norm() < 1e-7);
            assert!(result.errors.rms < 1e-8);
        }
    }

    #[test]
    fn calibrate_exact_random_cameras() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let cam = random_camera(&mut rng);
            let n = rng.random_range(6..30);
            let result = calibrate(&observe(&cam, &cube_points(&mut rng, n))).unwrap();
            assert_cameras_close(&result.camera, &cam, 1e-7);
            assert!(result.errors.rms < 1e-8);
        }
    }

    #[test]
    fn calibrate_with_pixel_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cam = reference_camera(&mut rng);
        let mut corrs = observe(&cam, &cube_points(&mut rng, 20));
        for c in &mut corrs {
            c.pixel.u += rng.random_range(-0.8..0.8);
            c.pixel.v += rng.random_range(-0.8..0.8);
        }
        let result = calibrate(&corrs).unwrap();
        assert!(result.errors.mean_x.abs() < 1.0);
        assert!(result.errors.mean_y.abs() < 1.0);
        assert!(Rotation3::new(*result.camera.extrinsics.rotation.matrix()).is_ok());
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let cam = reference_camera(&mut rng);
            let pts: Vec<Point3> = cube_points(&mut rng, 8)
                .into_iter()
                .map(|p| Point3::new(p.x, p.y, 0.0))
                .collect();
            let corrs = observe(&cam, &pts);
            // independent check: the two smallest singular values of L coincide
            let sv = singular_values(&build_design_matrix(&corrs).unwrap()).unwrap();
            assert!(sv[10] - sv[11] <= 1e-10 * sv[0]);
            assert!(matches!(calibrate(&corrs), Err(DltError::DegenerateConfiguration(_))));
        }
    }

    #[test]
    fn too_few_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cam = reference_camera(&mut rng);
        let corrs = observe(&cam, &cube_points(&mut rng, 5));
        let err = calibrate(&corrs).unwrap_err();
        assert_eq!(err, DltError::TooFewPoints(5));
        assert!(err.to_string().contains("TooFewPoints"));
    }
}
