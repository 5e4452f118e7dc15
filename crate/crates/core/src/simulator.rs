//! Synthetic calibration scenes with known ground truth.
//!
//! The scene follows the single-camera setup: one physical camera with a
//! fixed pose in the global frame photographs a calibration object that is
//! placed differently for every snapshot. Each snapshot therefore has its own
//! local frame (the object's coordinates), its own local extrinsics, and a
//! local → global transform. After registration every snapshot must map back
//! to the same global camera.
//!
//! Randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64`; Gaussian
//! variates use the Box–Muller transform. Both are reported in
//! [`RNG_ALGORITHM`] and [`NOISE_ALGORITHM`] so outputs can be reproduced.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dlt::Correspondence;
use crate::features::GrayImage;
use crate::geometry::{apply_rigid, compose, inverse, Point2, Point3, RigidTransform, Rotation3};
use crate::numeric::{singular_values, Matrix};
use crate::projection::{project, world_to_camera, Camera, CameraIntrinsics, ProjectionError};
use crate::registration::{FramePair, RegistrationError};

pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";
pub const NOISE_ALGORITHM: &str = "Box-Muller over two uniforms in (0, 1]";

pub const DEFAULT_DOT_COUNT: usize = 19;
pub const DEFAULT_CALIBRATION_COUNT: usize = 8;
pub const DEFAULT_REGISTRATION_COUNT: usize = 18;
pub const DEFAULT_CAMERAS: usize = 4;
pub const DEFAULT_IMAGE_SIZE: (u32, u32) = (1000, 1100);

pub const BACKGROUND_INTENSITY: u8 = 230;
pub const DOT_INTENSITY: u8 = 20;

/// Smallest singular value of the centered calibration points.
const COPLANARITY_FLOOR: f64 = 1e-6;
const MAX_POSE_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("Unsatisfiable: no pose met the visibility constraints for camera {0} in {MAX_POSE_ATTEMPTS} attempts")]
    Unsatisfiable(usize),
    #[error("dot {0} is out of frame")]
    OutOfFrame(usize),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

/// Independent sub-seed for stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// One standard-normal pair.
pub fn gaussian_pair(rng: &mut impl Rng) -> (f64, f64) {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = 1.0 - rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    /// Explicit dot positions; `None` uses the two-plane default layout.
    pub dots: Option<Vec<Point3>>,
    /// Dot count for the default layout.
    pub dot_count: usize,
    pub spacing: f64,
    /// Uniform position jitter applied to the default layout.
    pub jitter: f64,
    pub calibration: Option<Vec<usize>>,
    pub registration: Option<Vec<usize>>,
}

impl Default for PatternSpec {
    fn default() -> Self {
        Self {
            dots: None,
            dot_count: DEFAULT_DOT_COUNT,
            spacing: 0.1,
            jitter: 0.005,
            calibration: None,
            registration: None,
        }
    }
}

/// Dot positions in the object's own frame plus the index subsets used for
/// calibration and for registration.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub dots: Vec<Point3>,
    pub calibration: Vec<usize>,
    pub registration: Vec<usize>,
}

impl Pattern {
    pub fn centroid(&self) -> Point3 {
        let n = self.dots.len() as f64;
        let sum = self
            .dots
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.to_vector());
        Point3::from_vector(&(sum / n))
    }
}

/// Two orthogonal faces of a box corner (`z = 0` and `x = 0`) filled
/// alternately on a 3-wide grid, with the last dot off both faces.
fn default_layout(count: usize, spacing: f64) -> Vec<Point3> {
    (0..count)
        .map(|k| {
            if k + 1 == count {
                return Point3::new(2.0 * spacing, 2.0 * spacing, 2.0 * spacing);
            }
            let j = k / 2;
            let a = spacing * (1 + j % 3) as f64;
            let b = spacing * (1 + j / 3) as f64;
            if k % 2 == 0 {
                Point3::new(a, b, 0.0)
            } else {
                Point3::new(0.0, a, b)
            }
        })
        .collect()
}

fn spans_3d(points: &[Point3]) -> bool {
    if points.len() < 4 {
        return false;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p.to_vector()) / n;
    let data = points
        .iter()
        .flat_map(|p| {
            let d = p.to_vector() - mean;
            [d.x, d.y, d.z]
        })
        .collect();
    let centered = Matrix::new(points.len(), 3, data).expect("finite points");
    singular_values(&centered).is_ok_and(|sv| sv.len() == 3 && sv[2] > COPLANARITY_FLOOR)
}

fn check_subset(name: &str, subset: &[usize], n: usize, min: usize) -> Result<(), SimError> {
    if subset.len() < min {
        return Err(SimError::InvalidSpec(format!(
            "{name} subset needs at least {min} dots, got {}",
            subset.len()
        )));
    }
    if let Some(i) = subset.iter().find(|&&i| i >= n) {
        return Err(SimError::InvalidSpec(format!("{name} index {i} out of range")));
    }
    Ok(())
}

pub fn generate_pattern(spec: &PatternSpec, seed: u64) -> Result<Pattern, SimError> {
    let dots = match &spec.dots {
        Some(d) => d.clone(),
        None => {
            if spec.dot_count < DEFAULT_CALIBRATION_COUNT {
                return Err(SimError::InvalidSpec(format!(
                    "default layout needs at least {DEFAULT_CALIBRATION_COUNT} dots"
                )));
            }
            if !(spec.spacing > 0.0 && spec.jitter >= 0.0 && spec.jitter < spec.spacing / 4.0) {
                return Err(SimError::InvalidSpec(
                    "spacing must be positive and jitter below a quarter of it".into(),
                ));
            }
            let mut rng = rng_for(seed, 0);
            default_layout(spec.dot_count, spec.spacing)
                .into_iter()
                .map(|p| {
                    let mut jit = || {
                        if spec.jitter > 0.0 {
                            rng.random_range(-spec.jitter..=spec.jitter)
                        } else {
                            0.0
                        }
                    };
                    // stay on the faces: only in-plane coordinates move
                    Point3::new(
                        if p.x == 0.0 { 0.0 } else { p.x + jit() },
                        p.y + jit(),
                        if p.z == 0.0 { 0.0 } else { p.z + jit() },
                    )
                })
                .collect()
        }
    };
    if let Some(i) = dots.iter().position(|p| !p.is_finite()) {
        return Err(SimError::InvalidSpec(format!("dot {i} is not finite")));
    }
    let n = dots.len();
    let calibration = spec.calibration.clone().unwrap_or_else(|| {
        let k = DEFAULT_CALIBRATION_COUNT.min(n);
        (0..k).map(|i| i * n / k).collect()
    });
    let registration = spec
        .registration
        .clone()
        .unwrap_or_else(|| (0..DEFAULT_REGISTRATION_COUNT.min(n)).collect());
    check_subset("calibration", &calibration, n, crate::dlt::MIN_CORRESPONDENCES)?;
    check_subset("registration", &registration, n, crate::registration::MIN_FRAME_PAIRS)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dots[i]).collect::<Vec<_>>();
    if !spans_3d(&pick(&calibration)) {
        return Err(SimError::InvalidSpec("calibration dots are coplanar".into()));
    }
    if !spans_3d(&pick(&registration)) {
        return Err(SimError::InvalidSpec("registration dots are coplanar".into()));
    }
    Ok(Pattern {
        dots,
        calibration,
        registration,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RigIntrinsics {
    Shared(CameraIntrinsics),
    PerCamera(Vec<CameraIntrinsics>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigSpec {
    pub cameras: usize,
    pub intrinsics: RigIntrinsics,
    /// Look-at point in the object frame; `None` aims at the dot centroid.
    pub target: Option<Point3>,
    pub distance_range: (f64, f64),
    /// Nominal direction from the target towards the camera, object frame.
    pub view_direction: Vector3<f64>,
    /// Largest angle (radians) between the actual and nominal view direction.
    pub view_spread: f64,
    /// Largest extra rotation (radians) about a random axis after aiming.
    pub orientation_jitter: f64,
    pub image_size: (u32, u32),
    /// Dots must project at least this far inside the frame, in pixels.
    pub margin: f64,
    /// Smallest allowed distance between two projected dots, in pixels.
    pub min_dot_separation: f64,
    /// World → camera pose of the physical camera; random when `None`.
    pub global_pose: Option<RigidTransform>,
}

impl Default for RigSpec {
    fn default() -> Self {
        let (w, h) = DEFAULT_IMAGE_SIZE;
        Self {
            cameras: DEFAULT_CAMERAS,
            intrinsics: RigIntrinsics::Shared(
                CameraIntrinsics::new(800.0, 820.0, f64::from(w) / 2.0, f64::from(h) / 2.0)
                    .expect("positive focal scales"),
            ),
            target: None,
            distance_range: (0.9, 1.4),
            view_direction: Vector3::new(1.0, 1.0, 1.0),
            view_spread: 0.25,
            orientation_jitter: 0.03,
            image_size: DEFAULT_IMAGE_SIZE,
            margin: 20.0,
            min_dot_separation: 16.0,
            global_pose: None,
        }
    }
}

/// One snapshot: the camera against the object's local frame, and the
/// object's placement in the global frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigView {
    /// Extrinsics map local (object) coordinates to camera coordinates.
    pub camera: Camera,
    /// Local → global.
    pub frame: RigidTransform,
}

impl RigView {
    /// The same camera with extrinsics against the global frame.
    pub fn global_camera(&self) -> Camera {
        Camera::new(
            self.camera.intrinsics,
            compose(&self.camera.extrinsics, &inverse(&self.frame)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub views: Vec<RigView>,
    /// Global → camera pose shared by every view.
    pub global_pose: RigidTransform,
}

/// Camera at `center` looking at `target`; image `v` grows downwards and
/// `up` points roughly upwards in the image.
pub fn look_at(center: &Point3, target: &Point3, up: &Vector3<f64>) -> Option<RigidTransform> {
    let forward = (target.to_vector() - center.to_vector()).try_normalize(1e-12)?;
    let right = forward.cross(up).try_normalize(1e-9)?;
    let down = forward.cross(&right);
    let r = nalgebra::Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let rotation = Rotation3::new(r).ok()?;
    let translation = -rotation.rotate(&center.to_vector());
    Some(RigidTransform::new(rotation, translation))
}

fn random_unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let (a, b) = gaussian_pair(rng);
        let (c, _) = gaussian_pair(rng);
        if let Some(v) = Vector3::new(a, b, c).try_normalize(1e-9) {
            return v;
        }
    }
}

fn random_rotation(rng: &mut impl Rng) -> Rotation3 {
    let (a, b) = gaussian_pair(rng);
    let (c, d) = gaussian_pair(rng);
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(a, b, c, d));
    Rotation3::new(*q.to_rotation_matrix().matrix()).unwrap_or_else(|_| Rotation3::identity())
}

fn small_rotation(rng: &mut impl Rng, max_angle: f64) -> Rotation3 {
    if max_angle <= 0.0 {
        return Rotation3::identity();
    }
    Rotation3::from_axis_angle(&random_unit_vector(rng), rng.random_range(0.0..=max_angle))
}

fn validate_rig(spec: &RigSpec) -> Result<Vec<CameraIntrinsics>, SimError> {
    let invalid = |m: &str| Err(SimError::InvalidSpec(m.into()));
    if spec.cameras == 0 {
        return invalid("rig needs at least one camera");
    }
    let (lo, hi) = spec.distance_range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return invalid("distance range must satisfy 0 < min <= max");
    }
    if !(spec.view_spread >= 0.0 && spec.orientation_jitter >= 0.0) {
        return invalid("spread and jitter must be non-negative");
    }
    if spec.view_direction.norm() < 1e-12 {
        return invalid("view direction must be nonzero");
    }
    if spec.image_size.0 == 0 || spec.image_size.1 == 0 {
        return invalid("image size must be positive");
    }
    let intrinsics = match &spec.intrinsics {
        RigIntrinsics::Shared(k) => vec![*k; spec.cameras],
        RigIntrinsics::PerCamera(ks) if ks.len() == spec.cameras => ks.clone(),
        RigIntrinsics::PerCamera(ks) => {
            return Err(SimError::InvalidSpec(format!(
                "{} intrinsics for {} cameras",
                ks.len(),
                spec.cameras
            )))
        }
    };
    for k in &intrinsics {
        k.validate()?;
    }
    Ok(intrinsics)
}

fn sees_pattern(cam: &Camera, pattern: &Pattern, spec: &RigSpec) -> bool {
    if cam.extrinsics.translation.z <= 0.0 {
        return false;
    }
    let (w, h) = (f64::from(spec.image_size.0), f64::from(spec.image_size.1));
    let mut pixels = Vec::with_capacity(pattern.dots.len());
    for p in &pattern.dots {
        if world_to_camera(cam, p).z <= 0.0 {
            return false;
        }
        let Ok(px) = project(cam, p) else {
            return false;
        };
        let inside = px.u >= spec.margin
            && px.v >= spec.margin
            && px.u <= w - 1.0 - spec.margin
            && px.v <= h - 1.0 - spec.margin;
        if !inside {
            return false;
        }
        pixels.push(px);
    }
    pixels.iter().enumerate().all(|(i, a)| {
        pixels[i + 1..]
            .iter()
            .all(|b| a.distance(b) >= spec.min_dot_separation)
    })
}

pub fn generate_rig(spec: &RigSpec, pattern: &Pattern, seed: u64) -> Result<Rig, SimError> {
    let intrinsics = validate_rig(spec)?;
    let mut rng = rng_for(seed, 1);
    let global_pose = spec.global_pose.unwrap_or_else(|| {
        let t = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        RigidTransform::new(random_rotation(&mut rng), t)
    });
    let target = spec.target.unwrap_or_else(|| pattern.centroid());
    let nominal = spec.view_direction.normalize();
    let up = Vector3::z();
    let mut views = Vec::with_capacity(spec.cameras);
    for (index, k) in intrinsics.into_iter().enumerate() {
        let mut found = None;
        for _ in 0..MAX_POSE_ATTEMPTS {
            let dir = small_rotation(&mut rng, spec.view_spread).rotate(&nominal);
            let (lo, hi) = spec.distance_range;
            let distance = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let center = Point3::from_vector(&(target.to_vector() + dir * distance));
            let hint = if dir.cross(&up).norm() > 1e-6 { up } else { Vector3::y() };
            let Some(aimed) = look_at(&center, &target, &hint) else {
                continue;
            };
            let jitter = small_rotation(&mut rng, spec.orientation_jitter);
            let extrinsics = RigidTransform::new(
                jitter.mul(&aimed.rotation),
                jitter.rotate(&aimed.translation),
            );
            let camera = Camera::new(k, extrinsics);
            if sees_pattern(&camera, pattern, spec) {
                found = Some(camera);
                break;
            }
        }
        let camera = found.ok_or(SimError::Unsatisfiable(index))?;
        // global ∘ frame = local, so frame = global⁻¹ ∘ local
        let frame = compose(&inverse(&global_pose), &camera.extrinsics);
        views.push(RigView { camera, frame });
    }
    Ok(Rig { views, global_pose })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn exact() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }
}

/// Every dot as seen in one snapshot, in dot-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pixels: Vec<Point2>,
    pub local: Vec<Point3>,
    pub global: Vec<Point3>,
}

impl Observation {
    pub fn correspondences(&self, indices: &[usize]) -> Vec<Correspondence> {
        indices
            .iter()
            .map(|&i| Correspondence::new(self.local[i], self.pixels[i]))
            .collect()
    }

    pub fn frame_pair(&self, indices: &[usize]) -> Result<FramePair, RegistrationError> {
        FramePair::new(
            indices.iter().map(|&i| self.local[i]).collect(),
            indices.iter().map(|&i| self.global[i]).collect(),
        )
    }
}

pub fn observe(view: &RigView, pattern: &Pattern, noise: &NoiseSpec) -> Result<Observation, SimError> {
    if !(noise.sigma.is_finite() && noise.sigma >= 0.0) {
        return Err(SimError::InvalidSpec("noise sigma must be finite and non-negative".into()));
    }
    let mut rng = rng_for(noise.seed, 2);
    let mut pixels = Vec::with_capacity(pattern.dots.len());
    for p in &pattern.dots {
        let exact = project(&view.camera, p)?;
        pixels.push(if noise.sigma > 0.0 {
            let (du, dv) = gaussian_pair(&mut rng);
            Point2::new(exact.u + noise.sigma * du, exact.v + noise.sigma * dv)
        } else {
            exact
        });
    }
    Ok(Observation {
        pixels,
        local: pattern.dots.clone(),
        global: pattern.dots.iter().map(|p| apply_rigid(&view.frame, p)).collect(),
    })
}

/// Hard-edged dark discs on a light field, one per dot, centered on the
/// rounded projection.
pub fn render_dot_image(
    camera: &Camera,
    dots: &[Point3],
    width: usize,
    height: usize,
    dot_radius: usize,
) -> Result<GrayImage, SimError> {
    if width == 0 || height == 0 {
        return Err(SimError::InvalidSpec("image size must be positive".into()));
    }
    let mut img = GrayImage::filled(width, height, BACKGROUND_INTENSITY);
    let r = dot_radius as i64;
    for (i, p) in dots.iter().enumerate() {
        let px = project(camera, p)?;
        let (cu, cv) = (px.u.round(), px.v.round());
        let fits = cu - (r as f64) >= 0.0
            && cv - (r as f64) >= 0.0
            && cu + (r as f64) <= (width - 1) as f64
            && cv + (r as f64) <= (height - 1) as f64;
        if !fits {
            return Err(SimError::OutOfFrame(i));
        }
        let (cu, cv) = (cu as i64, cv as i64);
        for dv in -r..=r {
            for du in -r..=r {
                if du * du + dv * dv <= r * r {
                    img.set((cu + du) as usize, (cv + dv) as usize, DOT_INTENSITY);
                }
            }
        }
    }
    Ok(img)
}

/// Everything needed for a full calibration run, generated from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub pattern: Pattern,
    pub rig: Rig,
    pub observations: Vec<Observation>,
    /// A global point in front of the physical camera, for unification.
    pub probe_point: Point3,
    pub seed: u64,
    pub noise_sigma: f64,
}

pub fn generate_scene(
    pattern_spec: &PatternSpec,
    rig_spec: &RigSpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<Scene, SimError> {
    let pattern = generate_pattern(pattern_spec, seed)?;
    let rig = generate_rig(rig_spec, &pattern, seed)?;
    let observations = rig
        .views
        .iter()
        .enumerate()
        .map(|(i, view)| {
            let noise = NoiseSpec {
                sigma: noise_sigma,
                seed: derive_seed(seed, 100 + i as u64),
            };
            observe(view, &pattern, &noise)
        })
        .collect::<Result<Vec<_>, _>>()?;
    // an off-grid point inside the object, seen by the first snapshot
    let c = pattern.centroid();
    let probe_local = Point3::new(c.x + 0.013, c.y - 0.007, c.z + 0.011);
    let probe_point = apply_rigid(&rig.views[0].frame, &probe_local);
    Ok(Scene {
        pattern,
        rig,
        observations,
        probe_point,
        seed,
        noise_sigma,
    })
}
