//! `mvcalib` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or format error, 4 numerical
//! failure. Messages go to standard error.

pub mod formats;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dlt::{calibrate, DltError};
use crate::features::{detect_dots, read_pgm, write_pgm, DetectParams, FeatureError, PgmError, PgmFormat};
use crate::projection::{to_matrix, ProjectionError, SensorModel};
use crate::registration::{
    estimate_registration, max_residual, register_camera, unify_point_on_sensor, RegisteredCamera,
    RegistrationError, Unification,
};
use crate::simulator::{
    generate_scene, render_dot_image, PatternSpec, RigSpec, SimError, NOISE_ALGORITHM, RNG_ALGORITHM,
};
use formats::{CameraFile, FormatError, PairsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DltError> for CliError {
    fn from(e: DltError) -> Self {
        match e {
            DltError::NonFinite(_) => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<RegistrationError> for CliError {
    fn from(e: RegistrationError) -> Self {
        match e {
            RegistrationError::LengthMismatch { .. } | RegistrationError::NonFinite(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<PairsError> for CliError {
    fn from(e: PairsError) -> Self {
        match e {
            PairsError::Format(f) => f.into(),
            PairsError::Registration(r) => r.into(),
        }
    }
}

impl From<ProjectionError> for CliError {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::InvalidSensor(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidParameter(_) => CliError::Usage(e.to_string()),
            FeatureError::ShapeMismatch(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T, impl Into<CliError>>) -> Result<T, CliError> {
    r.map_err(|e| match e.into() {
        CliError::Usage(m) => CliError::Usage(m),
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        CliError::Numeric(m) => CliError::Numeric(m),
    })
}

#[derive(Debug, Parser)]
#[command(name = "mvcalib", version, about = "Multi-view pinhole camera calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic scene bundle with ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        cameras: usize,
        #[arg(long, default_value_t = 19)]
        dots: usize,
        /// Pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        dot_radius: usize,
    },
    /// Estimate a camera from world/image correspondences.
    Calibrate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print per-axis mean reprojection errors.
        #[arg(long)]
        report: bool,
    },
    /// Move a camera into the global frame using local/global point pairs.
    Register {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project one global point through registered cameras and compare.
    Unify {
        #[arg(long, num_args = 1.., required = true)]
        cameras: Vec<PathBuf>,
        /// Global point as "x y z".
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Round to integers and require exact agreement.
        #[arg(long)]
        round: bool,
        /// Convert to frame-buffer coordinates first.
        #[arg(long, requires_all = ["width", "height"])]
        pixel: bool,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        /// Image center as "cx cy"; defaults to the middle of the frame.
        #[arg(long, allow_hyphen_values = true)]
        center: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        dx: f64,
        #[arg(long, default_value_t = 1.0)]
        dy: f64,
    },
    /// Find dark dots in a PGM image and write their centroids.
    Detect {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = crate::features::DEFAULT_THRESHOLD)]
        threshold: u8,
        #[arg(long, default_value_t = crate::features::DEFAULT_RADIUS)]
        radius: usize,
        #[arg(long, default_value_t = crate::features::DEFAULT_MIN_PIXELS)]
        min_pixels: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs the tool on `argv` (program name first), printing to the process's
/// standard streams, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            out: dir,
            cameras,
            dots,
            noise,
            seed,
            dot_radius,
        } => simulate(&dir, cameras, dots, noise, seed, dot_radius, out),
        Command::Calibrate {
            world,
            image,
            out: path,
            report,
        } => calibrate_cmd(&world, &image, &path, report, out),
        Command::Register {
            pairs,
            camera,
            out: path,
        } => register_cmd(&pairs, &camera, &path, out),
        Command::Unify {
            cameras,
            point,
            round,
            pixel,
            width,
            height,
            center,
            dx,
            dy,
        } => {
            let sensor = if pixel {
                let (w, h) = (width.unwrap_or(0), height.unwrap_or(0));
                let (cx, cy) = match center {
                    Some(c) => {
                        let p = formats::parse_point2(&c).map_err(|e| CliError::Usage(format!("--center: {e}")))?;
                        (p.u, p.v)
                    }
                    None => {
                        let c = SensorModel::centered(w, h);
                        (c.cx, c.cy)
                    }
                };
                Some(SensorModel::new(dx, dy, cx, cy)?)
            } else {
                None
            };
            let point = formats::parse_point3(&point).map_err(|e| CliError::Usage(format!("--point: {e}")))?;
            unify_cmd(&cameras, &point, round, sensor.as_ref(), out)
        }
        Command::Detect {
            image,
            threshold,
            radius,
            min_pixels,
            out: path,
        } => {
            let params = DetectParams {
                threshold,
                radius,
                min_pixels,
            };
            detect_cmd(&image, &params, &path, out)
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

fn simulate(
    dir: &Path,
    cameras: usize,
    dots: usize,
    noise: f64,
    seed: u64,
    dot_radius: usize,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let pattern_spec = PatternSpec {
        dot_count: dots,
        ..PatternSpec::default()
    };
    let rig_spec = RigSpec {
        cameras,
        ..RigSpec::default()
    };
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(CliError::Usage("--noise must be finite and non-negative".into()));
    }
    let scene = generate_scene(&pattern_spec, &rig_spec, noise, seed)?;
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;

    let (w, h) = rig_spec.image_size;
    let id = |i: usize| format!("p{:02}", i + 1);
    let join = |xs: &[usize]| xs.iter().map(|&i| id(i)).collect::<Vec<_>>().join(" ");
    let p = scene.probe_point;
    let scene_text = format!(
        "# mvcalib scene v1\nseed {seed}\nrng {RNG_ALGORITHM}\nnoise_model {NOISE_ALGORITHM}\n\
         noise_sigma {noise}\ncameras {cameras}\ndots {dots}\nimage_size {w} {h}\n\
         dot_radius {dot_radius}\ncalibration {}\nregistration {}\nprobe_point {} {} {}\n",
        join(&scene.pattern.calibration),
        join(&scene.pattern.registration),
        formats::fmt_f64(p.x),
        formats::fmt_f64(p.y),
        formats::fmt_f64(p.z),
    );
    write_file(&dir.join("scene.txt"), scene_text.as_bytes())?;

    let world: Vec<_> = scene.pattern.dots.iter().enumerate().map(|(i, p)| (id(i), *p)).collect();
    write_file(&dir.join("world.txt"), formats::write_world_points(&world).as_bytes())?;

    let global_truth = scene.rig.views[0].global_camera();
    write_file(
        &dir.join("truth_global.cam"),
        formats::write_camera(&CameraFile {
            matrix: to_matrix(&global_truth),
            camera: global_truth,
        })
        .as_bytes(),
    )?;

    for (k, (view, obs)) in scene.rig.views.iter().zip(&scene.observations).enumerate() {
        let n = k + 1;
        let image: Vec<_> = scene.pattern.calibration.iter().map(|&i| (id(i), obs.pixels[i])).collect();
        write_file(&dir.join(format!("image_cam{n}.txt")), formats::write_image_points(&image).as_bytes())?;

        let reg = &scene.pattern.registration;
        let pairs = obs.frame_pair(reg)?;
        let ids: Vec<String> = reg.iter().map(|&i| id(i)).collect();
        write_file(&dir.join(format!("pairs_cam{n}.txt")), formats::write_frame_pairs(&ids, &pairs).as_bytes())?;

        let truth = CameraFile {
            matrix: to_matrix(&view.camera),
            camera: view.camera,
        };
        write_file(&dir.join(format!("truth_cam{n}.cam")), formats::write_camera(&truth).as_bytes())?;

        let img = render_dot_image(&view.camera, &scene.pattern.dots, w as usize, h as usize, dot_radius)?;
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img, PgmFormat::Binary)?;
        write_file(&dir.join(format!("render_cam{n}.pgm")), &buf)?;
    }
    writeln!(out, "wrote {cameras}-camera scene to {}", dir.display()).map_err(io_err)?;
    Ok(())
}

fn calibrate_cmd(world: &Path, image: &Path, path: &Path, report: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let world_pts = with_path(world, formats::parse_world_points(&read_text(world)?))?;
    let image_pts = with_path(image, formats::parse_image_points(&read_text(image)?))?;
    let corrs = with_path(image, formats::join_correspondences(&world_pts, &image_pts))?;
    let result = calibrate(&corrs)?;
    let file = CameraFile {
        matrix: result.matrix,
        camera: result.camera,
    };
    write_file(path, formats::write_camera(&file).as_bytes())?;
    if report {
        let e = &result.errors;
        let k = result.camera.intrinsics;
        writeln!(
            out,
            "points {}\nalpha_u {}\nalpha_v {}\nu0 {}\nv0 {}\n\
             # mean reprojection error, observed minus projected, pixels\n\
             mean_x {:.4}\nmean_y {:.4}\nrms {:.4e}",
            corrs.len(),
            k.alpha_u,
            k.alpha_v,
            k.u0,
            k.v0,
            e.mean_x,
            e.mean_y,
            e.rms
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn register_cmd(pairs: &Path, camera: &Path, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let fp = with_path(pairs, formats::parse_frame_pairs(&read_text(pairs)?))?;
    let cam = with_path(camera, formats::parse_camera(&read_text(camera)?))?;
    let frame = estimate_registration(&fp)?;
    let registered = register_camera(&cam.camera, &frame);
    let file = CameraFile {
        matrix: to_matrix(&registered.camera),
        camera: registered.camera,
    };
    write_file(path, formats::write_camera(&file).as_bytes())?;
    writeln!(out, "max_residual {:.6e}", max_residual(&fp, &frame)).map_err(io_err)?;
    Ok(())
}

fn coord(x: f64, rounded: bool) -> String {
    if rounded {
        // + 0.0 turns -0 into 0
        format!("{}", x + 0.0)
    } else {
        formats::fmt_f64(x)
    }
}

fn print_unification(u: &Unification, out: &mut dyn Write) -> std::io::Result<()> {
    for (i, r) in u.per_camera.iter().enumerate() {
        match r {
            Ok(p) => writeln!(out, "camera {} {} {}", i + 1, coord(p.u, u.rounded), coord(p.v, u.rounded))?,
            Err(e) => writeln!(out, "camera {} not-visible ({e})", i + 1)?,
        }
    }
    Ok(())
}

fn unify_cmd(
    paths: &[PathBuf],
    point: &crate::geometry::Point3,
    round: bool,
    sensor: Option<&SensorModel>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cams = paths
        .iter()
        .map(|p| {
            let file = with_path(p, formats::parse_camera(&read_text(p)?))?;
            Ok(RegisteredCamera {
                camera: file.camera,
                frame_transform: crate::geometry::RigidTransform::identity(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    match unify_point_on_sensor(&cams, point, round, sensor) {
        Ok(u) => {
            print_unification(&u, out).map_err(io_err)?;
            writeln!(
                out,
                "consensus {} {}\nmax_deviation {:.6e}",
                coord(u.consensus.u, u.rounded),
                coord(u.consensus.v, u.rounded),
                u.max_deviation
            )
            .map_err(io_err)?;
            Ok(())
        }
        Err(RegistrationError::NoConsensus(u)) => {
            print_unification(&u, out).map_err(io_err)?;
            writeln!(out, "max_deviation {:.6e}", u.max_deviation).map_err(io_err)?;
            Err(RegistrationError::NoConsensus(u).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn detect_cmd(image: &Path, params: &DetectParams, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let file = fs::File::open(image).map_err(|e| CliError::Data(format!("{}: {e}", image.display())))?;
    let img = with_path(image, read_pgm(std::io::BufReader::new(file)))?;
    let blobs = detect_dots(&img, params)?;
    write_file(path, formats::write_blobs(&blobs).as_bytes())?;
    writeln!(out, "blobs {}", blobs.len()).map_err(io_err)?;
    Ok(())
}
