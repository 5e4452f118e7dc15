//! Line-oriented text formats: `#` starts a comment, fields are separated by
//! whitespace, blank lines are ignored. Floats are written with 17
//! significant digits so every `f64` survives a write/read cycle exactly.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use crate::dlt::Correspondence;
use crate::features::Blob;
use crate::geometry::{Point2, Point3, RigidTransform, Rotation3};
use crate::projection::{Camera, CameraIntrinsics, ProjectionMatrix};
use crate::registration::{FramePair, RegistrationError};

pub const CAMERA_HEADER: &str = "mvcalib-camera v1";
pub const BLOB_HEADER: &str = "label,count,u,v";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError {
        line,
        message: message.into(),
    }
}

/// Full-precision float text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Non-empty lines with comments stripped, as `(1-based line, fields)`.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = body.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn floats<const N: usize>(line: usize, fields: &[&str]) -> Result<[f64; N], FormatError> {
    if fields.len() != N {
        return Err(err(line, format!("expected {N} numbers, found {}", fields.len())));
    }
    let mut out = [0.0; N];
    for (slot, f) in out.iter_mut().zip(fields) {
        let x: f64 = f.parse().map_err(|_| err(line, format!("bad number {f:?}")))?;
        if !x.is_finite() {
            return Err(err(line, format!("non-finite number {f:?}")));
        }
        *slot = x;
    }
    Ok(out)
}

/// `id` followed by exactly `N` floats per line; ids must be unique.
fn id_records<const N: usize>(text: &str) -> Result<Vec<(String, [f64; N])>, FormatError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, fields) in records(text) {
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(err(line, format!("duplicate id {id:?}")));
        }
        out.push((id, floats::<N>(line, &fields[1..])?));
    }
    Ok(out)
}

pub fn parse_world_points(text: &str) -> Result<Vec<(String, Point3)>, FormatError> {
    Ok(id_records::<3>(text)?
        .into_iter()
        .map(|(id, [x, y, z])| (id, Point3::new(x, y, z)))
        .collect())
}

pub fn parse_image_points(text: &str) -> Result<Vec<(String, Point2)>, FormatError> {
    Ok(id_records::<2>(text)?
        .into_iter()
        .map(|(id, [u, v])| (id, Point2::new(u, v)))
        .collect())
}

pub fn write_world_points(points: &[(String, Point3)]) -> String {
    let mut s = String::from("# id x y z\n");
    for (id, p) in points {
        let _ = writeln!(s, "{id} {} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z));
    }
    s
}

pub fn write_image_points(points: &[(String, Point2)]) -> String {
    let mut s = String::from("# id u v\n");
    for (id, p) in points {
        let _ = writeln!(s, "{id} {} {}", fmt_f64(p.u), fmt_f64(p.v));
    }
    s
}

/// Pairs every image point with the world point of the same id, in image
/// file order. An image id with no world point is an error; unused world
/// points are fine.
pub fn join_correspondences(
    world: &[(String, Point3)],
    image: &[(String, Point2)],
) -> Result<Vec<Correspondence>, FormatError> {
    let lookup: BTreeMap<&str, Point3> = world.iter().map(|(id, p)| (id.as_str(), *p)).collect();
    image
        .iter()
        .map(|(id, px)| {
            lookup
                .get(id.as_str())
                .map(|w| Correspondence::new(*w, *px))
                .ok_or_else(|| err(0, format!("image point {id:?} has no world point")))
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum PairsError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

pub fn parse_frame_pairs(text: &str) -> Result<FramePair, PairsError> {
    let (local, global) = id_records::<6>(text)?
        .into_iter()
        .map(|(_, [lx, ly, lz, gx, gy, gz])| (Point3::new(lx, ly, lz), Point3::new(gx, gy, gz)))
        .unzip();
    Ok(FramePair::new(local, global)?)
}

pub fn write_frame_pairs(ids: &[String], pairs: &FramePair) -> String {
    let mut s = String::from("# id lx ly lz gx gy gz\n");
    for ((id, l), g) in ids.iter().zip(pairs.local()).zip(pairs.global()) {
        let _ = writeln!(
            s,
            "{id} {} {} {} {} {} {}",
            fmt_f64(l.x),
            fmt_f64(l.y),
            fmt_f64(l.z),
            fmt_f64(g.x),
            fmt_f64(g.y),
            fmt_f64(g.z)
        );
    }
    s
}

/// Contents of a camera file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFile {
    pub matrix: ProjectionMatrix,
    pub camera: Camera,
}

pub fn write_camera(file: &CameraFile) -> String {
    let join = |xs: &[f64]| xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ");
    let mut s = format!("{CAMERA_HEADER}\nM\n");
    for row in file.matrix.rows() {
        let _ = writeln!(s, "{}", join(&row));
    }
    let k = file.camera.intrinsics;
    let _ = writeln!(s, "K {}", join(&[k.alpha_u, k.alpha_v, k.u0, k.v0]));
    s.push_str("R\n");
    for row in file.camera.extrinsics.rotation.rows() {
        let _ = writeln!(s, "{}", join(&row));
    }
    let t = file.camera.extrinsics.translation;
    let _ = writeln!(s, "T {}", join(&[t.x, t.y, t.z]));
    s
}

pub fn parse_camera(text: &str) -> Result<CameraFile, FormatError> {
    let first = text.lines().next().unwrap_or("").trim();
    if first != CAMERA_HEADER {
        return Err(err(1, format!("expected header {CAMERA_HEADER:?}")));
    }
    // M, 3 rows, K, R, 3 rows, T
    let recs: Vec<(usize, Vec<&str>)> = records(text).skip(1).collect();
    if recs.len() != 10 {
        return Err(err(0, format!("expected 10 records after the header, found {}", recs.len())));
    }
    let tagged = |i: usize, tag: &str, arity: usize| -> Result<usize, FormatError> {
        let (line, f) = &recs[i];
        if f[0] != tag || f.len() != arity + 1 {
            return Err(err(*line, format!("expected {tag:?} with {arity} numbers")));
        }
        Ok(*line)
    };

    tagged(0, "M", 0)?;
    let mut m = [0.0; 12];
    for r in 0..3 {
        let (line, f) = &recs[1 + r];
        m[4 * r..4 * r + 4].copy_from_slice(&floats::<4>(*line, f)?);
    }
    let matrix = ProjectionMatrix::from_row_slice(&m).map_err(|e| err(recs[1].0, e.to_string()))?;

    let line = tagged(4, "K", 4)?;
    let [au, av, u0, v0] = floats::<4>(line, &recs[4].1[1..])?;
    let intrinsics = CameraIntrinsics::new(au, av, u0, v0).map_err(|e| err(line, e.to_string()))?;

    tagged(5, "R", 0)?;
    let mut r = [[0.0; 3]; 3];
    for (i, row) in r.iter_mut().enumerate() {
        let (line, f) = &recs[6 + i];
        *row = floats::<3>(*line, f)?;
    }
    let rotation = Rotation3::from_rows(r).map_err(|e| err(recs[6].0, e.to_string()))?;

    let line = tagged(9, "T", 3)?;
    let [tx, ty, tz] = floats::<3>(line, &recs[9].1[1..])?;
    Ok(CameraFile {
        matrix,
        camera: Camera::new(intrinsics, RigidTransform::new(rotation, Vector3::new(tx, ty, tz))),
    })
}

pub fn write_blobs(blobs: &[Blob]) -> String {
    let mut s = format!("{BLOB_HEADER}\n");
    for b in blobs {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            b.label,
            b.pixel_count,
            fmt_f64(b.centroid.u),
            fmt_f64(b.centroid.v)
        );
    }
    s
}

pub fn parse_blobs(text: &str) -> Result<Vec<Blob>, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == BLOB_HEADER => {}
        _ => return Err(err(1, format!("expected header {BLOB_HEADER:?}"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let bad = || err(i + 1, "expected label,count,u,v");
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(Blob {
                label: f[0].parse().map_err(|_| bad())?,
                pixel_count: f[1].parse().map_err(|_| bad())?,
                centroid: Point2::new(f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?),
            })
        })
        .collect()
}

/// `"x y z"` (commas also accepted) into a point.
pub fn parse_point3(text: &str) -> Result<Point3, FormatError> {
    let fields: Vec<&str> = text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
    let [x, y, z] = floats::<3>(0, &fields)?;
    Ok(Point3::new(x, y, z))
}

pub fn parse_point2(text: &str) -> Result<Point2, FormatError> {
    let fields: Vec<&str> = text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
    let [u, v] = floats::<2>(0, &fields)?;
    Ok(Point2::new(u, v))
}
