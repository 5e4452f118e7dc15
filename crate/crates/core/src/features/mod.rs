//! Calibration-dot detection on grayscale images.
//!
//! The pipeline is binarize → invert → estimate background (morphological
//! opening) → subtract → connected components. Coordinates follow the image
//! array: `u` is the column, `v` the row, origin at the top-left pixel.

pub mod pgm;

use thiserror::Error;

use crate::geometry::Point2;

pub use pgm::{read_pgm, write_pgm, PgmError, PgmFormat};

pub const DEFAULT_THRESHOLD: u8 = 128;
pub const DEFAULT_RADIUS: usize = 7;
pub const DEFAULT_MIN_PIXELS: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("image shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FeatureError> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(FeatureError::ShapeMismatch(format!(
                "{width}x{height} image from {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, FeatureError> {
        if width == 0 || height == 0 || width * height != bits.len() {
            return Err(FeatureError::ShapeMismatch(format!(
                "{width}x{height} image from {} pixels",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// As an 8-bit image with `true` → 255 and `false` → 0.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    fn same_shape(&self, other: &BinaryImage) -> Result<(), FeatureError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(FeatureError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// A connected set of foreground pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub label: usize,
    pub pixel_count: usize,
    pub centroid: Point2,
}

pub fn binarize(img: &GrayImage, threshold: u8) -> BinaryImage {
    BinaryImage {
        width: img.width,
        height: img.height,
        bits: img.pixels.iter().map(|&p| p >= threshold).collect(),
    }
}

pub fn invert(img: &BinaryImage) -> BinaryImage {
    BinaryImage {
        width: img.width,
        height: img.height,
        bits: img.bits.iter().map(|b| !b).collect(),
    }
}

/// Clipped window `[center − radius, center + radius]` as a half-open range.
fn window(center: usize, radius: usize, len: usize) -> (usize, usize) {
    (center.saturating_sub(radius), (center + radius + 1).min(len))
}

/// Per-column foreground count of one row's clipped horizontal windows.
fn row_window_counts(bits: &[bool], radius: usize, prefix: &mut [u32], out: &mut [u32]) {
    for (c, &b) in bits.iter().enumerate() {
        prefix[c + 1] = prefix[c] + u32::from(b);
    }
    let n = bits.len();
    let span = 2 * radius + 1;
    let clipped = |c: usize| {
        let (c0, c1) = window(c, radius, n);
        prefix[c1] - prefix[c0]
    };
    if n < span {
        out.iter_mut().enumerate().for_each(|(c, slot)| *slot = clipped(c));
        return;
    }
    // unclipped interior: columns radius..n - radius
    for ((slot, hi), lo) in out[radius..n - radius].iter_mut().zip(&prefix[span..]).zip(&prefix[..]) {
        *slot = hi - lo;
    }
    for c in (0..radius).chain(n - radius..n) {
        out[c] = clipped(c);
    }
}

/// Applies `keep` to the foreground count of the clipped `(2·radius + 1)²`
/// window around every pixel. Row counts live in a ring of `2·radius + 1`
/// rows and their column sums slide down the image.
fn window_filter(img: &BinaryImage, radius: usize, keep: impl Fn(u32) -> bool) -> BinaryImage {
    let (w, h) = (img.width, img.height);
    let span = (2 * radius + 1).min(h);
    let mut prefix = vec![0u32; w + 1];
    let mut ring = vec![0u32; w * span];
    let mut acc = vec![0u32; w];
    let mut bits = Vec::with_capacity(w * h);
    let (mut lo, mut hi) = (0, 0);
    for r in 0..h {
        let (r0, r1) = window(r, radius, h);
        // leave before entering: an entering row reuses a leaving row's slot
        for leaving in lo..r0 {
            let slot = &ring[(leaving % span) * w..][..w];
            acc.iter_mut().zip(slot).for_each(|(a, x)| *a -= x);
        }
        for entering in hi..r1 {
            let slot = &mut ring[(entering % span) * w..][..w];
            row_window_counts(&img.bits[entering * w..][..w], radius, &mut prefix, slot);
            acc.iter_mut().zip(&*slot).for_each(|(a, x)| *a += x);
        }
        (lo, hi) = (r0, r1);
        bits.extend(acc.iter().map(|&n| keep(n)));
    }
    BinaryImage {
        width: w,
        height: h,
        bits,
    }
}

/// Square-element erosion; pixels outside the image count as background.
pub fn erode(img: &BinaryImage, radius: usize) -> BinaryImage {
    let full = ((2 * radius + 1) * (2 * radius + 1)) as u32;
    window_filter(img, radius, |n| n == full)
}

/// Square-element dilation.
pub fn dilate(img: &BinaryImage, radius: usize) -> BinaryImage {
    window_filter(img, radius, |n| n > 0)
}

/// Morphological opening with a `(2·radius + 1)²` square element: keeps the
/// large foreground structures and drops anything the element cannot fit in.
pub fn estimate_background(img: &BinaryImage, radius: usize) -> Result<BinaryImage, FeatureError> {
    if radius == 0 {
        return Err(FeatureError::InvalidParameter("radius must be at least 1".into()));
    }
    Ok(dilate(&erode(img, radius), radius))
}

/// `img AND NOT background`.
pub fn subtract(img: &BinaryImage, background: &BinaryImage) -> Result<BinaryImage, FeatureError> {
    img.same_shape(background)?;
    Ok(BinaryImage {
        width: img.width,
        height: img.height,
        bits: img
            .bits
            .iter()
            .zip(&background.bits)
            .map(|(&a, &b)| a && !b)
            .collect(),
    })
}

/// 8-connected components of the foreground with at least `min_pixels`
/// members, sorted by centroid row then column and labelled from 1 in that
/// order.
pub fn connected_components(
    img: &BinaryImage,
    min_pixels: usize,
) -> Result<Vec<Blob>, FeatureError> {
    if min_pixels == 0 {
        return Err(FeatureError::InvalidParameter("min_pixels must be at least 1".into()));
    }
    let (w, h) = (img.width, img.height);
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut blobs = Vec::new();
    for start in 0..w * h {
        if !img.bits[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut count, mut sum_u, mut sum_v) = (0usize, 0.0f64, 0.0f64);
        while let Some(idx) = stack.pop() {
            let (col, row) = (idx % w, idx / w);
            count += 1;
            sum_u += col as f64;
            sum_v += row as f64;
            let (c0, c1) = window(col, 1, w);
            let (r0, r1) = window(row, 1, h);
            for r in r0..r1 {
                for c in c0..c1 {
                    let n = r * w + c;
                    if img.bits[n] && !visited[n] {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        if count >= min_pixels {
            blobs.push(Blob {
                label: 0,
                pixel_count: count,
                centroid: Point2::new(sum_u / count as f64, sum_v / count as f64),
            });
        }
    }
    blobs.sort_by(|a, b| {
        a.centroid
            .v
            .total_cmp(&b.centroid.v)
            .then(a.centroid.u.total_cmp(&b.centroid.u))
    });
    for (i, blob) in blobs.iter_mut().enumerate() {
        blob.label = i + 1;
    }
    Ok(blobs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectParams {
    pub threshold: u8,
    pub radius: usize,
    pub min_pixels: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            radius: DEFAULT_RADIUS,
            min_pixels: DEFAULT_MIN_PIXELS,
        }
    }
}

/// Dark dots on a light field → one blob per dot.
pub fn detect_dots(img: &GrayImage, params: &DetectParams) -> Result<Vec<Blob>, FeatureError> {
    let binary = binarize(img, params.threshold);
    let inverted = invert(&binary);
    let background = estimate_background(&inverted, params.radius)?;
    let foreground = subtract(&inverted, &background)?;
    connected_components(&foreground, params.min_pixels)
}
