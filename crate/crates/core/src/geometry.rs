//! Ocular crop geometry.
//!
//! Faces are rotated so the eye line is horizontal and scaled to a fixed
//! inter-eye distance (IED). Each eye is then resampled into its own
//! 113×113 patch with the eye centre at pixel (56, 56); the left-eye patch
//! is mirrored so both eyes share one orientation.
//!
//! Pixel coordinates refer to pixel centres: source pixel `(x, y)` covers
//! `[x - 0.5, x + 0.5) × [y - 0.5, y + 0.5)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{manifest_fields, EyeSide, FaceAnnotation, Point, Pose, MANIFEST_HEADER};

/// Side length of an ocular crop.
pub const CROP_SIZE: usize = 113;
/// Index of the crop pixel that receives the eye centre.
pub const CROP_CENTER: usize = CROP_SIZE / 2;

/// Aligned-frame position of the eye midpoint.
pub const ALIGNED_ANCHOR: Point = Point::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{subject_id}/{image_id}: image is {actual_w}x{actual_h}, annotation says {expected_w}x{expected_h}")]
    ImageSize {
        subject_id: String,
        image_id: String,
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("{subject_id}/{image_id}: {eye} eye centre lies outside the image")]
    EyeOutside { subject_id: String, image_id: String, eye: EyeSide },
}

fn require_positive(name: &str, value: f64) -> Result<(), GeometryError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::Config(format!("{name} must be positive, got {value}")))
    }
}

pub fn inter_eye_distance(face: &FaceAnnotation) -> f64 {
    face.left_eye.distance(face.right_eye)
}

/// Distance from the nose to the eye midpoint, measured along the eye line.
pub fn frontality_offset(face: &FaceAnnotation) -> f64 {
    let ied = inter_eye_distance(face);
    let ux = (face.right_eye.x - face.left_eye.x) / ied;
    let uy = (face.right_eye.y - face.left_eye.y) / ied;
    let mx = 0.5 * (face.left_eye.x + face.right_eye.x);
    let my = 0.5 * (face.left_eye.y + face.right_eye.y);
    ((face.nose.x - mx) * ux + (face.nose.y - my) * uy).abs()
}

/// True when the nose lies strictly within `threshold_ratio × IED` of the eye
/// midpoint along the eye line.
pub fn frontality_check(face: &FaceAnnotation, threshold_ratio: f64) -> Result<bool, GeometryError> {
    require_positive("frontality ratio", threshold_ratio)?;
    Ok(frontality_offset(face) < threshold_ratio * inter_eye_distance(face))
}

/// True when the IED is at least `min_ied` pixels.
pub fn resolution_check(face: &FaceAnnotation, min_ied: f64) -> Result<bool, GeometryError> {
    require_positive("minimum inter-eye distance", min_ied)?;
    Ok(inter_eye_distance(face) >= min_ied)
}

/// Similarity transform `p ↦ scale · R(rotation) · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTransform {
    pub rotation: f64,
    pub scale: f64,
    pub translation: (f64, f64),
}

impl AlignmentTransform {
    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        Point::new(
            self.scale * (c * p.x - s * p.y) + self.translation.0,
            self.scale * (s * p.x + c * p.y) + self.translation.1,
        )
    }

    pub fn invert(&self, q: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        let x = (q.x - self.translation.0) / self.scale;
        let y = (q.y - self.translation.1) / self.scale;
        Point::new(c * x + s * y, -s * x + c * y)
    }
}

/// Rotates the eye line to horizontal (left eye at smaller x), scales the IED
/// to `target_ied` and moves the eye midpoint to [`ALIGNED_ANCHOR`].
pub fn compute_alignment(face: &FaceAnnotation, target_ied: f64) -> Result<AlignmentTransform, GeometryError> {
    require_positive("target inter-eye distance", target_ied)?;
    let dx = face.right_eye.x - face.left_eye.x;
    let dy = face.right_eye.y - face.left_eye.y;
    let rotation = -dy.atan2(dx);
    let scale = target_ied / dx.hypot(dy);
    let mid = Point::new(0.5 * (face.left_eye.x + face.right_eye.x), 0.5 * (face.left_eye.y + face.right_eye.y));
    let partial = AlignmentTransform { rotation, scale, translation: (0.0, 0.0) }.apply(mid);
    Ok(AlignmentTransform {
        rotation,
        scale,
        translation: (ALIGNED_ANCHOR.x - partial.x, ALIGNED_ANCHOR.y - partial.y),
    })
}

/// Read access to a decoded image.
pub trait PixelSource {
    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn channels(&self) -> usize;
    /// Channel `c` of the pixel at column `x`, row `y`.
    fn sample(&self, x: u32, y: u32, c: usize) -> u8;
}

/// Row-major interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBuffer {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<u8>,
}

impl PixelBuffer {
    pub fn new(width: u32, height: u32, channels: usize, data: Vec<u8>) -> Option<Self> {
        (channels > 0 && data.len() == width as usize * height as usize * channels)
            .then_some(PixelBuffer { width, height, channels, data })
    }

    pub fn filled(width: u32, height: u32, channels: usize, value: u8) -> Self {
        PixelBuffer { width, height, channels, data: vec![value; width as usize * height as usize * channels] }
    }

    pub fn set(&mut self, x: u32, y: u32, c: usize, value: u8) {
        let i = (y as usize * self.width as usize + x as usize) * self.channels + c;
        self.data[i] = value;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

impl PixelSource for PixelBuffer {
    fn width(&self) -> u32 {
        self.width
    }

    fn height(&self) -> u32 {
        self.height
    }

    fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn sample(&self, x: u32, y: u32, c: usize) -> u8 {
        self.data[(y as usize * self.width as usize + x as usize) * self.channels + c]
    }
}

/// What to sample outside the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderMode {
    #[default]
    Zero,
    Replicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcularCrop {
    pub subject_id: String,
    pub image_id: String,
    pub eye: EyeSide,
    pub pose: Pose,
    pub flipped: bool,
    channels: usize,
    pixels: Vec<u8>,
}

impl OcularCrop {
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Row-major interleaved pixels, `CROP_SIZE × CROP_SIZE × channels`.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * CROP_SIZE + x) * self.channels + c]
    }

    /// Horizontal mirror image; toggles `flipped`.
    pub fn mirrored(&self) -> OcularCrop {
        let ch = self.channels;
        let mut pixels = vec![0u8; self.pixels.len()];
        for y in 0..CROP_SIZE {
            for x in 0..CROP_SIZE {
                let src = (y * CROP_SIZE + x) * ch;
                let dst = (y * CROP_SIZE + (CROP_SIZE - 1 - x)) * ch;
                pixels[dst..dst + ch].copy_from_slice(&self.pixels[src..src + ch]);
            }
        }
        OcularCrop { pixels, flipped: !self.flipped, ..self.clone() }
    }
}

fn bilinear(image: &impl PixelSource, x: f64, y: f64, c: usize, border: BorderMode) -> f64 {
    let (w, h) = (image.width() as i64, image.height() as i64);
    // Truncating casts are much cheaper than `floor` without SSE4.1.
    let floor = |v: f64| {
        let t = v as i64 as f64;
        if t > v { t - 1.0 } else { t }
    };
    let x0 = floor(x);
    let y0 = floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let tap = |xi: i64, yi: i64| -> f64 {
        match border {
            BorderMode::Zero if xi < 0 || yi < 0 || xi >= w || yi >= h => 0.0,
            _ => f64::from(image.sample(xi.clamp(0, w - 1) as u32, yi.clamp(0, h - 1) as u32, c)),
        }
    };
    let (xi, yi) = (x0 as i64, y0 as i64);
    if xi >= 0 && yi >= 0 && xi + 1 < w && yi + 1 < h {
        let (xu, yu) = (xi as u32, yi as u32);
        let s = |dx: u32, dy: u32| f64::from(image.sample(xu + dx, yu + dy, c));
        let top = s(0, 0) + (s(1, 0) - s(0, 0)) * fx;
        let bottom = s(0, 1) + (s(1, 1) - s(0, 1)) * fx;
        return top + (bottom - top) * fy;
    }
    let top = tap(xi, yi) * (1.0 - fx) + tap(xi + 1, yi) * fx;
    let bottom = tap(xi, yi + 1) * (1.0 - fx) + tap(xi + 1, yi + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn render_crop(
    image: &impl PixelSource,
    transform: &AlignmentTransform,
    centre: Point,
    border: BorderMode,
) -> Vec<u8> {
    let ch = image.channels();
    let mut pixels = Vec::with_capacity(CROP_SIZE * CROP_SIZE * ch);
    // The inverse map is affine: one unit step along a crop axis is a fixed
    // source offset.
    let half = CROP_CENTER as f64;
    let origin = transform.invert(Point::new(centre.x - half, centre.y - half));
    let step_x = transform.invert(Point::new(centre.x - half + 1.0, centre.y - half));
    let step_y = transform.invert(Point::new(centre.x - half, centre.y - half + 1.0));
    let (dxc, dyc) = (step_x.x - origin.x, step_x.y - origin.y);
    let (dxr, dyr) = (step_y.x - origin.x, step_y.y - origin.y);
    for row in 0..CROP_SIZE {
        for col in 0..CROP_SIZE {
            let (fc, fr) = (col as f64, row as f64);
            let src = Point::new(origin.x + fc * dxc + fr * dxr, origin.y + fc * dyc + fr * dyr);
            for c in 0..ch {
                pixels.push((bilinear(image, src.x, src.y, c, border).clamp(0.0, 255.0) + 0.5) as u8);
            }
        }
    }
    pixels
}

/// Cuts the left and right eye crops out of `image`.
///
/// Each crop is centred on its eye in the aligned frame; the left crop is
/// returned mirrored.
pub fn extract_crops(
    image: &impl PixelSource,
    face: &FaceAnnotation,
    transform: &AlignmentTransform,
    border: BorderMode,
) -> Result<(OcularCrop, OcularCrop), GeometryError> {
    if image.width() != face.image_width || image.height() != face.image_height {
        return Err(GeometryError::ImageSize {
            subject_id: face.subject_id.clone(),
            image_id: face.image_id.clone(),
            expected_w: face.image_width,
            expected_h: face.image_height,
            actual_w: image.width(),
            actual_h: image.height(),
        });
    }
    let inside = |p: Point| {
        p.x >= -0.5 && p.y >= -0.5 && p.x < f64::from(image.width()) - 0.5 && p.y < f64::from(image.height()) - 0.5
    };
    for (eye, p) in [(EyeSide::Left, face.left_eye), (EyeSide::Right, face.right_eye)] {
        if !inside(p) {
            return Err(GeometryError::EyeOutside {
                subject_id: face.subject_id.clone(),
                image_id: face.image_id.clone(),
                eye,
            });
        }
    }

    let make = |eye: EyeSide, centre: Point| OcularCrop {
        subject_id: face.subject_id.clone(),
        image_id: face.image_id.clone(),
        eye,
        pose: face.pose,
        flipped: false,
        channels: image.channels(),
        pixels: render_crop(image, transform, transform.apply(centre), border),
    };
    let left = make(EyeSide::Left, face.left_eye).mirrored();
    let right = make(EyeSide::Right, face.right_eye);
    Ok((left, right))
}

/// Crop values after `(v - 127.5) / 128`, same layout as the crop.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTensor {
    pub channels: usize,
    pub values: Vec<f32>,
}

pub fn normalize_value(v: u8) -> f32 {
    (f32::from(v) - 127.5) / 128.0
}

pub fn normalize_pixels(crop: &OcularCrop) -> NormalizedTensor {
    NormalizedTensor { channels: crop.channels, values: crop.pixels.iter().map(|&v| normalize_value(v)).collect() }
}

/// Crop pipeline thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    pub target_ied: f64,
    pub three_quarter_ied: f64,
    pub min_ied: f64,
    pub frontality_ratio: f64,
    pub border: BorderMode,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig { target_ied: 113.0, three_quarter_ied: 80.0, min_ied: 50.0, frontality_ratio: 0.40, border: BorderMode::Zero }
    }
}

impl CropConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        require_positive("target_ied", self.target_ied)?;
        require_positive("three_quarter_ied", self.three_quarter_ied)?;
        require_positive("min_ied", self.min_ied)?;
        require_positive("frontality_ratio", self.frontality_ratio)?;
        if self.frontality_ratio > 1.0 {
            return Err(GeometryError::Config(format!("frontality_ratio must be at most 1, got {}", self.frontality_ratio)));
        }
        Ok(())
    }

    pub fn target_ied_for(&self, pose: Pose) -> f64 {
        match pose {
            Pose::ThreeQuarter => self.three_quarter_ied,
            _ => self.target_ied,
        }
    }
}

/// Outcome of one manifest row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropStatus {
    Ok,
    RejectFrontality,
    RejectResolution,
    ExcludedPose,
    /// Accepted by the filters but the image could not be read or cropped.
    Error,
}

impl CropStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CropStatus::Ok => "ok",
            CropStatus::RejectFrontality => "reject_frontality",
            CropStatus::RejectResolution => "reject_resolution",
            CropStatus::ExcludedPose => "excluded_pose",
            CropStatus::Error => "error",
        }
    }
}

impl fmt::Display for CropStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Applies the filters in order: pose, frontality, resolution.
///
/// Profile faces are excluded outright. Three-quarter faces are tagged as
/// non-frontal, so the frontality test only applies to frontal and
/// unspecified poses.
pub fn classify_face(face: &FaceAnnotation, config: &CropConfig) -> Result<CropStatus, GeometryError> {
    config.validate()?;
    if face.pose == Pose::Profile {
        return Ok(CropStatus::ExcludedPose);
    }
    if face.pose != Pose::ThreeQuarter && !frontality_check(face, config.frontality_ratio)? {
        return Ok(CropStatus::RejectFrontality);
    }
    if !resolution_check(face, config.min_ied)? {
        return Ok(CropStatus::RejectResolution);
    }
    Ok(CropStatus::Ok)
}

/// Alignment plus extraction for a face already classified as `Ok`.
pub fn crop_face(
    image: &impl PixelSource,
    face: &FaceAnnotation,
    config: &CropConfig,
) -> Result<(OcularCrop, OcularCrop), GeometryError> {
    let transform = compute_alignment(face, config.target_ied_for(face.pose))?;
    extract_crops(image, face, &transform, config.border)
}

/// Per-status counters for a crop run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropTally {
    pub total: usize,
    pub accepted: usize,
    pub reject_frontality: usize,
    pub reject_resolution: usize,
    pub excluded_pose: usize,
    pub failed: usize,
    pub crops: usize,
}

impl CropTally {
    /// Records one face; `crops_emitted` is the number of crop files written
    /// for it.
    pub fn record(&mut self, status: CropStatus, crops_emitted: usize) {
        self.total += 1;
        self.crops += crops_emitted;
        match status {
            CropStatus::Ok => self.accepted += 1,
            CropStatus::RejectFrontality => self.reject_frontality += 1,
            CropStatus::RejectResolution => self.reject_resolution += 1,
            CropStatus::ExcludedPose => self.excluded_pose += 1,
            CropStatus::Error => self.failed += 1,
        }
    }

    /// `accepted = total - rejections - failures` and `crops = 2 × accepted`.
    pub fn is_consistent(&self) -> bool {
        let rejected = self.reject_frontality + self.reject_resolution + self.excluded_pose + self.failed;
        self.total >= rejected && self.accepted == self.total - rejected && self.crops == 2 * self.accepted
    }
}

/// Input manifest echoed with a trailing `status` column.
pub fn write_crop_manifest<'a>(rows: impl IntoIterator<Item = (&'a FaceAnnotation, CropStatus)>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = MANIFEST_HEADER.to_vec();
    header.push("status");
    writer.write_record(&header).expect("in-memory write");
    for (face, status) in rows {
        let mut fields = manifest_fields(face).to_vec();
        fields.push(status.as_str().to_string());
        writer.write_record(&fields).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// File name of a crop: `<subject>_<image stem>_<eye>.png`.
pub fn crop_file_name(crop: &OcularCrop) -> String {
    let stem = std::path::Path::new(&crop.image_id)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(&crop.image_id);
    format!("{}_{}_{}.png", crop.subject_id, stem, crop.eye)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn face(left: (f64, f64), right: (f64, f64), nose: (f64, f64)) -> FaceAnnotation {
        FaceAnnotation::new(
            "s",
            "i",
            Pose::Frontal,
            Point::new(left.0, left.1),
            Point::new(right.0, right.1),
            Point::new(nose.0, nose.1),
            400,
            300,
        )
        .unwrap()
    }

    #[test]
    fn ied_examples() {
        assert_eq!(inter_eye_distance(&face((0., 0.), (100., 0.), (50., 60.))), 100.0);
        assert_eq!(inter_eye_distance(&face((0., 0.), (3., 4.), (1., 5.))), 5.0);
        assert_eq!(inter_eye_distance(&face((10., 20.), (110., 20.), (60., 80.))), 100.0);
    }

    #[test]
    fn frontality_examples() {
        assert!(frontality_check(&face((0., 0.), (100., 0.), (50., 60.)), 0.4).unwrap());
        assert!(!frontality_check(&face((0., 0.), (100., 0.), (95., 60.)), 0.4).unwrap());
        // offset exactly 40: strict inequality
        assert!(!frontality_check(&face((0., 0.), (100., 0.), (90., 60.)), 0.4).unwrap());
        assert!(frontality_check(&face((0., 0.), (100., 0.), (89.9, 60.)), 0.4).unwrap());
        assert!(matches!(frontality_check(&face((0., 0.), (100., 0.), (50., 60.)), 0.0), Err(GeometryError::Config(_))));
    }

    #[test]
    fn frontality_uses_eye_line_frame() {
        // Eye line rotated 90°: the nose offset is measured along y.
        let f = face((0., 0.), (0., 100.), (-60., 50.));
        assert!(frontality_check(&f, 0.4).unwrap());
        let f = face((0., 0.), (0., 100.), (-60., 95.));
        assert!(!frontality_check(&f, 0.4).unwrap());
    }

    #[test]
    fn resolution_examples() {
        assert!(!resolution_check(&face((0., 0.), (49.9, 0.), (25., 30.)), 50.0).unwrap());
        assert!(resolution_check(&face((0., 0.), (50., 0.), (25., 30.)), 50.0).unwrap());
        assert!(resolution_check(&face((0., 0.), (100., 0.), (50., 30.)), 50.0).unwrap());
        assert!(resolution_check(&face((0., 0.), (100., 0.), (50., 30.)), -1.0).is_err());
    }

    #[test]
    fn alignment_examples() {
        let t = compute_alignment(&face((10., 20.), (110., 20.), (60., 80.)), 113.0).unwrap();
        assert_eq!(t.rotation, 0.0);
        assert!((t.scale - 1.13).abs() < 1e-12);

        let f = face((0., 0.), (0., 100.), (-50., 50.));
        let t = compute_alignment(&f, 113.0).unwrap();
        assert!((t.rotation.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((t.scale - 1.13).abs() < 1e-12);
        let (l, r) = (t.apply(f.left_eye), t.apply(f.right_eye));
        assert!((l.y - r.y).abs() < 1e-9 && l.x < r.x);

        let t = compute_alignment(&face((0., 5.), (113., 5.), (56., 60.)), 113.0).unwrap();
        assert_eq!((t.rotation, t.scale), (0.0, 1.0));
        assert!(compute_alignment(&face((0., 5.), (113., 5.), (56., 60.)), 0.0).is_err());
    }

    #[test]
    fn alignment_anchor_and_inverse() {
        let f = face((31.5, 40.25), (140.0, 70.0), (90.0, 120.0));
        let t = compute_alignment(&f, 80.0).unwrap();
        let mid = Point::new(0.5 * (f.left_eye.x + f.right_eye.x), 0.5 * (f.left_eye.y + f.right_eye.y));
        let m = t.apply(mid);
        assert!(m.distance(ALIGNED_ANCHOR) < 1e-9);
        let back = t.invert(t.apply(f.nose));
        assert!(back.distance(f.nose) < 1e-9);
    }

    #[test]
    fn bright_pixel_lands_at_crop_centre() {
        let f = face((100., 120.), (200., 120.), (150., 180.));
        let mut img = PixelBuffer::filled(400, 300, 1, 0);
        img.set(200, 120, 0, 255);
        img.set(100, 120, 0, 200);
        let t = compute_alignment(&f, 113.0).unwrap();
        let (left, right) = extract_crops(&img, &f, &t, BorderMode::Zero).unwrap();
        assert_eq!(right.pixel(CROP_CENTER, CROP_CENTER, 0), 255);
        assert_eq!(left.pixel(CROP_CENTER, CROP_CENTER, 0), 200);
        assert!(left.flipped && !right.flipped);
    }

    #[test]
    fn left_crop_is_mirrored() {
        // Horizontal ramp: mirrored crop must decrease left to right.
        let f = face((100., 120.), (213., 120.), (156., 180.));
        let mut img = PixelBuffer::filled(400, 300, 1, 0);
        for y in 0..300 {
            for x in 0..400 {
                img.set(x, y, 0, (x / 2) as u8);
            }
        }
        let t = compute_alignment(&f, 113.0).unwrap();
        let (left, right) = extract_crops(&img, &f, &t, BorderMode::Zero).unwrap();
        assert!(left.pixel(10, 56, 0) > left.pixel(100, 56, 0));
        assert!(right.pixel(10, 56, 0) < right.pixel(100, 56, 0));
        assert_eq!(left.mirrored().mirrored(), left);
        assert!(!left.mirrored().flipped);
    }

    #[test]
    fn crops_are_113_square() {
        let f = face((5., 5.), (60., 9.), (30., 40.));
        let img = PixelBuffer::filled(400, 300, 3, 90);
        let t = compute_alignment(&f, 113.0).unwrap();
        let (l, r) = extract_crops(&img, &f, &t, BorderMode::Zero).unwrap();
        for c in [&l, &r] {
            assert_eq!(c.pixels().len(), CROP_SIZE * CROP_SIZE * 3);
        }
        // Zero fill shows up in the top-left corner near the image border.
        assert_eq!(r.pixel(0, 0, 0), 0);
        let (_, r) = extract_crops(&img, &f, &t, BorderMode::Replicate).unwrap();
        assert_eq!(r.pixel(0, 0, 0), 90);
    }

    #[test]
    fn extraction_errors() {
        let f = face((-10., 5.), (60., 9.), (30., 40.));
        let img = PixelBuffer::filled(400, 300, 1, 0);
        let t = compute_alignment(&f, 113.0).unwrap();
        let err = extract_crops(&img, &f, &t, BorderMode::Zero).unwrap_err();
        assert!(matches!(err, GeometryError::EyeOutside { eye: EyeSide::Left, .. }));
        let small = PixelBuffer::filled(10, 10, 1, 0);
        assert!(matches!(extract_crops(&small, &f, &t, BorderMode::Zero), Err(GeometryError::ImageSize { .. })));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_value(127), -0.00390625);
        assert_eq!(normalize_value(0), -0.99609375);
        assert_eq!(normalize_value(255), 0.99609375);
        assert_eq!((127.5f32 - 127.5) / 128.0, 0.0);
        for v in 0..255u8 {
            assert!(normalize_value(v) < normalize_value(v + 1));
        }
    }

    #[test]
    fn classification_order() {
        let cfg = CropConfig::default();
        let mut f = face((0., 0.), (30., 0.), (15., 20.));
        assert_eq!(classify_face(&f, &cfg).unwrap(), CropStatus::RejectResolution);
        f.pose = Pose::Profile;
        assert_eq!(classify_face(&f, &cfg).unwrap(), CropStatus::ExcludedPose);
        let mut f = face((0., 0.), (100., 0.), (95., 20.));
        assert_eq!(classify_face(&f, &cfg).unwrap(), CropStatus::RejectFrontality);
        f.pose = Pose::ThreeQuarter;
        assert_eq!(classify_face(&f, &cfg).unwrap(), CropStatus::Ok);
        assert_eq!(cfg.target_ied_for(Pose::ThreeQuarter), 80.0);
        let bad = CropConfig { frontality_ratio: 1.5, ..cfg };
        assert!(classify_face(&f, &bad).is_err());
    }

    #[test]
    fn tally_identity() {
        let mut tally = CropTally::default();
        tally.record(CropStatus::Ok, 2);
        tally.record(CropStatus::RejectResolution, 0);
        tally.record(CropStatus::ExcludedPose, 0);
        assert!(tally.is_consistent());
        tally.record(CropStatus::Ok, 1);
        assert!(!tally.is_consistent());
    }

    #[test]
    fn crop_manifest_columns() {
        let f = face((0., 0.), (100., 0.), (50., 60.));
        let text = write_crop_manifest([(&f, CropStatus::Ok)]);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().ends_with("img_h,status"));
        assert!(lines.next().unwrap().ends_with(",ok"));
    }

    #[test]
    fn paper_bookkeeping_ratio() {
        // 953,786 valid faces yield 1,907,572 crops.
        let tally = CropTally { total: 953_786, accepted: 953_786, crops: 1_907_572, ..Default::default() };
        assert!(tally.is_consistent());
    }
}
