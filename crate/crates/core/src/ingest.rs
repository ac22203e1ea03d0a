//! File formats: face manifests, embedding stores, fold definitions and pair
//! lists.
//!
//! Every parser reports failures with a 1-based line number. Parsed values
//! are immutable afterwards and can be shared freely between threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column layout of the face manifest.
pub const MANIFEST_HEADER: [&str; 11] = [
    "subject_id", "image_id", "pose", "lx", "ly", "rx", "ry", "nx", "ny", "img_w", "img_h",
];

/// Magic and version tag on the first line of an embedding store.
pub const EMBEDDING_MAGIC: &str = "OCEMB v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

impl IngestError {
    pub fn line(&self) -> usize {
        match self {
            IngestError::Syntax { line, .. } | IngestError::Invalid { line, .. } => *line,
        }
    }

    fn syntax(line: usize, message: impl Into<String>) -> Self {
        IngestError::Syntax { line, message: message.into() }
    }

    fn invalid(line: usize, message: impl Into<String>) -> Self {
        IngestError::Invalid { line, message: message.into() }
    }
}

/// Head pose tag carried by an annotation or embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pose {
    Frontal,
    ThreeQuarter,
    Profile,
    Unspecified,
}

impl Pose {
    pub const ALL: [Pose; 4] = [Pose::Frontal, Pose::ThreeQuarter, Pose::Profile, Pose::Unspecified];

    pub fn as_str(self) -> &'static str {
        match self {
            Pose::Frontal => "frontal",
            Pose::ThreeQuarter => "three_quarter",
            Pose::Profile => "profile",
            Pose::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pose {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pose::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown pose '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EyeSide {
    Left,
    Right,
}

impl EyeSide {
    pub const BOTH: [EyeSide; 2] = [EyeSide::Left, EyeSide::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            EyeSide::Left => "left",
            EyeSide::Right => "right",
        }
    }

    fn slot(self) -> usize {
        match self {
            EyeSide::Left => 0,
            EyeSide::Right => 1,
        }
    }
}

impl fmt::Display for EyeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EyeSide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(EyeSide::Left),
            "right" => Ok(EyeSide::Right),
            _ => Err(format!("unknown eye side '{s}'")),
        }
    }
}

/// Image-space point in pixels: origin top-left, x to the right, y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Landmarks of one face image.
///
/// `left_eye` is the eye that ends up on the left of the aligned face (the
/// smaller x after alignment); its crop is the one that gets mirrored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceAnnotation {
    pub subject_id: String,
    pub image_id: String,
    pub pose: Pose,
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose: Point,
    pub image_width: u32,
    pub image_height: u32,
}

impl FaceAnnotation {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        subject_id: impl Into<String>,
        image_id: impl Into<String>,
        pose: Pose,
        left_eye: Point,
        right_eye: Point,
        nose: Point,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, String> {
        let face = FaceAnnotation {
            subject_id: subject_id.into(),
            image_id: image_id.into(),
            pose,
            left_eye,
            right_eye,
            nose,
            image_width,
            image_height,
        };
        face.validate()?;
        Ok(face)
    }

    pub fn validate(&self) -> Result<(), String> {
        let who = format!("{}/{}", self.subject_id, self.image_id);
        check_identifier(&self.subject_id).map_err(|e| format!("record {who}: subject_id {e}"))?;
        check_identifier(&self.image_id).map_err(|e| format!("record {who}: image_id {e}"))?;
        if !(self.left_eye.is_finite() && self.right_eye.is_finite() && self.nose.is_finite()) {
            return Err(format!("record {who}: non-finite landmark coordinate"));
        }
        if self.left_eye == self.right_eye {
            return Err(format!("record {who}: left and right eye coincide (inter-eye distance 0)"));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(format!("record {who}: image dimensions must be positive"));
        }
        Ok(())
    }
}

/// Identifiers travel through whitespace-separated and tab-separated
/// formats, so they must be non-empty and free of whitespace.
pub fn check_identifier(id: &str) -> Result<(), String> {
    if id.is_empty() {
        Err("is empty".to_string())
    } else if id.chars().any(char::is_whitespace) {
        Err(format!("'{id}' contains whitespace"))
    } else {
        Ok(())
    }
}

fn csv_line(err: &csv::Error) -> usize {
    err.position().map(|p| p.line() as usize).unwrap_or(1)
}

/// Parses a face manifest (CSV with the [`MANIFEST_HEADER`] columns).
pub fn parse_face_manifest(text: &str) -> Result<Vec<FaceAnnotation>, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::syntax(1, "missing manifest header"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| IngestError::syntax(csv_line(&e), e.to_string()))?
        .clone();
    if !headers.iter().eq(MANIFEST_HEADER.iter().copied()) {
        return Err(IngestError::syntax(
            1,
            format!("expected header '{}', found '{}'", MANIFEST_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut faces = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::syntax(csv_line(&e), e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |idx: usize| -> Result<f64, IngestError> {
            let raw = &record[idx];
            raw.parse::<f64>()
                .map_err(|_| IngestError::syntax(line, format!("column {}: '{raw}' is not a number", MANIFEST_HEADER[idx])))
        };
        let dim = |idx: usize| -> Result<u32, IngestError> {
            let raw = &record[idx];
            raw.parse::<u32>()
                .map_err(|_| IngestError::syntax(line, format!("column {}: '{raw}' is not a pixel count", MANIFEST_HEADER[idx])))
        };
        let pose: Pose = record[2].parse().map_err(|e: String| IngestError::syntax(line, e))?;
        let face = FaceAnnotation::new(
            &record[0],
            &record[1],
            pose,
            Point::new(num(3)?, num(4)?),
            Point::new(num(5)?, num(6)?),
            Point::new(num(7)?, num(8)?),
            dim(9)?,
            dim(10)?,
        )
        .map_err(|e| IngestError::invalid(line, e))?;
        faces.push(face);
    }
    Ok(faces)
}

pub(crate) fn manifest_fields(face: &FaceAnnotation) -> [String; 11] {
    [
        face.subject_id.clone(),
        face.image_id.clone(),
        face.pose.to_string(),
        face.left_eye.x.to_string(),
        face.left_eye.y.to_string(),
        face.right_eye.x.to_string(),
        face.right_eye.y.to_string(),
        face.nose.x.to_string(),
        face.nose.y.to_string(),
        face.image_width.to_string(),
        face.image_height.to_string(),
    ]
}

/// Writes a manifest that [`parse_face_manifest`] reads back field-for-field.
pub fn write_face_manifest(faces: &[FaceAnnotation]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(MANIFEST_HEADER).expect("in-memory write");
    for face in faces {
        writer.write_record(manifest_fields(face)).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// One stored descriptor: a single eye of a single image.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub subject_id: String,
    pub image_id: String,
    pub pose: Pose,
    pub eye: EyeSide,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
struct StoredVector {
    pose: Pose,
    vector: Vec<f32>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("expected {expected} values, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("duplicate record {subject_id} {image_id} {eye}")]
    Duplicate { subject_id: String, image_id: String, eye: EyeSide },
    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },
    #[error("invalid identifier: {0}")]
    Identifier(String),
}

/// A set of per-eye descriptors with a common dimension.
///
/// Records are keyed by `(subject_id, image_id, eye)` and iterate in that
/// order. Values are always finite; negative values are allowed in memory
/// (see [`EmbeddingSet::has_negative`]) but never produced by
/// [`read_embeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    len: usize,
    negatives: usize,
    records: BTreeMap<String, BTreeMap<String, [Option<StoredVector>; 2]>>,
}

/// Borrowed view of one image's descriptors.
#[derive(Debug, Clone, Copy, Default)]
pub struct Template<'a> {
    pub left: Option<&'a [f32]>,
    pub right: Option<&'a [f32]>,
}

impl<'a> Template<'a> {
    pub fn side(&self, eye: EyeSide) -> Option<&'a [f32]> {
        match eye {
            EyeSide::Left => self.left,
            EyeSide::Right => self.right,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        EmbeddingSet { dim, len: 0, negatives: 0, records: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True when some stored value is below zero (possible only for sets
    /// built in memory).
    pub fn has_negative(&self) -> bool {
        self.negatives > 0
    }

    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<(), EmbeddingError> {
        check_identifier(&record.subject_id).map_err(EmbeddingError::Identifier)?;
        check_identifier(&record.image_id).map_err(EmbeddingError::Identifier)?;
        if record.vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch { expected: self.dim, found: record.vector.len() });
        }
        if let Some(index) = record.vector.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { index });
        }
        let slots = self
            .records
            .entry(record.subject_id.clone())
            .or_default()
            .entry(record.image_id.clone())
            .or_default();
        let slot = &mut slots[record.eye.slot()];
        if slot.is_some() {
            return Err(EmbeddingError::Duplicate {
                subject_id: record.subject_id,
                image_id: record.image_id,
                eye: record.eye,
            });
        }
        if record.vector.iter().any(|&v| v < 0.0) {
            self.negatives += 1;
        }
        *slot = Some(StoredVector { pose: record.pose, vector: record.vector });
        self.len += 1;
        Ok(())
    }

    pub fn get(&self, subject_id: &str, image_id: &str, eye: EyeSide) -> Option<&[f32]> {
        self.records
            .get(subject_id)?
            .get(image_id)?[eye.slot()]
            .as_ref()
            .map(|s| s.vector.as_slice())
    }

    /// Both eyes of one image; `None` when neither is stored.
    pub fn template(&self, subject_id: &str, image_id: &str) -> Option<Template<'_>> {
        let slots = self.records.get(subject_id)?.get(image_id)?;
        let view = |i: usize| slots[i].as_ref().map(|s| s.vector.as_slice());
        let t = Template { left: view(0), right: view(1) };
        (!t.is_empty()).then_some(t)
    }

    /// Records in `(subject_id, image_id, eye)` order.
    pub fn iter(&self) -> impl Iterator<Item = RecordRef<'_>> {
        self.records.iter().flat_map(|(subject_id, images)| {
            images.iter().flat_map(move |(image_id, slots)| {
                EyeSide::BOTH.into_iter().filter_map(move |eye| {
                    slots[eye.slot()].as_ref().map(|s| RecordRef {
                        subject_id,
                        image_id,
                        pose: s.pose,
                        eye,
                        vector: &s.vector,
                    })
                })
            })
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RecordRef<'a> {
    pub subject_id: &'a str,
    pub image_id: &'a str,
    pub pose: Pose,
    pub eye: EyeSide,
    pub vector: &'a [f32],
}

/// How [`read_embeddings`] treats negative values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueMode {
    /// Negative values are an error.
    #[default]
    Strict,
    /// Negative values are clamped to zero and counted.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub set: EmbeddingSet,
    /// Number of values clamped to zero (always 0 in strict mode).
    pub clamped: usize,
}

fn parse_store_header(line: &str) -> Result<usize, IngestError> {
    let rest = line
        .strip_prefix(EMBEDDING_MAGIC)
        .ok_or_else(|| IngestError::syntax(1, format!("expected header '{EMBEDDING_MAGIC} dim=<D>'")))?;
    let dim = rest
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.parse::<usize>().ok())
        .ok_or_else(|| IngestError::syntax(1, "header must declare dim=<D>"))?;
    if dim == 0 {
        return Err(IngestError::invalid(1, "dim must be positive"));
    }
    Ok(dim)
}

/// Parses an embedding store.
///
/// The first line is `OCEMB v1 dim=<D>`; each following non-empty line is
/// `subject<TAB>image<TAB>pose<TAB>eye<TAB>v1 v2 ... vD`.
pub fn read_embeddings(text: &str, mode: ValueMode) -> Result<LoadedEmbeddings, IngestError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| IngestError::syntax(1, "empty embedding store"))?;
    let dim = parse_store_header(header.trim_end())?;

    let mut set = EmbeddingSet::new(dim);
    let mut clamped = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(IngestError::syntax(line_no, format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let pose: Pose = fields[2].parse().map_err(|e: String| IngestError::syntax(line_no, e))?;
        let eye: EyeSide = fields[3].parse().map_err(|e: String| IngestError::syntax(line_no, e))?;
        let mut vector = Vec::with_capacity(dim);
        for (index, raw) in fields[4].split_ascii_whitespace().enumerate() {
            let v: f32 = raw
                .parse()
                .map_err(|_| IngestError::syntax(line_no, format!("value {} '{raw}' is not a number", index + 1)))?;
            if !v.is_finite() {
                return Err(IngestError::invalid(line_no, format!("non-finite value at position {}", index + 1)));
            }
            if v < 0.0 {
                match mode {
                    ValueMode::Strict => {
                        return Err(IngestError::invalid(
                            line_no,
                            format!("negative value {raw} at position {} (strict mode)", index + 1),
                        ))
                    }
                    ValueMode::Lenient => {
                        clamped += 1;
                        vector.push(0.0);
                        continue;
                    }
                }
            }
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(IngestError::invalid(line_no, format!("dim mismatch: expected {dim} values, found {}", vector.len())));
        }
        set.insert(EmbeddingRecord {
            subject_id: fields[0].to_string(),
            image_id: fields[1].to_string(),
            pose,
            eye,
            vector,
        })
        .map_err(|e| IngestError::invalid(line_no, e.to_string()))?;
    }
    Ok(LoadedEmbeddings { set, clamped })
}

/// Serializes a set in key order. Values use the shortest decimal form that
/// parses back to the identical `f32`.
pub fn write_embeddings(set: &EmbeddingSet) -> String {
    use std::fmt::Write;

    let mut out = format!("{EMBEDDING_MAGIC} dim={}\n", set.dim());
    for r in set.iter() {
        write!(out, "{}\t{}\t{}\t{}\t", r.subject_id, r.image_id, r.pose, r.eye).unwrap();
        for (i, v) in r.vector.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Test subjects of one evaluation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_id: u32,
    pub test_subject_ids: Vec<String>,
}

/// Parses one or more `fold <k>` blocks, each followed by one subject id per
/// line. Blank lines and lines starting with `#` are ignored.
pub fn parse_folds(text: &str) -> Result<Vec<FoldSpec>, IngestError> {
    let mut folds: Vec<FoldSpec> = Vec::new();
    let mut seen_in_fold = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("fold") {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                let fold_id: u32 = rest
                    .trim()
                    .parse()
                    .map_err(|_| IngestError::syntax(line_no, format!("bad fold header '{line}'")))?;
                if folds.iter().any(|f| f.fold_id == fold_id) {
                    return Err(IngestError::invalid(line_no, format!("fold {fold_id} defined twice")));
                }
                folds.push(FoldSpec { fold_id, test_subject_ids: Vec::new() });
                seen_in_fold.clear();
                continue;
            }
        }
        let fold = folds
            .last_mut()
            .ok_or_else(|| IngestError::syntax(line_no, "subject id before any 'fold <k>' line"))?;
        check_identifier(line).map_err(|e| IngestError::syntax(line_no, format!("subject id {e}")))?;
        if !seen_in_fold.insert(line.to_string()) {
            return Err(IngestError::invalid(line_no, format!("subject {line} listed twice in fold {}", fold.fold_id)));
        }
        fold.test_subject_ids.push(line.to_string());
    }
    Ok(folds)
}

pub fn write_folds(folds: &[FoldSpec]) -> String {
    let mut out = String::new();
    for fold in folds {
        out.push_str(&format!("fold {}\n", fold.fold_id));
        for s in &fold.test_subject_ids {
            out.push_str(s);
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairLabel {
    Genuine,
    Impostor,
}

impl PairLabel {
    pub fn code(self) -> &'static str {
        match self {
            PairLabel::Genuine => "G",
            PairLabel::Impostor => "I",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "G" => Some(PairLabel::Genuine),
            "I" => Some(PairLabel::Impostor),
            _ => None,
        }
    }
}

/// A `(subject_id, image_id)` reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleRef {
    pub subject_id: String,
    pub image_id: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairError {
    #[error("genuine pair spans subjects {0} and {1}")]
    GenuineAcrossSubjects(String, String),
    #[error("impostor pair within subject {0}")]
    ImpostorWithinSubject(String),
    #[error("pair compares {0}/{1} with itself")]
    SelfPair(String, String),
    #[error("duplicate pair {0}/{1} - {2}/{3}")]
    Duplicate(String, String, String, String),
    #[error("invalid identifier: {0}")]
    Identifier(String),
}

/// One comparison, with both sides interned in the owning [`PairList`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairEntry {
    pub label: PairLabel,
    pub a: u32,
    pub b: u32,
    /// When set, only this eye side is compared.
    pub eye: Option<EyeSide>,
}

/// An ordered list of genuine/impostor comparisons.
///
/// Sample references are interned, so a list with millions of entries over a
/// few thousand images stays compact and duplicate detection is a set of
/// integer keys. Invariants (label consistency, no self-pairs, no duplicate
/// unordered pairs) are enforced on every [`PairList::push`].
#[derive(Debug, Clone, Default)]
pub struct PairList {
    samples: Vec<SampleRef>,
    index: HashMap<String, HashMap<String, u32>>,
    entries: Vec<PairEntry>,
    seen: HashSet<(u32, u32, u8)>,
}

impl PartialEq for PairList {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self.entries.iter().zip(&other.entries).all(|(x, y)| {
                x.label == y.label
                    && x.eye == y.eye
                    && self.sample(x.a) == other.sample(y.a)
                    && self.sample(x.b) == other.sample(y.b)
            })
    }
}

impl PairList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }

    pub fn sample(&self, id: u32) -> &SampleRef {
        &self.samples[id as usize]
    }

    /// Distinct sample references in first-use order.
    pub fn samples(&self) -> &[SampleRef] {
        &self.samples
    }

    /// `(genuine, impostor)` entry counts.
    pub fn counts(&self) -> (usize, usize) {
        let genuine = self.entries.iter().filter(|e| e.label == PairLabel::Genuine).count();
        (genuine, self.entries.len() - genuine)
    }

    pub fn has_eye_restrictions(&self) -> bool {
        self.entries.iter().any(|e| e.eye.is_some())
    }

    fn intern(&mut self, subject_id: &str, image_id: &str) -> Result<u32, PairError> {
        if let Some(&id) = self.index.get(subject_id).and_then(|m| m.get(image_id)) {
            return Ok(id);
        }
        check_identifier(subject_id).map_err(PairError::Identifier)?;
        check_identifier(image_id).map_err(PairError::Identifier)?;
        let id = self.samples.len() as u32;
        self.samples.push(SampleRef { subject_id: subject_id.to_string(), image_id: image_id.to_string() });
        self.index
            .entry(subject_id.to_string())
            .or_default()
            .insert(image_id.to_string(), id);
        Ok(id)
    }

    pub fn push(
        &mut self,
        label: PairLabel,
        a: (&str, &str),
        b: (&str, &str),
        eye: Option<EyeSide>,
    ) -> Result<(), PairError> {
        match label {
            PairLabel::Genuine if a.0 != b.0 => {
                return Err(PairError::GenuineAcrossSubjects(a.0.to_string(), b.0.to_string()))
            }
            PairLabel::Impostor if a.0 == b.0 => return Err(PairError::ImpostorWithinSubject(a.0.to_string())),
            _ => {}
        }
        if a == b {
            return Err(PairError::SelfPair(a.0.to_string(), a.1.to_string()));
        }
        let ia = self.intern(a.0, a.1)?;
        let ib = self.intern(b.0, b.1)?;
        let eye_code = eye.map_or(0, |e| e.slot() as u8 + 1);
        if !self.seen.insert((ia.min(ib), ia.max(ib), eye_code)) {
            return Err(PairError::Duplicate(a.0.to_string(), a.1.to_string(), b.0.to_string(), b.1.to_string()));
        }
        self.entries.push(PairEntry { label, a: ia, b: ib, eye });
        Ok(())
    }
}

/// Parses `G|I subjA imgA subjB imgB [left|right]` lines.
pub fn parse_pair_list(text: &str) -> Result<PairList, IngestError> {
    let mut list = PairList::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 5 && tokens.len() != 6 {
            return Err(IngestError::syntax(line_no, format!("expected 'G|I subjA imgA subjB imgB', found {} fields", tokens.len())));
        }
        let label = PairLabel::from_code(tokens[0])
            .ok_or_else(|| IngestError::syntax(line_no, format!("label must be G or I, found '{}'", tokens[0])))?;
        let eye = match tokens.get(5) {
            Some(e) => Some(e.parse::<EyeSide>().map_err(|e| IngestError::syntax(line_no, e))?),
            None => None,
        };
        list.push(label, (tokens[1], tokens[2]), (tokens[3], tokens[4]), eye)
            .map_err(|e| IngestError::invalid(line_no, e.to_string()))?;
    }
    Ok(list)
}

pub fn write_pair_list(list: &PairList) -> String {
    let mut out = String::with_capacity(list.len() * 24);
    for e in list.entries() {
        let (a, b) = (list.sample(e.a), list.sample(e.b));
        out.push_str(e.label.code());
        for part in [&a.subject_id, &a.image_id, &b.subject_id, &b.image_id] {
            out.push(' ');
            out.push_str(part);
        }
        if let Some(eye) = e.eye {
            out.push(' ');
            out.push_str(eye.as_str());
        }
        out.push('\n');
    }
    out
}
