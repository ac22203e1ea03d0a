//! Template comparison, score sets and score-level fusion.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{check_identifier, EmbeddingSet, EyeSide, PairLabel, PairList, Template};

/// Floor on the χ² denominator; keeps all-zero bins from dividing by zero.
pub const CHI2_EPSILON: f64 = 1e-10;

/// Missing keys listed in a [`MatchError::MissingEmbeddings`] message.
const MISSING_KEYS_SHOWN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("negative entry {value} at position {index}; chi2 needs non-negative descriptors")]
    NegativeEntry { index: usize, value: f32 },
    #[error("templates share no eye side")]
    NoSharedSide,
    #[error("pair {index} ({a} vs {b}): {source}")]
    Pair { index: usize, a: String, b: String, source: Box<MatchError> },
    #[error("{count} embeddings missing: {shown}")]
    MissingEmbeddings { count: usize, shown: String },
    #[error("embedding set contains negative values; chi2 requires non-negative descriptors")]
    NegativeSet,
    #[error("score sets are not aligned: {0}")]
    Misaligned(String),
    #[error("{0} score set has a degenerate range (max = min); min-max normalization is undefined")]
    DegenerateRange(&'static str),
    #[error("fusion weight must lie in [0, 1], got {0}")]
    Weight(f64),
}

/// Whether larger scores mean "more alike" or "further apart".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Similarity,
    Distance,
}

impl Polarity {
    pub fn flipped(self) -> Self {
        match self {
            Polarity::Similarity => Polarity::Distance,
            Polarity::Distance => Polarity::Similarity,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Similarity => "similarity",
            Polarity::Distance => "distance",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "similarity" => Ok(Polarity::Similarity),
            "distance" => Ok(Polarity::Distance),
            _ => Err(format!("unknown polarity '{s}' (expected similarity or distance)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Chi2,
}

impl Metric {
    pub fn polarity(self) -> Polarity {
        match self {
            Metric::Cosine => Polarity::Similarity,
            Metric::Chi2 => Polarity::Distance,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Chi2 => "chi2",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "chi2" => Ok(Metric::Chi2),
            _ => Err(format!("unknown metric '{s}' (expected cosine or chi2)")),
        }
    }
}

const LANES: usize = 8;

/// Returns `(x·y, x·x, y·y)`.
#[inline]
fn dot_and_norms(x: &[f32], y: &[f32]) -> (f64, f64, f64) {
    let mut xy = [0.0f64; LANES];
    let mut xx = [0.0f64; LANES];
    let mut yy = [0.0f64; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for i in 0..LANES {
            let (p, q) = (f64::from(a[i]), f64::from(b[i]));
            xy[i] += p * q;
            xx[i] += p * p;
            yy[i] += q * q;
        }
    }
    for i in 0..xr.len() {
        let (p, q) = (f64::from(xr[i]), f64::from(yr[i]));
        xy[i] += p * q;
        xx[i] += p * p;
        yy[i] += q * q;
    }
    (xy.iter().sum(), xx.iter().sum(), yy.iter().sum())
}

#[inline]
fn chi2_kernel(x: &[f32], y: &[f32], eps: f64) -> f64 {
    let mut acc = [0.0f64; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for i in 0..LANES {
            let (p, q) = (f64::from(a[i]), f64::from(b[i]));
            let d = p - q;
            acc[i] += d * d / (p + q).max(eps);
        }
    }
    for i in 0..xr.len() {
        let (p, q) = (f64::from(xr[i]), f64::from(yr[i]));
        let d = p - q;
        acc[i] += d * d / (p + q).max(eps);
    }
    acc.iter().sum()
}

fn check_dims(x: &[f32], y: &[f32]) -> Result<(), MatchError> {
    if x.len() == y.len() {
        Ok(())
    } else {
        Err(MatchError::DimMismatch(x.len(), y.len()))
    }
}

/// `x·y / (‖x‖ ‖y‖)`, clamped to `[-1, 1]`. Exactly 1 when `x == y`.
pub fn cosine_similarity(x: &[f32], y: &[f32]) -> Result<f64, MatchError> {
    check_dims(x, y)?;
    let (xy, xx, yy) = dot_and_norms(x, y);
    if xx == 0.0 || yy == 0.0 {
        return Err(MatchError::ZeroNorm);
    }
    Ok((xy / (xx * yy).sqrt()).clamp(-1.0, 1.0))
}

/// `Σ (xᵢ - yᵢ)² / max(xᵢ + yᵢ, ε)` with ε = [`CHI2_EPSILON`].
///
/// The floor only changes bins whose sum is below ε, where the numerator is
/// smaller still; with ε = 0 this is the plain histogram χ².
pub fn chi2_distance(x: &[f32], y: &[f32]) -> Result<f64, MatchError> {
    chi2_distance_with_epsilon(x, y, CHI2_EPSILON)
}

pub fn chi2_distance_with_epsilon(x: &[f32], y: &[f32], eps: f64) -> Result<f64, MatchError> {
    check_dims(x, y)?;
    if let Some((index, &value)) = x.iter().chain(y).enumerate().find(|(_, v)| **v < 0.0) {
        return Err(MatchError::NegativeEntry { index: index % x.len().max(1), value });
    }
    Ok(chi2_kernel(x, y, eps))
}

fn compare(x: &[f32], y: &[f32], metric: Metric) -> Result<f64, MatchError> {
    match metric {
        Metric::Cosine => cosine_similarity(x, y),
        Metric::Chi2 => chi2_distance(x, y),
    }
}

/// Mean of the per-side scores over the sides both templates carry.
pub fn pair_score(a: &Template<'_>, b: &Template<'_>, metric: Metric) -> Result<f64, MatchError> {
    let mut sum = 0.0;
    let mut n = 0;
    for eye in EyeSide::BOTH {
        if let (Some(x), Some(y)) = (a.side(eye), b.side(eye)) {
            sum += compare(x, y, metric)?;
            n += 1;
        }
    }
    match n {
        0 => Err(MatchError::NoSharedSide),
        1 => Ok(sum),
        _ => Ok(sum / n as f64),
    }
}

fn side_score(a: &Template<'_>, b: &Template<'_>, eye: EyeSide, metric: Metric) -> Result<f64, MatchError> {
    match (a.side(eye), b.side(eye)) {
        (Some(x), Some(y)) => compare(x, y, metric),
        _ => Err(MatchError::NoSharedSide),
    }
}

/// Genuine and impostor scores of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub polarity: Polarity,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>, polarity: Polarity) -> Self {
        ScoreSet { genuine, impostor, polarity }
    }

    /// Partitions per-pair scores by the labels of `pairs`, keeping pair order
    /// within each class.
    pub fn from_pairs(pairs: &PairList, scores: &[f64], polarity: Polarity) -> Self {
        let mut set = ScoreSet::new(Vec::new(), Vec::new(), polarity);
        for (entry, &s) in pairs.entries().iter().zip(scores) {
            match entry.label {
                PairLabel::Genuine => set.genuine.push(s),
                PairLabel::Impostor => set.impostor.push(s),
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.genuine.len() + self.impostor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies `f` to every score.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScoreSet {
        ScoreSet {
            genuine: self.genuine.iter().map(|&s| f(s)).collect(),
            impostor: self.impostor.iter().map(|&s| f(s)).collect(),
            polarity: self.polarity,
        }
    }

    /// Concatenates several sets of one polarity.
    pub fn pooled<'a>(sets: impl IntoIterator<Item = &'a ScoreSet>) -> Result<ScoreSet, MatchError> {
        let mut iter = sets.into_iter();
        let first = iter.next().ok_or_else(|| MatchError::Misaligned("no score sets to pool".into()))?;
        let mut out = first.clone();
        for s in iter {
            if s.polarity != out.polarity {
                return Err(MatchError::Misaligned("cannot pool sets of different polarity".into()));
            }
            out.genuine.extend_from_slice(&s.genuine);
            out.impostor.extend_from_slice(&s.impostor);
        }
        Ok(out)
    }

    fn range(&self) -> Option<(f64, f64)> {
        self.genuine.iter().chain(&self.impostor).fold(None, |acc, &s| match acc {
            None => Some((s, s)),
            Some((lo, hi)) => Some((lo.min(s), hi.max(s))),
        })
    }
}

/// Weight `a` of the first system in `a·s1 + (1 - a)·s2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub fn new(a: f64) -> Result<Self, MatchError> {
        if (0.0..=1.0).contains(&a) {
            Ok(FusionWeight(a))
        } else {
            Err(MatchError::Weight(a))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Rescale each set to [0, 1] over its genuine and impostor scores.
    #[default]
    MinMax,
    None,
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minmax" => Ok(Normalization::MinMax),
            "none" => Ok(Normalization::None),
            _ => Err(format!("unknown normalization '{s}' (expected minmax or none)")),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::MinMax => "minmax",
            Normalization::None => "none",
        })
    }
}

/// Applies `normalization` to one set; `which` names it in errors.
pub fn normalize_scores(set: &ScoreSet, normalization: Normalization, which: &'static str) -> Result<ScoreSet, MatchError> {
    match normalization {
        Normalization::None => Ok(set.clone()),
        Normalization::MinMax => {
            let (lo, hi) = set.range().ok_or(MatchError::DegenerateRange(which))?;
            if hi <= lo {
                return Err(MatchError::DegenerateRange(which));
            }
            let span = hi - lo;
            Ok(set.map(|s| (s - lo) / span))
        }
    }
}

fn check_aligned(s1: &ScoreSet, s2: &ScoreSet) -> Result<(), MatchError> {
    if s1.polarity != s2.polarity {
        return Err(MatchError::Misaligned(format!("polarity {} vs {}", s1.polarity, s2.polarity)));
    }
    if s1.genuine.len() != s2.genuine.len() || s1.impostor.len() != s2.impostor.len() {
        return Err(MatchError::Misaligned(format!(
            "{}+{} vs {}+{} genuine+impostor scores",
            s1.genuine.len(),
            s1.impostor.len(),
            s2.genuine.len(),
            s2.impostor.len()
        )));
    }
    Ok(())
}

/// Both sets after normalization, checked for pairwise alignment.
pub fn prepare_fusion(s1: &ScoreSet, s2: &ScoreSet, normalization: Normalization) -> Result<(ScoreSet, ScoreSet), MatchError> {
    check_aligned(s1, s2)?;
    Ok((normalize_scores(s1, normalization, "first")?, normalize_scores(s2, normalization, "second")?))
}

/// Elementwise convex combination of two already-prepared sets.
pub fn combine(n1: &ScoreSet, n2: &ScoreSet, a: FusionWeight) -> ScoreSet {
    let (wa, wb) = (a.0, 1.0 - a.0);
    let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect();
    ScoreSet { genuine: mix(&n1.genuine, &n2.genuine), impostor: mix(&n1.impostor, &n2.impostor), polarity: n1.polarity }
}

/// Weighted score fusion `a·s1 + (1 - a)·s2` after optional per-set
/// normalization.
pub fn fuse_scores(s1: &ScoreSet, s2: &ScoreSet, a: FusionWeight, normalization: Normalization) -> Result<ScoreSet, MatchError> {
    let (n1, n2) = prepare_fusion(s1, s2, normalization)?;
    Ok(combine(&n1, &n2, a))
}

/// Scores every entry of `pairs`, in list order.
///
/// Work is spread over the current rayon pool; each score depends only on
/// its own pair, so the output is identical for any thread count.
pub fn score_pair_list(embeddings: &EmbeddingSet, pairs: &PairList, metric: Metric) -> Result<Vec<f64>, MatchError> {
    if metric == Metric::Chi2 && embeddings.has_negative() {
        return Err(MatchError::NegativeSet);
    }
    let templates: Vec<Option<Template<'_>>> = pairs
        .samples()
        .iter()
        .map(|s| embeddings.template(&s.subject_id, &s.image_id))
        .collect();
    let missing: Vec<String> = pairs
        .samples()
        .iter()
        .zip(&templates)
        .filter(|(_, t)| t.is_none())
        .map(|(s, _)| format!("{}/{}", s.subject_id, s.image_id))
        .collect();
    if !missing.is_empty() {
        let shown = missing.iter().take(MISSING_KEYS_SHOWN).cloned().collect::<Vec<_>>().join(", ");
        return Err(MatchError::MissingEmbeddings { count: missing.len(), shown });
    }

    pairs
        .entries()
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let (ta, tb) = (
                templates[entry.a as usize].as_ref().expect("resolved above"),
                templates[entry.b as usize].as_ref().expect("resolved above"),
            );
            let result = match entry.eye {
                Some(eye) => side_score(ta, tb, eye, metric),
                None => pair_score(ta, tb, metric),
            };
            result.map_err(|e| {
                let (a, b) = (pairs.sample(entry.a), pairs.sample(entry.b));
                MatchError::Pair {
                    index,
                    a: format!("{}/{}", a.subject_id, a.image_id),
                    b: format!("{}/{}", b.subject_id, b.image_id),
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

/// Scores `pairs` and partitions the result into genuine and impostor arrays.
pub fn score_pairs(embeddings: &EmbeddingSet, pairs: &PairList, metric: Metric) -> Result<ScoreSet, MatchError> {
    let scores = score_pair_list(embeddings, pairs, metric)?;
    Ok(ScoreSet::from_pairs(pairs, &scores, metric.polarity()))
}

/// Column layout of a score file.
pub const SCORE_HEADER: &str = "label,subject_a,image_a,subject_b,image_b,score";
/// Score file layout when some pairs compare a single eye.
pub const SCORE_HEADER_WITH_EYE: &str = "label,subject_a,image_a,subject_b,image_b,eye,score";

/// Writes per-pair scores as CSV with nine significant digits.
pub fn write_score_file(pairs: &PairList, scores: &[f64]) -> String {
    let with_eye = pairs.has_eye_restrictions();
    let mut out = String::with_capacity(pairs.len() * 40);
    out.push_str(if with_eye { SCORE_HEADER_WITH_EYE } else { SCORE_HEADER });
    out.push('\n');
    for (e, &s) in pairs.entries().iter().zip(scores) {
        let (a, b) = (pairs.sample(e.a), pairs.sample(e.b));
        out.push_str(e.label.code());
        for part in [&a.subject_id, &a.image_id, &b.subject_id, &b.image_id] {
            out.push(',');
            out.push_str(part);
        }
        if with_eye {
            out.push(',');
            out.push_str(e.eye.map_or("", EyeSide::as_str));
        }
        out.push(',');
        out.push_str(&crate::fmt::sig9(s));
        out.push('\n');
    }
    out
}

/// A parsed score file: the pairs it covers and their scores, in file order.
#[derive(Debug, Clone)]
pub struct ScoreFile {
    pub pairs: PairList,
    pub scores: Vec<f64>,
}

impl ScoreFile {
    pub fn score_set(&self, polarity: Polarity) -> ScoreSet {
        ScoreSet::from_pairs(&self.pairs, &self.scores, polarity)
    }

    /// 1-based data row (excluding the header) of the first entry that
    /// differs from `other`, or of the first surplus row.
    pub fn first_mismatch(&self, other: &ScoreFile) -> Option<usize> {
        let (ea, eb) = (self.pairs.entries(), other.pairs.entries());
        let common = ea.len().min(eb.len());
        (0..common)
            .find(|&i| {
                let (x, y) = (ea[i], eb[i]);
                x.label != y.label
                    || x.eye != y.eye
                    || self.pairs.sample(x.a) != other.pairs.sample(y.a)
                    || self.pairs.sample(x.b) != other.pairs.sample(y.b)
            })
            .or((ea.len() != eb.len()).then_some(common))
            .map(|i| i + 1)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ScoreFileError {
    pub line: usize,
    pub message: String,
}

pub fn parse_score_file(text: &str) -> Result<ScoreFile, ScoreFileError> {
    let err = |line: usize, message: String| ScoreFileError { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = lines.next().map(|(_, h)| h.trim()).unwrap_or("");
    let with_eye = match header {
        SCORE_HEADER => false,
        SCORE_HEADER_WITH_EYE => true,
        _ => return Err(err(1, format!("expected header '{SCORE_HEADER}'"))),
    };
    let width = if with_eye { 7 } else { 6 };
    let mut pairs = PairList::new();
    let mut scores = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != width {
            return Err(err(line_no, format!("expected {width} fields, found {}", f.len())));
        }
        let label = PairLabel::from_code(f[0]).ok_or_else(|| err(line_no, format!("label must be G or I, found '{}'", f[0])))?;
        for id in &f[1..5] {
            check_identifier(id).map_err(|e| err(line_no, e))?;
        }
        let eye = if with_eye && !f[5].is_empty() {
            Some(f[5].parse::<EyeSide>().map_err(|e| err(line_no, e))?)
        } else {
            None
        };
        let raw = f[width - 1];
        let score: f64 = raw.parse().map_err(|_| err(line_no, format!("score '{raw}' is not a number")))?;
        if !score.is_finite() {
            return Err(err(line_no, format!("score '{raw}' is not finite")));
        }
        pairs
            .push(label, (f[1], f[2]), (f[3], f[4]), eye)
            .map_err(|e| err(line_no, e.to_string()))?;
        scores.push(score);
    }
    Ok(ScoreFile { pairs, scores })
}
