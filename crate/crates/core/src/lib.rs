//! Ocular (periocular) verification toolkit.
//!
//! The crate covers the non-learned half of an ocular verification
//! experiment:
//!
//! - [`ingest`]: face-landmark manifests, fold definitions, pair lists and the
//!   embedding store.
//! - [`geometry`]: eye-line alignment, frontality/resolution filters, the two
//!   113×113 eye crops and pixel normalization.
//! - [`protocols`]: genuine/impostor pair enumeration for same-pose,
//!   cross-pose and fold-based evaluation, plus closed-form counts.
//! - [`matcher`]: cosine and χ² comparison, left/right averaging, weighted
//!   score fusion and parallel pair scoring.
//! - [`metrics`]: DET curves, EER, AUC, fold aggregation and the fusion
//!   weight sweep, with a brute-force EER oracle.
//! - [`synth`]: seeded synthetic embeddings for end-to-end checks.
//!
//! Text formats live next to the types they carry; numbers written to
//! reports go through [`fmt::sig9`].

pub mod fmt;
pub mod geometry;
pub mod ingest;
pub mod matcher;
pub mod metrics;
pub mod protocols;
pub mod synth;

pub use ingest::{EmbeddingSet, EyeSide, FaceAnnotation, FoldSpec, PairLabel, PairList, Point, Pose};
pub use matcher::{Metric, Polarity, ScoreSet};
