//! Verification protocols: which genuine and impostor comparisons to run.
//!
//! "First" and "second" image always mean manifest order.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EyeSide, FaceAnnotation, FoldSpec, PairError, PairLabel, PairList, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("subject {subject} has {found} {pose} image(s), at least {needed} required")]
    TooFewImages { subject: String, pose: String, found: usize, needed: usize },
    #[error("subject {subject} lists image {image} twice")]
    DuplicateImage { subject: String, image: String },
    #[error("cross-pose protocol needs two different poses; use the same-pose protocol for {0}")]
    SamePoseCross(Pose),
    #[error("fold {fold}: subject {subject} is not in the gallery")]
    UnknownFoldSubject { fold: u32, subject: String },
    #[error("official pair list references subject {0}, which is not a test subject of this fold")]
    UnknownListSubject(String),
    #[error(transparent)]
    Pair(#[from] PairError),
}

/// Images of one subject, grouped by pose and in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectGallery {
    pub subject_id: String,
    by_pose: BTreeMap<Pose, Vec<String>>,
    all: Vec<String>,
}

impl SubjectGallery {
    pub fn new(subject_id: impl Into<String>) -> Self {
        SubjectGallery { subject_id: subject_id.into(), by_pose: BTreeMap::new(), all: Vec::new() }
    }

    pub fn add_image(&mut self, image_id: impl Into<String>, pose: Pose) -> Result<(), ProtocolError> {
        let image_id = image_id.into();
        if self.all.contains(&image_id) {
            return Err(ProtocolError::DuplicateImage { subject: self.subject_id.clone(), image: image_id });
        }
        self.by_pose.entry(pose).or_default().push(image_id.clone());
        self.all.push(image_id);
        Ok(())
    }

    pub fn images(&self, pose: Pose) -> &[String] {
        self.by_pose.get(&pose).map_or(&[], Vec::as_slice)
    }

    /// Every image regardless of pose.
    pub fn all_images(&self) -> &[String] {
        &self.all
    }
}

/// Groups annotations by subject, subjects in order of first appearance.
pub fn build_galleries(faces: &[FaceAnnotation]) -> Result<Vec<SubjectGallery>, ProtocolError> {
    let mut order: HashMap<&str, usize> = HashMap::new();
    let mut galleries: Vec<SubjectGallery> = Vec::new();
    for face in faces {
        let idx = *order.entry(face.subject_id.as_str()).or_insert_with(|| {
            galleries.push(SubjectGallery::new(face.subject_id.clone()));
            galleries.len() - 1
        });
        galleries[idx].add_image(face.image_id.clone(), face.pose)?;
    }
    Ok(galleries)
}

fn require_images(g: &SubjectGallery, pose: Pose, needed: usize) -> Result<&[String], ProtocolError> {
    let images = g.images(pose);
    if images.len() < needed {
        return Err(ProtocolError::TooFewImages {
            subject: g.subject_id.clone(),
            pose: pose.to_string(),
            found: images.len(),
            needed,
        });
    }
    Ok(images)
}

/// Genuine: every unordered image pair of one pose within a subject.
/// Impostor: first image of subject i against second image of subject j,
/// for every ordered pair i ≠ j.
pub fn gen_same_pose_pairs(gallery: &[SubjectGallery], pose: Pose) -> Result<PairList, ProtocolError> {
    let images: Vec<&[String]> = gallery.iter().map(|g| require_images(g, pose, 2)).collect::<Result<_, _>>()?;
    let mut list = PairList::new();
    for (g, imgs) in gallery.iter().zip(&images) {
        let s = g.subject_id.as_str();
        for (i, a) in imgs.iter().enumerate() {
            for b in &imgs[i + 1..] {
                list.push(PairLabel::Genuine, (s, a), (s, b), None)?;
            }
        }
    }
    push_impostors(&mut list, gallery, &images, &images, None)?;
    Ok(list)
}

fn push_impostors(
    list: &mut PairList,
    gallery: &[SubjectGallery],
    first_of: &[&[String]],
    second_of: &[&[String]],
    eye: Option<EyeSide>,
) -> Result<(), ProtocolError> {
    for (i, gi) in gallery.iter().enumerate() {
        for (j, gj) in gallery.iter().enumerate() {
            if i != j {
                list.push(
                    PairLabel::Impostor,
                    (&gi.subject_id, &first_of[i][0]),
                    (&gj.subject_id, &second_of[j][1]),
                    eye,
                )?;
            }
        }
    }
    Ok(())
}

/// Genuine: full cross product of `pose_a` × `pose_b` images within a
/// subject. Impostor: first `pose_a` image of subject i against second
/// `pose_b` image of subject j, for every ordered pair i ≠ j.
pub fn gen_cross_pose_pairs(gallery: &[SubjectGallery], pose_a: Pose, pose_b: Pose) -> Result<PairList, ProtocolError> {
    if pose_a == pose_b {
        return Err(ProtocolError::SamePoseCross(pose_a));
    }
    let need_b = if gallery.len() > 1 { 2 } else { 1 };
    let a_imgs: Vec<&[String]> = gallery.iter().map(|g| require_images(g, pose_a, 1)).collect::<Result<_, _>>()?;
    let b_imgs: Vec<&[String]> = gallery.iter().map(|g| require_images(g, pose_b, need_b)).collect::<Result<_, _>>()?;
    let mut list = PairList::new();
    for ((g, aa), bb) in gallery.iter().zip(&a_imgs).zip(&b_imgs) {
        let s = g.subject_id.as_str();
        for a in aa.iter() {
            for b in bb.iter() {
                list.push(PairLabel::Genuine, (s, a), (s, b), None)?;
            }
        }
    }
    push_impostors(&mut list, gallery, &a_imgs, &b_imgs, None)?;
    Ok(list)
}

/// How fold pairs are obtained.
#[derive(Debug, Clone, Copy)]
pub enum UfprMode<'a> {
    /// Enumerate per-eye pairs from the gallery.
    PerEyeExhaustive,
    /// Validate and pass through an official pair list.
    External(&'a PairList),
}

/// Pair list for one evaluation fold.
///
/// In per-eye mode, genuine pairs are all unordered sample pairs within a
/// subject, once per eye side. Impostor pairs follow the same first/second
/// rule as [`gen_same_pose_pairs`], once per eye side, giving 2·S·(S−1)
/// entries. Samples are taken across all poses in manifest order.
pub fn gen_ufpr_fold_pairs(fold: &FoldSpec, gallery: &[SubjectGallery], mode: UfprMode<'_>) -> Result<PairList, ProtocolError> {
    match mode {
        UfprMode::External(list) => {
            let members: HashSet<&str> = fold.test_subject_ids.iter().map(String::as_str).collect();
            if let Some(unknown) = list.samples().iter().find(|s| !members.contains(s.subject_id.as_str())) {
                return Err(ProtocolError::UnknownListSubject(unknown.subject_id.clone()));
            }
            Ok(list.clone())
        }
        UfprMode::PerEyeExhaustive => {
            let by_id: HashMap<&str, &SubjectGallery> = gallery.iter().map(|g| (g.subject_id.as_str(), g)).collect();
            let fold_gallery: Vec<SubjectGallery> = fold
                .test_subject_ids
                .iter()
                .map(|s| {
                    by_id
                        .get(s.as_str())
                        .map(|g| (*g).clone())
                        .ok_or_else(|| ProtocolError::UnknownFoldSubject { fold: fold.fold_id, subject: s.clone() })
                })
                .collect::<Result<_, _>>()?;
            let samples: Vec<&[String]> = fold_gallery
                .iter()
                .map(|g| {
                    let all = g.all_images();
                    if all.len() < 2 {
                        Err(ProtocolError::TooFewImages {
                            subject: g.subject_id.clone(),
                            pose: "any".into(),
                            found: all.len(),
                            needed: 2,
                        })
                    } else {
                        Ok(all)
                    }
                })
                .collect::<Result<_, _>>()?;

            let mut list = PairList::new();
            for eye in EyeSide::BOTH {
                for (g, imgs) in fold_gallery.iter().zip(&samples) {
                    let s = g.subject_id.as_str();
                    for (i, a) in imgs.iter().enumerate() {
                        for b in &imgs[i + 1..] {
                            list.push(PairLabel::Genuine, (s, a), (s, b), Some(eye))?;
                        }
                    }
                }
            }
            for eye in EyeSide::BOTH {
                push_impostors(&mut list, &fold_gallery, &samples, &samples, Some(eye))?;
            }
            Ok(list)
        }
    }
}

/// Genuine and impostor cardinalities of a protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub genuine: u64,
    pub impostor: u64,
}

/// Uniform protocol sizes for [`count_pairs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolParams {
    SamePose { subjects: u64, images: u64 },
    CrossPose { subjects: u64, images_a: u64, images_b: u64 },
    UfprPerEye { subjects: u64, samples: u64 },
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Closed-form pair counts, no enumeration.
pub fn count_pairs(params: ProtocolParams) -> PairCounts {
    match params {
        ProtocolParams::SamePose { subjects, images } => PairCounts {
            genuine: subjects * choose2(images),
            impostor: subjects * subjects.saturating_sub(1),
        },
        ProtocolParams::CrossPose { subjects, images_a, images_b } => PairCounts {
            genuine: subjects * images_a * images_b,
            impostor: subjects * subjects.saturating_sub(1),
        },
        ProtocolParams::UfprPerEye { subjects, samples } => PairCounts {
            genuine: 2 * subjects * choose2(samples),
            impostor: 2 * subjects * subjects.saturating_sub(1),
        },
    }
}

/// Protocol selector for gallery-level counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    SamePose(Pose),
    CrossPose(Pose, Pose),
    UfprPerEye,
}

/// Closed-form counts for a gallery with possibly uneven image counts.
///
/// Checks the same preconditions as the generators.
pub fn count_gallery_pairs(gallery: &[SubjectGallery], protocol: Protocol) -> Result<PairCounts, ProtocolError> {
    let s = gallery.len() as u64;
    let impostor = s * s.saturating_sub(1);
    match protocol {
        Protocol::SamePose(pose) => {
            let mut genuine = 0;
            for g in gallery {
                genuine += choose2(require_images(g, pose, 2)?.len() as u64);
            }
            Ok(PairCounts { genuine, impostor })
        }
        Protocol::CrossPose(a, b) => {
            if a == b {
                return Err(ProtocolError::SamePoseCross(a));
            }
            let need_b = if gallery.len() > 1 { 2 } else { 1 };
            let mut genuine = 0;
            for g in gallery {
                genuine += (require_images(g, a, 1)?.len() * require_images(g, b, need_b)?.len()) as u64;
            }
            Ok(PairCounts { genuine, impostor })
        }
        Protocol::UfprPerEye => {
            let mut genuine = 0;
            for g in gallery {
                let n = g.all_images().len();
                if n < 2 {
                    return Err(ProtocolError::TooFewImages { subject: g.subject_id.clone(), pose: "any".into(), found: n, needed: 2 });
                }
                genuine += 2 * choose2(n as u64);
            }
            Ok(PairCounts { genuine, impostor: 2 * impostor })
        }
    }
}
