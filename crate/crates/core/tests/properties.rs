use std::collections::{BTreeMap, BTreeSet, HashSet};

use periscope_core::geometry::{
    self, compute_alignment, frontality_check, inter_eye_distance, resolution_check, BorderMode, PixelBuffer,
};
use periscope_core::ingest::{
    self, EmbeddingRecord, EmbeddingSet, EyeSide, FaceAnnotation, PairLabel, PairList, Point, Pose, ValueMode,
};
use periscope_core::matcher::{
    self, chi2_distance, chi2_distance_with_epsilon, cosine_similarity, FusionWeight, Normalization, Polarity,
    ScoreSet,
};
use periscope_core::metrics;
use periscope_core::protocols::{self, count_pairs, ProtocolParams, SubjectGallery};
use proptest::prelude::*;

fn pose() -> impl Strategy<Value = Pose> {
    prop::sample::select(Pose::ALL.to_vec())
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.-]{1,10}"
}

fn coord() -> impl Strategy<Value = f64> {
    -2000.0..2000.0f64
}

fn face() -> impl Strategy<Value = FaceAnnotation> {
    (ident(), ident(), pose(), coord(), coord(), coord(), coord(), coord(), coord(), 1u32..5000, 1u32..5000)
        .prop_filter("eyes must differ", |t| (t.3, t.4) != (t.5, t.6))
        .prop_map(|(s, i, p, lx, ly, rx, ry, nx, ny, w, h)| FaceAnnotation {
            subject_id: s,
            image_id: i,
            pose: p,
            left_eye: Point::new(lx, ly),
            right_eye: Point::new(rx, ry),
            nose: Point::new(nx, ny),
            image_width: w,
            image_height: h,
        })
}

fn rigid(p: Point, theta: f64, t: (f64, f64)) -> Point {
    let (s, c) = theta.sin_cos();
    Point::new(c * p.x - s * p.y + t.0, s * p.x + c * p.y + t.1)
}

/// Scores with a fair share of exact ties.
fn scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-40i32..40).prop_map(|k| f64::from(k) / 8.0), -5.0..5.0f64], 1..max_len)
}

fn score_set() -> impl Strategy<Value = ScoreSet> {
    (scores(60), scores(60), prop::bool::ANY).prop_map(|(g, i, dist)| {
        ScoreSet::new(g, i, if dist { Polarity::Distance } else { Polarity::Similarity })
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn uniform_gallery(subjects: usize, images: usize, poses: &[Pose]) -> Vec<SubjectGallery> {
    (0..subjects)
        .map(|s| {
            let mut g = SubjectGallery::new(format!("s{s}"));
            for p in poses {
                for i in 0..images {
                    g.add_image(format!("{}{i}", p.as_str()), *p).unwrap();
                }
            }
            g
        })
        .collect()
}

fn pair_keys(list: &PairList) -> Vec<(PairLabel, (String, String), (String, String))> {
    list.entries()
        .iter()
        .map(|e| {
            let a = list.sample(e.a);
            let b = list.sample(e.b);
            (e.label, (a.subject_id.clone(), a.image_id.clone()), (b.subject_id.clone(), b.image_id.clone()))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn manifest_round_trip(faces in prop::collection::vec(face(), 0..20)) {
        let text = ingest::write_face_manifest(&faces);
        let back = ingest::parse_face_manifest(&text).unwrap();
        prop_assert_eq!(back, faces);
    }

    #[test]
    fn embedding_round_trip(
        dim in 1usize..12,
        keys in prop::collection::btree_set((ident(), ident(), prop::bool::ANY), 0..15),
        seed in prop::collection::vec(0.0f32..1e6, 12),
    ) {
        let mut set = EmbeddingSet::new(dim);
        for (k, (s, i, left)) in keys.iter().enumerate() {
            let vector = (0..dim).map(|d| seed[d] / (k as f32 + 1.0)).collect();
            let eye = if *left { EyeSide::Left } else { EyeSide::Right };
            set.insert(EmbeddingRecord { subject_id: s.clone(), image_id: i.clone(), pose: Pose::Frontal, eye, vector }).unwrap();
        }
        let text = ingest::write_embeddings(&set);
        let back = ingest::read_embeddings(&text, ValueMode::Strict).unwrap();
        prop_assert_eq!(ingest::write_embeddings(&back.set), text);
        for r in set.iter() {
            prop_assert_eq!(back.set.get(r.subject_id, r.image_id, r.eye).unwrap(), r.vector);
        }
    }

    #[test]
    fn pair_list_round_trip(n in 2usize..6, m in 2usize..5) {
        let gallery = uniform_gallery(n, m, &[Pose::Frontal]);
        let list = protocols::gen_same_pose_pairs(&gallery, Pose::Frontal).unwrap();
        let back = ingest::parse_pair_list(&ingest::write_pair_list(&list)).unwrap();
        prop_assert_eq!(back, list);
    }

    #[test]
    fn alignment_levels_and_scales(f in face(), target in 10.0..300.0f64) {
        let t = compute_alignment(&f, target).unwrap();
        let l = t.apply(f.left_eye);
        let r = t.apply(f.right_eye);
        prop_assert!(close(l.y, r.y, 1e-6));
        prop_assert!(close(r.x - l.x, target, 1e-6));
        let mid = Point::new(0.5 * (l.x + r.x), 0.5 * (l.y + r.y));
        prop_assert!(close(mid.x, geometry::ALIGNED_ANCHOR.x, 1e-6));
        prop_assert!(close(mid.y, geometry::ALIGNED_ANCHOR.y, 1e-6));
        let back = t.invert(t.apply(f.nose));
        prop_assert!(back.distance(f.nose) < 1e-6 * (1.0 + f.nose.x.abs() + f.nose.y.abs()));
    }

    #[test]
    fn filters_ignore_rigid_motion(
        f in face(),
        theta in -std::f64::consts::PI..std::f64::consts::PI,
        tx in -500.0..500.0f64,
        ty in -500.0..500.0f64,
        ratio in 0.05..1.0f64,
        min_ied in 1.0..500.0f64,
    ) {
        let mut g = f.clone();
        g.left_eye = rigid(f.left_eye, theta, (tx, ty));
        g.right_eye = rigid(f.right_eye, theta, (tx, ty));
        g.nose = rigid(f.nose, theta, (tx, ty));
        let ied = inter_eye_distance(&f);
        let offset = geometry::frontality_offset(&f);
        // Only compare away from the decision boundaries, where rounding decides.
        let tol = 1e-9 * (1.0 + ied + offset + tx.abs() + ty.abs() + 4000.0);
        prop_assume!((offset - ratio * ied).abs() > tol && (ied - min_ied).abs() > tol);
        prop_assert_eq!(frontality_check(&f, ratio).unwrap(), frontality_check(&g, ratio).unwrap());
        prop_assert_eq!(resolution_check(&f, min_ied).unwrap(), resolution_check(&g, min_ied).unwrap());
    }

    #[test]
    fn mirroring_is_an_involution(seed in any::<u64>()) {
        let mut img = PixelBuffer::filled(64, 48, 3, 0);
        let mut x = seed | 1;
        for yy in 0..48 {
            for xx in 0..64 {
                for c in 0..3 {
                    x ^= x << 13;
                    x ^= x >> 7;
                    x ^= x << 17;
                    img.set(xx, yy, c, x as u8);
                }
            }
        }
        let f = FaceAnnotation::new("s", "i", Pose::Frontal, Point::new(20.0, 24.0), Point::new(44.0, 24.0), Point::new(32.0, 34.0), 64, 48).unwrap();
        let t = compute_alignment(&f, 60.0).unwrap();
        let (left, right) = geometry::extract_crops(&img, &f, &t, BorderMode::Replicate).unwrap();
        prop_assert!(left.flipped && !right.flipped);
        let twice = left.mirrored().mirrored();
        prop_assert_eq!(twice.pixels(), left.pixels());
        prop_assert_eq!(twice.flipped, left.flipped);
    }

    #[test]
    fn metrics_are_symmetric(x in prop::collection::vec(0.0f32..10.0, 1..40), shift in 0.01f32..3.0) {
        let y: Vec<f32> = x.iter().rev().map(|v| v + shift).collect();
        prop_assert_eq!(chi2_distance(&x, &y).unwrap(), chi2_distance(&y, &x).unwrap());
        prop_assert!(close(cosine_similarity(&x, &y).unwrap(), cosine_similarity(&y, &x).unwrap(), 1e-12));
        prop_assert_eq!(chi2_distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn cosine_ignores_positive_scale(x in prop::collection::vec(-10.0f32..10.0, 1..40), k in 0.25f32..4.0) {
        prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
        let y: Vec<f32> = x.iter().map(|v| v * k).collect();
        prop_assert!(close(cosine_similarity(&x, &y).unwrap(), 1.0, 1e-6));
        let z: Vec<f32> = x.iter().rev().copied().collect();
        let zk: Vec<f32> = z.iter().map(|v| v * k).collect();
        prop_assert!(close(cosine_similarity(&x, &z).unwrap(), cosine_similarity(&x, &zk).unwrap(), 1e-6));
    }

    #[test]
    fn chi2_matches_naive_sum(pairs in prop::collection::vec((0.001f32..50.0, 0.001f32..50.0), 1..100)) {
        let (x, y): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        let naive: f64 = x.iter().zip(&y).map(|(&p, &q)| {
            let (p, q) = (f64::from(p), f64::from(q));
            (p - q) * (p - q) / (p + q)
        }).sum();
        let fast = chi2_distance_with_epsilon(&x, &y, 0.0).unwrap();
        prop_assert!(close(fast, naive, 1e-9 * (1.0 + naive)));
    }

    #[test]
    fn minmax_preserves_order(set in score_set()) {
        prop_assume!(set.genuine.iter().chain(&set.impostor).any(|v| *v != set.genuine[0]));
        let n = matcher::normalize_scores(&set, Normalization::MinMax, "first").unwrap();
        let before: Vec<f64> = set.genuine.iter().chain(&set.impostor).copied().collect();
        let after: Vec<f64> = n.genuine.iter().chain(&n.impostor).copied().collect();
        for i in 0..before.len() {
            prop_assert!((0.0..=1.0).contains(&after[i]));
            for j in 0..before.len() {
                if before[i] < before[j] {
                    prop_assert!(after[i] <= after[j]);
                }
            }
        }
    }

    #[test]
    fn fusion_endpoints_select_one_system(set in score_set(), k in 0.5f64..3.0) {
        prop_assume!(set.genuine.iter().chain(&set.impostor).any(|v| *v != set.genuine[0]));
        let other = set.map(|v| k * v * v * v + 1.0);
        let (n1, n2) = matcher::prepare_fusion(&set, &other, Normalization::MinMax).unwrap();
        let at1 = matcher::combine(&n1, &n2, FusionWeight::new(1.0).unwrap());
        let at0 = matcher::combine(&n1, &n2, FusionWeight::new(0.0).unwrap());
        prop_assert_eq!(&at1.genuine, &n1.genuine);
        prop_assert_eq!(&at1.impostor, &n1.impostor);
        prop_assert_eq!(&at0.genuine, &n2.genuine);
        prop_assert_eq!(metrics::eer(&at1).unwrap(), metrics::eer(&set).unwrap());
    }

    #[test]
    fn closed_form_counts_match_enumeration(s in 1u64..20, n in 2u64..10) {
        let gallery = uniform_gallery(s as usize, n as usize, &[Pose::Frontal, Pose::ThreeQuarter]);
        let same = protocols::gen_same_pose_pairs(&gallery, Pose::Frontal).unwrap();
        let counts = count_pairs(ProtocolParams::SamePose { subjects: s, images: n });
        prop_assert_eq!(same.counts(), (counts.genuine as usize, counts.impostor as usize));

        let cross = protocols::gen_cross_pose_pairs(&gallery, Pose::Frontal, Pose::ThreeQuarter).unwrap();
        let counts = count_pairs(ProtocolParams::CrossPose { subjects: s, images_a: n, images_b: n });
        prop_assert_eq!(cross.counts(), (counts.genuine as usize, counts.impostor as usize));
    }

    #[test]
    fn generated_pairs_are_distinct(s in 1usize..12, n in 2usize..6) {
        let gallery = uniform_gallery(s, n, &[Pose::Frontal, Pose::ThreeQuarter]);
        for list in [
            protocols::gen_same_pose_pairs(&gallery, Pose::ThreeQuarter).unwrap(),
            protocols::gen_cross_pose_pairs(&gallery, Pose::Frontal, Pose::ThreeQuarter).unwrap(),
        ] {
            let mut seen = HashSet::new();
            for (label, a, b) in pair_keys(&list) {
                prop_assert!(a != b);
                prop_assert_eq!(label == PairLabel::Genuine, a.0 == b.0);
                let key = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(seen.insert(key));
            }
        }
    }

    #[test]
    fn genuine_pairs_ignore_subject_order(s in 2usize..10, n in 2usize..6, perm in any::<prop::sample::Index>()) {
        let gallery = uniform_gallery(s, n, &[Pose::Frontal]);
        let mut shuffled = gallery.clone();
        shuffled.rotate_left(perm.index(s));
        let genuine = |g: &[SubjectGallery]| -> BTreeSet<_> {
            pair_keys(&protocols::gen_same_pose_pairs(g, Pose::Frontal).unwrap())
                .into_iter()
                .filter(|k| k.0 == PairLabel::Genuine)
                .collect()
        };
        prop_assert_eq!(genuine(&gallery), genuine(&shuffled));
    }

    #[test]
    fn impostor_pairs_follow_image_order(s in 2usize..8, n in 2usize..6) {
        let gallery = uniform_gallery(s, n, &[Pose::Frontal]);
        let mut reordered = gallery.clone();
        for g in &mut reordered {
            let mut fresh = SubjectGallery::new(g.subject_id.clone());
            for img in g.images(Pose::Frontal).iter().rev() {
                fresh.add_image(img.clone(), Pose::Frontal).unwrap();
            }
            *g = fresh;
        }
        let impostors = |g: &[SubjectGallery]| -> BTreeSet<_> {
            pair_keys(&protocols::gen_same_pose_pairs(g, Pose::Frontal).unwrap())
                .into_iter()
                .filter(|k| k.0 == PairLabel::Impostor)
                .collect()
        };
        let (a, b) = (impostors(&gallery), impostors(&reordered));
        prop_assert_eq!(a.len(), b.len());
        prop_assert_ne!(a, b);
    }

    #[test]
    fn rank_metrics_ignore_monotone_maps(set in score_set(), k in 0.5f64..4.0, c in -3.0f64..3.0) {
        let (e, a) = (metrics::eer(&set).unwrap(), metrics::auc(&set).unwrap());
        for f in [
            Box::new(move |v: f64| k * v + c) as Box<dyn Fn(f64) -> f64>,
            Box::new(|v: f64| v * v * v),
            Box::new(|v: f64| (v / 4.0).exp()),
        ] {
            let m = set.map(&f);
            prop_assert!(close(metrics::eer(&m).unwrap(), e, 1e-9));
            prop_assert!(close(metrics::auc(&m).unwrap(), a, 1e-9));
        }
    }

    #[test]
    fn negation_with_flipped_polarity_is_neutral(set in score_set()) {
        let mut neg = set.map(|v| -v);
        neg.polarity = set.polarity.flipped();
        prop_assert!(close(metrics::eer(&neg).unwrap(), metrics::eer(&set).unwrap(), 1e-9));
        prop_assert!(close(metrics::auc(&neg).unwrap(), metrics::auc(&set).unwrap(), 1e-9));
    }

    #[test]
    fn swapping_classes_with_flipped_polarity_is_neutral(set in score_set()) {
        let swapped = ScoreSet::new(set.impostor.clone(), set.genuine.clone(), set.polarity.flipped());
        prop_assert!(close(metrics::eer(&swapped).unwrap(), metrics::eer(&set).unwrap(), 1e-9));
        prop_assert!(close(metrics::auc(&swapped).unwrap(), metrics::auc(&set).unwrap(), 1e-9));
    }

    #[test]
    fn perfect_auc_means_separated(set in score_set()) {
        let orient = |v: f64| if set.polarity == Polarity::Similarity { v } else { -v };
        let min_g = set.genuine.iter().map(|v| orient(*v)).fold(f64::INFINITY, f64::min);
        let max_i = set.impostor.iter().map(|v| orient(*v)).fold(f64::NEG_INFINITY, f64::max);
        let auc = metrics::auc(&set).unwrap();
        prop_assert_eq!(auc == 100.0, min_g > max_i);
        if min_g > max_i {
            prop_assert_eq!(metrics::eer(&set).unwrap(), 0.0);
        }
    }

    #[test]
    fn det_curve_is_monotone(set in score_set()) {
        let curve = metrics::det_curve(&set).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        prop_assert_eq!((first.far, first.frr), (0.0, 1.0));
        prop_assert_eq!((last.far, last.frr), (1.0, 0.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].far >= w[0].far && w[1].frr <= w[0].frr);
        }
    }

    #[test]
    fn eer_matches_brute_force(set in score_set()) {
        prop_assert!(close(metrics::eer(&set).unwrap(), metrics::brute_force_eer(&set).unwrap(), 1e-9));
    }

    #[test]
    fn auc_matches_pair_counting(set in score_set()) {
        let orient = |v: f64| if set.polarity == Polarity::Similarity { v } else { -v };
        let mut wins = 0.0;
        for g in &set.genuine {
            for i in &set.impostor {
                let (g, i) = (orient(*g), orient(*i));
                wins += if g > i { 1.0 } else if g == i { 0.5 } else { 0.0 };
            }
        }
        let expected = 100.0 * wins / (set.genuine.len() * set.impostor.len()) as f64;
        prop_assert!(close(metrics::auc(&set).unwrap(), expected, 1e-9));
    }

    #[test]
    fn pooling_keeps_every_score(sets in prop::collection::vec(score_set(), 1..4)) {
        let sets: Vec<ScoreSet> = sets.into_iter().map(|mut s| { s.polarity = Polarity::Similarity; s }).collect();
        let pooled = ScoreSet::pooled(&sets).unwrap();
        let total: usize = sets.iter().map(ScoreSet::len).sum();
        prop_assert_eq!(pooled.len(), total);
        let mut by_value: BTreeMap<u64, i32> = BTreeMap::new();
        for s in &sets {
            for v in &s.genuine { *by_value.entry(v.to_bits()).or_default() += 1; }
        }
        for v in &pooled.genuine { *by_value.entry(v.to_bits()).or_default() -= 1; }
        prop_assert!(by_value.values().all(|c| *c == 0));
    }
}
