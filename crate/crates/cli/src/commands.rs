use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use periscope_core::geometry::{self, classify_face, crop_file_name, CropStatus, CropTally, OcularCrop, PixelBuffer};
use periscope_core::ingest::{self, FaceAnnotation, ValueMode};
use periscope_core::matcher::{self, FusionWeight, Polarity, ScoreFile, ScoreSet};
use periscope_core::metrics::{self, FoldMetrics, MetricsReport};
use periscope_core::protocols::{self, PairCounts, Protocol, UfprMode};
use periscope_core::synth::{self, SynthParams};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::report::{read_input, to_json_line, write_output, RunReport};
use crate::{CliError, CliResult, Command, CropArgs, FuseArgs, MetricsArgs, PairsArgs, PolarityArgs, ProtocolArg, ScoreArgs, SynthArgs, UfprModeArg};

/// What a command hands back for the run report.
struct Outcome {
    counts: serde_json::Value,
    metrics: Option<serde_json::Value>,
    errors: Vec<String>,
}

impl Outcome {
    fn counts(counts: serde_json::Value) -> Self {
        Outcome { counts, metrics: None, errors: Vec::new() }
    }
}

type Inputs = BTreeMap<String, String>;

/// Runs one command; `Ok(false)` means it finished but hit per-item failures.
pub fn dispatch(command: &Command, mut config: RunConfig, argv: &[String], report: Option<&Path>) -> CliResult<bool> {
    let started = Instant::now();
    let mut inputs = Inputs::new();
    let outcome = match command {
        Command::Crop(args) => cmd_crop(args, &mut config, &mut inputs)?,
        Command::Pairs(args) => cmd_pairs(args, &mut inputs)?,
        Command::Score(args) => cmd_score(args, &mut config, &mut inputs)?,
        Command::Fuse(args) => cmd_fuse(args, &mut config, &mut inputs)?,
        Command::Metrics(args) => cmd_metrics(args, &mut config, &mut inputs)?,
        Command::Synth(args) => cmd_synth(args, &config)?,
    };
    let ok = outcome.errors.is_empty();
    for e in &outcome.errors {
        eprintln!("periscope: {e}");
    }
    if let Some(path) = report {
        let report = RunReport {
            command: argv,
            config: &config,
            inputs,
            counts: outcome.counts,
            metrics: outcome.metrics,
            errors: outcome.errors,
            wall_time_ms: started.elapsed().as_millis(),
        };
        write_output(path, &to_json_line(&report))?;
    }
    Ok(ok)
}

fn load_manifest(path: &Path, inputs: &mut Inputs) -> anyhow::Result<Vec<FaceAnnotation>> {
    let text = read_input(path, inputs)?;
    ingest::parse_face_manifest(&text).with_context(|| format!("{}", path.display()))
}

fn image_candidates(root: &Path, face: &FaceAnnotation) -> Vec<PathBuf> {
    let mut bases = vec![root.join(&face.subject_id).join(&face.image_id), root.join(&face.image_id)];
    if Path::new(&face.image_id).extension().is_none() {
        let with_ext: Vec<PathBuf> = bases
            .iter()
            .flat_map(|b| ["png", "jpg", "jpeg"].map(|ext| b.with_extension(ext)))
            .collect();
        bases.extend(with_ext);
    }
    bases
}

fn load_image(root: &Path, face: &FaceAnnotation) -> anyhow::Result<PixelBuffer> {
    let path = image_candidates(root, face)
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| anyhow!("{}/{}: image not found under {}", face.subject_id, face.image_id, root.display()))?;
    let img = image::open(&path).with_context(|| format!("cannot decode {}", path.display()))?;
    let (w, h) = (img.width(), img.height());
    let buffer = if img.color().has_color() {
        PixelBuffer::new(w, h, 3, img.to_rgb8().into_raw())
    } else {
        PixelBuffer::new(w, h, 1, img.to_luma8().into_raw())
    };
    buffer.ok_or_else(|| anyhow!("{}: unexpected pixel layout", path.display()))
}

fn save_crop(dir: &Path, crop: &OcularCrop) -> anyhow::Result<()> {
    let size = geometry::CROP_SIZE as u32;
    let path = dir.join(crop_file_name(crop));
    let result = match crop.channels() {
        1 => image::GrayImage::from_raw(size, size, crop.pixels().to_vec()).map(|i| i.save(&path)),
        3 => image::RgbImage::from_raw(size, size, crop.pixels().to_vec()).map(|i| i.save(&path)),
        n => return Err(anyhow!("cannot save a {n}-channel crop")),
    };
    result
        .ok_or_else(|| anyhow!("crop buffer has the wrong size"))?
        .with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_crop(args: &CropArgs, config: &mut RunConfig, inputs: &mut Inputs) -> CliResult<Outcome> {
    for (key, value) in [
        ("target_ied", args.target_ied),
        ("three_quarter_ied", args.three_quarter_ied),
        ("min_ied", args.min_ied),
        ("frontality_ratio", args.frontality_ratio),
    ] {
        if let Some(v) = value {
            config.set(key, &v.to_string()).map_err(CliError::Usage)?;
        }
    }
    if let Some(b) = args.border {
        config.border = b.into();
    }
    let crop_config = config.crop_config();
    crop_config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let faces = load_manifest(&args.manifest, inputs)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;

    let statuses: Vec<CropStatus> = faces
        .iter()
        .map(|f| classify_face(f, &crop_config))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let results: Vec<Option<Result<(), String>>> = faces
        .par_iter()
        .zip(&statuses)
        .map(|(face, status)| {
            (*status == CropStatus::Ok).then(|| {
                let run = || -> anyhow::Result<()> {
                    let image = load_image(&args.images, face)?;
                    let (left, right) = geometry::crop_face(&image, face, &crop_config)?;
                    save_crop(&args.out, &left)?;
                    save_crop(&args.out, &right)
                };
                run().map_err(|e| format!("{e:#}"))
            })
        })
        .collect();

    let mut tally = CropTally::default();
    let mut rows = Vec::with_capacity(faces.len());
    let mut errors = Vec::new();
    for ((face, status), result) in faces.iter().zip(statuses).zip(results) {
        let (status, emitted) = match result {
            Some(Err(e)) => {
                errors.push(e);
                (CropStatus::Error, 0)
            }
            Some(Ok(())) => (status, 2),
            None => (status, 0),
        };
        tally.record(status, emitted);
        rows.push((face, status));
    }
    debug_assert!(tally.is_consistent());
    write_output(&args.out.join("crop_manifest.csv"), &geometry::write_crop_manifest(rows))?;
    Ok(Outcome { counts: json!(tally), metrics: None, errors })
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn cmd_pairs(args: &PairsArgs, inputs: &mut Inputs) -> CliResult<Outcome> {
    let galleries = |inputs: &mut Inputs| -> CliResult<Vec<protocols::SubjectGallery>> {
        let path = args.manifest.as_ref().ok_or_else(|| usage("--manifest is required for this protocol"))?;
        let faces = load_manifest(path, inputs)?;
        Ok(protocols::build_galleries(&faces).map_err(anyhow::Error::from)?)
    };

    enum Plan {
        Gallery(Vec<protocols::SubjectGallery>, Protocol, Option<ingest::FoldSpec>),
        External(ingest::FoldSpec, ingest::PairList),
    }

    let plan = match args.protocol {
        ProtocolArg::SamePose => Plan::Gallery(galleries(inputs)?, Protocol::SamePose(args.pose), None),
        ProtocolArg::CrossPose => {
            if args.pose_a == args.pose_b {
                return Err(usage("--pose-a and --pose-b must differ; use --protocol same-pose"));
            }
            Plan::Gallery(galleries(inputs)?, Protocol::CrossPose(args.pose_a, args.pose_b), None)
        }
        ProtocolArg::Ufpr => {
            let folds_path = args.folds.as_ref().ok_or_else(|| usage("--folds is required for --protocol ufpr"))?;
            let fold_id = args.fold.ok_or_else(|| usage("--fold is required for --protocol ufpr"))?;
            let text = read_input(folds_path, inputs)?;
            let folds = ingest::parse_folds(&text).with_context(|| format!("{}", folds_path.display()))?;
            let fold = folds
                .into_iter()
                .find(|f| f.fold_id == fold_id)
                .ok_or_else(|| anyhow!("fold {fold_id} is not defined in {}", folds_path.display()))?;
            match args.mode {
                UfprModeArg::External => {
                    let path = args.official.as_ref().ok_or_else(|| usage("--official is required in external mode"))?;
                    let text = read_input(path, inputs)?;
                    let list = ingest::parse_pair_list(&text).with_context(|| format!("{}", path.display()))?;
                    Plan::External(fold, list)
                }
                UfprModeArg::PerEyeExhaustive => Plan::Gallery(galleries(inputs)?, Protocol::UfprPerEye, Some(fold)),
            }
        }
    };

    if args.counts_only {
        let counts = match &plan {
            Plan::Gallery(g, Protocol::UfprPerEye, Some(fold)) => {
                let members: Vec<_> = g.iter().filter(|s| fold.test_subject_ids.contains(&s.subject_id)).cloned().collect();
                if members.len() != fold.test_subject_ids.len() {
                    let missing = fold.test_subject_ids.iter().find(|id| !g.iter().any(|s| &s.subject_id == *id)).cloned().unwrap_or_default();
                    return Err(anyhow::Error::from(protocols::ProtocolError::UnknownFoldSubject { fold: fold.fold_id, subject: missing }).into());
                }
                protocols::count_gallery_pairs(&members, Protocol::UfprPerEye)
            }
            Plan::Gallery(g, protocol, _) => protocols::count_gallery_pairs(g, *protocol),
            Plan::External(fold, list) => protocols::gen_ufpr_fold_pairs(fold, &[], UfprMode::External(list)).map(|l| {
                let (genuine, impostor) = l.counts();
                PairCounts { genuine: genuine as u64, impostor: impostor as u64 }
            }),
        }
        .map_err(anyhow::Error::from)?;
        write_output(&args.out, &format!("{}\n", serde_json::to_string(&counts).expect("counts serialize")))?;
        return Ok(Outcome::counts(json!(counts)));
    }

    let list = match &plan {
        Plan::Gallery(g, Protocol::SamePose(pose), _) => protocols::gen_same_pose_pairs(g, *pose),
        Plan::Gallery(g, Protocol::CrossPose(a, b), _) => protocols::gen_cross_pose_pairs(g, *a, *b),
        Plan::Gallery(g, Protocol::UfprPerEye, fold) => {
            protocols::gen_ufpr_fold_pairs(fold.as_ref().expect("ufpr plan carries its fold"), g, UfprMode::PerEyeExhaustive)
        }
        Plan::External(fold, list) => protocols::gen_ufpr_fold_pairs(fold, &[], UfprMode::External(list)),
    }
    .map_err(anyhow::Error::from)?;
    write_output(&args.out, &ingest::write_pair_list(&list))?;
    let (genuine, impostor) = list.counts();
    Ok(Outcome::counts(json!({ "genuine": genuine, "impostor": impostor })))
}

fn cmd_score(args: &ScoreArgs, config: &mut RunConfig, inputs: &mut Inputs) -> CliResult<Outcome> {
    if let Some(m) = args.metric {
        config.metric = m;
    }
    if args.lenient {
        config.strict_embeddings = false;
    }
    let mode = if config.strict_embeddings { ValueMode::Strict } else { ValueMode::Lenient };
    let text = read_input(&args.embeddings, inputs)?;
    let loaded = ingest::read_embeddings(&text, mode).with_context(|| format!("{}", args.embeddings.display()))?;
    if loaded.clamped > 0 {
        eprintln!("periscope: clamped {} negative embedding value(s) to 0", loaded.clamped);
    }
    let text = read_input(&args.pairs, inputs)?;
    let pairs = ingest::parse_pair_list(&text).with_context(|| format!("{}", args.pairs.display()))?;
    let scores = matcher::score_pair_list(&loaded.set, &pairs, config.metric).map_err(anyhow::Error::from)?;
    write_output(&args.out, &matcher::write_score_file(&pairs, &scores))?;
    let (genuine, impostor) = pairs.counts();
    Ok(Outcome::counts(json!({
        "pairs": pairs.len(),
        "genuine": genuine,
        "impostor": impostor,
        "embeddings": loaded.set.len(),
        "clamped_values": loaded.clamped,
    })))
}

fn resolve_polarity(args: &PolarityArgs, config: &mut RunConfig) -> Polarity {
    if let Some(m) = args.metric {
        config.metric = m;
    }
    args.polarity.unwrap_or(config.metric.polarity())
}

fn load_scores(path: &Path, inputs: &mut Inputs) -> anyhow::Result<ScoreFile> {
    let text = read_input(path, inputs)?;
    matcher::parse_score_file(&text).with_context(|| format!("{}", path.display()))
}

#[derive(Serialize)]
struct SweepReport {
    normalize: String,
    grid_step: f64,
    polarity: Polarity,
    rows: Vec<metrics::SweepRow>,
    best_a: f64,
}

fn cmd_fuse(args: &FuseArgs, config: &mut RunConfig, inputs: &mut Inputs) -> CliResult<Outcome> {
    let polarity = resolve_polarity(&args.polarity, config);
    if let Some(n) = args.normalize {
        config.normalize = n;
    }
    let a = load_scores(&args.scores_a, inputs)?;
    let b = load_scores(&args.scores_b, inputs)?;
    if let Some(row) = a.first_mismatch(&b) {
        return Err(anyhow!(
            "{} and {} are not aligned: first mismatch at data row {row}",
            args.scores_a.display(),
            args.scores_b.display()
        )
        .into());
    }
    let (s1, s2) = (a.score_set(polarity), b.score_set(polarity));

    if args.sweep {
        let sweep = metrics::fusion_sweep(&s1, &s2, args.grid_step, config.normalize).map_err(|e| match e {
            metrics::MetricsError::GridStep(_) => usage(e.to_string()),
            other => CliError::Data(other.into()),
        })?;
        if let Some(path) = &args.sweep_csv {
            write_output(path, &metrics::write_sweep_csv(&sweep))?;
        }
        let report = SweepReport {
            normalize: config.normalize.to_string(),
            grid_step: args.grid_step,
            polarity,
            rows: sweep.rows,
            best_a: sweep.best_a,
        };
        write_output(&args.out, &to_json_line(&report))?;
        return Ok(Outcome {
            counts: json!({ "pairs": a.scores.len() }),
            metrics: Some(json!(report)),
            errors: Vec::new(),
        });
    }

    let weight = args.weight.expect("clap requires --weight without --sweep");
    let weight = FusionWeight::new(weight).map_err(|e| usage(e.to_string()))?;
    let fused = matcher::fuse_scores(&s1, &s2, weight, config.normalize).map_err(anyhow::Error::from)?;
    if let Some(path) = &args.scores_out {
        let per_pair = fused_in_pair_order(&a, &fused);
        write_output(path, &matcher::write_score_file(&a.pairs, &per_pair))?;
    }
    let curve = metrics::det_curve(&fused).map_err(anyhow::Error::from)?;
    if let Some(path) = &args.det {
        write_output(path, &metrics::write_det_csv(&curve))?;
    }
    let report = metrics::evaluate(&fused).map_err(anyhow::Error::from)?;
    write_output(&args.out, &to_json_line(&report))?;
    Ok(Outcome { counts: json!({ "pairs": a.scores.len() }), metrics: Some(json!(report)), errors: Vec::new() })
}

/// Re-interleaves a partitioned score set into the pair order of `file`.
fn fused_in_pair_order(file: &ScoreFile, fused: &ScoreSet) -> Vec<f64> {
    let (mut g, mut i) = (fused.genuine.iter(), fused.impostor.iter());
    file.pairs
        .entries()
        .iter()
        .map(|e| match e.label {
            ingest::PairLabel::Genuine => *g.next().expect("aligned"),
            ingest::PairLabel::Impostor => *i.next().expect("aligned"),
        })
        .collect()
}

#[derive(Serialize)]
struct FoldEntry {
    fold_id: u32,
    file: String,
    #[serde(flatten)]
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct PercentPair {
    eer_pct: f64,
    auc_pct: f64,
}

#[derive(Serialize)]
struct FoldReport {
    polarity: Polarity,
    folds: Vec<FoldEntry>,
    avg: PercentPair,
    std: Option<PercentPair>,
    /// All folds' scores evaluated as one set.
    pooled: MetricsReport,
    /// Mean of the per-fold EERs.
    mean_of_eers_pct: f64,
}

fn cmd_metrics(args: &MetricsArgs, config: &mut RunConfig, inputs: &mut Inputs) -> CliResult<Outcome> {
    let polarity = resolve_polarity(&args.polarity, config);
    let sets: Vec<ScoreSet> = args
        .scores
        .iter()
        .map(|p| load_scores(p, inputs).map(|f| f.score_set(polarity)))
        .collect::<anyhow::Result<_>>()?;
    let pooled = ScoreSet::pooled(&sets).map_err(anyhow::Error::from)?;
    if let Some(path) = &args.det {
        let curve = metrics::det_curve(&pooled).map_err(anyhow::Error::from)?;
        write_output(path, &metrics::write_det_csv(&curve))?;
    }

    let (text, value) = if sets.len() == 1 {
        let report = metrics::evaluate(&sets[0]).map_err(anyhow::Error::from)?;
        (to_json_line(&report), json!(report))
    } else {
        let mut folds = Vec::new();
        for (k, (set, path)) in sets.iter().zip(&args.scores).enumerate() {
            let metrics = metrics::evaluate(set).with_context(|| format!("{}", path.display()))?;
            folds.push(FoldEntry { fold_id: k as u32 + 1, file: path.display().to_string(), metrics });
        }
        let per_fold: Vec<FoldMetrics> = folds
            .iter()
            .map(|f| FoldMetrics { fold_id: f.fold_id, eer: f.metrics.eer_pct, auc: f.metrics.auc_pct })
            .collect();
        let agg = metrics::aggregate_folds(&per_fold).map_err(anyhow::Error::from)?;
        let report = FoldReport {
            polarity,
            avg: PercentPair { eer_pct: agg.eer_avg, auc_pct: agg.auc_avg },
            std: agg.eer_std.zip(agg.auc_std).map(|(eer_pct, auc_pct)| PercentPair { eer_pct, auc_pct }),
            pooled: metrics::evaluate(&pooled).map_err(anyhow::Error::from)?,
            mean_of_eers_pct: metrics::mean_eer(&sets).map_err(anyhow::Error::from)?,
            folds,
        };
        (to_json_line(&report), json!(report))
    };
    write_output(&args.out, &text)?;
    Ok(Outcome {
        counts: json!({ "files": sets.len(), "genuine": pooled.genuine.len(), "impostor": pooled.impostor.len() }),
        metrics: Some(value),
        errors: Vec::new(),
    })
}

fn cmd_synth(args: &SynthArgs, config: &RunConfig) -> CliResult<Outcome> {
    let params = SynthParams {
        n_subjects: args.subjects,
        n_images: args.images,
        dim: args.dim,
        separation: args.separation,
        noise: args.noise,
        seed: config.seed,
        noise_seed: args.noise_seed,
        poses: args.poses.clone(),
    };
    params.validate().map_err(CliError::Usage)?;
    let set = synth::gen_synthetic_embeddings(&params);
    let faces = synth::synthetic_manifest(&params);
    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_output(&args.out.join("embeddings.txt"), &ingest::write_embeddings(&set))?;
    write_output(&args.out.join("manifest.csv"), &ingest::write_face_manifest(&faces))?;
    Ok(Outcome::counts(json!({ "subjects": params.n_subjects, "faces": faces.len(), "embeddings": set.len() })))
}
