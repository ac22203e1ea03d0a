//! DET curves, EER, AUC, fold aggregation and the fusion-weight sweep.
//!
//! All rates are computed from exact counts, so any strictly increasing
//! transform of the scores leaves every reported number unchanged.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::sig9;
use crate::matcher::{combine, prepare_fusion, FusionWeight, MatchError, Normalization, Polarity, ScoreSet};

/// Largest `|genuine| + |impostor|` accepted by [`brute_force_eer`].
pub const BRUTE_FORCE_LIMIT: usize = 20_000;

/// Sweep EERs closer than this (in percent) count as tied.
pub const SWEEP_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0} score array is empty")]
    Empty(&'static str),
    #[error("score set contains a non-finite score")]
    NonFinite,
    #[error("brute-force oracle limited to {BRUTE_FORCE_LIMIT} scores, got {0}")]
    TooLarge(usize),
    #[error("no folds to aggregate")]
    NoFolds,
    #[error("grid step must lie in (0, 0.5], got {0}")]
    GridStep(f64),
    #[error(transparent)]
    Fusion(#[from] MatchError),
}

fn validate(scores: &ScoreSet) -> Result<(), MetricsError> {
    if scores.genuine.is_empty() {
        return Err(MetricsError::Empty("genuine"));
    }
    if scores.impostor.is_empty() {
        return Err(MetricsError::Empty("impostor"));
    }
    if scores.genuine.iter().chain(&scores.impostor).any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

/// One operating point. A comparison is accepted when its score is at least
/// `threshold` (similarity) or at most `threshold` (distance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Operating points from strictest to most permissive: FAR rises, FRR falls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

/// Scores mapped so that larger always means "more alike", sorted ascending.
fn oriented_sorted(values: &[f64], polarity: Polarity) -> Vec<f64> {
    let mut v: Vec<f64> = match polarity {
        Polarity::Similarity => values.to_vec(),
        Polarity::Distance => values.iter().map(|s| -s).collect(),
    };
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn det_curve(scores: &ScoreSet) -> Result<DetCurve, MetricsError> {
    validate(scores)?;
    let genuine = oriented_sorted(&scores.genuine, scores.polarity);
    let impostor = oriented_sorted(&scores.impostor, scores.polarity);
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);

    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_unstable_by(|a, b| b.total_cmp(a));
    thresholds.dedup_by(|a, b| a == b);

    let report = |t: f64| match scores.polarity {
        Polarity::Similarity => t,
        Polarity::Distance => -t,
    };

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(DetPoint { threshold: report(f64::INFINITY), far: 0.0, frr: 1.0 });
    // Walking thresholds downward: `g_below` genuine scores are < t,
    // impostor scores at indices >= `i_from` are >= t.
    let mut g_below = genuine.len();
    let mut i_from = impostor.len();
    for &t in &thresholds {
        while g_below > 0 && genuine[g_below - 1] >= t {
            g_below -= 1;
        }
        while i_from > 0 && impostor[i_from - 1] >= t {
            i_from -= 1;
        }
        points.push(DetPoint {
            threshold: report(t),
            far: (impostor.len() - i_from) as f64 / ni,
            frr: g_below as f64 / ng,
        });
    }
    points.push(DetPoint { threshold: report(f64::NEG_INFINITY), far: 1.0, frr: 0.0 });
    Ok(DetCurve { points })
}

impl DetCurve {
    /// FAR = FRR crossing, interpolated linearly between the bracketing
    /// operating points. Fraction in [0, 1].
    pub fn eer_fraction(&self) -> f64 {
        let pts = &self.points;
        let k = pts
            .iter()
            .position(|p| p.far - p.frr >= 0.0)
            .expect("last point has FAR 1, FRR 0");
        let cur = pts[k];
        let d1 = cur.far - cur.frr;
        if d1 == 0.0 || k == 0 {
            return cur.far;
        }
        let prev = pts[k - 1];
        let d0 = prev.far - prev.frr;
        let lambda = -d0 / (d1 - d0);
        prev.far + lambda * (cur.far - prev.far)
    }

    /// Area under true-accept rate vs FAR by the trapezoid rule. Fraction.
    pub fn auc_fraction(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].far - w[0].far) * ((1.0 - w[0].frr) + (1.0 - w[1].frr)) * 0.5)
            .sum()
    }
}

/// Equal error rate in percent.
pub fn eer(scores: &ScoreSet) -> Result<f64, MetricsError> {
    Ok(100.0 * det_curve(scores)?.eer_fraction())
}

/// Area under the ROC curve in percent; ties count one half.
pub fn auc(scores: &ScoreSet) -> Result<f64, MetricsError> {
    Ok(100.0 * det_curve(scores)?.auc_fraction())
}

/// Independent EER: every candidate threshold is evaluated by counting all
/// scores directly. Quadratic; for cross-checking [`eer`] only.
pub fn brute_force_eer(scores: &ScoreSet) -> Result<f64, MetricsError> {
    validate(scores)?;
    let total = scores.len();
    if total > BRUTE_FORCE_LIMIT {
        return Err(MetricsError::TooLarge(total));
    }
    let accepts = |s: f64, t: f64| match scores.polarity {
        Polarity::Similarity => s >= t,
        Polarity::Distance => s <= t,
    };
    // Candidate thresholds ordered from strictest to most permissive.
    let mut candidates: Vec<f64> = scores.genuine.iter().chain(&scores.impostor).copied().collect();
    match scores.polarity {
        Polarity::Similarity => {
            candidates.push(f64::INFINITY);
            candidates.push(f64::NEG_INFINITY);
            candidates.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        }
        Polarity::Distance => {
            candidates.push(f64::NEG_INFINITY);
            candidates.push(f64::INFINITY);
            candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        }
    }
    candidates.dedup();

    let ng = scores.genuine.len() as f64;
    let ni = scores.impostor.len() as f64;
    let mut prev: Option<(f64, f64)> = None;
    for (idx, &t) in candidates.iter().enumerate() {
        let strictest = idx == 0;
        let last = idx + 1 == candidates.len();
        let (far, frr) = if strictest {
            (0.0, 1.0)
        } else if last {
            (1.0, 0.0)
        } else {
            let fa = scores.impostor.iter().filter(|&&s| accepts(s, t)).count() as f64;
            let fr = scores.genuine.iter().filter(|&&s| !accepts(s, t)).count() as f64;
            (fa / ni, fr / ng)
        };
        let diff = far - frr;
        if diff >= 0.0 {
            let value = match prev {
                Some((pfar, pfrr)) if diff != 0.0 => {
                    let pdiff = pfar - pfrr;
                    pfar + (-pdiff / (diff - pdiff)) * (far - pfar)
                }
                _ => far,
            };
            return Ok(100.0 * value);
        }
        prev = Some((far, frr));
    }
    unreachable!("the most permissive candidate has FAR 1 and FRR 0")
}

/// Headline numbers for one score set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub eer_pct: f64,
    pub auc_pct: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub polarity: Polarity,
}

pub fn evaluate(scores: &ScoreSet) -> Result<MetricsReport, MetricsError> {
    let curve = det_curve(scores)?;
    Ok(MetricsReport {
        eer_pct: 100.0 * curve.eer_fraction(),
        auc_pct: 100.0 * curve.auc_fraction(),
        n_genuine: scores.genuine.len(),
        n_impostor: scores.impostor.len(),
        polarity: scores.polarity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_id: u32,
    pub eer: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub eer_avg: f64,
    pub eer_std: Option<f64>,
    pub auc_avg: f64,
    pub auc_std: Option<f64>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, Option<f64>) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let std = (n >= 2.0).then(|| (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

/// Mean and sample (n − 1) standard deviation across folds; the deviation
/// is absent for a single fold.
pub fn aggregate_folds(folds: &[FoldMetrics]) -> Result<AggregateMetrics, MetricsError> {
    if folds.is_empty() {
        return Err(MetricsError::NoFolds);
    }
    let (eer_avg, eer_std) = mean_std(folds.iter().map(|f| f.eer));
    let (auc_avg, auc_std) = mean_std(folds.iter().map(|f| f.auc));
    Ok(AggregateMetrics { eer_avg, eer_std, auc_avg, auc_std })
}

/// Mean of per-set EERs, the alternative to pooling the scores first.
pub fn mean_eer(sets: &[ScoreSet]) -> Result<f64, MetricsError> {
    if sets.is_empty() {
        return Err(MetricsError::NoFolds);
    }
    let mut total = 0.0;
    for s in sets {
        total += eer(s)?;
    }
    Ok(total / sets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub eer_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best_a: f64,
}

/// Weights `0, step, 2·step, …, 1`, snapped to a 1e-12 grid so that e.g.
/// 3 × 0.1 prints as 0.3.
pub fn sweep_grid(step: f64) -> Result<Vec<f64>, MetricsError> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(MetricsError::GridStep(step));
    }
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let a = ((f64::from(k) * step) * 1e12).round() / 1e12;
        if a >= 1.0 - 1e-12 {
            break;
        }
        grid.push(a);
        k += 1;
    }
    grid.push(1.0);
    Ok(grid)
}

/// EER of the fused system at each grid weight.
///
/// The best weight minimises EER; ties (within [`SWEEP_TIE_TOLERANCE`]) go
/// to the weight closest to 0.5, then to the smaller weight.
pub fn fusion_sweep(s1: &ScoreSet, s2: &ScoreSet, grid_step: f64, normalization: Normalization) -> Result<SweepResult, MetricsError> {
    let grid = sweep_grid(grid_step)?;
    let (n1, n2) = prepare_fusion(s1, s2, normalization)?;
    let rows = grid
        .into_iter()
        .map(|a| {
            let fused = combine(&n1, &n2, FusionWeight::new(a)?);
            Ok(SweepRow { a, eer_pct: eer(&fused)? })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;

    let min = rows.iter().map(|r| r.eer_pct).fold(f64::INFINITY, f64::min);
    let best_a = rows
        .iter()
        .filter(|r| r.eer_pct <= min + SWEEP_TIE_TOLERANCE)
        .map(|r| r.a)
        .min_by(|x, y| {
            let (dx, dy) = ((x - 0.5).abs(), (y - 0.5).abs());
            if (dx - dy).abs() <= 1e-9 {
                x.total_cmp(y)
            } else {
                dx.total_cmp(&dy)
            }
        })
        .expect("grid is never empty");
    Ok(SweepResult { rows, best_a })
}

/// `threshold,far,frr` rows with nine significant digits.
pub fn write_det_csv(curve: &DetCurve) -> String {
    let mut out = String::from("threshold,far,frr\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", sig9(p.threshold), sig9(p.far), sig9(p.frr)));
    }
    out
}

/// `a,eer_pct` rows with nine significant digits.
pub fn write_sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("a,eer_pct\n");
    for r in &sweep.rows {
        out.push_str(&format!("{},{}\n", sig9(r.a), sig9(r.eer_pct)));
    }
    out
}
