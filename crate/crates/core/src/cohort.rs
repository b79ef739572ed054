//! Per-case evaluation and cohort aggregation: threshold sweeps, fold and
//! pooled summaries, volume bins and the metric correlation matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{
    connected_components, filter_small, object_metrics, pair_instances, ComponentLabeling, Connectivity,
    DetectionStatus, ObjectMetricsRow, PairingMode, PatientDetection, DEFAULT_DETECTION_THRESHOLD,
    DEFAULT_MIN_COMPONENT_VOXELS,
};
use crate::stats::{mean_std, pearson, percentile_sorted, spearman};
use crate::surface::{distance_report, DistanceReport, HausdorffMode};
use crate::volume::{binarize, check_geometry, physical_volume_ml, BinaryMask, GridKind, TumorType, VoxelGrid};
use crate::voxel_metrics::{confusion_counts, AriVariant, ConfusionCounts, VoxelMetricSet};

pub const DEFAULT_BINS: usize = 10;

pub fn default_thresholds() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub thresholds: Vec<f64>,
    pub detection_threshold: f64,
    pub min_component_voxels: usize,
    pub connectivity: Connectivity,
    pub pairing: PairingMode,
    pub hausdorff: HausdorffMode,
    pub ari: AriVariant,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            detection_threshold: DEFAULT_DETECTION_THRESHOLD,
            min_component_voxels: DEFAULT_MIN_COMPONENT_VOXELS,
            connectivity: Connectivity::default(),
            pairing: PairingMode::default(),
            hausdorff: HausdorffMode::default(),
            ari: AriVariant::default(),
        }
    }
}

impl EvalSettings {
    /// Thresholds must lie in `]0, 1]`, strictly increasing.
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidGrid("empty threshold list".into()));
        }
        for (i, &t) in self.thresholds.iter().enumerate() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidThreshold(t));
            }
            if i > 0 && t <= self.thresholds[i - 1] {
                return Err(Error::InvalidThreshold(t));
            }
        }
        if !(0.0..1.0).contains(&self.detection_threshold) {
            return Err(Error::InvalidThreshold(self.detection_threshold));
        }
        Ok(())
    }
}

/// Ground truth with its size-filtered components, shared across a sweep.
pub struct CaseContext {
    gt: BinaryMask,
    gt_objects: ComponentLabeling,
}

impl CaseContext {
    pub fn new(gt: BinaryMask, settings: &EvalSettings) -> Result<Self> {
        if !gt.any() {
            return Err(Error::EmptyGroundTruth);
        }
        let gt_objects = filter_small(
            &connected_components(&gt, settings.connectivity),
            settings.min_component_voxels,
        );
        Ok(Self { gt, gt_objects })
    }

    pub fn gt(&self) -> &BinaryMask {
        &self.gt
    }
}

/// Every metric for one (ground truth, binary prediction) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEvaluation {
    pub counts: ConfusionCounts,
    pub voxel: VoxelMetricSet,
    pub distance: DistanceReport,
    pub object: ObjectMetricsRow,
    pub detection: PatientDetection,
    pub gt_volume_ml: f64,
    pub pred_volume_ml: f64,
}

pub fn evaluate_mask(ctx: &CaseContext, pred: &BinaryMask, settings: &EvalSettings) -> Result<MaskEvaluation> {
    let counts = confusion_counts(&ctx.gt, pred)?;
    let voxel = VoxelMetricSet::from_counts(&counts, settings.ari);
    let distance = distance_report(&ctx.gt, pred, settings.hausdorff)?;
    let pred_objects = filter_small(
        &connected_components(pred, settings.connectivity),
        settings.min_component_voxels,
    );
    let pairing = pair_instances(&ctx.gt_objects, &pred_objects, settings.pairing)?;
    let object = object_metrics(&pairing, &ctx.gt_objects, &pred_objects)?;
    let detection = PatientDetection::from_dice(
        voxel.dice.unwrap_or(0.0),
        counts.pred_volume() == 0,
        settings.detection_threshold,
    );
    Ok(MaskEvaluation {
        counts,
        voxel,
        distance,
        object,
        detection,
        gt_volume_ml: physical_volume_ml(&ctx.gt),
        pred_volume_ml: physical_volume_ml(pred),
    })
}

/// Evaluates `pred` binarized at each threshold.
pub fn threshold_sweep(
    ctx: &CaseContext,
    pred: &VoxelGrid,
    settings: &EvalSettings,
) -> Result<Vec<(f64, MaskEvaluation)>> {
    check_geometry(&ctx.gt.geometry(), pred.geometry())?;
    settings
        .thresholds
        .iter()
        .map(|&t| Ok((t, evaluate_mask(ctx, &binarize(pred, t)?, settings)?)))
        .collect()
}

/// Identity columns of a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseInfo {
    pub patient_id: String,
    pub fold_id: u32,
    pub tumor_type: TumorType,
}

/// One (patient, threshold) record. `threshold` is `None` for a binary
/// prediction, which yields a single threshold-free row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub info: CaseInfo,
    pub threshold: Option<f64>,
    pub eval: MaskEvaluation,
}

/// Metric names a [`PatientRow`] can be queried by, besides the voxel set.
pub const EXTRA_METRICS: [&str; 10] = [
    "hd95",
    "mhd",
    "assd",
    "oassd",
    "object_recall",
    "object_precision",
    "object_f1",
    "fppp",
    "gt_volume_ml",
    "pred_volume_ml",
];

/// Default correlation-matrix metrics.
pub fn default_correlation_metrics() -> Vec<String> {
    VoxelMetricSet::NAMES
        .iter()
        .chain(&["hd95", "mhd", "assd", "oassd"])
        .map(|s| s.to_string())
        .collect()
}

pub fn is_known_metric(name: &str) -> bool {
    VoxelMetricSet::NAMES.contains(&name) || EXTRA_METRICS.contains(&name)
}

impl PatientRow {
    /// `None` for an unknown name, `Some(None)` for an undefined value.
    pub fn metric(&self, name: &str) -> Option<Option<f64>> {
        if let Some(v) = self.eval.voxel.get(name) {
            return Some(v);
        }
        let e = &self.eval;
        Some(match name {
            "hd95" => e.distance.hd95,
            "mhd" => e.distance.mhd,
            "assd" => e.distance.assd,
            "oassd" => e.object.oassd,
            "object_recall" => e.object.recall,
            "object_precision" => e.object.precision,
            "object_f1" => Some(e.object.f1),
            "fppp" => Some(e.object.fppp as f64),
            "gt_volume_ml" => Some(e.gt_volume_ml),
            "pred_volume_ml" => Some(e.pred_volume_ml),
            _ => return None,
        })
    }
}

/// Evaluates one case: a sweep for a probability map, one row otherwise.
pub fn evaluate_case(
    info: &CaseInfo,
    gt: &VoxelGrid,
    pred: &VoxelGrid,
    settings: &EvalSettings,
) -> Result<Vec<PatientRow>> {
    let ctx = CaseContext::new(BinaryMask::from_grid(gt)?, settings)?;
    check_geometry(gt.geometry(), pred.geometry())?;
    let row = |threshold, eval| PatientRow {
        info: info.clone(),
        threshold,
        eval,
    };
    match pred.kind() {
        GridKind::Binary => {
            let mask = BinaryMask::from_grid(pred)?;
            Ok(vec![row(None, evaluate_mask(&ctx, &mask, settings)?)])
        }
        GridKind::Probability => Ok(threshold_sweep(&ctx, pred, settings)?
            .into_iter()
            .map(|(t, e)| row(Some(t), e))
            .collect()),
        GridKind::RawIntensity => Err(Error::NotProbability),
    }
}

/// Rows frozen in (patient_id, threshold) order, threshold-free first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortTable {
    rows: Vec<PatientRow>,
}

fn threshold_key(t: Option<f64>) -> f64 {
    t.unwrap_or(f64::NEG_INFINITY)
}

impl CohortTable {
    pub fn new(mut rows: Vec<PatientRow>) -> Result<Self> {
        rows.sort_by(|a, b| {
            a.info
                .patient_id
                .cmp(&b.info.patient_id)
                .then(threshold_key(a.threshold).total_cmp(&threshold_key(b.threshold)))
        });
        for w in rows.windows(2) {
            if w[0].info.patient_id == w[1].info.patient_id && w[0].threshold == w[1].threshold {
                return Err(Error::InvalidGrid(format!(
                    "duplicate row for patient {} at threshold {:?}",
                    w[0].info.patient_id, w[0].threshold
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[PatientRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct thresholds, ascending; `[None]` when every row is
    /// threshold-free.
    pub fn operating_points(&self) -> Vec<Option<f64>> {
        let mut ts: Vec<f64> = self.rows.iter().filter_map(|r| r.threshold).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        if ts.is_empty() {
            vec![None]
        } else {
            ts.into_iter().map(Some).collect()
        }
    }

    /// Rows at one operating point; threshold-free rows belong to every
    /// operating point.
    pub fn rows_at(&self, point: Option<f64>) -> Vec<&PatientRow> {
        self.rows
            .iter()
            .filter(|r| r.threshold.is_none() || r.threshold == point)
            .collect()
    }
}

/// Operating point with the highest mean Dice over `rows`; ties go to the
/// lower threshold.
pub fn best_operating_point<'a>(
    rows: impl IntoIterator<Item = &'a PatientRow> + Clone,
    points: &[Option<f64>],
) -> Option<f64> {
    let mut best: Option<(Option<f64>, f64)> = None;
    for &p in points {
        let dice: Vec<f64> = rows
            .clone()
            .into_iter()
            .filter(|r| r.threshold.is_none() || r.threshold == p)
            .filter_map(|r| r.eval.voxel.dice)
            .collect();
        let Some((mean, _)) = mean_std(&dice) else { continue };
        if best.is_none_or(|(_, m)| mean > m) {
            best = Some((p, mean));
        }
    }
    best.and_then(|(p, _)| p)
}

/// Sample statistics of one metric. Undefined and non-finite values are
/// left out and counted in `excluded`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
    pub excluded: usize,
}

impl Estimate {
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut finite = Vec::new();
        let mut excluded = 0;
        for v in values {
            match v {
                Some(x) if x.is_finite() => finite.push(x),
                _ => excluded += 1,
            }
        }
        let ms = mean_std(&finite);
        Estimate {
            mean: ms.map(|m| m.0),
            std: ms.map(|m| m.1),
            n: finite.len(),
            excluded,
        }
    }

    /// A single fold-level scalar observed over `n` patients.
    pub fn scalar(value: Option<f64>, n: usize) -> Self {
        match value {
            Some(v) if v.is_finite() && n > 0 => Estimate {
                mean: Some(v),
                std: Some(0.0),
                n,
                excluded: 0,
            },
            _ => Estimate {
                mean: None,
                std: None,
                n: 0,
                excluded: n,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldStat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub folds: Vec<FoldStat>,
}

/// Combines per-fold (mean, std, n) into one estimate whose variance holds
/// both the within-fold and between-fold terms.
pub fn pooled_estimates(folds: &[FoldStat]) -> Result<PooledEstimate> {
    if folds.is_empty() {
        return Err(Error::NoFolds);
    }
    for f in folds {
        if f.n == 0 || f.std < 0.0 || !f.mean.is_finite() || !f.std.is_finite() {
            return Err(Error::InvalidFold(format!("mean {} std {} n {}", f.mean, f.std, f.n)));
        }
    }
    let n: usize = folds.iter().map(|f| f.n).sum();
    if folds.len() == 1 {
        let f = folds[0];
        return Ok(PooledEstimate {
            mean: f.mean,
            std: f.std,
            n,
            folds: folds.to_vec(),
        });
    }
    let nf = n as f64;
    let mean = if folds.iter().all(|f| f.n == folds[0].n) {
        folds.iter().map(|f| f.mean).sum::<f64>() / folds.len() as f64
    } else {
        folds.iter().map(|f| f.n as f64 * f.mean).sum::<f64>() / nf
    };
    let std = if n < 2 {
        0.0
    } else {
        let within: f64 = folds.iter().map(|f| (f.n as f64 - 1.0) * f.std * f.std).sum();
        let between: f64 = folds.iter().map(|f| f.n as f64 * (f.mean - mean).powi(2)).sum();
        ((within + between) / (nf - 1.0)).sqrt()
    };
    Ok(PooledEstimate {
        mean,
        std,
        n,
        folds: folds.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: f64,
}

/// Patient-wise rates. A nonempty sub-threshold prediction counts once as a
/// miss and once as a false alarm.
pub fn detection_rates(detections: &[PatientDetection]) -> DetectionRates {
    let tp = detections.iter().filter(|d| d.is_detected()).count();
    let fp = detections
        .iter()
        .filter(|d| d.status == DetectionStatus::FalseNegativeWithFp)
        .count();
    let recall = (!detections.is_empty()).then(|| tp as f64 / detections.len() as f64);
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    DetectionRates {
        recall,
        precision,
        f1: crate::instance::f1_score(recall.unwrap_or(0.0), precision.unwrap_or(0.0)),
    }
}

/// Object-wise rates micro-averaged over patients.
pub fn object_rates(rows: &[&ObjectMetricsRow]) -> DetectionRates {
    let matched: usize = rows.iter().map(|r| r.matched).sum();
    let gt: usize = rows.iter().map(|r| r.gt_objects).sum();
    let pred: usize = rows.iter().map(|r| r.pred_objects).sum();
    let recall = (gt > 0).then(|| matched as f64 / gt as f64);
    let precision = (pred > 0).then(|| matched as f64 / pred as f64);
    DetectionRates {
        recall,
        precision,
        f1: crate::instance::f1_score(recall.unwrap_or(0.0), precision.unwrap_or(0.0)),
    }
}

/// Dice statistics over detected patients only.
pub fn dice_tp(rows: &[&PatientRow]) -> Estimate {
    Estimate::from_values(
        rows.iter()
            .filter(|r| r.eval.detection.is_detected())
            .map(|r| r.eval.voxel.dice),
    )
}

/// Pearson coefficient between ground-truth and predicted volumes.
pub fn volume_correlation(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: pairs.len(),
        });
    }
    let (gt, pred): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    pearson(&gt, &pred).ok_or(Error::DegenerateVariance)
}

/// Named estimates for one group of patients (a fold, or pooled folds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_patients: usize,
    pub columns: Vec<(String, Estimate)>,
}

/// Leading summary columns, before the selected per-patient metrics.
pub const SUMMARY_HEAD: [&str; 10] = [
    "dice",
    "dice_tp",
    "patient_f1",
    "patient_recall",
    "patient_precision",
    "object_f1",
    "object_recall",
    "object_precision",
    "fppp",
    "vc",
];

/// Column names of [`summarize_group`] for a metric selection.
pub fn summary_columns(metrics: &[String]) -> Vec<String> {
    let mut out: Vec<String> = SUMMARY_HEAD.iter().map(|s| s.to_string()).collect();
    for m in metrics {
        if !out.contains(m) {
            out.push(m.clone());
        }
    }
    out
}

pub fn summarize_group(rows: &[&PatientRow], metrics: &[String]) -> Summary {
    let n = rows.len();
    let detections: Vec<PatientDetection> = rows.iter().map(|r| r.eval.detection).collect();
    let patient = detection_rates(&detections);
    let objects: Vec<&ObjectMetricsRow> = rows.iter().map(|r| &r.eval.object).collect();
    let object = object_rates(&objects);
    let vols: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.eval.gt_volume_ml, r.eval.pred_volume_ml))
        .collect();
    let column = |name: &str| -> Estimate {
        match name {
            "dice_tp" => dice_tp(rows),
            "patient_f1" => Estimate::scalar(Some(patient.f1), n),
            "patient_recall" => Estimate::scalar(patient.recall, n),
            "patient_precision" => Estimate::scalar(patient.precision, n),
            "object_f1" => Estimate::scalar(Some(object.f1), n),
            "object_recall" => Estimate::scalar(object.recall, n),
            "object_precision" => Estimate::scalar(object.precision, n),
            "vc" => Estimate::scalar(volume_correlation(&vols).ok(), n),
            m => Estimate::from_values(rows.iter().map(|r| r.metric(m).flatten())),
        }
    };
    Summary {
        n_patients: n,
        columns: summary_columns(metrics)
            .into_iter()
            .map(|c| (c.clone(), column(&c)))
            .collect(),
    }
}

/// Pools fold summaries column by column. Folds where a column is
/// undefined are skipped for that column.
pub fn pool_summaries(folds: &[Summary]) -> Result<Summary> {
    let first = folds.first().ok_or(Error::NoFolds)?;
    let mut columns = Vec::with_capacity(first.columns.len());
    for (i, (name, _)) in first.columns.iter().enumerate() {
        let ests: Vec<&Estimate> = folds.iter().map(|f| &f.columns[i].1).collect();
        let stats: Vec<FoldStat> = ests
            .iter()
            .filter_map(|e| match (e.mean, e.std) {
                (Some(mean), Some(std)) if e.n > 0 => Some(FoldStat { mean, std, n: e.n }),
                _ => None,
            })
            .collect();
        let excluded = ests.iter().map(|e| e.excluded).sum();
        let est = if stats.is_empty() {
            Estimate {
                mean: None,
                std: None,
                n: 0,
                excluded,
            }
        } else {
            let p = pooled_estimates(&stats)?;
            Estimate {
                mean: Some(p.mean),
                std: Some(p.std),
                n: p.n,
                excluded,
            }
        };
        columns.push((name.clone(), est));
    }
    Ok(Summary {
        n_patients: folds.iter().map(|f| f.n_patients).sum(),
        columns,
    })
}

/// Splits rows by fold, ascending fold id.
pub fn by_fold<'a>(rows: &[&'a PatientRow]) -> Vec<(u32, Vec<&'a PatientRow>)> {
    let mut ids: Vec<u32> = rows.iter().map(|r| r.info.fold_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|f| (f, rows.iter().copied().filter(|r| r.info.fold_id == f).collect()))
        .collect()
}

/// Fold summaries followed by their pooled summary.
pub fn foldwise(rows: &[&PatientRow], metrics: &[String]) -> Result<(Vec<(u32, Summary)>, Summary)> {
    let folds: Vec<(u32, Summary)> = by_fold(rows)
        .into_iter()
        .map(|(f, rs)| (f, summarize_group(&rs, metrics)))
        .collect();
    let summaries: Vec<Summary> = folds.iter().map(|(_, s)| s.clone()).collect();
    let pooled = pool_summaries(&summaries)?;
    Ok((folds, pooled))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binning {
    #[default]
    EqualCount,
    EqualWidth,
}

/// Input to volume binning: one patient's gt volume and Dice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSample {
    pub patient_id: String,
    pub gt_volume_ml: f64,
    pub dice: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeBin {
    pub lower_ml: f64,
    pub upper_ml: f64,
    pub members: Vec<String>,
    pub dice: Option<FiveNumber>,
    /// Members whose Dice lies beyond 1.5 IQR from the quartiles.
    pub outliers: Vec<(String, f64)>,
}

fn box_stats(samples: &[&VolumeSample]) -> (Option<FiveNumber>, Vec<(String, f64)>) {
    let mut dice: Vec<f64> = samples.iter().map(|s| s.dice).collect();
    dice.sort_by(f64::total_cmp);
    if dice.is_empty() {
        return (None, Vec::new());
    }
    let q = |p| percentile_sorted(&dice, p).unwrap();
    let five = FiveNumber {
        min: dice[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: dice[dice.len() - 1],
    };
    let iqr = five.q3 - five.q1;
    let (lo, hi) = (five.q1 - 1.5 * iqr, five.q3 + 1.5 * iqr);
    let outliers = samples
        .iter()
        .filter(|s| s.dice < lo || s.dice > hi)
        .map(|s| (s.patient_id.clone(), s.dice))
        .collect();
    (Some(five), outliers)
}

/// Dice box statistics per gt-volume bin. Equal-count bins take the
/// remainder in the leftmost bins; volume ties are ordered by patient id.
pub fn volume_binned_summary(samples: &[VolumeSample], n_bins: usize, binning: Binning) -> Result<Vec<VolumeBin>> {
    if n_bins == 0 || samples.len() < n_bins {
        return Err(Error::TooFewSamples {
            needed: n_bins.max(1),
            got: samples.len(),
        });
    }
    let mut sorted: Vec<&VolumeSample> = samples.iter().collect();
    sorted.sort_by(|a, b| {
        a.gt_volume_ml
            .total_cmp(&b.gt_volume_ml)
            .then(a.patient_id.cmp(&b.patient_id))
    });

    let groups: Vec<(f64, f64, Vec<&VolumeSample>)> = match binning {
        Binning::EqualCount => {
            let (base, rem) = (sorted.len() / n_bins, sorted.len() % n_bins);
            let mut start = 0;
            (0..n_bins)
                .map(|b| {
                    let size = base + usize::from(b < rem);
                    let members = sorted[start..start + size].to_vec();
                    start += size;
                    (members[0].gt_volume_ml, members[size - 1].gt_volume_ml, members)
                })
                .collect()
        }
        Binning::EqualWidth => {
            let lo = sorted[0].gt_volume_ml;
            let hi = sorted[sorted.len() - 1].gt_volume_ml;
            let width = (hi - lo) / n_bins as f64;
            let mut groups: Vec<(f64, f64, Vec<&VolumeSample>)> = (0..n_bins)
                .map(|b| {
                    (
                        lo + b as f64 * width,
                        if b + 1 == n_bins {
                            hi
                        } else {
                            lo + (b + 1) as f64 * width
                        },
                        Vec::new(),
                    )
                })
                .collect();
            for s in &sorted {
                let b = if width > 0.0 {
                    (((s.gt_volume_ml - lo) / width) as usize).min(n_bins - 1)
                } else {
                    0
                };
                groups[b].2.push(s);
            }
            groups
        }
    };

    Ok(groups
        .into_iter()
        .map(|(lower_ml, upper_ml, members)| {
            let (dice, outliers) = box_stats(&members);
            VolumeBin {
                lower_ml,
                upper_ml,
                members: members.iter().map(|s| s.patient_id.clone()).collect(),
                dice,
                outliers,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

/// Minimum pairwise-complete sample count for a defined cell.
pub const MIN_CORRELATION_SAMPLES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

/// Pairwise-complete correlation between metric columns: each cell uses the
/// rows where both metrics are finite.
pub fn metrics_correlation(columns: &[(String, Vec<Option<f64>>)], method: CorrelationMethod) -> CorrelationMatrix {
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    let mut counts = vec![vec![0usize; k]; k];
    for i in 0..k {
        for j in i..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = columns[i]
                .1
                .iter()
                .zip(&columns[j].1)
                .filter_map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Some((*a, *b)),
                    _ => None,
                })
                .unzip();
            let r = if xs.len() < MIN_CORRELATION_SAMPLES {
                None
            } else if i == j {
                pearson(&xs, &ys).map(|_| 1.0)
            } else {
                match method {
                    CorrelationMethod::Pearson => pearson(&xs, &ys),
                    CorrelationMethod::Spearman => spearman(&xs, &ys),
                }
            };
            values[i][j] = r;
            values[j][i] = r;
            counts[i][j] = xs.len();
            counts[j][i] = xs.len();
        }
    }
    CorrelationMatrix {
        names: columns.iter().map(|c| c.0.clone()).collect(),
        values,
        counts,
    }
}

/// Metric columns of `rows`, for [`metrics_correlation`].
pub fn metric_columns(rows: &[&PatientRow], metrics: &[String]) -> Vec<(String, Vec<Option<f64>>)> {
    metrics
        .iter()
        .map(|m| (m.clone(), rows.iter().map(|r| r.metric(m).flatten()).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use proptest::prelude::*;

    fn fold(mean: f64, std: f64, n: usize) -> FoldStat {
        FoldStat { mean, std, n }
    }

    #[test]
    fn pooled_worked_examples() {
        let p = pooled_estimates(&[fold(0.8, 0.1, 10), fold(0.8, 0.1, 10)]).unwrap();
        assert_eq!(p.mean, 0.8);
        assert!((p.std - 0.1 * (18.0f64 / 19.0).sqrt()).abs() < 1e-12);
        assert_eq!(p.n, 20);

        let p = pooled_estimates(&[fold(0.0, 0.0, 5), fold(1.0, 0.0, 5)]).unwrap();
        assert_eq!(p.mean, 0.5);
        assert!((p.std * p.std - 10.0 * 0.25 / 9.0).abs() < 1e-12);

        let single = fold(0.731, 0.1234, 17);
        let p = pooled_estimates(&[single]).unwrap();
        assert_eq!((p.mean, p.std, p.n), (0.731, 0.1234, 17));
        assert_eq!(p.folds, vec![single]);
    }

    #[test]
    fn pooled_rejects_bad_input() {
        assert!(matches!(pooled_estimates(&[]), Err(Error::NoFolds)));
        assert!(matches!(
            pooled_estimates(&[fold(0.5, 0.1, 0)]),
            Err(Error::InvalidFold(_))
        ));
        assert!(matches!(
            pooled_estimates(&[fold(0.5, -0.1, 3)]),
            Err(Error::InvalidFold(_))
        ));
    }

    #[test]
    fn pooled_unequal_sizes_weight_by_n() {
        let p = pooled_estimates(&[fold(1.0, 0.0, 3), fold(0.0, 0.0, 1)]).unwrap();
        assert_eq!(p.mean, 0.75);
        assert!((p.std * p.std - (3.0 * 0.0625 + 0.5625) / 3.0).abs() < 1e-15);
    }

    fn det(status: DetectionStatus) -> PatientDetection {
        PatientDetection {
            status,
            patient_dice: 0.0,
        }
    }

    #[test]
    fn detection_rate_accounting() {
        let all = vec![det(DetectionStatus::TruePositive); 10];
        let r = detection_rates(&all);
        assert_eq!((r.recall, r.precision, r.f1), (Some(1.0), Some(1.0), 1.0));

        let mut v = vec![det(DetectionStatus::TruePositive); 9];
        v.push(det(DetectionStatus::FalseNegativeEmpty));
        let r = detection_rates(&v);
        assert_eq!((r.recall, r.precision), (Some(0.9), Some(1.0)));

        v[9] = det(DetectionStatus::FalseNegativeWithFp);
        let r = detection_rates(&v);
        assert_eq!((r.recall, r.precision), (Some(0.9), Some(0.9)));

        let r = detection_rates(&[det(DetectionStatus::FalseNegativeEmpty)]);
        assert_eq!((r.recall, r.precision, r.f1), (Some(0.0), None, 0.0));
    }

    #[test]
    fn volume_correlation_cases() {
        let gt = [1.0, 2.5, 4.0, 7.0];
        let same: Vec<_> = gt.iter().map(|&g| (g, g)).collect();
        assert_eq!(volume_correlation(&same).unwrap(), 1.0);
        let doubled: Vec<_> = gt.iter().map(|&g| (g, 2.0 * g)).collect();
        assert_eq!(volume_correlation(&doubled).unwrap(), 1.0);
        let anti: Vec<_> = gt.iter().map(|&g| (g, 10.0 - g)).collect();
        assert!(volume_correlation(&anti).unwrap() < 0.0);
        assert!(matches!(
            volume_correlation(&[(1.0, 2.0), (1.0, 3.0)]),
            Err(Error::DegenerateVariance)
        ));
        assert!(matches!(
            volume_correlation(&[(1.0, 2.0)]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    fn samples(vols: &[f64]) -> Vec<VolumeSample> {
        vols.iter()
            .enumerate()
            .map(|(i, &v)| VolumeSample {
                patient_id: format!("p{i:03}"),
                gt_volume_ml: v,
                dice: 0.5 + 0.01 * i as f64,
            })
            .collect()
    }

    #[test]
    fn equal_count_bins() {
        let s = samples(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        let bins = volume_binned_summary(&s, 10, Binning::EqualCount).unwrap();
        assert!(bins.iter().all(|b| b.members.len() == 2));

        let s = samples(&(0..21).map(|i| i as f64).collect::<Vec<_>>());
        let bins = volume_binned_summary(&s, 10, Binning::EqualCount).unwrap();
        let sizes: Vec<_> = bins.iter().map(|b| b.members.len()).collect();
        assert_eq!(sizes, [3, 2, 2, 2, 2, 2, 2, 2, 2, 2]);
        for w in bins.windows(2) {
            assert!(w[0].upper_ml <= w[1].lower_ml);
        }

        let s = samples(&[5.0; 7]);
        let bins = volume_binned_summary(&s, 3, Binning::EqualCount).unwrap();
        assert_eq!(bins[0].members, ["p000", "p001", "p002"]);
        assert_eq!(bins[2].members, ["p005", "p006"]);

        assert!(matches!(
            volume_binned_summary(&samples(&[1.0, 2.0]), 3, Binning::EqualCount),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn equal_width_bins_and_outliers() {
        let mut s = samples(&[0.0, 1.0, 2.0, 3.0, 10.0]);
        let bins = volume_binned_summary(&s, 2, Binning::EqualWidth).unwrap();
        assert_eq!(bins[0].members.len(), 4);
        assert_eq!(bins[1].members, ["p004"]);
        assert_eq!((bins[0].lower_ml, bins[0].upper_ml, bins[1].upper_ml), (0.0, 5.0, 10.0));

        for (i, d) in [0.9, 0.91, 0.92, 0.93, 0.1].iter().enumerate() {
            s[i].dice = *d;
            s[i].gt_volume_ml = 1.0;
        }
        let bins = volume_binned_summary(&s, 1, Binning::EqualCount).unwrap();
        let f = bins[0].dice.unwrap();
        assert!(f.min <= f.q1 && f.q1 <= f.median && f.median <= f.q3 && f.q3 <= f.max);
        assert_eq!(bins[0].outliers, vec![("p004".to_string(), 0.1)]);
    }

    #[test]
    fn correlation_matrix_cells() {
        let dice = vec![Some(0.9), Some(0.7), Some(0.8), Some(0.4), None];
        let inv: Vec<_> = dice.iter().map(|d| d.map(|v| 1.0 - v)).collect();
        let flat = vec![Some(1.0); 5];
        let cols = vec![
            ("dice".to_string(), dice),
            ("inv".to_string(), inv),
            ("flat".to_string(), flat),
        ];
        let m = metrics_correlation(&cols, CorrelationMethod::Pearson);
        assert_eq!(m.values[0][0], Some(1.0));
        assert_eq!(m.values[0][1], Some(-1.0));
        assert_eq!(m.values[1][0], Some(-1.0));
        assert_eq!(m.counts[0][1], 4);
        assert_eq!(m.values[2][2], None);
        assert_eq!(m.values[0][2], None);
        assert_eq!(m.counts[2][2], 5);
    }

    fn cube_mask(g: Geometry, lo: usize, hi: usize) -> BinaryMask {
        BinaryMask::from_fn(g, |i, j, k| [i, j, k].iter().all(|&c| (lo..hi).contains(&c)))
    }

    #[test]
    fn sweep_rows_per_threshold() {
        let g = Geometry::new([12, 12, 12], [1.0; 3]).unwrap();
        let gt = cube_mask(g, 2, 8);
        let settings = EvalSettings {
            min_component_voxels: 1,
            ..Default::default()
        };
        let info = CaseInfo {
            patient_id: "a".into(),
            fold_id: 0,
            tumor_type: TumorType::Other,
        };

        let ones = VoxelGrid::new(g, vec![1.0; g.len()], GridKind::Probability).unwrap();
        let ctx = CaseContext::new(gt.clone(), &settings).unwrap();
        let rows = threshold_sweep(&ctx, &ones, &settings).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.windows(2).all(|w| w[0].1 == w[1].1));

        // gt indicator scaled by 0.6: detected up to 0.6, empty above
        let scaled: Vec<f64> = gt.data().iter().map(|&b| if b { 0.6 } else { 0.0 }).collect();
        let map = VoxelGrid::new(g, scaled, GridKind::Probability).unwrap();
        let rows = evaluate_case(&info, &gt.to_grid(), &map, &settings).unwrap();
        assert_eq!(rows.len(), 10);
        for r in &rows {
            let t = r.threshold.unwrap();
            if t <= 0.6 {
                assert_eq!(r.eval.detection.status, DetectionStatus::TruePositive, "t={t}");
                assert_eq!(r.eval.voxel.dice, Some(1.0));
            } else {
                assert_eq!(r.eval.detection.status, DetectionStatus::FalseNegativeEmpty, "t={t}");
            }
        }

        let binary = evaluate_case(&info, &gt.to_grid(), &gt.to_grid(), &settings).unwrap();
        assert_eq!(binary.len(), 1);
        assert_eq!(binary[0].threshold, None);
        assert_eq!(binary[0].eval.voxel.dice, Some(1.0));
        assert_eq!(binary[0].eval.distance.hd95, Some(0.0));
        assert_eq!(binary[0].eval.object.f1, 1.0);
    }

    #[test]
    fn evaluation_errors() {
        let g = Geometry::new([4, 4, 4], [1.0; 3]).unwrap();
        let info = CaseInfo {
            patient_id: "a".into(),
            fold_id: 0,
            tumor_type: TumorType::Other,
        };
        let empty = BinaryMask::empty(g).to_grid();
        let s = EvalSettings::default();
        assert!(matches!(
            evaluate_case(&info, &empty, &empty, &s),
            Err(Error::EmptyGroundTruth)
        ));
        let gt = cube_mask(g, 0, 2).to_grid();
        let other = Geometry::new([4, 4, 5], [1.0; 3]).unwrap();
        let pred = BinaryMask::empty(other).to_grid();
        assert!(matches!(
            evaluate_case(&info, &gt, &pred, &s),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn settings_validation() {
        assert!(EvalSettings::default().validate().is_ok());
        let bad = |t: Vec<f64>| {
            EvalSettings {
                thresholds: t,
                ..Default::default()
            }
            .validate()
            .is_err()
        };
        assert!(bad(vec![0.0, 0.5]));
        assert!(bad(vec![0.5, 0.5]));
        assert!(bad(vec![0.6, 0.5]));
        assert!(bad(vec![1.1]));
        assert!(bad(vec![]));
    }

    fn row(id: &str, fold: u32, t: Option<f64>, dice: f64) -> PatientRow {
        let c = ConfusionCounts::new(0, 0, 0, 0);
        let mut voxel = VoxelMetricSet::from_counts(&c, AriVariant::default());
        voxel.dice = Some(dice);
        PatientRow {
            info: CaseInfo {
                patient_id: id.into(),
                fold_id: fold,
                tumor_type: TumorType::Other,
            },
            threshold: t,
            eval: MaskEvaluation {
                counts: c,
                voxel,
                distance: DistanceReport::default(),
                object: ObjectMetricsRow {
                    recall: Some(1.0),
                    precision: Some(1.0),
                    f1: 1.0,
                    fppp: 0,
                    oassd: None,
                    matched: 1,
                    gt_objects: 1,
                    pred_objects: 1,
                },
                detection: PatientDetection::from_dice(dice, false, 0.001),
                gt_volume_ml: 1.0,
                pred_volume_ml: 1.0,
            },
        }
    }

    #[test]
    fn table_order_and_operating_points() {
        let t = CohortTable::new(vec![
            row("b", 0, Some(0.5), 0.7),
            row("a", 0, Some(0.5), 0.6),
            row("a", 0, Some(0.1), 0.9),
            row("c", 0, None, 0.8),
            row("b", 0, Some(0.1), 0.5),
        ])
        .unwrap();
        let order: Vec<_> = t
            .rows()
            .iter()
            .map(|r| (r.info.patient_id.as_str(), r.threshold))
            .collect();
        assert_eq!(
            order,
            [
                ("a", Some(0.1)),
                ("a", Some(0.5)),
                ("b", Some(0.1)),
                ("b", Some(0.5)),
                ("c", None)
            ]
        );
        assert_eq!(t.operating_points(), vec![Some(0.1), Some(0.5)]);
        assert_eq!(t.rows_at(Some(0.5)).len(), 3);
        // means: 0.1 -> (0.9+0.5+0.8)/3, 0.5 -> (0.6+0.7+0.8)/3
        assert_eq!(best_operating_point(t.rows(), &t.operating_points()), Some(0.1));
        assert!(CohortTable::new(vec![row("a", 0, None, 0.1), row("a", 0, None, 0.2)]).is_err());
    }

    #[test]
    fn best_point_ties_to_lower_threshold() {
        let rows = [row("a", 0, Some(0.2), 0.5), row("a", 0, Some(0.4), 0.5)];
        assert_eq!(best_operating_point(rows.iter(), &[Some(0.2), Some(0.4)]), Some(0.2));
    }

    #[test]
    fn dice_tp_filters_misses() {
        let rows = [row("a", 0, None, 0.8), row("b", 0, None, 0.0)];
        let refs: Vec<&PatientRow> = rows.iter().collect();
        let all = Estimate::from_values(refs.iter().map(|r| r.eval.voxel.dice));
        assert!((all.mean.unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(dice_tp(&refs).mean, Some(0.8));
        assert_eq!(dice_tp(&refs[1..]).mean, None);
    }

    #[test]
    fn foldwise_shape_and_pooling() {
        let rows = [
            row("a", 0, None, 0.8),
            row("b", 0, None, 0.6),
            row("c", 1, None, 0.9),
            row("d", 1, None, 0.5),
        ];
        let refs: Vec<&PatientRow> = rows.iter().collect();
        let (folds, pooled) = foldwise(&refs, &["dice".to_string()]).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(pooled.n_patients, 4);
        let dice = &pooled.columns[0].1;
        assert_eq!(pooled.columns[0].0, "dice");
        // equal folds: unweighted mean of fold means
        let m0 = folds[0].1.columns[0].1.mean.unwrap();
        let m1 = folds[1].1.columns[0].1.mean.unwrap();
        assert_eq!(dice.mean, Some((m0 + m1) / 2.0));
        assert_eq!(dice.n, 4);
    }

    proptest! {
        #[test]
        fn equal_folds_pool_to_unweighted_mean(means in prop::collection::vec(0.0f64..1.0, 1..12), n in 1usize..40) {
            let folds: Vec<FoldStat> = means.iter().map(|&m| fold(m, 0.1, n)).collect();
            let p = pooled_estimates(&folds).unwrap();
            let expected = if means.len() == 1 { means[0] } else { means.iter().sum::<f64>() / means.len() as f64 };
            prop_assert_eq!(p.mean, expected);
            prop_assert_eq!(p.n, n * means.len());
        }

        #[test]
        fn binning_partitions(vols in prop::collection::vec(0.0f64..100.0, 1..80), k in 1usize..12) {
            prop_assume!(vols.len() >= k);
            let s = samples(&vols);
            let bins = volume_binned_summary(&s, k, Binning::EqualCount).unwrap();
            prop_assert_eq!(bins.iter().map(|b| b.members.len()).sum::<usize>(), vols.len());
            let sizes: Vec<usize> = bins.iter().map(|b| b.members.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for w in bins.windows(2) {
                prop_assert!(w[0].upper_ml <= w[1].lower_ml);
            }
            let eq = volume_binned_summary(&s, k, Binning::EqualWidth).unwrap();
            prop_assert_eq!(eq.iter().map(|b| b.members.len()).sum::<usize>(), vols.len());
        }

        #[test]
        fn correlation_symmetric_and_bounded(cols in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.9, -5.0f64..5.0), 12), 2..6)) {
            let named: Vec<(String, Vec<Option<f64>>)> = cols.into_iter().enumerate().map(|(i, c)| (format!("m{i}"), c)).collect();
            let m = metrics_correlation(&named, CorrelationMethod::Pearson);
            for i in 0..named.len() {
                for j in 0..named.len() {
                    prop_assert_eq!(m.values[i][j], m.values[j][i]);
                    if let Some(r) = m.values[i][j] {
                        prop_assert!((-1.0..=1.0).contains(&r));
                    }
                }
            }
        }
    }
}
