//! CSV report tables.
//!
//! Metrics print with 6 significant digits (C `%g`), counts in full,
//! undefined values as `NA` and infinities as `inf`.

use std::path::Path;

use segeval_core::cohort::{CorrelationMatrix, Estimate, PatientRow, Summary, VolumeBin};
use segeval_core::voxel_metrics::VoxelMetricSet;

pub const NA: &str = "NA";

/// `%g` with 6 significant digits.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return NA.to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_fraction(&format!("{v:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), fmt_g)
}

fn writer(path: &Path) -> csv::Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
}

pub const PATIENT_HEAD: [&str; 10] = [
    "patient_id",
    "fold",
    "tumor_type",
    "threshold",
    "tp",
    "tn",
    "fp",
    "fn",
    "gt_volume_ml",
    "pred_volume_ml",
];

pub const PATIENT_TAIL: [&str; 13] = [
    "hd95",
    "mhd",
    "assd",
    "detection_status",
    "patient_dice",
    "object_recall",
    "object_precision",
    "object_f1",
    "fppp",
    "oassd",
    "gt_objects",
    "pred_objects",
    "matched_objects",
];

pub fn write_patient_scores(path: &Path, rows: &[PatientRow]) -> csv::Result<()> {
    let mut w = writer(path)?;
    let header: Vec<&str> = PATIENT_HEAD
        .iter()
        .chain(VoxelMetricSet::NAMES.iter())
        .chain(PATIENT_TAIL.iter())
        .copied()
        .collect();
    w.write_record(&header)?;
    for r in rows {
        let e = &r.eval;
        let mut rec = vec![
            r.info.patient_id.clone(),
            r.info.fold_id.to_string(),
            r.info.tumor_type.to_string(),
            fmt_opt(r.threshold),
            e.counts.tp.to_string(),
            e.counts.tn.to_string(),
            e.counts.fp.to_string(),
            e.counts.fn_.to_string(),
            fmt_g(e.gt_volume_ml),
            fmt_g(e.pred_volume_ml),
        ];
        rec.extend(e.voxel.values().iter().map(|v| fmt_opt(*v)));
        rec.extend([
            fmt_opt(e.distance.hd95),
            fmt_opt(e.distance.mhd),
            fmt_opt(e.distance.assd),
            e.detection.status.as_str().to_string(),
            fmt_g(e.detection.patient_dice),
            fmt_opt(e.object.recall),
            fmt_opt(e.object.precision),
            fmt_g(e.object.f1),
            e.object.fppp.to_string(),
            fmt_opt(e.object.oassd),
            e.object.gt_objects.to_string(),
            e.object.pred_objects.to_string(),
            e.object.matched.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn estimate_header(columns: &[(String, Estimate)]) -> Vec<String> {
    columns
        .iter()
        .flat_map(|(n, _)| {
            [
                format!("{n}_mean"),
                format!("{n}_std"),
                format!("{n}_n"),
                format!("{n}_excluded"),
            ]
        })
        .collect()
}

fn estimate_cells(columns: &[(String, Estimate)]) -> Vec<String> {
    columns
        .iter()
        .flat_map(|(_, e)| [fmt_opt(e.mean), fmt_opt(e.std), e.n.to_string(), e.excluded.to_string()])
        .collect()
}

/// Per-fold rows followed by a `pooled` row.
pub fn write_foldwise(
    path: &Path,
    threshold: Option<f64>,
    folds: &[(u32, Summary)],
    pooled: &Summary,
) -> csv::Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["fold".to_string(), "threshold".into(), "n_samples".into()];
    header.extend(estimate_header(&pooled.columns));
    w.write_record(&header)?;
    let rows = folds
        .iter()
        .map(|(f, s)| (f.to_string(), s))
        .chain(std::iter::once(("pooled".to_string(), pooled)));
    for (label, s) in rows {
        let mut rec = vec![label, fmt_opt(threshold), s.n_patients.to_string()];
        rec.extend(estimate_cells(&s.columns));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One pooled cohort summary row.
pub struct CohortLine {
    pub group: String,
    pub threshold: Option<f64>,
    pub selected: bool,
    pub n_folds: usize,
    pub summary: Summary,
}

pub fn write_cohort_summary(path: &Path, lines: &[CohortLine]) -> csv::Result<()> {
    let mut w = writer(path)?;
    let mut header = vec![
        "group".to_string(),
        "threshold".into(),
        "selected".into(),
        "n_patients".into(),
        "n_folds".into(),
    ];
    if let Some(first) = lines.first() {
        header.extend(estimate_header(&first.summary.columns));
    }
    w.write_record(&header)?;
    for l in lines {
        let mut rec = vec![
            l.group.clone(),
            fmt_opt(l.threshold),
            u8::from(l.selected).to_string(),
            l.summary.n_patients.to_string(),
            l.n_folds.to_string(),
        ];
        rec.extend(estimate_cells(&l.summary.columns));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficients in `value_path`, pairwise-complete counts in `count_path`.
pub fn write_correlation(value_path: &Path, count_path: &Path, m: &CorrelationMatrix) -> csv::Result<()> {
    let header: Vec<&str> = std::iter::once("metric")
        .chain(m.names.iter().map(String::as_str))
        .collect();
    let mut w = writer(value_path)?;
    w.write_record(&header)?;
    for (name, row) in m.names.iter().zip(&m.values) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(|v| fmt_opt(*v))))?;
    }
    w.flush()?;
    let mut w = writer(count_path)?;
    w.write_record(&header)?;
    for (name, row) in m.names.iter().zip(&m.counts) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(usize::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_volume_bins(path: &Path, threshold: Option<f64>, bins: &[VolumeBin]) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "bin",
        "threshold",
        "lower_ml",
        "upper_ml",
        "count",
        "dice_min",
        "dice_q1",
        "dice_median",
        "dice_q3",
        "dice_max",
        "outliers",
    ])?;
    for (i, b) in bins.iter().enumerate() {
        let d = b.dice;
        let outliers: Vec<String> = b.outliers.iter().map(|(id, v)| format!("{id}:{}", fmt_g(*v))).collect();
        w.write_record([
            i.to_string(),
            fmt_opt(threshold),
            fmt_g(b.lower_ml),
            fmt_g(b.upper_ml),
            b.members.len().to_string(),
            fmt_opt(d.map(|f| f.min)),
            fmt_opt(d.map(|f| f.q1)),
            fmt_opt(d.map(|f| f.median)),
            fmt_opt(d.map(|f| f.q3)),
            fmt_opt(d.map(|f| f.max)),
            outliers.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A case that failed to evaluate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseFailure {
    pub patient_id: String,
    pub stage: &'static str,
    pub kind: &'static str,
    pub message: String,
}

pub fn write_errors(path: &Path, failures: &[CaseFailure]) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["patient_id", "stage", "kind", "message"])?;
    for f in failures {
        w.write_record([f.patient_id.as_str(), f.stage, f.kind, f.message.as_str()])?;
    }
    w.flush()?;
    Ok(())
}
