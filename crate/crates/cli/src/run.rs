//! Batch evaluation: cases run in a bounded pool, aggregation is a
//! sequential pass over the sorted row set.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use segeval_core::cohort::{
    best_operating_point, evaluate_case, foldwise, metric_columns, metrics_correlation, volume_binned_summary,
    CaseInfo, CohortTable, PatientRow, VolumeSample,
};
use segeval_core::nifti::load_nifti;
use segeval_core::volume::{PatientCase, TumorType};

use crate::config::RunConfig;
use crate::manifest::{Manifest, ManifestError};
use crate::report::{self, CaseFailure, CohortLine};

pub const PATIENT_SCORES: &str = "patient_scores.csv";
pub const FOLDWISE_SUMMARY: &str = "foldwise_summary.csv";
pub const COHORT_SUMMARY: &str = "cohort_summary.csv";
pub const CORRELATION_MATRIX: &str = "correlation_matrix.csv";
pub const CORRELATION_COUNTS: &str = "correlation_counts.csv";
pub const VOLUME_BINS: &str = "volume_bins.csv";
pub const ERRORS: &str = "errors.csv";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir { path: PathBuf, source: std::io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: csv::Error },
    #[error("aggregation failed: {0}")]
    Aggregate(#[from] segeval_core::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub cases: usize,
    pub succeeded: usize,
    pub rows: usize,
    /// Operating point used for fold, correlation and volume tables.
    pub selected_threshold: Option<f64>,
    pub failures: Vec<CaseFailure>,
}

fn failure(case: &PatientCase, stage: &'static str, kind: &'static str, message: String) -> CaseFailure {
    CaseFailure {
        patient_id: case.patient_id.clone(),
        stage,
        kind,
        message,
    }
}

fn evaluate_one(case: &PatientCase, config: &RunConfig) -> Result<Vec<PatientRow>, CaseFailure> {
    let gt = load_nifti(&case.gt_path).map_err(|e| failure(case, "load_gt", e.kind(), e.to_string()))?;
    let pred = load_nifti(&case.pred_path).map_err(|e| failure(case, "load_pred", e.kind(), e.to_string()))?;
    let info = CaseInfo {
        patient_id: case.patient_id.clone(),
        fold_id: case.fold_id,
        tumor_type: case.tumor_type,
    };
    match catch_unwind(AssertUnwindSafe(|| evaluate_case(&info, &gt, &pred, &config.settings))) {
        Ok(Ok(rows)) => Ok(rows),
        Ok(Err(e)) => Err(failure(case, "evaluate", e.kind(), e.to_string())),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(failure(case, "evaluate", "Panic", message))
        }
    }
}

/// Evaluates every case with `config.workers` threads. Results keep
/// manifest order.
pub fn evaluate_cases(
    cases: &[PatientCase],
    config: &RunConfig,
) -> Result<Vec<Result<Vec<PatientRow>, CaseFailure>>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build()?;
    Ok(pool.install(|| cases.par_iter().map(|c| evaluate_one(c, config)).collect()))
}

fn write(path: PathBuf, f: impl FnOnce(&Path) -> csv::Result<()>) -> Result<(), RunError> {
    f(&path).map_err(|source| RunError::Write { path, source })
}

/// Runs the manifest named by `config` and writes every report into
/// `config.output_dir`. With no successful case only `errors.csv` is
/// written.
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let manifest = Manifest::load(&config.manifest)?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|source| RunError::OutputDir {
        path: out.clone(),
        source,
    })?;

    let results = evaluate_cases(&manifest.cases, config)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut succeeded = 0;
    for r in results {
        match r {
            Ok(rs) => {
                succeeded += 1;
                rows.extend(rs);
            }
            Err(f) => failures.push(f),
        }
    }
    failures.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    write(out.join(ERRORS), |p| report::write_errors(p, &failures))?;

    let mut outcome = RunOutcome {
        cases: manifest.cases.len(),
        succeeded,
        rows: rows.len(),
        selected_threshold: None,
        failures,
    };
    if succeeded == 0 {
        return Ok(outcome);
    }

    let table = CohortTable::new(rows)?;
    let points = table.operating_points();
    let best = best_operating_point(table.rows(), &points);
    outcome.selected_threshold = best;
    let at_best = table.rows_at(best);

    write(out.join(PATIENT_SCORES), |p| {
        report::write_patient_scores(p, table.rows())
    })?;

    let (folds, pooled) = foldwise(&at_best, &config.metrics)?;
    write(out.join(FOLDWISE_SUMMARY), |p| {
        report::write_foldwise(p, best, &folds, &pooled)
    })?;

    let mut groups: Vec<Option<TumorType>> = vec![None];
    let mut types: Vec<TumorType> = table.rows().iter().map(|r| r.info.tumor_type).collect();
    types.sort_by_key(|t| t.to_string());
    types.dedup();
    groups.extend(types.into_iter().map(Some));
    let mut lines = Vec::new();
    for group in groups {
        for &point in &points {
            let rows: Vec<&PatientRow> = table
                .rows_at(point)
                .into_iter()
                .filter(|r| group.is_none_or(|t| r.info.tumor_type == t))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let (folds, summary) = foldwise(&rows, &config.metrics)?;
            lines.push(CohortLine {
                group: group.map_or_else(|| "all".to_string(), |t| t.to_string()),
                threshold: point,
                selected: point == best,
                n_folds: folds.len(),
                summary,
            });
        }
    }
    write(out.join(COHORT_SUMMARY), |p| report::write_cohort_summary(p, &lines))?;

    let matrix = metrics_correlation(&metric_columns(&at_best, &config.metrics), config.correlation);
    write(out.join(CORRELATION_MATRIX), |p| {
        report::write_correlation(p, &out.join(CORRELATION_COUNTS), &matrix)
    })?;

    let samples: Vec<VolumeSample> = at_best
        .iter()
        .filter_map(|r| {
            r.eval.voxel.dice.map(|dice| VolumeSample {
                patient_id: r.info.patient_id.clone(),
                gt_volume_ml: r.eval.gt_volume_ml,
                dice,
            })
        })
        .collect();
    let bins = if samples.is_empty() {
        Vec::new()
    } else {
        volume_binned_summary(&samples, config.n_bins.min(samples.len()), config.binning)?
    };
    write(out.join(VOLUME_BINS), |p| report::write_volume_bins(p, best, &bins))?;

    Ok(outcome)
}
