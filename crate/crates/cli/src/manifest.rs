//! Case manifest: CSV with columns `patient_id, fold, gt_path, pred_path,
//! tumor_type`. `fold` and `tumor_type` may be omitted or left empty.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use segeval_core::volume::{PatientCase, TumorType};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest row {row}: {source}")]
    Csv { row: usize, source: csv::Error },
    #[error("manifest has no cases")]
    EmptyManifest,
    #[error("manifest row {row}: empty patient_id")]
    EmptyPatientId { row: usize },
    #[error("duplicate patient_id `{0}`")]
    DuplicatePatient(String),
    #[error("manifest row {row}: {reason}")]
    InvalidField { row: usize, reason: String },
    #[error("fold ids must be all present or all absent")]
    MixedFolds,
    #[error("fold ids must form 0..k-1; missing fold {0}")]
    FoldGap(u32),
}

#[derive(Debug, serde::Deserialize)]
struct RawRow {
    patient_id: String,
    #[serde(default)]
    fold: Option<String>,
    gt_path: String,
    pred_path: String,
    #[serde(default)]
    tumor_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub cases: Vec<PatientCase>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses manifest text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut raw = Vec::new();
        for (i, rec) in reader.deserialize::<RawRow>().enumerate() {
            raw.push(rec.map_err(|source| ManifestError::Csv { row: i + 1, source })?);
        }
        if raw.is_empty() {
            return Err(ManifestError::EmptyManifest);
        }

        let folds: Vec<Option<u32>> = raw
            .iter()
            .enumerate()
            .map(|(i, r)| match r.fold.as_deref().filter(|f| !f.is_empty()) {
                None => Ok(None),
                Some(f) => f.parse::<u32>().map(Some).map_err(|_| ManifestError::InvalidField {
                    row: i + 1,
                    reason: format!("fold `{f}` is not a non-negative integer"),
                }),
            })
            .collect::<Result<_, _>>()?;
        let present = folds.iter().filter(|f| f.is_some()).count();
        if present != 0 && present != folds.len() {
            return Err(ManifestError::MixedFolds);
        }
        let ids: BTreeSet<u32> = folds.iter().flatten().copied().collect();
        if let Some(max) = ids.iter().next_back() {
            if let Some(gap) = (0..=*max).find(|f| !ids.contains(f)) {
                return Err(ManifestError::FoldGap(gap));
            }
        }

        let mut seen = BTreeSet::new();
        let mut cases = Vec::with_capacity(raw.len());
        for (i, (r, fold)) in raw.into_iter().zip(folds).enumerate() {
            if r.patient_id.is_empty() {
                return Err(ManifestError::EmptyPatientId { row: i + 1 });
            }
            if !seen.insert(r.patient_id.clone()) {
                return Err(ManifestError::DuplicatePatient(r.patient_id));
            }
            let tumor_type: TumorType = r
                .tumor_type
                .as_deref()
                .unwrap_or("")
                .parse()
                .map_err(|e| ManifestError::InvalidField { row: i + 1, reason: e })?;
            cases.push(PatientCase {
                patient_id: r.patient_id,
                gt_path: base.join(r.gt_path),
                pred_path: base.join(r.pred_path),
                fold_id: fold.unwrap_or(0),
                tumor_type,
            });
        }
        Ok(Manifest { cases })
    }
}
