//! Dry run: header-level checks for every case, no voxel data decoded.

use segeval_core::nifti::read_header;
use segeval_core::volume::check_geometry;

use crate::manifest::{Manifest, ManifestError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub patient_id: String,
    pub kind: &'static str,
    pub message: String,
}

/// Checks both headers of every case and their geometry agreement.
pub fn validate_manifest(manifest: &Manifest) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for case in &manifest.cases {
        let diag = |kind, message| Diagnostic {
            patient_id: case.patient_id.clone(),
            kind,
            message,
        };
        let gt = read_header(&case.gt_path).map_err(|e| diag(e.kind(), format!("ground truth: {e}")));
        let pred = read_header(&case.pred_path).map_err(|e| diag(e.kind(), format!("prediction: {e}")));
        match (gt, pred) {
            (Ok(g), Ok(p)) => {
                if let Err(e) = check_geometry(&g.geometry(), &p.geometry()) {
                    out.push(diag(e.kind(), e.to_string()));
                }
            }
            (g, p) => out.extend(g.err().into_iter().chain(p.err())),
        }
    }
    out
}

pub fn validate(manifest_path: &std::path::Path) -> Result<Vec<Diagnostic>, ManifestError> {
    Ok(validate_manifest(&Manifest::load(manifest_path)?))
}
