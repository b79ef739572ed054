//! Browser bindings for three interactive operations. Each returns a JSON
//! string; failures come back as `{"error": "..."}`. Undefined metrics are
//! `null` and infinities the string `"inf"`.

use segeval_core::cohort::{evaluate_case, CaseInfo, EvalSettings};
use segeval_core::surface::{distance_report, symmetric_distances, HausdorffMode};
use segeval_core::synthetic::{sphere_case, sphere_mask, Sphere};
use segeval_core::volume::{physical_volume_ml, BinaryMask, Geometry, TumorType};
use segeval_core::voxel_metrics::{confusion_counts, AriVariant, ConfusionCounts, VoxelMetricSet};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const SPHERE_GRID: usize = 40;
const SWEEP_GRID: usize = 32;

fn num(v: Option<f64>) -> Value {
    match v {
        Some(x) if x.is_infinite() => Value::String(if x > 0.0 { "inf" } else { "-inf" }.into()),
        Some(x) => json!(x),
        None => Value::Null,
    }
}

fn error(e: impl std::fmt::Display) -> Value {
    json!({ "error": e.to_string() })
}

fn metric_list(m: &VoxelMetricSet) -> Value {
    VoxelMetricSet::NAMES
        .iter()
        .zip(m.values())
        .map(|(name, v)| json!({ "name": name, "value": num(v) }))
        .collect()
}

/// All voxel metrics of one confusion matrix.
pub fn metric_panel_value(tp: u64, fp: u64, fn_: u64, tn: u64) -> Value {
    let c = ConfusionCounts::new(tp, tn, fp, fn_);
    if c.x() == 0 {
        return error("all four counts are zero");
    }
    json!({
        "x": c.x(),
        "metrics": metric_list(&VoxelMetricSet::from_counts(&c, AriVariant::default())),
    })
}

/// Axial slice through `k`: 0 background, 1 truth only, 2 prediction only,
/// 3 both.
fn overlay(gt: &BinaryMask, pred: &BinaryMask, k: usize) -> Vec<u8> {
    let [h, w, _] = gt.geometry().dims;
    let mut out = Vec::with_capacity(h * w);
    for j in 0..w {
        for i in 0..h {
            out.push(u8::from(gt.get(i, j, k)) | (u8::from(pred.get(i, j, k)) << 1));
        }
    }
    out
}

/// Two spheres in a 40^3 grid: truth centred, prediction shifted along the
/// first axis by `offset_mm`. `z_spacing` sets the third-axis spacing.
pub fn sphere_pair_value(gt_radius: f64, pred_radius: f64, offset_mm: f64, z_spacing: f64) -> Value {
    if !(gt_radius > 0.0 && pred_radius >= 0.0 && offset_mm.is_finite()) {
        return error("radii must be positive and the offset finite");
    }
    let geometry = match Geometry::new([SPHERE_GRID; 3], [1.0, 1.0, z_spacing]) {
        Ok(g) => g,
        Err(e) => return error(e),
    };
    let centre = geometry.position([SPHERE_GRID / 2; 3]);
    let gt = sphere_mask(
        geometry,
        &[Sphere {
            center: centre,
            radius: gt_radius,
        }],
    );
    let shifted = [centre[0] + offset_mm, centre[1], centre[2]];
    let pred = if pred_radius > 0.0 {
        sphere_mask(
            geometry,
            &[Sphere {
                center: shifted,
                radius: pred_radius,
            }],
        )
    } else {
        BinaryMask::empty(geometry)
    };
    let counts = match confusion_counts(&gt, &pred) {
        Ok(c) => c,
        Err(e) => return error(e),
    };
    let metrics = VoxelMetricSet::from_counts(&counts, AriVariant::default());
    let distances = match distance_report(&gt, &pred, HausdorffMode::Pooled) {
        Ok(d) => d,
        Err(e) => return error(e),
    };
    let hausdorff = symmetric_distances(&gt, &pred).ok().map(|d| d.hausdorff());
    json!({
        "dims": geometry.dims,
        "spacing": geometry.spacing,
        "counts": { "tp": counts.tp, "tn": counts.tn, "fp": counts.fp, "fn": counts.fn_ },
        "gt_volume_ml": physical_volume_ml(&gt),
        "pred_volume_ml": physical_volume_ml(&pred),
        "metrics": metric_list(&metrics),
        "hd95": num(distances.hd95),
        "hausdorff": num(hausdorff),
        "assd": num(distances.assd),
        "mhd": num(distances.mhd),
        "slice": overlay(&gt, &pred, SPHERE_GRID / 2),
    })
}

/// Threshold sweep over one seeded synthetic case on a 32^3 grid.
pub fn threshold_sweep_value(seed: u64, case_index: u64) -> Value {
    let geometry = Geometry::new([SWEEP_GRID; 3], [1.0; 3]).expect("static geometry");
    let case = sphere_case(seed, case_index, geometry);
    let settings = EvalSettings::default();
    let info = CaseInfo {
        patient_id: format!("demo-{seed}-{case_index}"),
        fold_id: 0,
        tumor_type: TumorType::Other,
    };
    let rows = match evaluate_case(&info, &case.gt.to_grid(), &case.probability, &settings) {
        Ok(r) => r,
        Err(e) => return error(e),
    };
    let busiest = (0..SWEEP_GRID)
        .max_by_key(|&k| {
            (0..SWEEP_GRID * SWEEP_GRID)
                .filter(|p| case.gt.get(p % SWEEP_GRID, p / SWEEP_GRID, k))
                .count()
        })
        .unwrap_or(0);
    let mut probability = Vec::with_capacity(SWEEP_GRID * SWEEP_GRID);
    let mut truth = Vec::with_capacity(SWEEP_GRID * SWEEP_GRID);
    for j in 0..SWEEP_GRID {
        for i in 0..SWEEP_GRID {
            probability.push((case.probability.values()[geometry.index(i, j, busiest)] * 1000.0).round() / 1000.0);
            truth.push(u8::from(case.gt.get(i, j, busiest)));
        }
    }
    let sweep: Vec<Value> = rows
        .iter()
        .map(|r| {
            let e = &r.eval;
            json!({
                "threshold": num(r.threshold),
                "dice": num(e.voxel.dice),
                "pred_volume_ml": e.pred_volume_ml,
                "hd95": num(e.distance.hd95),
                "detection": e.detection.status.as_str(),
                "object_recall": num(e.object.recall),
                "object_precision": num(e.object.precision),
            })
        })
        .collect();
    json!({
        "gt_volume_ml": physical_volume_ml(&case.gt),
        "slice_index": busiest,
        "size": SWEEP_GRID,
        "probability": probability,
        "truth": truth,
        "sweep": sweep,
    })
}

#[wasm_bindgen]
pub fn metric_panel(tp: u32, fp: u32, fn_: u32, tn: u32) -> String {
    metric_panel_value(tp.into(), fp.into(), fn_.into(), tn.into()).to_string()
}

#[wasm_bindgen]
pub fn sphere_pair(gt_radius: f64, pred_radius: f64, offset_mm: f64, z_spacing: f64) -> String {
    sphere_pair_value(gt_radius, pred_radius, offset_mm, z_spacing).to_string()
}

#[wasm_bindgen]
pub fn threshold_sweep(seed: u32, case_index: u32) -> String {
    threshold_sweep_value(seed.into(), case_index.into()).to_string()
}
