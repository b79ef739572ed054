//! Connected components, lesion pairing and detection metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{border_points_where, SymmetricDistances};
use crate::volume::{check_geometry, BinaryMask, BoundingBox, Geometry};
use crate::voxel_metrics::{confusion_counts, overlap_metrics};

/// Components smaller than this are discarded before pairing.
pub const DEFAULT_MIN_COMPONENT_VOXELS: usize = 50;
/// Patient-level Dice a prediction must exceed to count as a detection.
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.001;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            18 => Some(Connectivity::Eighteen),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Largest number of nonzero offset components a neighbour may have.
    fn max_order(self) -> usize {
        match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        }
    }

    /// Neighbour offsets that precede a voxel in raster order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dk in -1isize..=1 {
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let order = [di, dj, dk].iter().filter(|&&v| v != 0).count();
                    let before = dk < 0 || (dk == 0 && (dj < 0 || (dj == 0 && di < 0)));
                    if order >= 1 && order <= self.max_order() && before {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub label: u32,
    pub voxels: usize,
    pub bbox: BoundingBox,
}

/// Dense labels `1..=K` (0 is background), numbered in raster order of each
/// component's first voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    geometry: Geometry,
    labels: Vec<u32>,
    components: Vec<Component>,
}

impl ComponentLabeling {
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, label: u32) -> &Component {
        &self.components[label as usize - 1]
    }

    /// Foreground mask of the surviving components.
    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::new(self.geometry, self.labels.iter().map(|&l| l != 0).collect()).unwrap()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let next = parent[x as usize];
        parent[x as usize] = parent[next as usize];
        x = next;
    }
    x
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let geometry = mask.geometry();
    let [h, w, d] = geometry.dims;
    let data = mask.data();
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![0u32; data.len()];
    // parent[0] is the background sentinel
    let mut parent: Vec<u32> = vec![0];

    for k in 0..d {
        for j in 0..w {
            for i in 0..h {
                let idx = i + h * (j + w * k);
                if !data[idx] {
                    continue;
                }
                let mut label = 0u32;
                for off in &offsets {
                    let (ni, nj, nk) = (i as isize + off[0], j as isize + off[1], k as isize + off[2]);
                    if ni < 0 || nj < 0 || nk < 0 || ni >= h as isize || nj >= w as isize {
                        continue;
                    }
                    let n = provisional[ni as usize + h * (nj as usize + w * nk as usize)];
                    if n == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = find(&mut parent, n);
                    } else {
                        let (a, b) = (find(&mut parent, label), find(&mut parent, n));
                        if a != b {
                            let (lo, hi) = (a.min(b), a.max(b));
                            parent[hi as usize] = lo;
                            label = lo;
                        }
                    }
                }
                if label == 0 {
                    label = parent.len() as u32;
                    parent.push(label);
                }
                provisional[idx] = label;
            }
        }
    }

    let mut dense = vec![0u32; parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for (idx, slot) in provisional.iter_mut().enumerate() {
        if *slot == 0 {
            continue;
        }
        let root = find(&mut parent, *slot) as usize;
        let ijk = geometry.coords(idx);
        if dense[root] == 0 {
            let label = components.len() as u32 + 1;
            dense[root] = label;
            components.push(Component {
                label,
                voxels: 0,
                bbox: BoundingBox::point(ijk),
            });
        }
        let label = dense[root];
        let c = &mut components[label as usize - 1];
        c.voxels += 1;
        c.bbox.include(ijk);
        *slot = label;
    }

    ComponentLabeling {
        geometry,
        labels: provisional,
        components,
    }
}

/// Drops components with fewer than `min_voxels` voxels and renumbers the
/// survivors densely, preserving their order.
pub fn filter_small(labeling: &ComponentLabeling, min_voxels: usize) -> ComponentLabeling {
    let mut remap = vec![0u32; labeling.components.len() + 1];
    let mut components = Vec::new();
    for c in &labeling.components {
        if c.voxels >= min_voxels {
            let label = components.len() as u32 + 1;
            remap[c.label as usize] = label;
            components.push(Component { label, ..*c });
        }
    }
    ComponentLabeling {
        geometry: labeling.geometry,
        labels: labeling.labels.iter().map(|&l| remap[l as usize]).collect(),
        components,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstancePair {
    pub gt_label: u32,
    pub pred_label: u32,
    pub dice: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstancePairing {
    pub pairs: Vec<InstancePair>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairingMode {
    /// Repeatedly take the highest-Dice unmatched pair.
    #[default]
    Greedy,
    /// Maximum total Dice assignment.
    Optimal,
}

/// Voxel overlap of every (gt, pred) component pair that intersects.
fn overlaps(gt: &ComponentLabeling, pred: &ComponentLabeling) -> BTreeMap<(u32, u32), usize> {
    let mut out = BTreeMap::new();
    for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
        if g != 0 && p != 0 {
            *out.entry((g, p)).or_insert(0) += 1;
        }
    }
    out
}

pub fn pair_instances(gt: &ComponentLabeling, pred: &ComponentLabeling, mode: PairingMode) -> Result<InstancePairing> {
    check_geometry(&gt.geometry, &pred.geometry)?;
    let candidates: Vec<InstancePair> = overlaps(gt, pred)
        .into_iter()
        .map(|((g, p), n)| InstancePair {
            gt_label: g,
            pred_label: p,
            dice: 2.0 * n as f64 / (gt.component(g).voxels + pred.component(p).voxels) as f64,
        })
        .collect();

    let mut pairs = match mode {
        PairingMode::Greedy => greedy_match(gt, candidates),
        PairingMode::Optimal => optimal_match(gt.len(), pred.len(), &candidates),
    };
    pairs.sort_by_key(|p| p.gt_label);

    let mut gt_used = vec![false; gt.len() + 1];
    let mut pred_used = vec![false; pred.len() + 1];
    for p in &pairs {
        gt_used[p.gt_label as usize] = true;
        pred_used[p.pred_label as usize] = true;
    }
    Ok(InstancePairing {
        unmatched_gt: (1..=gt.len() as u32).filter(|&l| !gt_used[l as usize]).collect(),
        unmatched_pred: (1..=pred.len() as u32).filter(|&l| !pred_used[l as usize]).collect(),
        pairs,
    })
}

fn greedy_match(gt: &ComponentLabeling, mut candidates: Vec<InstancePair>) -> Vec<InstancePair> {
    candidates.sort_by(|a, b| {
        b.dice
            .total_cmp(&a.dice)
            .then(gt.component(b.gt_label).voxels.cmp(&gt.component(a.gt_label).voxels))
            .then(a.gt_label.cmp(&b.gt_label))
            .then(a.pred_label.cmp(&b.pred_label))
    });
    let mut gt_used = std::collections::BTreeSet::new();
    let mut pred_used = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for c in candidates {
        if c.dice > 0.0 && !gt_used.contains(&c.gt_label) && !pred_used.contains(&c.pred_label) {
            gt_used.insert(c.gt_label);
            pred_used.insert(c.pred_label);
            out.push(c);
        }
    }
    out
}

/// Hungarian algorithm on the square cost matrix `-dice`; assignments with
/// no overlap are discarded afterwards.
fn optimal_match(n_gt: usize, n_pred: usize, candidates: &[InstancePair]) -> Vec<InstancePair> {
    let n = n_gt.max(n_pred);
    if n == 0 || candidates.is_empty() {
        return Vec::new();
    }
    let mut dice = vec![vec![0.0f64; n]; n];
    for c in candidates {
        dice[c.gt_label as usize - 1][c.pred_label as usize - 1] = c.dice;
    }
    // 1-based potentials; row 0 / column 0 are sentinels
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut assigned = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        assigned[0] = row;
        let mut col0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = assigned[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = -dice[r - 1][col - 1] - u[r] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[assigned[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if assigned[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            assigned[col0] = assigned[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    (1..=n)
        .filter_map(|col| {
            let row = assigned[col];
            let d = dice[row - 1][col - 1];
            (row <= n_gt && col <= n_pred && d > 0.0).then_some(InstancePair {
                gt_label: row as u32,
                pred_label: col as u32,
                dice: d,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionStatus {
    TruePositive,
    /// Nonempty prediction that does not reach the threshold: a miss and a
    /// false alarm at once.
    FalseNegativeWithFp,
    FalseNegativeEmpty,
}

impl DetectionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionStatus::TruePositive => "true_positive",
            DetectionStatus::FalseNegativeWithFp => "false_negative_with_fp",
            DetectionStatus::FalseNegativeEmpty => "false_negative_empty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientDetection {
    pub status: DetectionStatus,
    pub patient_dice: f64,
}

impl PatientDetection {
    pub fn from_dice(patient_dice: f64, pred_empty: bool, threshold: f64) -> Self {
        let status = if patient_dice > threshold {
            DetectionStatus::TruePositive
        } else if pred_empty {
            DetectionStatus::FalseNegativeEmpty
        } else {
            DetectionStatus::FalseNegativeWithFp
        };
        Self { status, patient_dice }
    }

    pub fn is_detected(&self) -> bool {
        self.status == DetectionStatus::TruePositive
    }
}

/// Patient-level detection: the whole-mask Dice must exceed `threshold`.
pub fn patient_detection(gt: &BinaryMask, pred: &BinaryMask, threshold: f64) -> Result<PatientDetection> {
    let c = confusion_counts(gt, pred)?;
    if c.gt_volume() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let dice = overlap_metrics(&c).dice.unwrap_or(0.0);
    Ok(PatientDetection::from_dice(dice, c.pred_volume() == 0, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetricsRow {
    /// `None` when ground truth has no (post-filter) objects.
    pub recall: Option<f64>,
    /// `None` when the prediction has no (post-filter) objects.
    pub precision: Option<f64>,
    /// Harmonic mean, undefined inputs counted as 0.
    pub f1: f64,
    pub fppp: usize,
    pub oassd: Option<f64>,
    pub matched: usize,
    pub gt_objects: usize,
    pub pred_objects: usize,
}

pub fn f1_score(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

fn component_surface(labeling: &ComponentLabeling, label: u32) -> crate::surface::SurfacePointSet {
    let labels = &labeling.labels;
    let c = labeling.component(label);
    border_points_where(&labeling.geometry, &c.bbox, |i| labels[i] == label)
}

pub fn object_metrics(
    pairing: &InstancePairing,
    gt: &ComponentLabeling,
    pred: &ComponentLabeling,
) -> Result<ObjectMetricsRow> {
    let matched = pairing.pairs.len();
    let gt_objects = matched + pairing.unmatched_gt.len();
    let pred_objects = matched + pairing.unmatched_pred.len();
    let recall = (gt_objects > 0).then(|| matched as f64 / gt_objects as f64);
    let precision = (pred_objects > 0).then(|| matched as f64 / pred_objects as f64);
    let f1 = f1_score(recall.unwrap_or(0.0), precision.unwrap_or(0.0));

    let oassd = if matched == 0 {
        None
    } else {
        let mut total = 0.0;
        for p in &pairing.pairs {
            let a = component_surface(gt, p.gt_label);
            let b = component_surface(pred, p.pred_label);
            total += SymmetricDistances::between(&a, &b)?.assd();
        }
        Some(total / matched as f64)
    };

    Ok(ObjectMetricsRow {
        recall,
        precision,
        f1,
        fppp: pairing.unmatched_pred.len(),
        oassd,
        matched,
        gt_objects,
        pred_objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(dims: [usize; 3]) -> Geometry {
        Geometry::new(dims, [1.0; 3]).unwrap()
    }

    fn voxels(g: Geometry, vs: &[[usize; 3]]) -> BinaryMask {
        BinaryMask::from_fn(g, |i, j, k| vs.contains(&[i, j, k]))
    }

    fn boxes(g: Geometry, bs: &[([usize; 3], [usize; 3])]) -> BinaryMask {
        BinaryMask::from_fn(g, |i, j, k| {
            bs.iter().any(|(lo, hi)| {
                (lo[0]..hi[0]).contains(&i) && (lo[1]..hi[1]).contains(&j) && (lo[2]..hi[2]).contains(&k)
            })
        })
    }

    #[test]
    fn adjacency_by_connectivity() {
        let g = geom([3, 3, 3]);
        let face = voxels(g, &[[0, 0, 0], [1, 0, 0]]);
        assert_eq!(connected_components(&face, Connectivity::Six).len(), 1);
        let edge = voxels(g, &[[0, 0, 0], [1, 1, 0]]);
        assert_eq!(connected_components(&edge, Connectivity::Six).len(), 2);
        assert_eq!(connected_components(&edge, Connectivity::Eighteen).len(), 1);
        let corner = voxels(g, &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&corner, Connectivity::Six).len(), 2);
        assert_eq!(connected_components(&corner, Connectivity::Eighteen).len(), 2);
        assert_eq!(connected_components(&corner, Connectivity::TwentySix).len(), 1);
        assert!(connected_components(&BinaryMask::empty(g), Connectivity::TwentySix).is_empty());
    }

    #[test]
    fn u_shape_merges_late() {
        // two arms joined only at the far end: needs the union step
        let g = geom([5, 5, 1]);
        let m = BinaryMask::from_fn(g, |i, j, _| i == 0 || i == 4 || j == 4);
        let l = connected_components(&m, Connectivity::Six);
        assert_eq!(l.len(), 1);
        assert_eq!(l.components()[0].voxels, m.count());
        assert_eq!(
            l.components()[0].bbox,
            BoundingBox {
                min: [0, 0, 0],
                max: [4, 4, 0]
            }
        );
    }

    #[test]
    fn size_filter() {
        let g = geom([20, 10, 10]);
        let m = boxes(g, &[([0, 0, 0], [2, 4, 5]), ([10, 0, 0], [15, 4, 5])]);
        let l = connected_components(&m, Connectivity::TwentySix);
        assert_eq!(
            l.components().iter().map(|c| c.voxels).collect::<Vec<_>>(),
            vec![40, 100]
        );
        let f = filter_small(&l, 50);
        assert_eq!(f.len(), 1);
        assert_eq!(f.components()[0].voxels, 100);
        assert_eq!(f.components()[0].label, 1);
        assert_eq!(f.labels().iter().filter(|&&x| x == 1).count(), 100);
        assert_eq!(filter_small(&l, 0), l);
        assert!(filter_small(&l, 101).is_empty());
        assert_eq!(filter_small(&f, 50), f);
    }

    #[test]
    fn pairing_unmatched_gt() {
        let g = geom([30, 10, 10]);
        // A = 100 voxels, B = 60 voxels; C overlaps A only
        let gt = boxes(g, &[([0, 0, 0], [5, 4, 5]), ([20, 0, 0], [23, 4, 5])]);
        let pred = boxes(g, &[([1, 0, 0], [6, 4, 5])]);
        let lg = connected_components(&gt, Connectivity::TwentySix);
        let lp = connected_components(&pred, Connectivity::TwentySix);
        assert_eq!(lg.components()[1].voxels, 60);
        let p = pair_instances(&lg, &lp, PairingMode::Greedy).unwrap();
        assert_eq!(p.pairs.len(), 1);
        assert_eq!((p.pairs[0].gt_label, p.pairs[0].pred_label), (1, 1));
        assert_eq!(p.unmatched_gt, vec![2]);
        assert!(p.unmatched_pred.is_empty());
        let row = object_metrics(&p, &lg, &lp).unwrap();
        assert_eq!(row.recall, Some(0.5));
        assert_eq!(row.precision, Some(1.0));
        assert!((row.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(row.fppp, 0);
    }

    #[test]
    fn pred_spanning_two_gt_goes_to_higher_dice() {
        let g = geom([30, 4, 4]);
        let gt = boxes(g, &[([0, 0, 0], [10, 4, 4]), ([12, 0, 0], [14, 4, 4])]);
        let pred = boxes(g, &[([0, 0, 0], [14, 4, 4])]);
        let lg = connected_components(&gt, Connectivity::TwentySix);
        let lp = connected_components(&pred, Connectivity::TwentySix);
        assert_eq!(lg.len(), 2);
        assert_eq!(lp.len(), 1);
        let p = pair_instances(&lg, &lp, PairingMode::Greedy).unwrap();
        assert_eq!(p.pairs.len(), 1);
        assert_eq!(p.pairs[0].gt_label, 1);
        assert_eq!(p.unmatched_gt, vec![2]);
    }

    #[test]
    fn optimal_beats_greedy_when_greedy_blocks() {
        // greedy grabs the single best pair (g1,p1) and strands g2, which
        // only overlaps p1; the optimal assignment matches both
        let g = geom([40, 4, 4]);
        let gt = boxes(g, &[([0, 0, 0], [10, 4, 4]), ([12, 0, 0], [16, 4, 4])]);
        let pred = boxes(g, &[([4, 0, 0], [14, 4, 4]), ([0, 0, 0], [3, 4, 4])]);
        let lg = connected_components(&gt, Connectivity::Six);
        let lp = connected_components(&pred, Connectivity::Six);
        assert_eq!((lg.len(), lp.len()), (2, 2));
        let greedy = pair_instances(&lg, &lp, PairingMode::Greedy).unwrap();
        let optimal = pair_instances(&lg, &lp, PairingMode::Optimal).unwrap();
        assert_eq!(greedy.pairs.len(), 1);
        assert_eq!(greedy.unmatched_gt, vec![2]);
        assert_eq!(optimal.pairs.len(), 2);
        let total = |p: &InstancePairing| p.pairs.iter().map(|x| x.dice).sum::<f64>();
        assert!(total(&optimal) >= total(&greedy) - 1e-12);
        for p in [&greedy, &optimal] {
            let mut gl: Vec<_> = p.pairs.iter().map(|x| x.gt_label).collect();
            gl.dedup();
            assert_eq!(gl.len(), p.pairs.len());
        }
    }

    #[test]
    fn detection_rules() {
        let g = geom([10, 10, 10]);
        let gt = boxes(g, &[([0, 0, 0], [2, 2, 2])]);
        let pred = boxes(g, &[([1, 0, 0], [3, 2, 2])]);
        let d = patient_detection(&gt, &pred, DEFAULT_DETECTION_THRESHOLD).unwrap();
        assert_eq!(d.status, DetectionStatus::TruePositive);
        assert_eq!(d.patient_dice, 0.5);
        let e = patient_detection(&gt, &BinaryMask::empty(g), DEFAULT_DETECTION_THRESHOLD).unwrap();
        assert_eq!(e.status, DetectionStatus::FalseNegativeEmpty);
        let far = boxes(g, &[([8, 8, 8], [10, 10, 10])]);
        let f = patient_detection(&gt, &far, DEFAULT_DETECTION_THRESHOLD).unwrap();
        assert_eq!(f.status, DetectionStatus::FalseNegativeWithFp);
        assert!(matches!(
            patient_detection(&BinaryMask::empty(g), &far, 0.001),
            Err(Error::EmptyGroundTruth)
        ));
        // strictly greater than the threshold
        assert_eq!(
            PatientDetection::from_dice(0.001, false, 0.001).status,
            DetectionStatus::FalseNegativeWithFp
        );
        assert_eq!(
            PatientDetection::from_dice(0.75, false, 0.001).status,
            DetectionStatus::TruePositive
        );
    }

    #[test]
    fn perfect_single_object() {
        let g = geom([10, 10, 10]);
        let m = boxes(g, &[([2, 2, 2], [6, 6, 6])]);
        let l = connected_components(&m, Connectivity::TwentySix);
        let p = pair_instances(&l, &l, PairingMode::Greedy).unwrap();
        let row = object_metrics(&p, &l, &l).unwrap();
        assert_eq!(row.recall, Some(1.0));
        assert_eq!(row.precision, Some(1.0));
        assert_eq!(row.f1, 1.0);
        assert_eq!(row.fppp, 0);
        assert_eq!(row.oassd, Some(0.0));
    }

    #[test]
    fn no_predicted_objects() {
        let g = geom([10, 10, 10]);
        let l = connected_components(&boxes(g, &[([2, 2, 2], [6, 6, 6])]), Connectivity::TwentySix);
        let empty = connected_components(&BinaryMask::empty(g), Connectivity::TwentySix);
        let p = pair_instances(&l, &empty, PairingMode::Greedy).unwrap();
        let row = object_metrics(&p, &l, &empty).unwrap();
        assert_eq!(row.recall, Some(0.0));
        assert_eq!(row.precision, None);
        assert_eq!(row.f1, 0.0);
        assert_eq!(row.fppp, 0);
        assert_eq!(row.oassd, None);
    }

    #[test]
    fn oassd_uses_only_paired_components() {
        let g = geom([40, 6, 6]);
        let gt = boxes(g, &[([1, 1, 1], [5, 5, 5])]);
        // pred: the same cube shifted by 1, plus a far spurious blob
        let pred = boxes(g, &[([2, 1, 1], [6, 5, 5]), ([30, 1, 1], [34, 5, 5])]);
        let lg = connected_components(&gt, Connectivity::TwentySix);
        let lp = connected_components(&pred, Connectivity::TwentySix);
        let p = pair_instances(&lg, &lp, PairingMode::Greedy).unwrap();
        let row = object_metrics(&p, &lg, &lp).unwrap();
        assert_eq!(row.fppp, 1);
        let a = crate::surface::assd(&gt, &boxes(g, &[([2, 1, 1], [6, 5, 5])])).unwrap();
        assert_eq!(row.oassd, Some(a));
    }
}
