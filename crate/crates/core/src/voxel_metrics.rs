//! Confusion-count metrics over two binary masks.
//!
//! Every metric is a function of the four voxel cardinalities. A metric
//! whose defining denominator vanishes is `None` (undefined) rather than a
//! silent zero; the probabilistic distance is the one metric that can be
//! `+inf`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::{check_geometry, BinaryMask};

/// The four voxel cardinalities between ground truth `g` and prediction `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    /// Total voxel count X.
    pub fn x(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts with ground truth and prediction exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tp,
            tn: self.tn,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    pub fn gt_volume(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn pred_volume(&self) -> u64 {
        self.tp + self.fp
    }
}

/// Counts agreement classes over two geometry-matched masks.
pub fn confusion_counts(gt: &BinaryMask, pred: &BinaryMask) -> Result<ConfusionCounts> {
    check_geometry(&gt.geometry(), &pred.geometry())?;
    // bucket index is the 2-bit code (g << 1) | d
    let mut buckets = [0u64; 4];
    for (&g, &d) in gt.data().iter().zip(pred.data()) {
        buckets[((g as usize) << 1) | d as usize] += 1;
    }
    Ok(ConfusionCounts {
        tn: buckets[0b00],
        fp: buckets[0b01],
        fn_: buckets[0b10],
        tp: buckets[0b11],
    })
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapMetrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub ppv: Option<f64>,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
    pub iou: Option<f64>,
    pub gce: Option<f64>,
}

/// One of the two refinement-error sums, with each `n(n + 2m)/(n + m)`
/// term taken as 0 when `n = 0` (its denominator can only vanish then).
fn refinement_error(n1: u64, m1: u64, n2: u64, m2: u64) -> f64 {
    let term = |n: u64, m: u64| {
        if n == 0 {
            0.0
        } else {
            n as f64 * (n + 2 * m) as f64 / (n + m) as f64
        }
    };
    term(n1, m1) + term(n2, m2)
}

pub fn overlap_metrics(c: &ConfusionCounts) -> OverlapMetrics {
    let ConfusionCounts { tp, tn, fp, fn_ } = *c;
    let tpr = ratio(tp, tp + fn_);
    let tnr = ratio(tn, tn + fp);
    let union = tp + fp + fn_;
    let dice = if union == 0 {
        Some(1.0)
    } else {
        ratio(2 * tp, 2 * tp + fp + fn_)
    };
    let jaccard = ratio(tp, union);
    let gce = (c.x() != 0).then(|| {
        let e1 = refinement_error(fn_, tp, fp, tn);
        let e2 = refinement_error(fp, tp, fn_, tn);
        e1.min(e2) / c.x() as f64
    });
    OverlapMetrics {
        tpr,
        tnr,
        fpr: tnr.map(|t| 1.0 - t),
        fnr: tpr.map(|t| 1.0 - t),
        ppv: ratio(tp, tp + fp),
        dice,
        jaccard,
        iou: jaccard,
        gce,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeMetrics {
    pub vs: Option<f64>,
    pub ravd: Option<f64>,
}

pub fn volume_metrics(c: &ConfusionCounts) -> VolumeMetrics {
    let ConfusionCounts { tp, fp, fn_, .. } = *c;
    let den = 2 * tp + fp + fn_;
    let vs = ratio(fp.abs_diff(fn_), den).map(|r| 1.0 - r);
    let gt = c.gt_volume();
    let ravd = (gt != 0).then(|| (c.pred_volume() as f64 - gt as f64) / gt as f64);
    VolumeMetrics { vs, ravd }
}

/// Entropies (bits) and the derived information metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationMetrics {
    pub h_gt: f64,
    pub h_pred: f64,
    pub h_joint: f64,
    pub mi: f64,
    pub nmi: f64,
    pub voi: f64,
}

fn binary_entropy(p: f64) -> f64 {
    let plogp = |q: f64| if q == 0.0 { 0.0 } else { q * q.log2() };
    -(plogp(p) + plogp(1.0 - p))
}

/// `None` when the volume is empty.
pub fn information_metrics(c: &ConfusionCounts) -> Option<InformationMetrics> {
    let x = c.x();
    if x == 0 {
        return None;
    }
    let xf = x as f64;
    let h_gt = binary_entropy(c.gt_volume() as f64 / xf);
    let h_pred = binary_entropy(c.pred_volume() as f64 / xf);
    let cell = |n: u64| {
        let p = if n == 0 { 1.0 } else { n as f64 / xf };
        p.log2() * (n as f64 / xf)
    };
    let h_joint = -(cell(c.tn) + cell(c.fn_) + cell(c.fp) + cell(c.tp));
    let mi = h_gt + h_pred - h_joint;
    let voi = (h_gt + h_pred - 2.0 * mi).max(0.0);
    let nmi = if h_gt + h_pred == 0.0 {
        1.0
    } else {
        (2.0 * mi / (h_gt + h_pred)).clamp(0.0, 1.0)
    };
    Some(InformationMetrics {
        h_gt,
        h_pred,
        h_joint,
        mi,
        nmi,
        voi,
    })
}

/// Which adjusted-Rand expression to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AriVariant {
    /// Hubert-Arabie pair-counting form, `2(ad - bc)` over the standard
    /// denominator, with `d` from the total-pairs identity.
    #[default]
    PairCounting,
    /// The typeset expression evaluated literally; ARI of a perfect match is
    /// not 1 under this form. Kept for comparison with published values.
    AsPrinted,
}

/// Pair counts: `a` agree-same, `b` same in `g` only, `c` same in `d` only,
/// `d` different in both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub a: u128,
    pub b: u128,
    pub c: u128,
    pub d: u128,
}

pub fn pair_counts(c: &ConfusionCounts) -> PairCounts {
    let [tp, tn, fp, fn_] = [c.tp, c.tn, c.fp, c.fn_].map(u128::from);
    let pairs = |n: u128| n * n.saturating_sub(1) / 2;
    let squares = tp * tp + tn * tn + fp * fp + fn_ * fn_;
    let a = pairs(tp) + pairs(fp) + pairs(tn) + pairs(fn_);
    let b = ((tp + fn_).pow(2) + (tn + fp).pow(2) - squares) / 2;
    let cc = ((tp + fp).pow(2) + (tn + fn_).pow(2) - squares) / 2;
    let x = tp + tn + fp + fn_;
    let d = pairs(x) - (a + b + cc);
    PairCounts { a, b, c: cc, d }
}

pub fn adjusted_rand_index(c: &ConfusionCounts, variant: AriVariant) -> Option<f64> {
    let p = pair_counts(c);
    match variant {
        AriVariant::PairCounting => {
            let num = 2 * (p.a * p.d) as i128 - 2 * (p.b * p.c) as i128;
            let den = p.c * p.c + p.b * p.b + 2 * p.a * p.d + (p.a + p.d) * (p.c + p.b);
            (den != 0).then(|| num as f64 / den as f64)
        }
        AriVariant::AsPrinted => {
            let (a, b, cc) = (p.a as f64, p.b as f64, p.c as f64);
            let x = c.x() as f64;
            let d = x * (x - 1.0) / (2.0 * (a + b + cc));
            let num = 2.0 * (a * b - b * cc);
            let den = cc * cc + b * b + 2.0 * a * b + (a + d) * (cc + b);
            (den != 0.0 && den.is_finite()).then(|| num / den)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticMetrics {
    pub cks: Option<f64>,
    pub auc: Option<f64>,
    pub mcc: Option<f64>,
    pub pbd: Option<f64>,
    pub ari: Option<f64>,
}

pub fn probabilistic_metrics(c: &ConfusionCounts, ari: AriVariant) -> ProbabilisticMetrics {
    let ConfusionCounts { tp, tn, fp, fn_ } = *c;
    let o = overlap_metrics(c);
    let auc = o.fpr.zip(o.fnr).map(|(fpr, fnr)| 1.0 - (fpr + fnr) / 2.0);

    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    let mcc = factors.iter().all(|&f| f != 0).then(|| {
        let num = (tp as i128 * tn as i128 - fp as i128 * fn_ as i128) as f64;
        let den = ((factors[0] as u128 * factors[1] as u128) as f64).sqrt()
            * ((factors[2] as u128 * factors[3] as u128) as f64).sqrt();
        num / den
    });

    let x = c.x() as u128;
    let chance = (tp + fn_) as u128 * (tp + fp) as u128 + (tn + fp) as u128 * (tn + fn_) as u128;
    let cks = (x != 0 && chance != x * x).then(|| {
        let xf = x as f64;
        let p0 = (tp + tn) as f64 / xf;
        let pe = chance as f64 / (xf * xf);
        (p0 - pe) / (1.0 - pe)
    });

    let mismatch = fp + fn_;
    let pbd = if tp == 0 {
        Some(if mismatch == 0 { 0.0 } else { f64::INFINITY })
    } else {
        Some(mismatch as f64 / (2 * tp) as f64)
    };

    ProbabilisticMetrics {
        cks,
        auc,
        mcc,
        pbd,
        ari: adjusted_rand_index(c, ari),
    }
}

/// The full voxel-wise panel for one patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelMetricSet {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub ppv: Option<f64>,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
    pub iou: Option<f64>,
    pub gce: Option<f64>,
    pub auc: Option<f64>,
    pub mcc: Option<f64>,
    pub cks: Option<f64>,
    pub nmi: Option<f64>,
    pub voi: Option<f64>,
    pub pbd: Option<f64>,
    pub ari: Option<f64>,
    pub vs: Option<f64>,
    pub ravd: Option<f64>,
}

impl VoxelMetricSet {
    pub const NAMES: [&'static str; 18] = [
        "tpr", "tnr", "fpr", "fnr", "ppv", "dice", "jaccard", "iou", "gce", "auc", "mcc", "cks", "nmi", "voi", "pbd",
        "ari", "vs", "ravd",
    ];

    pub fn from_counts(c: &ConfusionCounts, ari: AriVariant) -> Self {
        let o = overlap_metrics(c);
        let v = volume_metrics(c);
        let info = information_metrics(c);
        let p = probabilistic_metrics(c, ari);
        Self {
            tpr: o.tpr,
            tnr: o.tnr,
            fpr: o.fpr,
            fnr: o.fnr,
            ppv: o.ppv,
            dice: o.dice,
            jaccard: o.jaccard,
            iou: o.iou,
            gce: o.gce,
            auc: p.auc,
            mcc: p.mcc,
            cks: p.cks,
            nmi: info.map(|i| i.nmi),
            voi: info.map(|i| i.voi),
            pbd: p.pbd,
            ari: p.ari,
            vs: v.vs,
            ravd: v.ravd,
        }
    }

    /// Values in [`Self::NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 18] {
        [
            self.tpr,
            self.tnr,
            self.fpr,
            self.fnr,
            self.ppv,
            self.dice,
            self.jaccard,
            self.iou,
            self.gce,
            self.auc,
            self.mcc,
            self.cks,
            self.nmi,
            self.voi,
            self.pbd,
            self.ari,
            self.vs,
            self.ravd,
        ]
    }

    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

/// Single-pass evaluation of every voxel-wise metric.
pub fn voxel_metric_set(gt: &BinaryMask, pred: &BinaryMask) -> Result<VoxelMetricSet> {
    let c = confusion_counts(gt, pred)?;
    Ok(VoxelMetricSet::from_counts(&c, AriVariant::default()))
}
