//! Slow reference implementations used to cross-check the production
//! kernels. Nothing here shares code with the kernels it checks.

use std::collections::VecDeque;

use crate::instance::Connectivity;
use crate::volume::BinaryMask;
use crate::voxel_metrics::ConfusionCounts;

/// Expands counts into explicit `(g, d)` voxel lists.
fn voxel_lists(c: &ConfusionCounts) -> (Vec<u8>, Vec<u8>) {
    let mut g = Vec::new();
    let mut d = Vec::new();
    for (n, gv, dv) in [(c.tp, 1, 1), (c.tn, 0, 0), (c.fp, 0, 1), (c.fn_, 1, 0)] {
        for _ in 0..n {
            g.push(gv);
            d.push(dv);
        }
    }
    (g, d)
}

fn div(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

fn plog(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.log2()
    }
}

/// All 18 voxel-wise metrics, in `VoxelMetricSet::NAMES` order, evaluated
/// term by term from the defining equations.
pub fn confusion_metrics(c: &ConfusionCounts) -> [Option<f64>; 18] {
    let tp = c.tp as f64;
    let tn = c.tn as f64;
    let fp = c.fp as f64;
    let fn_ = c.fn_ as f64;
    let x = tp + tn + fp + fn_;
    let (g, d) = voxel_lists(c);

    let tpr = div(tp, tp + fn_);
    let tnr = div(tn, tn + fp);
    let fpr = div(fp, fp + tn);
    let fnr = div(fn_, fn_ + tp);
    let ppv = div(tp, tp + fp);
    let dice = if tp + fp + fn_ == 0.0 {
        Some(1.0)
    } else {
        div(2.0 * tp, 2.0 * tp + fp + fn_)
    };
    let jaccard = div(tp, tp + fp + fn_);

    let inter: u32 = g.iter().zip(&d).map(|(&a, &b)| (a & b) as u32).sum();
    let union: u32 = g.iter().zip(&d).map(|(&a, &b)| (a | b) as u32).sum();
    let iou = div(inter as f64, union as f64);

    let auc = match (fpr, fnr) {
        (Some(a), Some(b)) => Some(1.0 - (a + b) / 2.0),
        _ => None,
    };

    let frac = |n: f64, den: f64| if den == 0.0 { 0.0 } else { n / den };
    let gce = div(
        (frac(fn_ * (fn_ + 2.0 * tp), tp + fn_) + frac(fp * (fp + 2.0 * tn), tn + fp))
            .min(frac(fp * (fp + 2.0 * tp), tp + fp) + frac(fn_ * (fn_ + 2.0 * tn), tn + fn_)),
        x,
    );

    let mcc_den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = div(tp * tn - fp * fn_, mcc_den.sqrt());

    // pair counts by enumerating every unordered voxel pair
    let (mut a, mut b, mut cc, mut dd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            match (g[i] == g[j], d[i] == d[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => cc += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let ari = div(
        2.0 * (a * dd - b * cc),
        cc * cc + b * b + 2.0 * a * dd + (a + dd) * (cc + b),
    );

    let p0 = div(tp + tn, x);
    let pe = div((tp + fn_) * (tp + fp) + (tn + fp) * (tn + fn_), x * x);
    let cks = match (p0, pe) {
        (Some(p0), Some(pe)) => div(p0 - pe, 1.0 - pe),
        _ => None,
    };

    let (nmi, voi) = if x == 0.0 {
        (None, None)
    } else {
        let h1 = -(plog((fn_ + tp) / x) + plog(1.0 - (fn_ + tp) / x));
        let h2 = -(plog((fp + tp) / x) + plog(1.0 - (fp + tp) / x));
        let p = |n: f64| if n == 0.0 { 1.0 } else { n / x };
        let h12 =
            -(p(tn).log2() * (tn / x) + p(fn_).log2() * (fn_ / x) + p(fp).log2() * (fp / x) + p(tp).log2() * (tp / x));
        let mi = h1 + h2 - h12;
        let nmi = if h1 + h2 == 0.0 { 1.0 } else { 2.0 * mi / (h1 + h2) };
        (Some(nmi), Some(h1 + h2 - 2.0 * mi))
    };

    let mismatch: u32 = g
        .iter()
        .zip(&d)
        .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
        .sum();
    let pbd = match (mismatch, inter) {
        (0, 0) => Some(0.0),
        (_, 0) => Some(f64::INFINITY),
        (m, i) => Some(m as f64 / (2.0 * i as f64)),
    };

    let vs = div((fp - fn_).abs(), 2.0 * tp + fp + fn_).map(|r| 1.0 - r);
    let ravd = div((tp + fp) - (tp + fn_), tp + fn_);

    [
        tpr, tnr, fpr, fnr, ppv, dice, jaccard, iou, gce, auc, mcc, cks, nmi, voi, pbd, ari, vs, ravd,
    ]
}

/// Absolute deviation between two possibly-undefined values; `None` when
/// exactly one side is undefined.
pub fn deviation(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (None, None) => Some(0.0),
        (Some(a), Some(b)) if a == b => Some(0.0),
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Some((a - b).abs()),
        (Some(_), Some(_)) => Some(f64::INFINITY),
        _ => None,
    }
}

/// Border voxel positions (mm), checking all six face neighbours explicitly.
pub fn border_points(mask: &BinaryMask) -> Vec<[f64; 3]> {
    let [h, w, d] = mask.dims();
    let s = mask.spacing();
    let inside = |i: isize, j: isize, k: isize| {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < h
            && (j as usize) < w
            && (k as usize) < d
            && mask.get(i as usize, j as usize, k as usize)
    };
    let mut out = Vec::new();
    for k in 0..d {
        for j in 0..w {
            for i in 0..h {
                if !mask.get(i, j, k) {
                    continue;
                }
                let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                let faces = [
                    (ii - 1, jj, kk),
                    (ii + 1, jj, kk),
                    (ii, jj - 1, kk),
                    (ii, jj + 1, kk),
                    (ii, jj, kk - 1),
                    (ii, jj, kk + 1),
                ];
                if faces.iter().any(|&(a, b, c)| !inside(a, b, c)) {
                    out.push([i as f64 * s[0], j as f64 * s[1], k as f64 * s[2]]);
                }
            }
        }
    }
    out
}

/// Exhaustive nearest-neighbour distances from each point of `a` to `b`.
pub fn directed_distances(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<f64> {
    a.iter()
        .map(|p| {
            b.iter()
                .map(|q| {
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    let dz = p[2] - q[2];
                    dx * dx + dy * dy + dz * dz
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// `(hd95, assd)` over the pooled directed distances; `None` when either
/// mask has no border. ASSD sums in ascending order.
pub fn surface_metrics(gt: &BinaryMask, pred: &BinaryMask) -> Option<(f64, f64)> {
    let a = border_points(gt);
    let b = border_points(pred);
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let mut pooled = directed_distances(&a, &b);
    pooled.extend(directed_distances(&b, &a));
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let rank = 0.95 * (pooled.len() - 1) as f64;
    let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
    let hd95 = pooled[lo] + (rank - lo as f64) * (pooled[hi] - pooled[lo]);
    let mut total = 0.0;
    for v in &pooled {
        total += v;
    }
    Some((hd95, total / pooled.len() as f64))
}

/// Breadth-first flood-fill labeling; components are numbered in raster
/// order of their first voxel.
pub fn flood_fill_labels(mask: &BinaryMask, connectivity: Connectivity) -> Vec<u32> {
    let [h, w, d] = mask.dims();
    let reach = connectivity.count();
    let mut labels = vec![0u32; h * w * d];
    let mut next = 0u32;
    let index = |i: usize, j: usize, k: usize| i + h * (j + w * k);
    for k in 0..d {
        for j in 0..w {
            for i in 0..h {
                if !mask.get(i, j, k) || labels[index(i, j, k)] != 0 {
                    continue;
                }
                next += 1;
                labels[index(i, j, k)] = next;
                let mut queue = VecDeque::from([(i, j, k)]);
                while let Some((ci, cj, ck)) = queue.pop_front() {
                    for dk in -1i32..=1 {
                        for dj in -1i32..=1 {
                            for di in -1i32..=1 {
                                let manhattan = di.abs() + dj.abs() + dk.abs();
                                let allowed = match reach {
                                    6 => manhattan == 1,
                                    18 => manhattan == 1 || manhattan == 2,
                                    _ => manhattan >= 1,
                                };
                                if !allowed {
                                    continue;
                                }
                                let (ni, nj, nk) = (ci as i32 + di, cj as i32 + dj, ck as i32 + dk);
                                if ni < 0 || nj < 0 || nk < 0 || ni >= h as i32 || nj >= w as i32 || nk >= d as i32 {
                                    continue;
                                }
                                let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                                if mask.get(ni, nj, nk) && labels[index(ni, nj, nk)] == 0 {
                                    labels[index(ni, nj, nk)] = next;
                                    queue.push_back((ni, nj, nk));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    labels
}
