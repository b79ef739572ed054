//! Border extraction and surface-distance metrics, in millimetres.
//!
//! A border voxel is a foreground voxel with at least one 6-connected
//! background neighbour; voxels outside the grid count as background.
//! Nearest-neighbour queries run on a k-d tree and are exact: every
//! distance is the same `sqrt(dx² + dy² + dz²)` an exhaustive search
//! would produce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::percentile_sorted;
use crate::volume::{check_geometry, BinaryMask, BoundingBox, Geometry};

/// Ridge added to a singular pooled covariance.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

const HD_PERCENTILE: f64 = 0.95;

/// Physical (mm) coordinates of border voxels, in raster order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfacePointSet {
    pub points: Vec<[f64; 3]>,
}

impl SurfacePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Border points of the foreground described by `is_fg` (a flat-index
/// predicate) within `bbox`. Voxels outside `bbox` must be background.
pub fn border_points_where(geometry: &Geometry, bbox: &BoundingBox, is_fg: impl Fn(usize) -> bool) -> SurfacePointSet {
    let [h, w, d] = geometry.dims;
    let (sx, sy) = (h, h * w);
    let mut points = Vec::new();
    for k in bbox.min[2]..=bbox.max[2] {
        for j in bbox.min[1]..=bbox.max[1] {
            for i in bbox.min[0]..=bbox.max[0] {
                let idx = i + h * (j + w * k);
                if !is_fg(idx) {
                    continue;
                }
                let interior = i > 0
                    && i + 1 < h
                    && j > 0
                    && j + 1 < w
                    && k > 0
                    && k + 1 < d
                    && is_fg(idx - 1)
                    && is_fg(idx + 1)
                    && is_fg(idx - sx)
                    && is_fg(idx + sx)
                    && is_fg(idx - sy)
                    && is_fg(idx + sy);
                if !interior {
                    points.push(geometry.position([i, j, k]));
                }
            }
        }
    }
    SurfacePointSet { points }
}

pub fn extract_border(mask: &BinaryMask) -> SurfacePointSet {
    if mask.is_empty() {
        return SurfacePointSet::default();
    }
    let data = mask.data();
    border_points_where(&mask.geometry(), &BoundingBox::full(mask.dims()), |i| data[i])
}

#[inline]
fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Balanced k-d tree stored implicitly: the node of `[lo, hi)` sits at the
/// midpoint and splits on `axes[mid]`.
struct KdTree {
    points: Vec<[f64; 3]>,
    axes: Vec<u8>,
}

impl KdTree {
    fn build(points: &[[f64; 3]]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            axes: vec![0; points.len()],
        };
        tree.split(0, points.len());
        tree
    }

    fn split(&mut self, lo: usize, hi: usize) {
        if hi - lo <= 1 {
            return;
        }
        let slice = &mut self.points[lo..hi];
        let mut spread = [0.0f64; 3];
        for (axis, s) in spread.iter_mut().enumerate() {
            let (mn, mx) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), p| {
                (mn.min(p[axis]), mx.max(p[axis]))
            });
            *s = mx - mn;
        }
        let axis = (0..3).max_by(|&a, &b| spread[a].total_cmp(&spread[b])).unwrap();
        let mid = (hi - lo) / 2;
        slice.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
        self.axes[lo + mid] = axis as u8;
        self.split(lo, lo + mid);
        self.split(lo + mid + 1, hi);
    }

    fn nearest_squared(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, self.points.len(), q, &mut best);
        best
    }

    fn search(&self, lo: usize, hi: usize, q: &[f64; 3], best: &mut f64) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[mid];
        let d = squared_distance(q, p);
        if d < *best {
            *best = d;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        // every point across the plane is at least |diff| away on this axis
        if diff * diff < *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

/// For each point of `a`, the distance to its nearest point of `b`.
pub fn directed_surface_distances(a: &SurfacePointSet, b: &SurfacePointSet) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySurface);
    }
    let tree = KdTree::build(&b.points);
    Ok(a.points.iter().map(|p| tree.nearest_squared(p).sqrt()).collect())
}

/// How the two directed distance sets combine into a symmetric HD95.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HausdorffMode {
    /// Percentile of the concatenated directed distances.
    #[default]
    Pooled,
    /// Maximum of the two per-direction percentiles.
    MaxOfDirected,
}

/// Both directed distance sets between two surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDistances {
    pub gt_to_pred: Vec<f64>,
    pub pred_to_gt: Vec<f64>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

impl SymmetricDistances {
    pub fn between(a: &SurfacePointSet, b: &SurfacePointSet) -> Result<Self> {
        Ok(Self {
            gt_to_pred: directed_surface_distances(a, b)?,
            pred_to_gt: directed_surface_distances(b, a)?,
        })
    }

    pub fn pooled_sorted(&self) -> Vec<f64> {
        sorted(self.gt_to_pred.iter().chain(&self.pred_to_gt).copied().collect())
    }

    pub fn hd95(&self, mode: HausdorffMode) -> f64 {
        match mode {
            HausdorffMode::Pooled => percentile_sorted(&self.pooled_sorted(), HD_PERCENTILE).unwrap(),
            HausdorffMode::MaxOfDirected => {
                let a = percentile_sorted(&sorted(self.gt_to_pred.clone()), HD_PERCENTILE).unwrap();
                let b = percentile_sorted(&sorted(self.pred_to_gt.clone()), HD_PERCENTILE).unwrap();
                a.max(b)
            }
        }
    }

    /// Exact (100th percentile) Hausdorff distance.
    pub fn hausdorff(&self) -> f64 {
        self.gt_to_pred
            .iter()
            .chain(&self.pred_to_gt)
            .copied()
            .fold(0.0, f64::max)
    }

    /// Mean of the pooled distances, summed in sorted order so the result
    /// does not depend on argument order.
    pub fn assd(&self) -> f64 {
        let pooled = self.pooled_sorted();
        pooled.iter().sum::<f64>() / pooled.len() as f64
    }
}

pub fn symmetric_distances(gt: &BinaryMask, pred: &BinaryMask) -> Result<SymmetricDistances> {
    check_geometry(&gt.geometry(), &pred.geometry())?;
    SymmetricDistances::between(&extract_border(gt), &extract_border(pred))
}

pub fn hd95(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64> {
    hd95_with(gt, pred, HausdorffMode::Pooled)
}

pub fn hd95_with(gt: &BinaryMask, pred: &BinaryMask, mode: HausdorffMode) -> Result<f64> {
    Ok(symmetric_distances(gt, pred)?.hd95(mode))
}

pub fn assd(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64> {
    Ok(symmetric_distances(gt, pred)?.assd())
}

struct Cloud {
    n: f64,
    mean: [f64; 3],
    cov: [[f64; 3]; 3],
}

fn point_cloud(mask: &BinaryMask) -> Option<Cloud> {
    let g = mask.geometry();
    let positions = || {
        mask.data()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(idx, _)| g.position(g.coords(idx)))
    };
    let mut n = 0usize;
    let mut sum = [0.0; 3];
    for p in positions() {
        n += 1;
        (0..3).for_each(|a| sum[a] += p[a]);
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mean = sum.map(|s| s / nf);
    let mut cov = [[0.0; 3]; 3];
    for p in positions() {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in r..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    for r in 0..3 {
        for c in r..3 {
            cov[r][c] /= nf;
            cov[c][r] = cov[r][c];
        }
    }
    Some(Cloud { n: nf, mean, cov })
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Solves `m x = v` for symmetric positive definite `m` by Cholesky.
fn cholesky_solve(m: &[[f64; 3]; 3], v: &[f64; 3]) -> Option<[f64; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = (v[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (y[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// Mahalanobis distance between the foreground point clouds of two masks
/// under their size-weighted pooled covariance.
pub fn mahalanobis(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64> {
    check_geometry(&gt.geometry(), &pred.geometry())?;
    let (g, d) = match (point_cloud(gt), point_cloud(pred)) {
        (Some(g), Some(d)) => (g, d),
        _ => return Err(Error::EmptySurface),
    };
    let total = g.n + d.n;
    let mut s = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            s[r][c] = (g.n * g.cov[r][c] + d.n * d.cov[r][c]) / total;
        }
    }
    let trace = s[0][0] + s[1][1] + s[2][2];
    let delta = [g.mean[0] - d.mean[0], g.mean[1] - d.mean[1], g.mean[2] - d.mean[2]];
    let singular = trace <= 0.0 || det3(&s) <= 1e-12 * (trace / 3.0).powi(3);
    let solved = if singular { None } else { cholesky_solve(&s, &delta) };
    let x = match solved {
        Some(x) => x,
        None => {
            (0..3).for_each(|a| s[a][a] += COVARIANCE_RIDGE);
            cholesky_solve(&s, &delta)
                .ok_or_else(|| Error::InvalidGrid("covariance is not positive definite".into()))?
        }
    };
    let q = delta[0] * x[0] + delta[1] * x[1] + delta[2] * x[2];
    Ok(q.max(0.0).sqrt())
}

/// HD95, Mahalanobis and ASSD for one patient; all `None` when either mask
/// is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub hd95: Option<f64>,
    pub mhd: Option<f64>,
    pub assd: Option<f64>,
}

impl DistanceReport {
    pub const NAMES: [&'static str; 3] = ["hd95", "mhd", "assd"];

    pub fn values(&self) -> [Option<f64>; 3] {
        [self.hd95, self.mhd, self.assd]
    }
}

pub fn distance_report(gt: &BinaryMask, pred: &BinaryMask, mode: HausdorffMode) -> Result<DistanceReport> {
    check_geometry(&gt.geometry(), &pred.geometry())?;
    if !gt.any() || !pred.any() {
        return Ok(DistanceReport::default());
    }
    let dist = symmetric_distances(gt, pred)?;
    Ok(DistanceReport {
        hd95: Some(dist.hd95(mode)),
        mhd: Some(mahalanobis(gt, pred)?),
        assd: Some(dist.assd()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(dims: [usize; 3], spacing: [f64; 3]) -> Geometry {
        Geometry::new(dims, spacing).unwrap()
    }

    fn cube(g: Geometry, lo: [usize; 3], side: usize) -> BinaryMask {
        BinaryMask::from_fn(g, |i, j, k| {
            (lo[0]..lo[0] + side).contains(&i)
                && (lo[1]..lo[1] + side).contains(&j)
                && (lo[2]..lo[2] + side).contains(&k)
        })
    }

    fn brute_nearest(a: &SurfacePointSet, b: &SurfacePointSet) -> Vec<f64> {
        a.points
            .iter()
            .map(|p| {
                b.points
                    .iter()
                    .map(|q| squared_distance(p, q))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    }

    #[test]
    fn border_counts() {
        let g = geom([5, 5, 5], [1.0; 3]);
        let single = BinaryMask::from_fn(g, |i, j, k| (i, j, k) == (2, 2, 2));
        assert_eq!(extract_border(&single).len(), 1);
        assert_eq!(extract_border(&cube(g, [1, 1, 1], 3)).len(), 26);
        assert!(extract_border(&BinaryMask::empty(g)).is_empty());
        // foreground touching the grid edge is border
        let full = BinaryMask::from_fn(geom([3, 3, 3], [1.0; 3]), |_, _, _| true);
        assert_eq!(extract_border(&full).len(), 26);
    }

    #[test]
    fn directed_examples() {
        let a = SurfacePointSet {
            points: vec![[0.0, 0.0, 0.0]],
        };
        let b = SurfacePointSet {
            points: vec![[3.0, 0.0, 0.0]],
        };
        assert_eq!(directed_surface_distances(&a, &b).unwrap(), vec![3.0]);
        assert_eq!(directed_surface_distances(&a, &a).unwrap(), vec![0.0]);
        assert!(matches!(
            directed_surface_distances(&a, &SurfacePointSet::default()),
            Err(Error::EmptySurface)
        ));

        let g = geom([1, 1, 2], [1.0, 1.0, 3.0]);
        let lo = BinaryMask::from_fn(g, |_, _, k| k == 0);
        let hi = BinaryMask::from_fn(g, |_, _, k| k == 1);
        let d = directed_surface_distances(&extract_border(&lo), &extract_border(&hi)).unwrap();
        assert_eq!(d, vec![3.0]);
    }

    #[test]
    fn single_voxels_four_mm_apart() {
        let g = geom([6, 1, 1], [1.0; 3]);
        let a = BinaryMask::from_fn(g, |i, _, _| i == 0);
        let b = BinaryMask::from_fn(g, |i, _, _| i == 4);
        assert_eq!(hd95(&a, &b).unwrap(), 4.0);
        assert_eq!(assd(&a, &b).unwrap(), 4.0);
    }

    #[test]
    fn shifted_cube() {
        let g = geom([14, 12, 12], [1.0; 3]);
        let a = cube(g, [1, 1, 1], 10);
        let b = cube(g, [3, 1, 1], 10);
        let d = symmetric_distances(&a, &b).unwrap();
        assert_eq!(d.hausdorff(), 2.0);
        let h = d.hd95(HausdorffMode::Pooled);
        assert!((0.0..=2.0).contains(&h));
        let bf = brute_nearest(&extract_border(&a), &extract_border(&b));
        assert_eq!(bf, d.gt_to_pred);
    }

    #[test]
    fn identity_is_zero() {
        let g = geom([8, 8, 8], [0.7, 1.1, 2.0]);
        let m = cube(g, [2, 1, 3], 4);
        assert_eq!(hd95(&m, &m).unwrap(), 0.0);
        assert_eq!(assd(&m, &m).unwrap(), 0.0);
        assert_eq!(mahalanobis(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn mahalanobis_grows_with_offset() {
        let g = geom([24, 9, 9], [1.0; 3]);
        let base = cube(g, [1, 2, 2], 5);
        let mut last = 0.0;
        for off in 1..=8 {
            let moved = cube(g, [1 + off, 2, 2], 5);
            let m = mahalanobis(&base, &moved).unwrap();
            assert!(m > last, "offset {off}: {m} <= {last}");
            last = m;
        }
    }

    #[test]
    fn mahalanobis_degenerate_clouds_are_finite() {
        let g = geom([4, 4, 4], [1.0; 3]);
        let a = BinaryMask::from_fn(g, |i, j, k| (i, j, k) == (0, 0, 0));
        let b = BinaryMask::from_fn(g, |i, j, k| (i, j, k) == (3, 0, 0));
        let m = mahalanobis(&a, &b).unwrap();
        assert!(m.is_finite() && m > 0.0);
        // pooled covariance has x-variance 2.25; other axes get only the ridge
        let planar = BinaryMask::from_fn(g, |_, _, k| k == 1);
        assert!(mahalanobis(&planar, &a).unwrap().is_finite());
    }

    #[test]
    fn empty_prediction_reports_undefined() {
        let g = geom([4, 4, 4], [1.0; 3]);
        let a = cube(g, [0, 0, 0], 2);
        let r = distance_report(&a, &BinaryMask::empty(g), HausdorffMode::Pooled).unwrap();
        assert_eq!(r, DistanceReport::default());
        assert!(matches!(hd95(&a, &BinaryMask::empty(g)), Err(Error::EmptySurface)));
    }

    fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (
            1usize..=6,
            1usize..=6,
            1usize..=6,
            0.3f64..3.0,
            0.3f64..3.0,
            0.3f64..3.0,
        )
            .prop_flat_map(|(h, w, d, sx, sy, sz)| {
                let n = h * w * d;
                (
                    prop::collection::vec(any::<bool>(), n),
                    prop::collection::vec(any::<bool>(), n),
                )
                    .prop_filter("nonempty", |(a, b)| a.contains(&true) && b.contains(&true))
                    .prop_map(move |(a, b)| {
                        let g = Geometry::new([h, w, d], [sx, sy, sz]).unwrap();
                        (BinaryMask::new(g, a).unwrap(), BinaryMask::new(g, b).unwrap())
                    })
            })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((a, b) in mask_pair()) {
            let ab = symmetric_distances(&a, &b).unwrap();
            let ba = symmetric_distances(&b, &a).unwrap();
            prop_assert_eq!(ab.hd95(HausdorffMode::Pooled), ba.hd95(HausdorffMode::Pooled));
            prop_assert_eq!(ab.assd(), ba.assd());
            prop_assert_eq!(mahalanobis(&a, &b).unwrap(), mahalanobis(&b, &a).unwrap());
            prop_assert!(ab.hd95(HausdorffMode::Pooled) <= ab.hausdorff());
            prop_assert!(ab.assd() <= ab.hausdorff());
            prop_assert_eq!(brute_nearest(&extract_border(&a), &extract_border(&b)), ab.gt_to_pred);
        }

        #[test]
        fn spacing_scaling((a, b) in mask_pair()) {
            let s = a.spacing();
            let s2 = [2.0 * s[0], 2.0 * s[1], 2.0 * s[2]];
            let (a2, b2) = (a.with_spacing(s2).unwrap(), b.with_spacing(s2).unwrap());
            prop_assert_eq!(2.0 * hd95(&a, &b).unwrap(), hd95(&a2, &b2).unwrap());
            prop_assert_eq!(2.0 * assd(&a, &b).unwrap(), assd(&a2, &b2).unwrap());
        }
    }

    #[test]
    fn mahalanobis_is_scale_invariant() {
        let g = geom([12, 10, 10], [1.0, 1.5, 0.8]);
        let a = BinaryMask::from_fn(g, |i, j, k| (i + j + k) % 3 == 0 && i < 6 && j > 2);
        let b = BinaryMask::from_fn(g, |i, j, k| (i * j + k) % 4 == 1 && k > 3);
        let m1 = mahalanobis(&a, &b).unwrap();
        for f in [0.5, 3.0, 7.3] {
            let s = g.spacing.map(|v| v * f);
            let m2 = mahalanobis(&a.with_spacing(s).unwrap(), &b.with_spacing(s).unwrap()).unwrap();
            assert!((m1 - m2).abs() < 1e-9, "{m1} vs {m2}");
        }
    }

    #[test]
    fn translation_equivariance() {
        let g = geom([16, 16, 16], [1.0, 0.9, 2.0]);
        let a = cube(g, [2, 2, 2], 4);
        let b = BinaryMask::from_fn(g, |i, j, k| {
            (3..8).contains(&i) && (2..5).contains(&j) && (1..4).contains(&k)
        });
        let shift =
            |m: &BinaryMask| BinaryMask::from_fn(g, |i, j, k| i >= 5 && j >= 3 && k >= 4 && m.get(i - 5, j - 3, k - 4));
        let (a2, b2) = (shift(&a), shift(&b));
        assert!((hd95(&a, &b).unwrap() - hd95(&a2, &b2).unwrap()).abs() < 1e-12);
        assert!((assd(&a, &b).unwrap() - assd(&a2, &b2).unwrap()).abs() < 1e-12);
        assert!((mahalanobis(&a, &b).unwrap() - mahalanobis(&a2, &b2).unwrap()).abs() < 1e-9);
    }
}
