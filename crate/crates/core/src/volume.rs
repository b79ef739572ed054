//! Volumes, binary masks and their shared geometry.
//!
//! Voxel data is stored with the first axis varying fastest, the on-disk
//! order of NIfTI: the flat index of `(i, j, k)` is `i + H * (j + W * k)`
//! for dims `(H, W, D)`.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing tolerance, in mm, under which two grids are considered aligned.
pub const SPACING_TOLERANCE_MM: f64 = 1e-4;

/// Dimensions and voxel spacing (mm) of a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("zero dimension in {dims:?}")));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidGrid(format!("non-positive spacing {spacing:?}")));
        }
        Ok(Self { dims, spacing })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Physical position (mm) of a voxel index triple.
    #[inline]
    pub fn position(&self, ijk: [usize; 3]) -> [f64; 3] {
        [
            ijk[0] as f64 * self.spacing[0],
            ijk[1] as f64 * self.spacing[1],
            ijk[2] as f64 * self.spacing[2],
        ]
    }
}

/// Succeeds iff both grids have the same dims and spacing within
/// [`SPACING_TOLERANCE_MM`] on every axis.
pub fn check_geometry(a: &Geometry, b: &Geometry) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::DimensionMismatch(a.dims, b.dims));
    }
    let aligned = a
        .spacing
        .iter()
        .zip(&b.spacing)
        .all(|(x, y)| (x - y).abs() <= SPACING_TOLERANCE_MM);
    if !aligned {
        return Err(Error::SpacingMismatch(a.spacing, b.spacing));
    }
    Ok(())
}

/// Inclusive voxel-index bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn point(ijk: [usize; 3]) -> Self {
        Self { min: ijk, max: ijk }
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            min: [0; 3],
            max: [dims[0] - 1, dims[1] - 1, dims[2] - 1],
        }
    }

    pub fn include(&mut self, ijk: [usize; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(ijk[a]);
            self.max[a] = self.max[a].max(ijk[a]);
        }
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let mut b = *self;
        b.include(other.min);
        b.include(other.max);
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    Binary,
    Probability,
    RawIntensity,
}

impl GridKind {
    /// Narrowest kind that admits every value.
    pub fn infer(values: &[f64]) -> Self {
        if values.iter().all(|&v| v == 0.0 || v == 1.0) {
            GridKind::Binary
        } else if values.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            GridKind::Probability
        } else {
            GridKind::RawIntensity
        }
    }

    fn admits(self, v: f64) -> bool {
        match self {
            GridKind::Binary => v == 0.0 || v == 1.0,
            GridKind::Probability => (0.0..=1.0).contains(&v),
            GridKind::RawIntensity => !v.is_nan(),
        }
    }
}

/// A scalar lattice with physical spacing. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    geometry: Geometry,
    values: Vec<f64>,
    kind: GridKind,
}

impl VoxelGrid {
    pub fn new(geometry: Geometry, values: Vec<f64>, kind: GridKind) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for dims {:?}",
                values.len(),
                geometry.dims
            )));
        }
        if let Some(v) = values.iter().find(|&&v| !kind.admits(v)) {
            return Err(match kind {
                GridKind::Binary => Error::NotBinary,
                GridKind::Probability => Error::NotProbability,
                GridKind::RawIntensity => Error::InvalidGrid(format!("value {v}")),
            });
        }
        Ok(Self { geometry, values, kind })
    }

    /// Builds a grid tagged with the narrowest kind its values allow.
    pub fn with_inferred_kind(geometry: Geometry, values: Vec<f64>) -> Result<Self> {
        let kind = GridKind::infer(&values);
        Self::new(geometry, values, kind)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A {0,1} lattice: ground truth `g` or a binarized prediction `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    geometry: Geometry,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(geometry: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::InvalidGrid(format!(
                "{} voxels for dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn empty(geometry: Geometry) -> Self {
        Self {
            geometry,
            data: vec![false; geometry.len()],
        }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [h, w, d] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for k in 0..d {
            for j in 0..w {
                for i in 0..h {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { geometry, data }
    }

    /// Converts a grid whose values are all 0 or 1.
    pub fn from_grid(grid: &VoxelGrid) -> Result<Self> {
        if grid.kind() != GridKind::Binary {
            return Err(Error::NotBinary);
        }
        Ok(Self {
            geometry: *grid.geometry(),
            data: grid.values().iter().map(|&v| v == 1.0).collect(),
        })
    }

    pub fn to_grid(&self) -> VoxelGrid {
        VoxelGrid {
            geometry: self.geometry(),
            values: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            kind: GridKind::Binary,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        let [h, w, _] = self.geometry.dims;
        self.data[i + h * (j + w * k)]
    }

    /// Number of foreground voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    /// Same geometry, different spacing.
    pub fn with_spacing(&self, spacing: [f64; 3]) -> Result<Self> {
        let g = Geometry::new(self.geometry.dims, spacing)?;
        Ok(Self {
            geometry: g,
            data: self.data.clone(),
        })
    }
}

/// Thresholds a probability map: a voxel is foreground iff its value is
/// at least `threshold`.
pub fn binarize(map: &VoxelGrid, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    if map.kind() == GridKind::RawIntensity {
        return Err(Error::NotProbability);
    }
    Ok(BinaryMask {
        geometry: *map.geometry(),
        data: map.values().iter().map(|&v| v >= threshold).collect(),
    })
}

/// Foreground volume in millilitres.
pub fn physical_volume_ml(mask: &BinaryMask) -> f64 {
    mask.count() as f64 * mask.geometry().voxel_volume_mm3() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TumorType {
    Glioblastoma,
    Lgg,
    Meningioma,
    Metastasis,
    Other,
}

impl FromStr for TumorType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glioblastoma" | "gbm" => Ok(TumorType::Glioblastoma),
            "lgg" | "lower_grade_glioma" => Ok(TumorType::Lgg),
            "meningioma" => Ok(TumorType::Meningioma),
            "metastasis" | "metastases" => Ok(TumorType::Metastasis),
            "other" | "" => Ok(TumorType::Other),
            other => Err(format!("unknown tumor type {other:?}")),
        }
    }
}

impl std::fmt::Display for TumorType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TumorType::Glioblastoma => "glioblastoma",
            TumorType::Lgg => "lgg",
            TumorType::Meningioma => "meningioma",
            TumorType::Metastasis => "metastasis",
            TumorType::Other => "other",
        })
    }
}

/// One evaluated patient: ground truth and prediction volumes on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientCase {
    pub patient_id: String,
    pub gt_path: PathBuf,
    pub pred_path: PathBuf,
    pub fold_id: u32,
    pub tumor_type: TumorType,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(dims: [usize; 3], spacing: [f64; 3]) -> Geometry {
        Geometry::new(dims, spacing).unwrap()
    }

    #[test]
    fn binarize_is_inclusive() {
        let g = geom([3, 1, 1], [1.0; 3]);
        let map = VoxelGrid::new(g, vec![0.2, 0.5, 0.9], GridKind::Probability).unwrap();
        let m = binarize(&map, 0.5).unwrap();
        assert_eq!(m.data(), &[false, true, true]);

        let top = VoxelGrid::new(geom([1, 1, 1], [1.0; 3]), vec![1.0], GridKind::Probability).unwrap();
        assert!(binarize(&top, 1.0).unwrap().get(0, 0, 0));
    }

    #[test]
    fn binarize_zero_map() {
        let g = geom([4, 4, 4], [1.0; 3]);
        let map = VoxelGrid::new(g, vec![0.0; 64], GridKind::Probability).unwrap();
        assert_eq!(binarize(&map, 0.5).unwrap().count(), 0);
    }

    #[test]
    fn binarize_rejects_bad_thresholds() {
        let map = VoxelGrid::new(geom([1, 1, 1], [1.0; 3]), vec![0.3], GridKind::Probability).unwrap();
        for t in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(binarize(&map, t), Err(Error::InvalidThreshold(_))));
        }
    }

    #[test]
    fn geometry_checks() {
        let a = geom([4, 4, 4], [1.0, 1.0, 1.0]);
        assert!(check_geometry(&a, &a).is_ok());
        let b = geom([4, 4, 5], [1.0, 1.0, 1.0]);
        assert!(matches!(check_geometry(&a, &b), Err(Error::DimensionMismatch(..))));
        let c = geom([4, 4, 4], [1.00005, 1.0, 1.0]);
        assert!(check_geometry(&a, &c).is_ok());
        let d = geom([4, 4, 4], [1.001, 1.0, 1.0]);
        assert!(matches!(check_geometry(&a, &d), Err(Error::SpacingMismatch(..))));
    }

    #[test]
    fn grid_invariants() {
        assert!(Geometry::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(Geometry::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
        assert!(Geometry::new([1, 1, 1], [1.0, f64::INFINITY, 1.0]).is_err());
        let g = geom([2, 1, 1], [1.0; 3]);
        assert!(VoxelGrid::new(g, vec![0.0], GridKind::Binary).is_err());
        assert!(matches!(
            VoxelGrid::new(g, vec![0.0, 0.5], GridKind::Binary),
            Err(Error::NotBinary)
        ));
        assert!(matches!(
            VoxelGrid::new(g, vec![0.0, 1.5], GridKind::Probability),
            Err(Error::NotProbability)
        ));
        assert_eq!(GridKind::infer(&[0.0, 1.0]), GridKind::Binary);
        assert_eq!(GridKind::infer(&[0.0, 0.4]), GridKind::Probability);
        assert_eq!(GridKind::infer(&[0.0, 4.0]), GridKind::RawIntensity);
    }

    #[test]
    fn volumes_in_ml() {
        let g = geom([10, 10, 10], [1.0; 3]);
        assert_eq!(physical_volume_ml(&BinaryMask::from_fn(g, |_, _, _| true)), 1.0);
        assert_eq!(physical_volume_ml(&BinaryMask::empty(g)), 0.0);
        let h = geom([2, 2, 2], [0.5; 3]);
        let m = BinaryMask::from_fn(h, |_, _, _| true);
        assert!((physical_volume_ml(&m) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn indexing_is_first_axis_fastest() {
        let g = geom([2, 3, 4], [1.0; 3]);
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 2);
        assert_eq!(g.index(0, 0, 1), 6);
        assert_eq!(g.coords(g.index(1, 2, 3)), [1, 2, 3]);
        let m = BinaryMask::from_fn(g, |i, j, k| (i, j, k) == (1, 2, 3));
        assert!(m.get(1, 2, 3));
        assert_eq!(m.count(), 1);
    }
}
