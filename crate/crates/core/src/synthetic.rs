//! Seeded synthetic cases: spherical lesions with perturbed predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::volume::{BinaryMask, Geometry, GridKind, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    /// Centre in millimetres.
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    /// Distance from a voxel position to the centre, in radii.
    fn relative_distance(&self, p: [f64; 3]) -> f64 {
        let d2: f64 = (0..3).map(|a| (p[a] - self.center[a]).powi(2)).sum();
        d2.sqrt() / self.radius
    }
}

pub fn sphere_mask(geometry: Geometry, spheres: &[Sphere]) -> BinaryMask {
    BinaryMask::from_fn(geometry, |i, j, k| {
        let p = geometry.position([i, j, k]);
        spheres.iter().any(|s| s.relative_distance(p) <= 1.0)
    })
}

/// Soft map that crosses 0.5 on each sphere's surface and stays below 1.
pub fn sphere_probability(geometry: Geometry, spheres: &[Sphere], rng: &mut impl Rng, noise: f64) -> VoxelGrid {
    let mut values = Vec::with_capacity(geometry.len());
    for idx in 0..geometry.len() {
        let p = geometry.position(geometry.coords(idx));
        let u = spheres
            .iter()
            .map(|s| s.relative_distance(p))
            .fold(f64::INFINITY, f64::min);
        let base = 1.0 / (1.0 + (6.0 * (u - 1.0)).exp());
        let jitter = if noise > 0.0 {
            rng.gen_range(-noise..=noise)
        } else {
            0.0
        };
        values.push((base + jitter).clamp(0.0, 0.999));
    }
    VoxelGrid::new(geometry, values, GridKind::Probability).expect("values lie in [0, 1)")
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub gt: BinaryMask,
    pub probability: VoxelGrid,
}

impl SyntheticCase {
    /// Prediction at the 0.5 operating point.
    pub fn binary_prediction(&self) -> BinaryMask {
        crate::volume::binarize(&self.probability, 0.5).expect("probability grid")
    }
}

fn random_sphere(rng: &mut impl Rng, extent: [f64; 3], radius: f64) -> Sphere {
    let center = [0, 1, 2].map(|a| {
        let lo = radius.min(extent[a] / 2.0);
        let hi = (extent[a] - radius).max(lo);
        rng.gen_range(lo..=hi)
    });
    Sphere { center, radius }
}

/// One case: a main lesion, sometimes a satellite, and a prediction with
/// shifted centres, rescaled radii, occasional misses and spurious blobs.
pub fn perturbed_sphere_case(rng: &mut impl Rng, geometry: Geometry) -> SyntheticCase {
    let extent = [0, 1, 2].map(|a| (geometry.dims[a] - 1) as f64 * geometry.spacing[a]);
    let size = extent.iter().copied().fold(f64::INFINITY, f64::min);
    let radius = size * rng.gen_range(0.12..0.25);
    let main = random_sphere(rng, extent, radius);
    let mut gt = vec![main];
    let mut pred = Vec::new();

    let shift = |rng: &mut ChaCha8Rng, s: &Sphere, amount: f64| Sphere {
        center: s.center.map(|c| c + rng.gen_range(-amount..=amount) * s.radius),
        radius: s.radius * rng.gen_range(0.7..1.3),
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());

    if local.gen_bool(0.05) {
        pred.push(random_sphere(&mut local, extent, main.radius));
    } else {
        pred.push(shift(&mut local, &main, 0.5));
    }
    if local.gen_bool(0.3) {
        let sat = random_sphere(&mut local, extent, main.radius * 0.45);
        gt.push(sat);
        if local.gen_bool(0.5) {
            pred.push(shift(&mut local, &sat, 0.3));
        }
    }
    if local.gen_bool(0.2) {
        pred.push(random_sphere(&mut local, extent, main.radius * 0.4));
    }

    SyntheticCase {
        gt: sphere_mask(geometry, &gt),
        probability: sphere_probability(geometry, &pred, &mut local, 0.02),
    }
}

/// `n` independent cases from one seed; case `i` depends only on
/// `(seed, i)`.
pub fn sphere_cohort(n: usize, seed: u64, geometry: Geometry) -> Vec<SyntheticCase> {
    (0..n).map(|i| sphere_case(seed, i as u64, geometry)).collect()
}

pub fn sphere_case(seed: u64, index: u64, geometry: Geometry) -> SyntheticCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut case = perturbed_sphere_case(&mut rng, geometry);
    if !case.gt.any() {
        let c = geometry.dims.map(|d| d / 2);
        let mut data = case.gt.data().to_vec();
        data[geometry.index(c[0], c[1], c[2])] = true;
        case.gt = BinaryMask::new(geometry, data).expect("same geometry");
    }
    case
}
