//! Oracle suites comparing production kernels against the brute-force
//! references in [`crate::oracle`] on exhaustive or random small inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{connected_components, filter_small, Connectivity};
use crate::oracle;
use crate::surface::{extract_border, HausdorffMode, SymmetricDistances};
use crate::volume::{BinaryMask, Geometry};
use crate::voxel_metrics::{AriVariant, ConfusionCounts, VoxelMetricSet};

/// Confusion-metric tolerance.
pub const CONFUSION_TOLERANCE: f64 = 1e-9;
/// Failure messages kept per suite.
const MAX_REPORTED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Confusion,
    Surface,
    Components,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Confusion, Suite::Surface, Suite::Components];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Confusion => "confusion",
            Suite::Surface => "surface",
            Suite::Components => "components",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub failure_count: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite, tolerance: f64) -> Self {
        Self {
            suite,
            cases: 0,
            max_deviation: 0.0,
            tolerance,
            failure_count: 0,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, msg: impl FnOnce() -> String) {
        self.failure_count += 1;
        if self.failures.len() < MAX_REPORTED {
            self.failures.push(msg());
        }
    }

    /// Records a numeric comparison; a one-sided undefined value counts as
    /// an infinite deviation.
    fn compare(&mut self, got: Option<f64>, want: Option<f64>, what: impl FnOnce() -> String) {
        let dev = oracle::deviation(got, want).unwrap_or(f64::INFINITY);
        self.max_deviation = self.max_deviation.max(dev);
        if dev > self.tolerance {
            self.fail(|| format!("{}: production {:?}, oracle {:?}", what(), got, want));
        }
    }

    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub suites: Vec<SuiteReport>,
}

impl SelftestReport {
    /// True when every selected suite passed; an empty selection passes.
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }
}

/// Random binary masks with dims drawn from `1..=max_dim` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSampling {
    pub samples: usize,
    pub max_dim: usize,
    /// Foreground probability; `None` draws one per sample.
    pub density: Option<f64>,
    /// Draw spacing per axis from `[0.5, 3.0]` mm instead of 1 mm.
    pub anisotropic: bool,
    pub seed: u64,
}

impl MaskSampling {
    fn geometry(&self, rng: &mut impl Rng) -> Geometry {
        let dims = [0; 3].map(|_| rng.gen_range(1..=self.max_dim));
        let spacing = [0; 3].map(|_| {
            if self.anisotropic {
                rng.gen_range(0.5..=3.0)
            } else {
                1.0
            }
        });
        Geometry::new(dims, spacing).expect("positive dims and spacing")
    }

    fn mask(&self, rng: &mut impl Rng, geometry: Geometry, nonempty: bool) -> BinaryMask {
        let p = self.density.unwrap_or_else(|| rng.gen_range(0.1..=0.9));
        let mut data: Vec<bool> = (0..geometry.len()).map(|_| rng.gen_bool(p)).collect();
        if nonempty && !data.iter().any(|&b| b) {
            let i = rng.gen_range(0..data.len());
            data[i] = true;
        }
        BinaryMask::new(geometry, data).expect("length matches")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestOptions {
    pub confusion_max_x: u64,
    pub surface: MaskSampling,
    pub components: MaskSampling,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            confusion_max_x: 12,
            surface: MaskSampling {
                samples: 300,
                max_dim: 6,
                density: None,
                anisotropic: true,
                seed: 0x5eed_0001,
            },
            components: MaskSampling {
                samples: 1000,
                max_dim: 5,
                density: None,
                anisotropic: false,
                seed: 0x5eed_0002,
            },
        }
    }
}

pub type ConfusionEvaluator<'a> = &'a dyn Fn(&ConfusionCounts) -> [Option<f64>; 18];

/// The production voxel-metric panel as a [`ConfusionEvaluator`].
pub fn production_metrics(c: &ConfusionCounts) -> [Option<f64>; 18] {
    VoxelMetricSet::from_counts(c, AriVariant::default()).values()
}

/// Every (tp, tn, fp, fn) with `1 <= x <= max_x`, compared metric by metric.
pub fn confusion_suite(max_x: u64, evaluate: ConfusionEvaluator) -> SuiteReport {
    let mut r = SuiteReport::new(Suite::Confusion, CONFUSION_TOLERANCE);
    for x in 1..=max_x {
        for tp in 0..=x {
            for fp in 0..=x - tp {
                for fn_ in 0..=x - tp - fp {
                    let c = ConfusionCounts::new(tp, x - tp - fp - fn_, fp, fn_);
                    let got = evaluate(&c);
                    let want = oracle::confusion_metrics(&c);
                    for (m, name) in VoxelMetricSet::NAMES.iter().enumerate() {
                        r.compare(got[m], want[m], || {
                            format!("{name} at tp={} tn={} fp={} fn={}", c.tp, c.tn, c.fp, c.fn_)
                        });
                    }
                    r.cases += 1;
                }
            }
        }
    }
    r
}

/// Border sets, HD95 and ASSD against exhaustive search; exact equality.
pub fn surface_suite(sampling: &MaskSampling) -> SuiteReport {
    let mut r = SuiteReport::new(Suite::Surface, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    for sample in 0..sampling.samples {
        let g = sampling.geometry(&mut rng);
        let gt = sampling.mask(&mut rng, g, true);
        let pred = sampling.mask(&mut rng, g, true);
        r.cases += 1;

        let (bg, bp) = (extract_border(&gt), extract_border(&pred));
        if bg.points != oracle::border_points(&gt) || bp.points != oracle::border_points(&pred) {
            r.fail(|| format!("border set differs in sample {sample} (dims {:?})", g.dims));
            continue;
        }
        let want = oracle::surface_metrics(&gt, &pred);
        let got = SymmetricDistances::between(&bg, &bp).ok();
        let got_hd = got.as_ref().map(|d| d.hd95(HausdorffMode::Pooled));
        let got_assd = got.as_ref().map(|d| d.assd());
        r.compare(got_hd, want.map(|w| w.0), || {
            format!("hd95 in sample {sample} (dims {:?})", g.dims)
        });
        r.compare(got_assd, want.map(|w| w.1), || {
            format!("assd in sample {sample} (dims {:?})", g.dims)
        });
    }
    r
}

/// Labelings against flood fill for 6/18/26 connectivity, plus
/// conservation and size-filter idempotence.
pub fn component_suite(sampling: &MaskSampling) -> SuiteReport {
    let mut r = SuiteReport::new(Suite::Components, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    for sample in 0..sampling.samples {
        let g = sampling.geometry(&mut rng);
        let mask = sampling.mask(&mut rng, g, false);
        let min_voxels = rng.gen_range(0..=6);
        for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
            r.cases += 1;
            let l = connected_components(&mask, conn);
            if l.labels() != oracle::flood_fill_labels(&mask, conn).as_slice() {
                r.fail(|| format!("labels differ, connectivity {} sample {sample}", conn.count()));
                r.max_deviation = f64::INFINITY;
                continue;
            }
            let total: usize = l.components().iter().map(|c| c.voxels).sum();
            if total != mask.count() {
                r.fail(|| {
                    format!(
                        "voxel count not conserved, connectivity {} sample {sample}",
                        conn.count()
                    )
                });
            }
            let once = filter_small(&l, min_voxels);
            if filter_small(&once, min_voxels) != once {
                r.fail(|| format!("filter not idempotent at {min_voxels}, sample {sample}"));
            }
        }
    }
    r
}

pub fn run_selftest(suites: &[Suite], options: &SelftestOptions) -> SelftestReport {
    run_selftest_with(suites, options, &production_metrics)
}

/// As [`run_selftest`], with the confusion suite checking `evaluate`.
pub fn run_selftest_with(suites: &[Suite], options: &SelftestOptions, evaluate: ConfusionEvaluator) -> SelftestReport {
    SelftestReport {
        suites: suites
            .iter()
            .map(|s| match s {
                Suite::Confusion => confusion_suite(options.confusion_max_x, evaluate),
                Suite::Surface => surface_suite(&options.surface),
                Suite::Components => component_suite(&options.components),
            })
            .collect(),
    }
}
