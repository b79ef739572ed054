//! Run configuration: a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use segeval_core::cohort::{
    default_correlation_metrics, is_known_metric, Binning, CorrelationMethod, EvalSettings, DEFAULT_BINS,
};
use segeval_core::instance::{Connectivity, PairingMode};
use segeval_core::surface::HausdorffMode;
use segeval_core::voxel_metrics::AriVariant;

/// Environment variable overriding `workers`.
pub const WORKERS_ENV: &str = "SEGEVAL_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub settings: EvalSettings,
    pub workers: usize,
    /// Metrics for the cohort summary and the correlation matrix.
    pub metrics: Vec<String>,
    pub correlation: CorrelationMethod,
    pub binning: Binning,
    pub n_bins: usize,
}

const KEYS: [&str; 14] = [
    "manifest",
    "output_dir",
    "thresholds",
    "detection_threshold",
    "min_component_voxels",
    "connectivity",
    "workers",
    "metrics",
    "pairing",
    "hd95_mode",
    "ari",
    "correlation",
    "binning",
    "n_bins",
];

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_workers(key: &str, value: &str) -> Result<usize, ConfigError> {
    match value.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(invalid(key, format!("`{value}` is not a positive integer"))),
    }
}

impl RunConfig {
    /// Reads a config file; `SEGEVAL_WORKERS` overrides `workers`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let env = std::env::var(WORKERS_ENV).ok();
        Self::parse(&text, base, env.as_deref())
    }

    pub fn parse(text: &str, base: &Path, env_workers: Option<&str>) -> Result<Self, ConfigError> {
        let mut entries: Vec<(&str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(ConfigError::DuplicateKey {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            entries.push((key, value.trim()));
        }
        let get = |k: &str| entries.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
        let path = |k: &'static str| -> Result<PathBuf, ConfigError> {
            let v = get(k).filter(|v| !v.is_empty()).ok_or(ConfigError::Missing(k))?;
            Ok(base.join(v))
        };

        let mut settings = EvalSettings::default();
        if let Some(v) = get("thresholds") {
            if v != "default" {
                settings.thresholds = parse_list(v)
                    .iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| invalid("thresholds", format!("`{t}` is not a number")))
                    })
                    .collect::<Result<_, _>>()?;
            }
        }
        if let Some(v) = get("detection_threshold") {
            settings.detection_threshold = v
                .parse()
                .map_err(|_| invalid("detection_threshold", format!("`{v}` is not a number")))?;
        }
        if let Some(v) = get("min_component_voxels") {
            settings.min_component_voxels = v
                .parse()
                .map_err(|_| invalid("min_component_voxels", format!("`{v}` is not a count")))?;
        }
        if let Some(v) = get("connectivity") {
            settings.connectivity = v
                .parse()
                .ok()
                .and_then(Connectivity::from_count)
                .ok_or_else(|| invalid("connectivity", "expected 6, 18 or 26"))?;
        }
        if let Some(v) = get("pairing") {
            settings.pairing = match v {
                "greedy" => PairingMode::Greedy,
                "optimal" => PairingMode::Optimal,
                _ => return Err(invalid("pairing", "expected greedy or optimal")),
            };
        }
        if let Some(v) = get("hd95_mode") {
            settings.hausdorff = match v {
                "pooled" => HausdorffMode::Pooled,
                "max_directed" => HausdorffMode::MaxOfDirected,
                _ => return Err(invalid("hd95_mode", "expected pooled or max_directed")),
            };
        }
        if let Some(v) = get("ari") {
            settings.ari = match v {
                "pair_counting" => AriVariant::PairCounting,
                "as_printed" => AriVariant::AsPrinted,
                _ => return Err(invalid("ari", "expected pair_counting or as_printed")),
            };
        }
        settings.validate().map_err(|e| invalid("thresholds", e.to_string()))?;

        let workers = match (env_workers, get("workers")) {
            (Some(env), _) => parse_workers(WORKERS_ENV, env)?,
            (None, Some(v)) => parse_workers("workers", v)?,
            (None, None) => default_workers(),
        };

        let metrics = match get("metrics") {
            Some(v) if v != "default" => {
                let list = parse_list(v);
                if list.is_empty() {
                    return Err(invalid("metrics", "empty metric list"));
                }
                if let Some(bad) = list.iter().find(|m| !is_known_metric(m)) {
                    return Err(invalid("metrics", format!("unknown metric `{bad}`")));
                }
                list
            }
            _ => default_correlation_metrics(),
        };

        let correlation = match get("correlation").unwrap_or("pearson") {
            "pearson" => CorrelationMethod::Pearson,
            "spearman" => CorrelationMethod::Spearman,
            _ => return Err(invalid("correlation", "expected pearson or spearman")),
        };
        let binning = match get("binning").unwrap_or("equal_count") {
            "equal_count" => Binning::EqualCount,
            "equal_width" => Binning::EqualWidth,
            _ => return Err(invalid("binning", "expected equal_count or equal_width")),
        };
        let n_bins = match get("n_bins") {
            Some(v) => match v.parse::<usize>() {
                Ok(n) if n >= 1 => n,
                _ => return Err(invalid("n_bins", format!("`{v}` is not a positive integer"))),
            },
            None => DEFAULT_BINS,
        };

        Ok(RunConfig {
            manifest: path("manifest")?,
            output_dir: path("output_dir")?,
            settings,
            workers,
            metrics,
            correlation,
            binning,
            n_bins,
        })
    }
}
