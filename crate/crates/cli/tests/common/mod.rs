#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segeval_core::nifti::{write_nifti, DataType};
use segeval_core::synthetic::sphere_case;
use segeval_core::volume::{BinaryMask, Geometry, VoxelGrid};

pub fn write_mask(path: &Path, mask: &BinaryMask) {
    write_nifti(path, &mask.to_grid(), DataType::U8).unwrap();
}

pub fn write_map(path: &Path, grid: &VoxelGrid) {
    write_nifti(path, grid, DataType::F64).unwrap();
}

/// A study directory: volumes, `manifest.csv`, `config.txt`, and `out/`
/// for reports.
pub struct Study {
    pub dir: tempfile::TempDir,
    rows: Vec<String>,
}

impl Study {
    pub fn new() -> Self {
        Study {
            dir: tempfile::tempdir().unwrap(),
            rows: Vec::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn out(&self) -> PathBuf {
        self.path("out")
    }

    /// Adds a manifest row with explicit relative paths.
    pub fn add_row(&mut self, id: &str, fold: Option<u32>, gt: &str, pred: &str, tumor: &str) {
        let fold = fold.map_or_else(String::new, |f| f.to_string());
        self.rows.push(format!("{id},{fold},{gt},{pred},{tumor}"));
    }

    pub fn add_masks(&mut self, id: &str, fold: Option<u32>, gt: &BinaryMask, pred: &BinaryMask) {
        let (g, p) = (format!("{id}_gt.nii.gz"), format!("{id}_pred.nii.gz"));
        write_mask(&self.path(&g), gt);
        write_mask(&self.path(&p), pred);
        self.add_row(id, fold, &g, &p, "");
    }

    /// Adds a seeded sphere case with a probability-map prediction.
    pub fn add_sphere(&mut self, id: &str, fold: Option<u32>, tumor: &str, seed: u64, index: u64, geometry: Geometry) {
        let case = sphere_case(seed, index, geometry);
        let (g, p) = (format!("{id}_gt.nii.gz"), format!("{id}_pred.nii"));
        write_mask(&self.path(&g), &case.gt);
        write_map(&self.path(&p), &case.probability);
        self.add_row(id, fold, &g, &p, tumor);
    }

    /// Writes manifest and config; `extra` lines are appended to the config.
    pub fn finish(&self, extra: &str) -> PathBuf {
        let manifest = format!(
            "patient_id,fold,gt_path,pred_path,tumor_type\n{}\n",
            self.rows.join("\n")
        );
        std::fs::write(self.path("manifest.csv"), manifest).unwrap();
        let config = self.path("config.txt");
        std::fs::write(&config, format!("manifest = manifest.csv\noutput_dir = out\n{extra}")).unwrap();
        config
    }

    pub fn read_out(&self, name: &str) -> String {
        std::fs::read_to_string(self.out().join(name)).unwrap()
    }
}

/// `n` sphere cases with folds `i % folds` and rotating tumour types.
pub fn sphere_study(n: usize, folds: u32, seed: u64, geometry: Geometry) -> Study {
    const TYPES: [&str; 3] = ["glioblastoma", "meningioma", "metastasis"];
    let mut s = Study::new();
    for i in 0..n {
        s.add_sphere(
            &format!("case_{i:03}"),
            Some(i as u32 % folds),
            TYPES[i % TYPES.len()],
            seed,
            i as u64,
            geometry,
        );
    }
    s
}

pub fn segeval(args: &[&str], workers: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_segeval"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("SEGEVAL_WORKERS", w.to_string()),
        None => cmd.env_remove("SEGEVAL_WORKERS"),
    };
    cmd.output().unwrap()
}

pub fn run_config(config: &Path, workers: Option<usize>) -> Output {
    segeval(&["run", "--config", config.to_str().unwrap()], workers)
}

/// Parsed CSV: header and records.
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

pub fn column<'a>(header: &[String], row: &'a [String], name: &str) -> &'a str {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    &row[i]
}
