//! Training records built from before/after clouds.
//!
//! Each covered after-spray point becomes one record pairing the color of the
//! closest before-spray point with its own painted color, its simulated
//! thickness and its paint class. Thickness is min-max normalized with stats
//! kept in [`DatasetMeta`] so inference reuses exactly the same affine map.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deposition::{coverage_mask, ThicknessField};
use crate::pointcloud::{ColorPointCloud, KdTree, Rgb8};
use crate::{seed, Error, Result};

/// Split proportions in percent: train, validation, test.
pub const SPLIT_PERCENT: [usize; 3] = [90, 5, 5];
pub const MIN_SPLIT_RECORDS: usize = 20;

/// One covered point before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub base: Rgb8,
    pub thickness: f64,
    pub class_id: u32,
    pub painted: Rgb8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaintSampleRecord {
    pub base: [f64; 3],
    pub thick_norm: f64,
    pub class_id: u32,
    pub painted: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Split {
    Train = 0,
    Validation = 1,
    Test = 2,
}

/// Affine thickness normalization `(t - min) / (max - min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThickNorm {
    pub thick_min: f64,
    pub thick_max: f64,
}

impl ThickNorm {
    pub fn new(thick_min: f64, thick_max: f64) -> Result<Self> {
        if !(thick_max > thick_min) || !thick_min.is_finite() || !thick_max.is_finite() {
            return Err(Error::domain(format!(
                "degenerate thickness range [{thick_min}, {thick_max}]"
            )));
        }
        Ok(Self { thick_min, thick_max })
    }

    /// Not clamped: values outside the training range map outside [0, 1].
    pub fn apply(&self, t: f64) -> f64 {
        (t - self.thick_min) / (self.thick_max - self.thick_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub thick_min: f64,
    pub thick_max: f64,
    pub classes: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Per-record split part (0 train, 1 validation, 2 test).
    #[serde(default)]
    pub split: Option<Vec<u8>>,
}

impl DatasetMeta {
    pub fn norm(&self) -> ThickNorm {
        ThickNorm {
            thick_min: self.thick_min,
            thick_max: self.thick_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub records: Vec<PaintSampleRecord>,
    pub meta: DatasetMeta,
}

/// Records for every covered post point, all labeled with `class_id`.
pub fn build_records(
    pre: &ColorPointCloud,
    post: &ColorPointCloud,
    field: &ThicknessField,
    class_id: u32,
) -> Result<Vec<RawRecord>> {
    build_records_with_classes(pre, post, field, &vec![class_id; post.len()])
}

/// As [`build_records`] with a paint class per post point.
pub fn build_records_with_classes(
    pre: &ColorPointCloud,
    post: &ColorPointCloud,
    field: &ThicknessField,
    classes: &[u32],
) -> Result<Vec<RawRecord>> {
    if field.len() != post.len() || classes.len() != post.len() {
        return Err(Error::domain(format!(
            "post cloud has {} points but {} thicknesses and {} classes",
            post.len(),
            field.len(),
            classes.len()
        )));
    }
    let covered = coverage_mask(field);
    if covered.is_empty() {
        log::warn!("no covered points; the record set is empty");
        return Ok(Vec::new());
    }
    let tree = KdTree::from_cloud(pre);
    covered
        .par_iter()
        .map(|&j| {
            let t = tree.nearest(&post.points()[j])?;
            Ok(RawRecord {
                base: pre.colors()[t],
                thickness: field.values()[j],
                class_id: classes[j],
                painted: post.colors()[j],
            })
        })
        .collect()
}

/// Normalize thickness and colors. `classes` is the one-hot width C; every
/// class id must be below it.
pub fn normalize(records: &[RawRecord], classes: usize) -> Result<DatasetBundle> {
    let (lo, hi) = records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.thickness), hi.max(r.thickness))
        });
    let norm = ThickNorm::new(lo, hi)
        .map_err(|_| Error::domain("normalization needs at least two distinct thickness values"))?;
    if let Some(r) = records.iter().find(|r| r.class_id as usize >= classes) {
        return Err(Error::domain(format!("class {} >= class count {classes}", r.class_id)));
    }
    let records = records
        .iter()
        .map(|r| PaintSampleRecord {
            base: r.base.to_norm(),
            thick_norm: norm.apply(r.thickness),
            class_id: r.class_id,
            painted: r.painted.to_norm(),
        })
        .collect();
    Ok(DatasetBundle {
        records,
        meta: DatasetMeta {
            thick_min: norm.thick_min,
            thick_max: norm.thick_max,
            classes,
            seed: None,
            split: None,
        },
    })
}

/// Part sizes for `n` records by largest-remainder rounding of [`SPLIT_PERCENT`].
pub fn split_sizes(n: usize) -> [usize; 3] {
    let mut sizes = SPLIT_PERCENT.map(|p| n * p / 100);
    let mut remainders: Vec<(usize, usize)> = SPLIT_PERCENT
        .iter()
        .enumerate()
        .map(|(i, p)| ((n * p) % 100, i))
        .collect();
    // Largest remainder first; earlier part wins ties.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = n - sizes.iter().sum::<usize>();
    for &(_, i) in remainders.iter().take(missing) {
        sizes[i] += 1;
    }
    sizes
}

/// Seeded random assignment of records to train / validation / test.
pub fn split(bundle: &mut DatasetBundle, seed_value: u64) -> Result<()> {
    let n = bundle.records.len();
    if n < MIN_SPLIT_RECORDS {
        return Err(Error::domain(format!(
            "need at least {MIN_SPLIT_RECORDS} records to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_value, "split"));
    let [train, val, _] = split_sizes(n);
    let mut parts = vec![Split::Test as u8; n];
    for (rank, &i) in order.iter().enumerate() {
        parts[i] = if rank < train {
            Split::Train as u8
        } else if rank < train + val {
            Split::Validation as u8
        } else {
            Split::Test as u8
        };
    }
    bundle.meta.seed = Some(seed_value);
    bundle.meta.split = Some(parts);
    Ok(())
}

impl DatasetBundle {
    pub fn norm(&self) -> ThickNorm {
        self.meta.norm()
    }

    /// Records in `part`, in dataset order. Empty when no split is assigned.
    pub fn part(&self, part: Split) -> Vec<PaintSampleRecord> {
        match &self.meta.split {
            Some(parts) => self
                .records
                .iter()
                .zip(parts)
                .filter_map(|(r, &p)| (p == part as u8).then_some(*r))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,g,b,thick_norm,class,pr,pg,pb\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.base[0], r.base[1], r.base[2], r.thick_norm, r.class_id, r.painted[0], r.painted[1], r.painted[2]
            );
        }
        out
    }

    pub fn from_csv(text: &str, meta: DatasetMeta) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "r,g,b,thick_norm,class,pr,pg,pb" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header `r,g,b,thick_norm,class,pr,pg,pb`".into(),
                })
            }
        }
        let mut records = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse {
                line: n + 1,
                msg: format!("{what} in `{line}`"),
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(bad("expected 8 fields"));
            }
            let f = |i: usize| fields[i].parse::<f64>().map_err(|_| bad("bad number"));
            records.push(PaintSampleRecord {
                base: [f(0)?, f(1)?, f(2)?],
                thick_norm: f(3)?,
                class_id: fields[4].parse().map_err(|_| bad("bad class"))?,
                painted: [f(5)?, f(6)?, f(7)?],
            });
        }
        if let Some(split) = &meta.split {
            if split.len() != records.len() {
                return Err(Error::Format(format!(
                    "metadata split lists {} records, CSV has {}",
                    split.len(),
                    records.len()
                )));
            }
        }
        Ok(Self { records, meta })
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<()> {
        let (csv_path, meta_path) = (csv_path.as_ref(), meta_path.as_ref());
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let meta = serde_json::to_string(&self.meta)?;
        std::fs::write(meta_path, meta).map_err(|e| Error::io(meta_path, e))
    }

    pub fn load(csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<Self> {
        let (csv_path, meta_path) = (csv_path.as_ref(), meta_path.as_ref());
        let meta_text = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&meta_text)?;
        let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        Self::from_csv(&text, meta)
    }
}

pub fn encode_class(class_id: u32, classes: usize) -> Result<Vec<f64>> {
    let idx = class_id as usize;
    if idx >= classes {
        return Err(Error::domain(format!("class {class_id} out of range for {classes} classes")));
    }
    let mut v = vec![0.0; classes];
    v[idx] = 1.0;
    Ok(v)
}
