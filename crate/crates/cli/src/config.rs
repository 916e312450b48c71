//! JSON run configuration with one section per command.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use spcp_core::deposition::DepositionParams;
use spcp_core::kmoracle::SyntheticConfig;
use spcp_core::network::{ArchKind, TrainConfig};
use spcp_core::optimizer::NsgaConfig;
use spcp_core::trajectory::DEFAULT_SPACING;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub km_gen: KmGenSection,
    pub simulate: SimulateSection,
    pub build_dataset: BuildDatasetSection,
    pub train: TrainSection,
    pub predict: PredictSection,
    pub eval: EvalSection,
    pub optimize: OptimizeSection,
}

impl RunConfig {
    /// Relative paths in the file are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(dir) = path.parent() {
            cfg.resolve(dir);
        }
        Ok(cfg)
    }

    fn resolve(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = dir.join(&*q);
                }
            }
        };
        fix(&mut self.km_gen.out_dir);
        for p in [
            &mut self.simulate.cloud,
            &mut self.simulate.trajectory,
            &mut self.simulate.out_thickness,
            &mut self.simulate.out_ply,
            &mut self.build_dataset.pre,
            &mut self.build_dataset.post,
            &mut self.build_dataset.thickness,
            &mut self.build_dataset.out_csv,
            &mut self.build_dataset.out_meta,
            &mut self.train.dataset_csv,
            &mut self.train.dataset_meta,
            &mut self.train.out_weights,
            &mut self.train.out_report,
            &mut self.predict.weights,
            &mut self.predict.cloud,
            &mut self.predict.thickness,
            &mut self.predict.out_ply,
            &mut self.eval.weights,
            &mut self.eval.dataset_csv,
            &mut self.eval.dataset_meta,
            &mut self.eval.out_metrics,
            &mut self.optimize.problem,
            &mut self.optimize.out_dir,
        ] {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmGenSection {
    pub synthetic: SyntheticConfig,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub cloud: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub deposition: DepositionParams,
    pub spacing: f64,
    pub normal_k: Option<usize>,
    pub out_thickness: Option<PathBuf>,
    pub out_ply: Option<PathBuf>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            cloud: None,
            trajectory: None,
            deposition: DepositionParams::default(),
            spacing: DEFAULT_SPACING,
            normal_k: None,
            out_thickness: None,
            out_ply: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildDatasetSection {
    pub pre: Option<PathBuf>,
    pub post: Option<PathBuf>,
    pub thickness: Option<PathBuf>,
    pub class_id: Option<u32>,
    pub classes: Option<usize>,
    pub out_csv: Option<PathBuf>,
    pub out_meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dataset_csv: Option<PathBuf>,
    pub dataset_meta: Option<PathBuf>,
    pub arch: Option<ArchKind>,
    pub train: TrainConfig,
    pub out_weights: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub weights: Option<PathBuf>,
    pub arch: Option<ArchKind>,
    pub cloud: Option<PathBuf>,
    pub thickness: Option<PathBuf>,
    pub class_id: Option<u32>,
    pub out_ply: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub weights: Option<PathBuf>,
    pub arch: Option<ArchKind>,
    pub dataset_csv: Option<PathBuf>,
    pub dataset_meta: Option<PathBuf>,
    pub out_metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub problem: Option<PathBuf>,
    pub nsga: NsgaConfig,
    pub out_dir: Option<PathBuf>,
}

/// Flag value if given, else the config value, else an error naming the flag.
pub fn require<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    flag.or(config)
        .ok_or_else(|| anyhow::anyhow!("missing `--{name}` (or the matching config entry)"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 3, "train": {"dataset_csv": "d.csv", "arch": "plain_mlp"}}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.train.dataset_csv, Some(dir.path().join("d.csv")));
        assert_eq!(cfg.train.arch, Some(ArchKind::PlainMlp));
    }

    #[test]
    fn flags_win_over_config() {
        assert_eq!(require(Some(1), Some(2), "x").unwrap(), 1);
        assert_eq!(require(None, Some(2), "x").unwrap(), 2);
        assert!(require::<u32>(None, None, "x").is_err());
    }
}
