//! Trajectory optimization: decision-vector coding, the two objectives, and
//! archive output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deposition::{simulate_thickness, DepositionParams};
use crate::network::{predict_cloud, Model};
use crate::pointcloud::{ColorPointCloud, KdTree};
use crate::trajectory::{
    apply_control, save_trajectory_file, ControlBounds, ControlPoints, DiscretizedTrajectory, PathPolyline,
    TrajectoryFile, DEFAULT_SPACING,
};
use crate::{Error, Result};

use super::nsga::{nsga2_run, Individual, NsgaConfig, NsgaResult};

pub const DEFAULT_CONTROL_POINTS: usize = 8;
/// Margin that turns the open height and speed bounds into closed ones.
pub const BOUND_MARGIN: f64 = 1e-9;

/// Desired colors and the paint class sprayed at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSample {
    pub cloud: ColorPointCloud,
    pub classes: Vec<u32>,
}

impl TargetSample {
    pub fn new(cloud: ColorPointCloud, classes: Vec<u32>) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::domain("target sample is empty"));
        }
        if classes.len() != cloud.len() {
            return Err(Error::domain(format!(
                "target has {} points but {} classes",
                cloud.len(),
                classes.len()
            )));
        }
        Ok(Self { cloud, classes })
    }

    pub fn single_class(cloud: ColorPointCloud, class: u32) -> Result<Self> {
        let n = cloud.len();
        Self::new(cloud, vec![class; n])
    }
}

/// Decision vector `[heights, speeds, confidences]`, each of length `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector(pub Vec<f64>);

impl ControlVector {
    pub fn encode(controls: &ControlPoints) -> Self {
        let mut x = controls.heights.clone();
        x.extend(&controls.speeds);
        x.extend(&controls.confidences);
        Self(x)
    }

    pub fn decode(&self, count: usize) -> Result<ControlPoints> {
        if self.0.len() != 3 * count {
            return Err(Error::domain(format!(
                "decision vector has {} genes, expected {}",
                self.0.len(),
                3 * count
            )));
        }
        Ok(ControlPoints {
            heights: self.0[..count].to_vec(),
            speeds: self.0[count..2 * count].to_vec(),
            confidences: self.0[2 * count..].to_vec(),
        })
    }
}

pub struct TrajectoryProblem {
    path: PathPolyline,
    cloud: ColorPointCloud,
    deposition: DepositionParams,
    model: Model,
    target: TargetSample,
    bounds: ControlBounds,
    control_points: usize,
    spacing: f64,
    base_classes: Vec<u32>,
    target_to_base: Vec<usize>,
}

impl TrajectoryProblem {
    /// `cloud` must carry normals. Target points are matched to their nearest
    /// base point, and each base point takes the class of its nearest target
    /// point.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        path: PathPolyline,
        cloud: ColorPointCloud,
        deposition: DepositionParams,
        model: Model,
        target: TargetSample,
        bounds: ControlBounds,
        control_points: usize,
        spacing: f64,
    ) -> Result<Self> {
        if control_points < 2 {
            return Err(Error::Config("need at least 2 control points".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::Config(format!("spacing must be positive, got {spacing}")));
        }
        for (name, (lo, hi)) in [("height", bounds.height), ("speed", bounds.speed)] {
            if !(lo.is_finite() && hi.is_finite() && hi - lo > 2.0 * BOUND_MARGIN) {
                return Err(Error::Config(format!("{name} bounds [{lo}, {hi}] are empty")));
            }
        }
        if !(bounds.speed.0 >= 0.0) {
            return Err(Error::Config("speed bounds must be non-negative".into()));
        }
        if cloud.normals().is_none() {
            return Err(Error::domain("base cloud has no normals"));
        }
        deposition.validate()?;
        if let Some(&c) = target.classes.iter().find(|&&c| c as usize >= model.classes()) {
            return Err(Error::Model(format!("target class {c} not known to the model")));
        }
        let base_tree = KdTree::from_cloud(&cloud);
        let target_tree = KdTree::from_cloud(&target.cloud);
        let target_to_base = target
            .cloud
            .points()
            .iter()
            .map(|p| base_tree.nearest(p))
            .collect::<Result<Vec<_>>>()?;
        let base_classes = cloud
            .points()
            .iter()
            .map(|p| target_tree.nearest(p).map(|j| target.classes[j]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            path,
            cloud,
            deposition,
            model,
            target,
            bounds,
            control_points,
            spacing,
            base_classes,
            target_to_base,
        })
    }

    pub fn with_defaults(
        path: PathPolyline,
        cloud: ColorPointCloud,
        deposition: DepositionParams,
        model: Model,
        target: TargetSample,
        bounds: ControlBounds,
    ) -> Result<Self> {
        Self::new(path, cloud, deposition, model, target, bounds, DEFAULT_CONTROL_POINTS, DEFAULT_SPACING)
    }

    pub fn control_points(&self) -> usize {
        self.control_points
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn base_cloud(&self) -> &ColorPointCloud {
        &self.cloud
    }

    pub fn target(&self) -> &TargetSample {
        &self.target
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Per-gene closed bounds: heights and speeds shrunk by `BOUND_MARGIN`,
    /// confidences in [0, 1].
    pub fn gene_bounds(&self) -> Vec<(f64, f64)> {
        let k = self.control_points;
        let shrink = |(lo, hi): (f64, f64)| (lo + BOUND_MARGIN, hi - BOUND_MARGIN);
        let mut b = vec![shrink(self.bounds.height); k];
        b.extend(vec![shrink(self.bounds.speed); k]);
        b.extend(vec![(0.0, 1.0); k]);
        b
    }

    pub fn trajectory(&self, x: &[f64]) -> Result<DiscretizedTrajectory> {
        let controls = ControlVector(x.to_vec()).decode(self.control_points)?;
        apply_control(&self.path, &controls, &self.bounds, self.spacing).map_err(|e| e.at("trajectory"))
    }

    /// Predicted appearance of the base cloud after spraying along `x`.
    pub fn predicted_cloud(&self, x: &[f64]) -> Result<ColorPointCloud> {
        let traj = self.trajectory(x)?;
        self.predict_for(&traj)
    }

    fn predict_for(&self, traj: &DiscretizedTrajectory) -> Result<ColorPointCloud> {
        let field = simulate_thickness(traj, &self.cloud, &self.deposition).map_err(|e| e.at("deposition"))?;
        predict_cloud(&self.model, &self.cloud, &field, &self.base_classes).map_err(|e| e.at("prediction"))
    }

    /// Color RMSE against the target (normalized units) and total cycle time.
    pub fn evaluate(&self, x: &[f64]) -> Result<[f64; 2]> {
        let traj = self.trajectory(x)?;
        let predicted = self.predict_for(&traj)?;
        let f1 = self.color_rmse(&predicted);
        Ok([f1, traj.total_time()])
    }

    /// RMSE between the target colors and `predicted` at each target point's
    /// matched base point.
    pub fn color_rmse(&self, predicted: &ColorPointCloud) -> f64 {
        let colors = predicted.colors();
        let sum: f64 = self
            .target
            .cloud
            .colors()
            .iter()
            .zip(&self.target_to_base)
            .map(|(t, &i)| {
                let p = colors[i].to_norm();
                let t = t.to_norm();
                (0..3).map(|c| (p[c] - t[c]).powi(2)).sum::<f64>()
            })
            .sum();
        (sum / self.target_to_base.len() as f64).sqrt()
    }

    pub fn optimize(&self, cfg: &NsgaConfig, initial: &[ControlPoints]) -> Result<NsgaResult> {
        let seeds: Vec<Vec<f64>> = initial.iter().map(|c| ControlVector::encode(c).0).collect();
        nsga2_run(&self.gene_bounds(), cfg, &seeds, |x| self.evaluate(x))
    }

    pub fn archive(&self, result: &NsgaResult) -> Result<OptimizationArchive> {
        let members = result
            .archive()
            .into_iter()
            .map(|ind: &Individual| {
                Ok(ArchiveMember {
                    x: ind.x.clone(),
                    f1: ind.objectives[0],
                    f2: ind.objectives[1],
                    controls: ControlVector(ind.x.clone()).decode(self.control_points)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OptimizationArchive { members })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMember {
    pub x: Vec<f64>,
    pub f1: f64,
    pub f2: f64,
    pub controls: ControlPoints,
}

/// Final first front, ordered by increasing f1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationArchive {
    pub members: Vec<ArchiveMember>,
}

impl OptimizationArchive {
    pub fn pareto_csv(&self) -> String {
        let mut out = String::from("f1,f2\n");
        for m in &self.members {
            let _ = writeln!(out, "{},{}", m.f1, m.f2);
        }
        out
    }

    /// Member with the smallest f1.
    pub fn best_color(&self) -> Option<&ArchiveMember> {
        self.members.first()
    }

    /// Write `archive.json`, `pareto.csv` and `trajectory_<i>.json` into `dir`.
    /// Returns every file written.
    pub fn write(&self, problem: &TrajectoryProblem, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let archive_path = dir.join("archive.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&archive_path, text).map_err(|e| Error::io(&archive_path, e))?;
        written.push(archive_path);
        let csv_path = dir.join("pareto.csv");
        std::fs::write(&csv_path, self.pareto_csv()).map_err(|e| Error::io(&csv_path, e))?;
        written.push(csv_path);
        for (i, m) in self.members.iter().enumerate() {
            let traj = problem.trajectory(&m.x)?;
            let p = dir.join(format!("trajectory_{i}.json"));
            save_trajectory_file(&TrajectoryFile::from(&traj), &p)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Problem description on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub base_cloud: PathBuf,
    pub base_trajectory: PathBuf,
    pub weights: PathBuf,
    pub target: PathBuf,
    /// Paint class per target point, or one class for all of them.
    pub target_classes: TargetClasses,
    pub bounds: ControlBounds,
    #[serde(default = "default_control_points")]
    pub control_points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default)]
    pub deposition: DepositionParams,
    /// Normal-estimation neighborhood when the base cloud has no normals.
    #[serde(default)]
    pub normal_k: Option<usize>,
    /// Control points seeded into the initial population.
    #[serde(default)]
    pub initial: Vec<ControlPoints>,
}

fn default_control_points() -> usize {
    DEFAULT_CONTROL_POINTS
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetClasses {
    Uniform(u32),
    PerPoint(Vec<u32>),
}

impl ProblemFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut file: ProblemFile = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut file.base_cloud, &mut file.base_trajectory, &mut file.weights, &mut file.target] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(file)
    }
}
