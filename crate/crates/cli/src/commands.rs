//! Command implementations. Each returns a summary and leaves no files behind
//! when it fails.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spcp_core::dataset::{build_records, normalize, split, split_sizes, DatasetBundle, Split};
use spcp_core::deposition::{simulate_thickness, ThicknessField};
use spcp_core::kmoracle::generate_synthetic_dataset;
use spcp_core::network::{
    evaluate, io::encode_weights, load_weights, predict_cloud, train, Architecture, MetricsReport, TrainReport,
};
use spcp_core::optimizer::{OptimizationArchive, ProblemFile, TargetClasses, TargetSample, TrajectoryProblem};
use spcp_core::pointcloud::{estimate_normals, load_ply, to_ply_string, ColorPointCloud, Rgb8};
use spcp_core::trajectory::{load_path, load_trajectory, TrajectoryFile};
use spcp_core::{dataset, Vec3};

use crate::config::{require, RunConfig};
use crate::outputs::Outputs;

pub const DATASET_CSV: &str = "dataset.csv";
pub const DATASET_META: &str = "dataset_meta.json";

fn seed_of(flag: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    require(flag, cfg.seed, "seed")
}

fn bundle_to_files(bundle: &DatasetBundle, csv: &Path, meta: &Path, out: &mut Outputs) -> Result<()> {
    out.write(csv, bundle.to_csv())?;
    out.write(meta, serde_json::to_string(&bundle.meta)?)?;
    Ok(())
}

fn split_counts(bundle: &DatasetBundle) -> [usize; 3] {
    [Split::Train, Split::Validation, Split::Test].map(|s| bundle.part(s).len())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct KmGenArgs {
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmGenSummary {
    pub points: usize,
    pub records: usize,
    pub split: [usize; 3],
    pub files: Vec<PathBuf>,
}

/// Synthetic spraying experiment: before/after clouds, thickness, and the
/// split dataset built from them.
pub fn cmd_km_gen(args: &KmGenArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<KmGenSummary> {
    let seed = seed_of(seed, cfg)?;
    let out_dir = require(args.out_dir.clone(), cfg.km_gen.out_dir.clone(), "out-dir")?;
    let mut synth = cfg.km_gen.synthetic.clone();
    synth.seed = seed;
    let data = generate_synthetic_dataset(&synth).context("generating synthetic data")?;
    let records = dataset::build_records_with_classes(&data.pre, &data.post, &data.thickness, &data.classes)
        .context("building records")?;
    let mut bundle = normalize(&records, synth.palette.paints.len()).context("normalizing records")?;
    split(&mut bundle, seed).context("splitting records")?;

    let mut out = Outputs::new();
    out.write(&out_dir.join("pre.ply"), to_ply_string(&data.pre))?;
    out.write(&out_dir.join("post.ply"), to_ply_string(&data.post))?;
    out.write(&out_dir.join("thickness.csv"), data.thickness.to_csv())?;
    bundle_to_files(&bundle, &out_dir.join(DATASET_CSV), &out_dir.join(DATASET_META), &mut out)?;
    let counts = split_counts(&bundle);
    println!(
        "km-gen: {} points, {} records (train {}, validation {}, test {})",
        data.pre.len(),
        bundle.records.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(KmGenSummary {
        points: data.pre.len(),
        records: bundle.records.len(),
        split: counts,
        files: out.commit(),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub cloud: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub normal_k: Option<usize>,
    pub out_thickness: Option<PathBuf>,
    pub out_ply: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub covered: usize,
    pub max_thickness: f64,
    pub files: Vec<PathBuf>,
}

/// Give `cloud` normals, estimating them with `k` neighbors oriented toward
/// `viewpoint` when it has none.
fn ensure_normals(cloud: ColorPointCloud, k: Option<usize>, viewpoint: Vec3) -> Result<ColorPointCloud> {
    if cloud.normals().is_some() {
        return Ok(cloud);
    }
    let Some(k) = k else {
        bail!("the cloud has no normals; estimate them first or pass `--normal-k`");
    };
    let est = estimate_normals(&cloud, k, &viewpoint).context("estimating normals")?;
    if !est.degenerate.is_empty() {
        log::warn!("{} points had degenerate neighborhoods", est.degenerate.len());
    }
    Ok(est.cloud)
}

fn centroid(points: impl Iterator<Item = Vec3>) -> Vec3 {
    let (sum, n) = points.fold((Vec3::zeros(), 0usize), |(s, n), p| (s + p, n + 1));
    if n == 0 {
        sum
    } else {
        sum / n as f64
    }
}

/// Covered points recolored by thickness on a gray scale (thickest white).
pub fn thickness_grayscale(cloud: &ColorPointCloud, field: &ThicknessField) -> Result<ColorPointCloud> {
    let max = field.max();
    let colors = cloud
        .colors()
        .iter()
        .zip(field.values())
        .map(|(&c, &t)| {
            if t > 0.0 && max > 0.0 {
                let v = t / max;
                Rgb8::from_norm([v, v, v])
            } else {
                c
            }
        })
        .collect();
    Ok(cloud.recolored(colors)?)
}

pub fn cmd_simulate(args: &SimulateArgs, cfg: &RunConfig) -> Result<SimulateSummary> {
    let sec = &cfg.simulate;
    let cloud_path = require(args.cloud.clone(), sec.cloud.clone(), "cloud")?;
    let traj_path = require(args.trajectory.clone(), sec.trajectory.clone(), "trajectory")?;
    let out_thickness = require(args.out_thickness.clone(), sec.out_thickness.clone(), "out-thickness")?;
    let out_ply = require(args.out_ply.clone(), sec.out_ply.clone(), "out-ply")?;

    let traj = load_trajectory(&traj_path, sec.spacing).context("loading trajectory")?;
    let viewpoint = centroid(traj.waypoints.iter().filter(|w| w.gun_on).map(|w| w.position));
    let cloud = load_ply(&cloud_path).context("loading cloud")?;
    let cloud = ensure_normals(cloud, args.normal_k.or(sec.normal_k), viewpoint)?;
    let field = simulate_thickness(&traj, &cloud, &sec.deposition).context("simulating thickness")?;
    let covered = field.values().iter().filter(|&&t| t > 0.0).count();
    if covered == 0 {
        log::warn!("no point received paint; check gun height, axis and spray radius");
        eprintln!("warning: the simulated thickness field is zero everywhere");
    }
    let gray = thickness_grayscale(&cloud, &field)?;

    let mut out = Outputs::new();
    out.write(&out_thickness, field.to_csv())?;
    out.write(&out_ply, to_ply_string(&gray))?;
    println!("simulate: {covered} of {} points covered, max thickness {}", cloud.len(), field.max());
    Ok(SimulateSummary {
        covered,
        max_thickness: field.max(),
        files: out.commit(),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct BuildDatasetArgs {
    pub pre: Option<PathBuf>,
    pub post: Option<PathBuf>,
    pub thickness: Option<PathBuf>,
    pub class_id: Option<u32>,
    pub classes: Option<usize>,
    pub out_csv: Option<PathBuf>,
    pub out_meta: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildDatasetSummary {
    pub records: usize,
    pub split: [usize; 3],
    pub files: Vec<PathBuf>,
}

/// Records from a measured before/after pair and the simulated thickness on
/// the after cloud.
pub fn cmd_build_dataset(args: &BuildDatasetArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<BuildDatasetSummary> {
    let seed = seed_of(seed, cfg)?;
    let sec = &cfg.build_dataset;
    let pre = load_ply(require(args.pre.clone(), sec.pre.clone(), "pre")?).context("loading pre cloud")?;
    let post = load_ply(require(args.post.clone(), sec.post.clone(), "post")?).context("loading post cloud")?;
    let field = ThicknessField::load(require(args.thickness.clone(), sec.thickness.clone(), "thickness")?)
        .context("loading thickness")?;
    let class_id = require(args.class_id, sec.class_id, "class-id")?;
    let classes = args.classes.or(sec.classes).unwrap_or(class_id as usize + 1);
    let out_csv = require(args.out_csv.clone(), sec.out_csv.clone(), "out-csv")?;
    let out_meta = require(args.out_meta.clone(), sec.out_meta.clone(), "out-meta")?;

    let records = build_records(&pre, &post, &field, class_id).context("building records")?;
    if records.is_empty() {
        bail!("no covered points, nothing to build");
    }
    let mut bundle = normalize(&records, classes).context("normalizing records")?;
    split(&mut bundle, seed).context("splitting records")?;
    let counts = split_counts(&bundle);
    debug_assert_eq!(counts, split_sizes(bundle.records.len()));

    let mut out = Outputs::new();
    bundle_to_files(&bundle, &out_csv, &out_meta, &mut out)?;
    println!(
        "build-dataset: {} records (train {}, validation {}, test {})",
        bundle.records.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(BuildDatasetSummary {
        records: bundle.records.len(),
        split: counts,
        files: out.commit(),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub dataset_csv: Option<PathBuf>,
    pub dataset_meta: Option<PathBuf>,
    pub arch: Option<spcp_core::network::ArchKind>,
    pub epochs: Option<usize>,
    pub out_weights: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub report: TrainReport,
    pub params: usize,
    pub files: Vec<PathBuf>,
}

pub fn cmd_train(args: &TrainArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<TrainSummary> {
    let seed = seed_of(seed, cfg)?;
    let sec = &cfg.train;
    let csv = require(args.dataset_csv.clone(), sec.dataset_csv.clone(), "dataset-csv")?;
    let meta = require(args.dataset_meta.clone(), sec.dataset_meta.clone(), "dataset-meta")?;
    let out_weights = require(args.out_weights.clone(), sec.out_weights.clone(), "out-weights")?;
    let out_report = args.out_report.clone().or(sec.out_report.clone());
    let kind = args.arch.or(sec.arch).unwrap_or(spcp_core::network::ArchKind::Spcp);

    let bundle = DatasetBundle::load(&csv, &meta).context("loading dataset")?;
    let mut train_cfg = sec.train;
    train_cfg.seed = seed;
    if let Some(e) = args.epochs {
        train_cfg.epochs = e;
    }
    let arch = Architecture::for_kind(kind, bundle.meta.classes);
    let (model, report) = train(&bundle, &train_cfg, &arch).context("training")?;

    let mut out = Outputs::new();
    out.write(&out_weights, encode_weights(&model)?)?;
    if let Some(p) = &out_report {
        out.write(p, report.to_csv())?;
    }
    println!(
        "train: {} parameters, best validation RMSE {} at epoch {} of {}",
        model.param_count(),
        report.best_val_rmse(),
        report.best_epoch,
        report.val_rmse.len()
    );
    Ok(TrainSummary {
        params: model.param_count(),
        report,
        files: out.commit(),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct PredictArgs {
    pub weights: Option<PathBuf>,
    pub arch: Option<spcp_core::network::ArchKind>,
    pub cloud: Option<PathBuf>,
    pub thickness: Option<PathBuf>,
    pub class_id: Option<u32>,
    pub out_ply: Option<PathBuf>,
}

pub fn cmd_predict(args: &PredictArgs, cfg: &RunConfig) -> Result<PathBuf> {
    let sec = &cfg.predict;
    let model = load_weights(
        require(args.weights.clone(), sec.weights.clone(), "weights")?,
        args.arch.or(sec.arch),
    )
    .context("loading weights")?;
    let cloud = load_ply(require(args.cloud.clone(), sec.cloud.clone(), "cloud")?).context("loading cloud")?;
    let field = ThicknessField::load(require(args.thickness.clone(), sec.thickness.clone(), "thickness")?)
        .context("loading thickness")?;
    let class_id = require(args.class_id, sec.class_id, "class-id")?;
    let out_ply = require(args.out_ply.clone(), sec.out_ply.clone(), "out-ply")?;

    let classes = vec![class_id; cloud.len()];
    let predicted = predict_cloud(&model, &cloud, &field, &classes).context("predicting")?;
    let mut out = Outputs::new();
    out.write(&out_ply, to_ply_string(&predicted))?;
    println!("predict: wrote {}", out_ply.display());
    out.commit();
    Ok(out_ply)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub weights: Option<PathBuf>,
    pub arch: Option<spcp_core::network::ArchKind>,
    pub dataset_csv: Option<PathBuf>,
    pub dataset_meta: Option<PathBuf>,
    pub out_metrics: Option<PathBuf>,
}

/// Test-split RMSE and MRE.
pub fn cmd_eval(args: &EvalArgs, cfg: &RunConfig) -> Result<MetricsReport> {
    let sec = &cfg.eval;
    let model = load_weights(
        require(args.weights.clone(), sec.weights.clone(), "weights")?,
        args.arch.or(sec.arch),
    )
    .context("loading weights")?;
    let csv = require(args.dataset_csv.clone(), sec.dataset_csv.clone(), "dataset-csv")?;
    let meta = require(args.dataset_meta.clone(), sec.dataset_meta.clone(), "dataset-meta")?;
    let out_metrics = args.out_metrics.clone().or(sec.out_metrics.clone());

    let bundle = DatasetBundle::load(&csv, &meta).context("loading dataset")?;
    let test = bundle.part(Split::Test);
    if test.is_empty() {
        bail!("the dataset has no test split");
    }
    let predicted = model.predict_records(&test)?;
    let target: Vec<[f64; 3]> = test.iter().map(|r| r.painted).collect();
    let report = evaluate(&predicted, &target)?;
    let text = serde_json::to_string_pretty(&report)?;
    let mut out = Outputs::new();
    if let Some(p) = &out_metrics {
        out.write(p, &text)?;
    }
    out.commit();
    println!("{text}");
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct OptimizeArgs {
    pub problem: Option<PathBuf>,
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeSummary {
    pub archive: OptimizationArchive,
    pub files: Vec<PathBuf>,
}

/// Assemble the optimization problem described by a problem file.
pub fn load_problem(file: &ProblemFile) -> Result<TrajectoryProblem> {
    let path = load_path(&file.base_trajectory).context("loading base trajectory")?;
    let model = load_weights(&file.weights, None).context("loading weights")?;
    let cloud = load_ply(&file.base_cloud).context("loading base cloud")?;
    let viewpoint = centroid(path.poses().iter().map(|p| p.pose.position() + p.offset_dir));
    let cloud = ensure_normals(cloud, file.normal_k, viewpoint)?;
    let target_cloud = load_ply(&file.target).context("loading target")?;
    let target = match &file.target_classes {
        TargetClasses::Uniform(c) => TargetSample::single_class(target_cloud, *c)?,
        TargetClasses::PerPoint(cs) => TargetSample::new(target_cloud, cs.clone())?,
    };
    Ok(TrajectoryProblem::new(
        path,
        cloud,
        file.deposition,
        model,
        target,
        file.bounds,
        file.control_points,
        file.spacing,
    )?)
}

pub fn cmd_optimize(args: &OptimizeArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<OptimizeSummary> {
    let seed = seed_of(seed, cfg)?;
    let sec = &cfg.optimize;
    let problem_path = require(args.problem.clone(), sec.problem.clone(), "problem")?;
    let out_dir = require(args.out_dir.clone(), sec.out_dir.clone(), "out-dir")?;
    let file = ProblemFile::load(&problem_path).context("loading problem file")?;
    let problem = load_problem(&file)?;

    let mut nsga = sec.nsga;
    nsga.seed = seed;
    if let Some(p) = args.population {
        nsga.population = p;
    }
    if let Some(g) = args.generations {
        nsga.generations = g;
    }
    let result = problem.optimize(&nsga, &file.initial).context("optimizing")?;
    let archive = problem.archive(&result)?;

    let mut out = Outputs::new();
    out.write(&out_dir.join("archive.json"), serde_json::to_string_pretty(&archive)?)?;
    out.write(&out_dir.join("pareto.csv"), archive.pareto_csv())?;
    for (i, m) in archive.members.iter().enumerate() {
        let traj = problem.trajectory(&m.x)?;
        let text = serde_json::to_string_pretty(&TrajectoryFile::from(&traj))?;
        out.write(&out_dir.join(format!("trajectory_{i}.json")), text)?;
    }
    let best_f1 = archive.members.iter().min_by(|a, b| a.f1.total_cmp(&b.f1));
    let best_f2 = archive.members.iter().min_by(|a, b| a.f2.total_cmp(&b.f2));
    if let (Some(a), Some(b)) = (best_f1, best_f2) {
        println!("optimize: {} Pareto members", archive.members.len());
        println!("  best color match: f1 = {}, f2 = {} s", a.f1, a.f2);
        println!("  fastest:          f1 = {}, f2 = {} s", b.f1, b.f2);
    }
    Ok(OptimizeSummary {
        archive,
        files: out.commit(),
    })
}
