//! Command-line front end: JSON run configuration, flag parsing and the
//! command implementations.

pub mod commands;
pub mod config;
pub mod outputs;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use spcp_core::network::ArchKind;

use crate::commands::*;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "spcp", version, about = "Spray-painting color prediction and trajectory optimization")]
pub struct Cli {
    /// JSON run configuration; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic spraying dataset with the Kubelka-Munk oracle.
    KmGen(KmGenFlags),
    /// Simulate paint thickness on a cloud for a trajectory.
    Simulate(SimulateFlags),
    /// Build a split dataset from before/after clouds and a thickness field.
    BuildDataset(BuildDatasetFlags),
    /// Train a color-prediction network.
    Train(TrainFlags),
    /// Predict the painted appearance of a cloud.
    Predict(PredictFlags),
    /// Evaluate a model on the test split.
    Eval(EvalFlags),
    /// Optimize a spray trajectory with NSGA-II.
    Optimize(OptimizeFlags),
}

#[derive(Debug, Args)]
pub struct KmGenFlags {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateFlags {
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Estimate normals with this many neighbors when the cloud has none.
    #[arg(long)]
    pub normal_k: Option<usize>,
    #[arg(long)]
    pub out_thickness: Option<PathBuf>,
    #[arg(long)]
    pub out_ply: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildDatasetFlags {
    #[arg(long)]
    pub pre: Option<PathBuf>,
    #[arg(long)]
    pub post: Option<PathBuf>,
    #[arg(long)]
    pub thickness: Option<PathBuf>,
    #[arg(long)]
    pub class_id: Option<u32>,
    /// One-hot width (number of paint classes).
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_meta: Option<PathBuf>,
}

fn parse_arch(s: &str) -> Result<ArchKind, String> {
    s.parse().map_err(|e: spcp_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub dataset_csv: Option<PathBuf>,
    #[arg(long)]
    pub dataset_meta: Option<PathBuf>,
    /// spcp | plain_mlp
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<ArchKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out_weights: Option<PathBuf>,
    #[arg(long)]
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictFlags {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Expected architecture; a mismatch with the weights file is an error.
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<ArchKind>,
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long)]
    pub thickness: Option<PathBuf>,
    #[arg(long)]
    pub class_id: Option<u32>,
    #[arg(long)]
    pub out_ply: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<ArchKind>,
    #[arg(long)]
    pub dataset_csv: Option<PathBuf>,
    #[arg(long)]
    pub dataset_meta: Option<PathBuf>,
    #[arg(long)]
    pub out_metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeFlags {
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::KmGen(f) => {
            cmd_km_gen(&KmGenArgs { out_dir: f.out_dir }, &cfg, seed)?;
        }
        Command::Simulate(f) => {
            let args = SimulateArgs {
                cloud: f.cloud,
                trajectory: f.trajectory,
                normal_k: f.normal_k,
                out_thickness: f.out_thickness,
                out_ply: f.out_ply,
            };
            cmd_simulate(&args, &cfg)?;
        }
        Command::BuildDataset(f) => {
            let args = BuildDatasetArgs {
                pre: f.pre,
                post: f.post,
                thickness: f.thickness,
                class_id: f.class_id,
                classes: f.classes,
                out_csv: f.out_csv,
                out_meta: f.out_meta,
            };
            cmd_build_dataset(&args, &cfg, seed)?;
        }
        Command::Train(f) => {
            let args = TrainArgs {
                dataset_csv: f.dataset_csv,
                dataset_meta: f.dataset_meta,
                arch: f.arch,
                epochs: f.epochs,
                out_weights: f.out_weights,
                out_report: f.out_report,
            };
            cmd_train(&args, &cfg, seed)?;
        }
        Command::Predict(f) => {
            let args = PredictArgs {
                weights: f.weights,
                arch: f.arch,
                cloud: f.cloud,
                thickness: f.thickness,
                class_id: f.class_id,
                out_ply: f.out_ply,
            };
            cmd_predict(&args, &cfg)?;
        }
        Command::Eval(f) => {
            let args = EvalArgs {
                weights: f.weights,
                arch: f.arch,
                dataset_csv: f.dataset_csv,
                dataset_meta: f.dataset_meta,
                out_metrics: f.out_metrics,
            };
            cmd_eval(&args, &cfg)?;
        }
        Command::Optimize(f) => {
            let args = OptimizeArgs {
                problem: f.problem,
                population: f.population,
                generations: f.generations,
                out_dir: f.out_dir,
            };
            cmd_optimize(&args, &cfg, seed)?;
        }
    }
    Ok(())
}
