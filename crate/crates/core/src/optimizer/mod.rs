//! Multi-objective trajectory optimization with NSGA-II.

pub mod nsga;
pub mod problem;

pub use nsga::{
    crowding_distance, dominates, fast_nondominated_sort, nsga2_run, GenerationStats, Individual, NsgaConfig,
    NsgaResult,
};
pub use problem::{
    ArchiveMember, ControlVector, OptimizationArchive, ProblemFile, TargetClasses, TargetSample, TrajectoryProblem,
    BOUND_MARGIN, DEFAULT_CONTROL_POINTS,
};
