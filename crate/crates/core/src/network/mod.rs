//! The gated residual color-prediction network, its baselines, training and metrics.

pub mod adam;
pub mod io;
pub mod layer;
pub mod linreg;
pub mod metrics;
pub mod model;
pub mod predict;
pub mod train;

pub use adam::{AdamParams, AdamState};
pub use io::{load_weights, save_weights};
pub use layer::{Activation, DenseLayer, LayerGrad};
pub use linreg::{linear_regression_fit, LinearModel};
pub use metrics::{evaluate, mre, rmse, MetricsReport, Mre};
pub use model::{gradients, loss, ArchKind, Architecture, ForwardCache, Model};
pub use predict::predict_cloud;
pub use train::{train, TrainConfig, TrainReport};
