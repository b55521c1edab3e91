//! Training narrow 1-hidden-layer networks in a constrained regime —
//! mirrored initialization, paired output head, projected gradient descent —
//! with numeric certification of the landscape properties that make the
//! regime work: zero initial output, full-rank Jacobian at initialization,
//! small loss at KKT points, and the minimum singular value of the Jacobian
//! at convergence.

pub mod cli;
pub mod constraints;
pub mod dataset;
pub mod experiment;
pub mod gradcheck;
pub mod init;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod trainer;

pub use constraints::{
    is_feasible, kkt_residual, project_v, project_w, ConstraintSpec, FeasibilityReport,
};
pub use dataset::{make_synthetic, Dataset, Provenance};
pub use init::{lecun_init, mirrored_lecun_init, Seed};
pub use linalg::{DenseMatrix, DenseVector, LinalgError};
pub use model::{Activation, HeadKind, ModelError, Params};
pub use objective::{grad, loss, Gradients};
pub use trainer::{
    best_of_grid, train, Regime, StopReason, TrainConfig, TrainError, TrainTrace,
};
