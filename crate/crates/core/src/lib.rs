//! Robust PCA as a low-rank dictionary plus sparse outliers.
//!
//! The crate provides an exact per-sample projection solver, a batch
//! factorized solver, a convex proximal reference, online dictionary
//! adaptation, and a trainable feed-forward encoder whose layers unroll the
//! exact solver, together with training, sub-pixel alignment and file I/O.

pub mod bench;
pub mod encoder;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod online;
pub mod solvers;
pub mod synth;
pub mod training;
pub mod transforms;

pub use bench::{run_bench, BenchReport, BenchSpec};
pub use encoder::{backward, encode, encoder_init, forward, forward_batch, EncoderGrads, EncoderParams, ForwardTrace};
pub use error::{Result, RpcaError};
pub use io::{load_encoder, load_matrix, read_pgm, save_encoder, save_matrix, write_pgm, GrayImage, PgmEncoding};
pub use linalg::{svd, DenseMatrix, SpectralFactorization};
pub use model::{
    convex_cost, factorized_cost, nuclear_norm, projection_cost, soft_threshold, svd_factorize, Code, Projection,
    RegParams,
};
pub use online::{online_init, OnlineState};
pub use solvers::{
    alternating_iterations, batch_rpca, convex_rpca_reference, kkt_residual, robust_project, svt, BatchDecomposition,
    ConvexDecomposition, SolverConfig,
};
pub use synth::{blob_frames, generate, SynthSpec, Synthetic};
pub use training::{
    loss_supervised, loss_unsupervised, make_supervised_targets, sgd_train, DecaySchedule, EpochRecord, Objective,
    SupervisedTargets, TrainConfig,
};
pub use transforms::{align_project, warp, warp_jacobian, AlignConfig, Alignment, ImageGrid, TransformParams};
