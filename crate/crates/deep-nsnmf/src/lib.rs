//! Hierarchical multi-layer non-smooth non-negative matrix factorization.
//!
//! The crate stacks single-layer nsNMF units into a hierarchy: each layer
//! factorizes the normalized output `K = f(H/M)` of the layer below, and a
//! joint fine-tuning phase then optimizes the whole stack against the
//! original data through back-propagated reconstructions. Evaluation
//! utilities cover reconstruction error, nearest-centroid classification,
//! Fisher discriminant values, and 2-D projections of the learned
//! representations.
//!
//! Modules:
//! - [`matrix`]: dense non-negative matrix type and kernels
//! - [`nonlinearity`]: the inter-layer function family `f`, `f⁻¹`, `(f⁻¹)′`
//! - [`nsnmf`]: the single-layer unit algorithm with basis-sparsifying smoothing
//! - [`hierarchy`]: stacking, joint training, reconstruction, fold-in inference
//! - [`eval`]: representation-quality metrics and the shallow-vs-deep sweep
//! - [`io`]: CSV/MatrixMarket matrices, MNIST IDX files, model persistence
//! - [`cli`]: batch driver used by the `deep-nsnmf` binary

pub mod cli;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod io;
pub mod matrix;
pub mod nonlinearity;
pub mod nsnmf;
pub mod seed;

pub use error::{Error, Result};
pub use hierarchy::{HierarchicalModel, JointConfig, LayerSpec};
pub use matrix::NonNegMatrix;
pub use nonlinearity::Nonlinearity;
pub use nsnmf::UnitConfig;
