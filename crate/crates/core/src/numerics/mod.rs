//! Dense linear algebra, activations, the optimizer and gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod ops;
pub mod param;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, DEFAULT_FD_STEP};
pub use matrix::DenseMatrix;
pub use ops::{cosine_similarity, cross_entropy, softmax, temporal_softmax, Cosine, PROB_EPS};
pub use param::{Parameter, ParameterSet};
