//! Minimal dense-tensor neural-network engine: 3x3 same-padded convolution,
//! identity-skip residual blocks, Adam, MSE and cross-entropy losses, plus a
//! finite-difference gradient checker. Double precision throughout;
//! single-threaded per network instance, so a fixed seed is bitwise
//! reproducible.

pub mod adam;
pub mod classifier;
pub mod conv;
pub mod gradcheck;
pub mod io;
pub mod tensor;
pub mod train;
pub mod vdsr;

pub use adam::{adam_step, AdamState};
pub use classifier::{argmax_tie_lowest, softmax_cross_entropy, SkillClassifier};
pub use conv::ConvLayer;
pub use gradcheck::{gradient_check_classifier, gradient_check_vdsr};
pub use tensor::Tensor;
pub use train::{train_classifier, train_vdsr, ClassifierTrainReport, TrainOptions};
pub use vdsr::{residual_compose, ResidualNet};
