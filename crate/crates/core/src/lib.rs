//! Evolutionary multitasking optimization library.
//!
//! Implements the multifactorial evolutionary algorithm (MFEA) baseline and a
//! residual-learning variant in which a small convolutional network expands
//! each 1×D individual into a D×D residual representation, a ResNet-style
//! classifier assigns skill factors dynamically, and crossover selects a
//! random row of the composed representation. Also ships the CEC17-MTSO-style
//! dual-task benchmark suite, a Johnson–Lindenstrauss projection verification
//! harness, a Wilcoxon rank-sum comparison module, and an experiment runner
//! with convergence logging.

pub mod benchmarks;
pub mod encoding;
pub mod error;
pub mod harness;
pub mod mfea;
pub mod mfea_rl;
pub mod nn;
pub mod projection;
pub mod seeding;
pub mod stats;

pub use benchmarks::{evaluate_base, evaluate_task, make_cec17_pair, BaseFunction, EvalCounter, ProblemSpec, Suite};
pub use encoding::{decode, factorial_ranks, scalar_fitness, Individual, MultitaskProblem, Population, Task};
pub use error::{Error, Result};
pub use harness::{run_experiment, Algorithm, ExperimentConfig, RunEvent, RunOutput, RunRecord};
pub use mfea::{run_mfea, MatingDecision, MfeaConfig};
pub use mfea_rl::{run_mfea_rl, AlgorithmMode, MfeaRlConfig, TrainingBatch};
pub use nn::{ResidualNet, SkillClassifier, Tensor, TrainOptions};
pub use stats::{summarize, wilcoxon_rank_sum, ComparisonResult, Decision};
