//! Learned Jacobi pivot orderings.
//!
//! Cyclic Jacobi and the classical largest-element rule are compared with
//! a policy learned through self-play: each diagonalization is a
//! single-player game whose moves are pivots, searched with PUCT Monte-Carlo
//! tree search guided by a small convolutional policy-value network.
//!
//! The matrix, rotation, solver and game code is generic over [`Scalar`]
//! (`f32` or `f64`); the network, search and training stack work in `f64`.

pub mod action;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod game;
pub mod matrix;
pub mod mcts;
pub mod net;
pub mod scalar;
pub mod selfplay;
pub mod solvers;

pub use action::{PivotAction, action_index, action_pair, num_actions};
pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use game::{GameConfig, GameState, Outcome, RewardMode};
pub use matrix::{DenseMatrix, EigenResult, GivensCoeffs, SymMatrix, Tolerance};
pub use mcts::{SearchConfig, search};
pub use net::{Arch, NetOutput, NetParams, forward};
pub use scalar::Scalar;
pub use selfplay::{LearnedAgent, TrainConfig, training_loop};
pub use solvers::{SolvePath, StrategyKind, solve};

pub type SymMatrix64 = SymMatrix<f64>;
pub type SymMatrix32 = SymMatrix<f32>;
pub type DenseMatrix64 = DenseMatrix<f64>;
pub type SolvePath64 = SolvePath<f64>;
pub type GameState64 = GameState<f64>;

/// Mixes `parts` into `base` (SplitMix64 finalizer per word) to give
/// independent RNG streams per iteration, episode or trajectory.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
