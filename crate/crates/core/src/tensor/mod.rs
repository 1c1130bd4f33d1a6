//! Dense matrices, reverse-mode differentiation, seeded randomness,
//! initialization and the Adam optimizer.

mod adam;
mod layers;
mod matrix;
mod rng;
mod tape;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use layers::{glorot_bound, init_dense, BoundDense, Dense, Parameters};
pub(crate) use layers::{dense_params, dense_params_mut};
pub use matrix::Matrix;
pub use rng::Rng;
pub use tape::{log_sum_exp, softmax, Binary, Reduce, Tape, Unary, Var};
