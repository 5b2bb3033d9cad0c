//! Dense matrices, the SPD solver, and the differentiation tape.

mod cholesky;
mod matrix;
mod tape;

pub use cholesky::{solve_spd, Cholesky};
pub use matrix::Matrix;
pub use tape::{mean_over, row_softmax, sigmoid, Axis, Gradients, Tape, Var};
