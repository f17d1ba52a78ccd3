//! Dense tensors, a reverse-mode tape and seeded random streams.

mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use rng::{mix64, Rng};
pub use tape::{log_sigmoid, sigmoid, softplus, Tape, Var};
pub use tensor::Tensor;
