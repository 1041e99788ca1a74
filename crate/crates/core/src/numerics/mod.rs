//! Dense tensors, a reverse-mode gradient tape and the two optimizers used
//! by the trainer.

mod check;
mod optim;
mod tape;
mod tensor;

pub use check::{finite_diff_check, FdReport};
pub use optim::{sgd_step, AdamState};
pub use tape::{grad, Gradients, Tape, Var};
pub(crate) use tape::softmax_row;
pub use tensor::Tensor;
