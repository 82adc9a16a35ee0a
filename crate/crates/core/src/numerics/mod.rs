//! Dense tensors, reverse-mode differentiation and gradient descent.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::gradient_check;
pub use optim::{BoundParams, ParamId, ParamStore, Sgd};
pub use tape::{softmax_in_place, Gradients, Tape, Var};
pub use tensor::{Real, Tensor};

pub(crate) use tape::sigmoid;
