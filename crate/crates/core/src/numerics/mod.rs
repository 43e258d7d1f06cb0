//! Dense tensors, a define-by-run gradient tape, seeded randomness and
//! finite-difference gradient checking.

mod gradcheck;
mod init;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{
    analytic_gradient, compare, grad_check, grad_check_many, numeric_gradient, relative_error, REL_ERR_FLOOR,
    GradCheckReport,
};
pub use init::{fans, seeded_init, xavier_bound, Init};
pub use rng::Rng;
pub use tape::{sigmoid, softmax_along, Binary, Tape, Unary, Var};
pub use tensor::Tensor;
