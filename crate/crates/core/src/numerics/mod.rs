//! Dense 2-D tensors, a reverse-mode computation record, Adam, and a
//! finite-difference gradient oracle. Everything is `f64`.

mod gradcheck;
mod graph;
mod optim;
mod param;
mod tensor;

pub use gradcheck::{
    analytic_gradients, compare_with_finite_differences, finite_diff_check, GradCheckOptions,
    GradCheckReport,
};
pub use graph::{Graph, Var, EPS_NORM};
pub use optim::{adam_step, adam_step_all, OptimizerConfig};
pub use param::{glorot_uniform, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
