//! Dense numeric primitives: tensors, parameter bundles, the two-layer
//! perceptron kernel, Adam, and finite-difference gradient checking.

mod adam;
mod gradcheck;
mod mlp;
mod params;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{
    finite_diff_check, finite_diff_gradient, gradient, max_relative_error, Objective,
    RELATIVE_FLOOR,
};
pub use mlp::{check_shapes, mlp_backward, mlp_forward, mlp_forward_cached, MlpCache};
pub use params::{glorot_uniform, ParamBundle, Parameters};
pub use tensor::{affine, axpy, dot, matvec_t_acc, norm, outer_acc, unit, Tensor};

/// Number of scalars in a bundle.
pub fn param_count(bundle: &ParamBundle) -> usize {
    bundle.param_count()
}
