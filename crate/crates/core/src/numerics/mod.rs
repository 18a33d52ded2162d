//! Dense linear algebra, a reverse-mode tape, and a finite-difference
//! gradient checker.

mod gradcheck;
mod matrix;
mod ops;
mod tape;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::{dot, norm, Matrix};
pub use ops::{cosine_similarity, relu, relu_affine, COSINE_EPS};
pub use tape::{smooth_l1, softmax, Gradients, NodeId, Tape};
