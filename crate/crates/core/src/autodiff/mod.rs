//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! The op set is closed: exactly what the feature network and the losses
//! need, each with a hand-written vector-Jacobian product. There is no
//! broadcasting. Top-k selections are recorded as constant index sets, so
//! gradients flow only through the selected values.

mod gradcheck;
mod tape;

pub use gradcheck::grad_check;
pub use tape::{topk_rows, CustomVjp, Mat, RowMask, Tape, Var};
