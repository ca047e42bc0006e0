//! Minimal reverse-mode differentiation over dense `f64` matrices, plus the
//! optimizer used for training.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport, GradMismatch};
pub use optim::{AdamWConfig, CosineSchedule, OptimState};
pub use params::{Init, Param, ParamId, ParamStore};
pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;
