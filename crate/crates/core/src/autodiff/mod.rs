//! A small reverse-mode automatic differentiation engine.
//!
//! Values live in a [`Graph`] (a tape) that is built fresh for every forward
//! pass. Trainable tensors live in a [`ParamStore`] and are copied into the
//! tape as leaves via [`Graph::param`]; [`Graph::backward`] writes their
//! gradients back into the store. Only the closed set of operations needed by
//! the dialogue-act model is provided.

mod gradcheck;
mod graph;
mod param;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use graph::{Graph, NodeId, IGNORE_INDEX};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

/// Floating point element type. `f32` is used for training, `f64` for
/// gradient verification.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("float conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
