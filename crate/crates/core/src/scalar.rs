//! Scalar abstraction for the metric kernels.
//!
//! The curve and agreement arithmetic is written against [`Scalar`] so the
//! same code runs in `f64` for production and in exact rational arithmetic
//! in tests. Concrete aliases live at the crate root.

use num_traits::{FromPrimitive, Num};

/// Numeric type usable by the metric kernels: field operations, a total
/// order on the values actually produced, and conversion from counts.
pub trait Scalar: Num + PartialOrd + Clone + FromPrimitive {}

impl<T> Scalar for T where T: Num + PartialOrd + Clone + FromPrimitive {}

/// The scalar type used throughout the production path.
pub type Real = f64;

/// Converts a count to a scalar. Panics only if the scalar type cannot
/// represent the count, which cannot happen for f64 or wide rationals at
/// the dataset sizes this crate handles.
pub fn from_count<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("count representable in scalar type")
}
