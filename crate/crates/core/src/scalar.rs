//! Scalar abstractions shared by the numeric kernels.
//!
//! Probability-valued structures ([`Mdpd`](crate::multitask::Mdpd), trapezoidal
//! weights) only need field arithmetic and ordering, so they also work over
//! exact rationals. Distance computations need `abs`, hence [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ordered field element: `f32`, `f64` or `Ratio<i64>`.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug {}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug {}

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Scalar + Float {}

impl<T> Real for T where T: Scalar + Float {}

pub(crate) fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

pub(crate) fn from_u64<T: Scalar>(n: u64) -> T {
    T::from_u64(n).expect("count representable in scalar type")
}
