use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type used for times, costs and rewards.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`. Panics only for values that cannot be
    /// represented at all, which never happens for `f32`/`f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("scalar conversion")
    }

    fn of_u64(v: u64) -> Self {
        Self::from_u64(v).expect("scalar conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
