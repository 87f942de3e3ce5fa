use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for thresholds, rates and model probabilities: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from a count or an `f64` constant.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any float scalar")
    }

    fn count(n: u64) -> Self {
        Self::from_u64(n).expect("u64 converts to any float scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
