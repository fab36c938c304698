use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type of the reference executor.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts")
    }

    /// Nearest value to the rational `num / den`.
    fn from_ratio(r: Ratio<u64>) -> Self {
        Self::from_u64(*r.numer()).expect("u64 converts")
            / Self::from_u64(*r.denom()).expect("u64 converts")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
