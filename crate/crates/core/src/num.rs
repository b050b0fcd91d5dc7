//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used for energies, rates and laxities.
///
/// The associated tolerances are the numeric contract of the crate. They
/// are expressed relative to `max(1, scale)` where `scale` is the quantity
/// being compared (a power limit, an energy demand).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Relative slack on rate boxes and per-slot power totals.
    const RATE_TOL: f64;
    /// Relative slack on the energy-demand equality.
    const DEMAND_TOL: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("slot index representable in scalar type")
    }

    /// `RATE_TOL * max(1, |scale|)`.
    #[inline]
    fn rate_tol(scale: Self) -> Self {
        Self::lit(Self::RATE_TOL) * scale.abs().max(Self::one())
    }

    /// `DEMAND_TOL * max(1, |scale|)`.
    #[inline]
    fn demand_tol(scale: Self) -> Self {
        Self::lit(Self::DEMAND_TOL) * scale.abs().max(Self::one())
    }

    /// Clamp into `[lo, hi]`; `lo` wins if the interval is empty.
    #[inline]
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        self.min(hi).max(lo)
    }
}

impl Real for f64 {
    const RATE_TOL: f64 = 1e-9;
    const DEMAND_TOL: f64 = 1e-6;
}

// f32 cannot resolve 1e-9; the looser pair keeps the same contracts meaningful.
impl Real for f32 {
    const RATE_TOL: f64 = 2e-5;
    const DEMAND_TOL: f64 = 1e-4;
}
