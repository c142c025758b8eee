//! Terminal value types.
//!
//! Diagram stores are generic over the number type stored at their
//! terminals. `f64` is the working type for models and value functions;
//! `f32` is available for memory-constrained experiments, and
//! [`TwoFloat`] (double-double, ~106 bits of mantissa) is used as the
//! accumulator for `f64` during backups.

use std::fmt::{Debug, Display};
use std::hash::Hash;

use num_traits::Float;
pub use twofloat::TwoFloat;

/// Numeric type usable as a diagram terminal.
pub trait Scalar: Float + Debug + Display + Send + Sync + 'static {
    /// Exact bit pattern used for terminal identity.
    type Bits: Copy + Eq + Hash + Ord + Debug + Send + Sync;

    /// Wider type used to accumulate expectations before rounding back.
    type Accum: Scalar;

    /// Bit pattern of the value with `-0.0` folded onto `+0.0`.
    fn bits(self) -> Self::Bits;

    fn widen(self) -> Self::Accum;

    /// Neither infinite nor NaN.
    fn finite(self) -> bool;

    /// Round an accumulated value back to this type.
    fn narrow(wide: Self::Accum) -> Self;

    fn from_f64(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Parse a decimal literal.
    fn parse_literal(text: &str) -> Option<Self>;

    /// Shortest decimal text that [`Scalar::parse_literal`] maps back to
    /// the same value.
    fn literal(self) -> String;
}

macro_rules! impl_native_scalar {
    ($t:ty, $bits:ty, $accum:ty) => {
        impl Scalar for $t {
            type Bits = $bits;
            type Accum = $accum;

            #[inline]
            fn bits(self) -> $bits {
                if self == 0.0 {
                    (0.0 as $t).to_bits()
                } else {
                    self.to_bits()
                }
            }

            #[inline]
            fn finite(self) -> bool {
                self.is_finite()
            }

            #[inline]
            fn widen(self) -> $accum {
                <$accum as Scalar>::from_f64(self as f64)
            }

            #[inline]
            fn narrow(wide: $accum) -> $t {
                wide.as_f64() as $t
            }

            #[inline]
            fn from_f64(x: f64) -> $t {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn parse_literal(text: &str) -> Option<$t> {
                text.parse::<$t>().ok()
            }

            fn literal(self) -> String {
                let v = if self == 0.0 { 0.0 } else { self };
                format!("{}", v)
            }
        }
    };
}

impl_native_scalar!(f64, u64, TwoFloat);
impl_native_scalar!(f32, u32, f64);

impl Scalar for TwoFloat {
    type Bits = (u64, u64);
    type Accum = TwoFloat;

    #[inline]
    fn bits(self) -> (u64, u64) {
        let hi = self.hi();
        let lo = self.lo();
        (if hi == 0.0 { 0 } else { hi.to_bits() }, if lo == 0.0 { 0 } else { lo.to_bits() })
    }

    /// Component check only; `TwoFloat::is_finite` also verifies
    /// normalization, which is far slower.
    #[inline]
    fn finite(self) -> bool {
        self.hi().is_finite() && self.lo().is_finite()
    }

    #[inline]
    fn widen(self) -> TwoFloat {
        self
    }

    #[inline]
    fn narrow(wide: TwoFloat) -> TwoFloat {
        wide
    }

    #[inline]
    fn from_f64(x: f64) -> TwoFloat {
        TwoFloat::from(x)
    }

    /// Round to nearest; `hi` of a normalized pair is already the
    /// correctly rounded value except at exact ties, which `hi + lo`
    /// resolves the same way.
    #[inline]
    fn as_f64(self) -> f64 {
        self.hi() + self.lo()
    }

    fn parse_literal(text: &str) -> Option<TwoFloat> {
        text.parse::<f64>().ok().map(TwoFloat::from)
    }

    fn literal(self) -> String {
        self.as_f64().literal()
    }
}

/// Canonical `f64` view used by code that does not care about the exact
/// scalar, e.g. reporting and the explicit-state oracle.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.as_f64()
}
