//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All geometry and quadrature is written against [`Real`], which is
//! implemented for `f32` and `f64`. Exact quantities (analytic degrees)
//! use rationals from `num-rational` instead.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type usable by the laboratory.
pub trait Real: 'static + Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Default + Send + Sync + Debug + Display + LowerExp {
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Formats a float with 17 significant digits in a locale-free form.
///
/// Non-finite values are written as `nan`, `inf` or `-inf`.
pub fn fmt_sig17(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{:.16e}", x)
    }
}

/// A JSON number token with 17 significant digits; `null` when not finite.
pub fn json_num(x: f64) -> Box<serde_json::value::RawValue> {
    let text = if x.is_finite() { fmt_sig17(x) } else { "null".to_string() };
    serde_json::value::RawValue::from_string(text).expect("valid JSON number")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_round_trips() {
        for &x in &[0.0, 1.5, -2.0 / 3.0, 1e-300, 6.02214076e23] {
            let s = fmt_sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_sig17(1.5), "1.5000000000000000e0");
        assert_eq!(fmt_sig17(f64::NAN), "nan");
    }
}
