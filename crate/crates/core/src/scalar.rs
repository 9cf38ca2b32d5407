//! Floating-point abstraction for code paths that run in both `f64` and
//! double-double precision (the shooting integrators).

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use twofloat::TwoFloat;

pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Unit roundoff of the representation.
    const EPSILON: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// `self^e` for `self >= 0`.
    fn powf_nonneg(self, e: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_f64(num as f64) / Self::from_f64(den as f64)
    }

    /// `|x|^e` with an integer fast path; zero maps to zero for `e > 0`.
    fn abs_pow(self, e: f64) -> Self {
        let a = self.abs();
        if e == 0.0 {
            return Self::one();
        }
        if e.fract() == 0.0 && e.abs() <= 64.0 {
            return a.powi(e as i32);
        }
        if a == Self::zero() {
            return Self::zero();
        }
        a.powf_nonneg(e)
    }

    /// `sign(x)|x|^e`.
    fn signed_pow(self, e: f64) -> Self {
        let m = self.abs_pow(e);
        if self < Self::zero() {
            -m
        } else {
            m
        }
    }
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }

    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }

    #[inline]
    fn powf_nonneg(self, e: f64) -> Self {
        self.powf(e)
    }
}

/// Double-double number backed by [`TwoFloat`] with a correctly rounded
/// quotient; `TwoFloat`'s own `TwoFloat / TwoFloat` loses the low word when
/// the divisor is a plain double.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct DoubleDouble(pub TwoFloat);

impl DoubleDouble {
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        DoubleDouble(self.0 + rhs.0)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        DoubleDouble(self.0 - rhs.0)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        DoubleDouble(self.0 * rhs.0)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    /// Long division with three partial quotients.
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let b = rhs.0;
        let q1 = self.0.hi() / b.hi();
        let r = self.0 - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        DoubleDouble(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        DoubleDouble(-self.0)
    }
}

impl Real for DoubleDouble {
    // 2^-104
    const EPSILON: f64 = 4.930380657631324e-32;

    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleDouble(TwoFloat::from(x))
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self.0.hi() + self.0.lo()
    }

    #[inline]
    fn abs(self) -> Self {
        DoubleDouble(self.0.abs())
    }

    fn powi(self, n: i32) -> Self {
        let mut result = Self::one();
        let mut base = self;
        let mut k = n.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            k >>= 1;
        }
        if n < 0 {
            Self::one() / result
        } else {
            result
        }
    }

    fn powf_nonneg(self, e: f64) -> Self {
        if self.0 == 0.0 {
            return Self::zero();
        }
        if e == 0.5 {
            return DoubleDouble(self.0.sqrt());
        }
        DoubleDouble(self.0.powf(TwoFloat::from(e)))
    }
}
