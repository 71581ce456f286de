//! Double-double accumulator used for weighted sums.
//!
//! A value is an unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`, giving
//! roughly 106 significant bits. Products with `f64` weights are formed with
//! fused multiply-add, so regrouping a weighted mean changes the result only
//! far below `f64` resolution.

use std::ops::{Add, AddAssign, Sub};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Wide {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Wide {
    pub const ZERO: Wide = Wide { hi: 0.0, lo: 0.0 };

    fn normalized(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Wide { hi, lo }
    }

    /// `x * w`, exact.
    pub fn product(x: f64, w: f64) -> Self {
        let (p, e) = two_prod(x, w);
        Wide::normalized(p, e)
    }

    pub fn mul_f64(self, w: f64) -> Self {
        let (p, e) = two_prod(self.hi, w);
        Wide::normalized(p, e + self.lo * w)
    }

    pub fn div_f64(self, w: f64) -> Self {
        let q1 = self.hi / w;
        let (p, e) = two_prod(q1, w);
        let r = self - Wide { hi: p, lo: e };
        let q2 = (r.hi + r.lo) / w;
        Wide::normalized(q1, q2)
    }

    /// Nearest `f64`.
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }
}

impl From<f64> for Wide {
    fn from(x: f64) -> Self {
        Wide { hi: x, lo: 0.0 }
    }
}

impl Add for Wide {
    type Output = Wide;

    fn add(self, rhs: Wide) -> Wide {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Wide::normalized(s, e + f)
    }
}

impl AddAssign for Wide {
    fn add_assign(&mut self, rhs: Wide) {
        *self = *self + rhs;
    }
}

impl Sub for Wide {
    type Output = Wide;

    fn sub(self, rhs: Wide) -> Wide {
        self + Wide {
            hi: -rhs.hi,
            lo: -rhs.lo,
        }
    }
}
