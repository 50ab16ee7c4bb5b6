//! Double-double arithmetic (about 32 significant digits).
//!
//! Only what the finite-difference reference needs: the four operations,
//! `sqrt` and `exp`. An unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
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

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    pub fn max_zero(self) -> Dd {
        if self.is_positive() {
            self
        } else {
            Dd::ZERO
        }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        // One Newton step from the f64 root doubles the precision.
        let x = self.hi.sqrt();
        let xd = Dd::from(x);
        let r = self - xd * xd;
        xd + r / Dd::from(2.0 * x)
    }

    /// `exp` by halving into `|x| < 2^-10`, a Taylor series for `expm1`, then
    /// doubling back with `expm1(2r) = 2 e + e^2` (squaring `exp` directly
    /// would amplify the rounding error by `2^k`).
    pub fn exp(self) -> Dd {
        if self.hi < -700.0 {
            return Dd::ZERO;
        }
        let mut k = 0;
        let mut r = self;
        while r.hi.abs() > 1.0 / 1024.0 {
            r = r * Dd::from(0.5);
            k += 1;
        }
        let mut term = r;
        let mut em1 = r;
        for n in 2..=16 {
            term = term * r / Dd::from(n as f64);
            em1 = em1 + term;
        }
        for _ in 0..k {
            em1 = em1 * Dd::from(2.0) + em1 * em1;
        }
        Dd::ONE + em1
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

impl std::iter::Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}
