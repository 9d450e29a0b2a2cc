//! Double-double accumulation.
//!
//! Only the pieces the coefficient recurrence needs: error-free sums and
//! products, and a compensated dot-product accumulator.

use std::ops::{Add, Div, Mul, Neg, Sub};

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

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    /// `exp(-x)` for `x` given as a double-double, accurate to ~1e-30 relative
    /// for moderate arguments.
    pub fn exp_neg(x: Dd) -> Dd {
        // Split off the nearest integer multiple of ln 2 and use a Taylor series
        // on the remainder scaled by 2^-10.
        const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };
        let y = -x;
        let k = (y.hi / LN2.hi).round();
        let r = (y - LN2 * k) * Dd::new(1.0 / 1024.0);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=24 {
            term = term * r / Dd::new(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-34 {
                break;
            }
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        Dd { hi: sum.hi * 2f64.powi(k as i32), lo: sum.lo * 2f64.powi(k as i32) }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
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
        Dd { hi: -self.hi, lo: -self.lo }
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

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, o: f64) -> Dd {
        let (p, e) = two_prod(self.hi, o);
        let (hi, lo) = quick_two_sum(p, e + self.lo * o);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * q1;
        let q2 = r.hi / o.hi;
        let r = r - o * q2;
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// Running sum in double-double.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: Dd,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        self.sum = self.sum + Dd::new(x);
    }

    pub fn add_dd(&mut self, x: Dd) {
        self.sum = self.sum + x;
    }

    pub fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.sum = self.sum + Dd { hi: p, lo: e };
    }

    pub fn value(&self) -> Dd {
        self.sum
    }
}

/// Compensated sum of a slice.
pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::new();
    for x in xs {
        acc.add(x);
    }
    acc.value().to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_digits() {
        let xs = [1e16, 1.0, -1e16, 1e-3];
        assert_eq!(sum(xs), 1.001);
        let naive: f64 = xs.iter().sum();
        assert_ne!(naive, 1.001);
    }

    #[test]
    fn division_round_trip() {
        let a = Dd::new(1.0) / Dd::new(3.0);
        let back = a * Dd::new(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
    }

    #[test]
    fn exp_neg_matches_std() {
        for &x in &[0.0, 0.3, 1.0, 7.5, 40.0] {
            let v = Dd::exp_neg(Dd::new(x)).to_f64();
            assert!((v - (-x).exp()).abs() <= 2e-16 * (-x).exp(), "x = {x}");
        }
        // e^{-1} to more than double precision
        let e1 = Dd::exp_neg(Dd::ONE);
        let reference = Dd { hi: 0.36787944117144233, lo: -1.2428753672788363e-17 };
        // ten squarings amplify the rounding of the reduced series about a thousandfold
        assert!((e1 - reference).to_f64().abs() < 1e-28);
    }
}
