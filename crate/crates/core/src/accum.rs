//! Order-independent summation.
//!
//! Shard outputs are merged in whatever grouping the shard plan produces, so
//! every floating sum that reaches a report goes through a fixed-point
//! accumulator: each term is rounded once to a multiple of 2^-52 and the
//! integer additions are associative and commutative.

use num_complex::Complex64;

const SCALE: f64 = 4_503_599_627_370_496.0; // 2^52
const LIMIT: f64 = 1.0e37; // well inside i128 after scaling

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactSum {
    acc: i128,
    overflow: bool,
}

impl ExactSum {
    #[inline]
    fn quantize(x: f64) -> Option<i128> {
        let q = (x * SCALE).round();
        (q.is_finite() && q.abs() < LIMIT).then_some(q as i128)
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        match Self::quantize(x).and_then(|q| self.acc.checked_add(q)) {
            Some(v) => self.acc = v,
            None => self.overflow = true,
        }
    }

    /// Adds `x` repeated `times` times.
    #[inline]
    pub fn add_times(&mut self, x: f64, times: u64) {
        let v = Self::quantize(x)
            .and_then(|q| q.checked_mul(times as i128))
            .and_then(|q| self.acc.checked_add(q));
        match v {
            Some(v) => self.acc = v,
            None => self.overflow = true,
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        match self.acc.checked_add(other.acc) {
            Some(v) => self.acc = v,
            None => self.overflow = true,
        }
        self.overflow |= other.overflow;
    }

    pub fn overflowed(&self) -> bool {
        self.overflow
    }

    pub fn value(&self) -> f64 {
        if self.overflow {
            f64::NAN
        } else {
            self.acc as f64 / SCALE
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactComplexSum {
    pub re: ExactSum,
    pub im: ExactSum,
}

impl ExactComplexSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn add_times(&mut self, z: Complex64, times: u64) {
        self.re.add_times(z.re, times);
        self.im.add_times(z.im, times);
    }

    pub fn merge(&mut self, other: &ExactComplexSum) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn overflowed(&self) -> bool {
        self.re.overflowed() || self.im.overflowed()
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}
