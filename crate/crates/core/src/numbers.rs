//! Length-spectrum diagnostics: lattice (non-weak-mixing) detection and a
//! continued-fraction probe of the Diophantine ratio of three orbit lengths.
//!
//! Both are diagnostics on finite-precision data. Neither certifies anything.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeVerdict {
    /// Common generator `a` with every length in `a*Z` up to `tol`.
    pub generator: Option<f64>,
    pub iterations: usize,
    pub tolerance: f64,
}

impl LatticeVerdict {
    pub fn is_lattice(&self) -> bool {
        self.generator.is_some()
    }
}

/// Approximate real gcd of `lengths` by nearest-integer Euclid iteration.
///
/// Each pairwise reduction stops once the remainder drops below `tol`.
/// The running gcd is a lattice generator if it ends above `sqrt(tol)`.
pub fn lattice_test(lengths: &[f64], tol: f64) -> Result<LatticeVerdict> {
    if lengths.len() < 2 {
        return Err(Error::InvalidArgument(
            "lattice test needs at least two lengths".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if let Some(bad) = lengths.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("length {bad} is not positive")));
    }
    let floor = tol.sqrt();
    let mut g = lengths[0];
    let mut iterations = 0;
    for &x in &lengths[1..] {
        let (mut a, mut b) = (g.max(x), g.min(x));
        while b >= tol {
            iterations += 1;
            let r = a - b * (a / b).round();
            a = b;
            b = r.abs();
        }
        g = a;
        if g <= floor {
            return Ok(LatticeVerdict {
                generator: None,
                iterations,
                tolerance: tol,
            });
        }
    }
    Ok(LatticeVerdict {
        generator: Some(g),
        iterations,
        tolerance: tol,
    })
}

/// Continued-fraction expansion of the ratio of length differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineReport {
    pub beta: f64,
    /// `a0, a1, ...`; every entry was determined unambiguously by the
    /// tracked error interval.
    pub quotients: Vec<i64>,
    pub max_quotient: i64,
    /// Expansion ended on an exact (to precision) integer: rational-looking.
    pub terminated: bool,
    /// Error interval became too wide to determine the next quotient.
    pub precision_exhausted: bool,
    /// Lower bound on a quotient that exceeded the configured bound but
    /// could not be pinned down exactly.
    pub quotient_lower_bound: Option<i64>,
    /// Bound on the input error of `beta`.
    pub beta_error: f64,
    pub liouville_suspect: bool,
    pub arithmetic_like: bool,
}

impl DiophantineReport {
    /// Last convergent `p/q` of the reported quotients.
    pub fn convergent(&self) -> (f64, f64) {
        let (mut p0, mut q0, mut p1, mut q1) = (1.0, 0.0, 0.0, 1.0);
        for &a in &self.quotients {
            let a = a as f64;
            let (p, q) = (a * p0 + p1, a * q0 + q1);
            (p1, q1, p0, q0) = (p0, q0, p, q);
        }
        (p0, q0)
    }

    /// Bound on `|beta - p/q|` for the last convergent, including input error.
    pub fn reconstruction_bound(&self) -> f64 {
        let (_, q) = self.convergent();
        if self.terminated {
            return self.beta_error * 4.0 + f64::EPSILON * self.beta.abs();
        }
        1.0 / (q * q) + self.beta_error
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiophantineConfig {
    pub max_terms: usize,
    pub liouville_bound: u64,
    /// Relative precision floor applied to every subtraction.
    pub precision_floor: f64,
}

impl Default for DiophantineConfig {
    fn default() -> Self {
        Self {
            max_terms: 64,
            liouville_bound: 1_000_000,
            precision_floor: 1e-13,
        }
    }
}

/// Expands `beta = (l1 - l2) / (l2 - l3)` by the Gauss map with interval
/// error tracking, so no reported quotient is a rounding artifact.
pub fn diophantine_diagnostic(
    l1: f64,
    l2: f64,
    l3: f64,
    config: DiophantineConfig,
) -> Result<DiophantineReport> {
    let floor = config.precision_floor;
    let den = l2 - l3;
    if den.abs() <= floor * l2.abs().max(l3.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(
            "l2 - l3 is below the precision floor".into(),
        ));
    }
    let num = l1 - l2;
    let beta = num / den;
    // Inputs are taken as exact decimal literals rounded to double; each
    // subtraction may lose up to the relative floor of its operands.
    let num_err = floor * l1.abs().max(l2.abs());
    let den_err = floor * l2.abs().max(l3.abs());
    let beta_error =
        (num_err + beta.abs() * den_err) / den.abs() + f64::EPSILON * beta.abs();

    let mut quotients = Vec::new();
    let mut terminated = false;
    let mut precision_exhausted = false;
    let mut quotient_lower_bound = None;
    let (mut x, mut err) = (beta, beta_error);
    while quotients.len() < config.max_terms {
        let lo = (x - err).floor();
        let hi = (x + err).floor();
        if lo != hi {
            let nearest = x.round();
            if (x - nearest).abs() <= err && err < 1e-3 {
                // x is an integer to within precision: expansion ends here.
                quotients.push(nearest as i64);
                terminated = true;
            } else {
                precision_exhausted = true;
                if lo >= config.liouville_bound as f64 && !quotients.is_empty() {
                    quotient_lower_bound = Some(lo as i64);
                }
            }
            break;
        }
        if !quotients.is_empty() && lo < 1.0 {
            precision_exhausted = true;
            break;
        }
        quotients.push(lo as i64);
        let frac = x - lo;
        if frac <= err {
            terminated = true;
            break;
        }
        x = 1.0 / frac;
        err = err / ((frac - err) * frac) + f64::EPSILON * x;
    }

    let max_quotient = quotients.iter().skip(1).copied().max().unwrap_or(0);
    let liouville_suspect = max_quotient > config.liouville_bound as i64 || quotient_lower_bound.is_some();
    Ok(DiophantineReport {
        beta,
        max_quotient,
        terminated,
        precision_exhausted,
        quotient_lower_bound,
        beta_error,
        liouville_suspect,
        arithmetic_like: terminated,
        quotients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_form_lattice() {
        let v = lattice_test(&[1.0, 2.0, 3.0], 1e-9).unwrap();
        assert!((v.generator.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt2_is_not_lattice() {
        let v = lattice_test(&[1.0, std::f64::consts::SQRT_2], 1e-9).unwrap();
        assert!(v.generator.is_none());
        assert!(v.iterations > 10);
    }

    #[test]
    fn perturbation_absorbed() {
        let v = lattice_test(&[2.0, 4.0, 6.0 + 1e-12], 1e-9).unwrap();
        assert!((v.generator.unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn lattice_errors() {
        assert!(lattice_test(&[1.0], 1e-9).is_err());
        assert!(lattice_test(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn lattice_scale_equivariant() {
        for c in [0.5, 3.0, 17.25] {
            let base = [1.5, 2.25, 6.0];
            let scaled: Vec<f64> = base.iter().map(|x| x * c).collect();
            let g = lattice_test(&base, 1e-9).unwrap().generator.unwrap();
            let gs = lattice_test(&scaled, 1e-9 * c).unwrap().generator.unwrap();
            assert!((gs - c * g).abs() < 1e-9 * c, "{gs} vs {}", c * g);
        }
    }

    #[test]
    fn golden_ratio_all_ones() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let r = diophantine_diagnostic(2.0 + phi, 2.0, 1.0, DiophantineConfig::default()).unwrap();
        assert!((r.beta - phi).abs() < 1e-14);
        assert!(r.quotients.len() > 15, "{:?}", r.quotients);
        assert!(r.quotients.iter().all(|&a| a == 1), "{:?}", r.quotients);
        assert!(r.precision_exhausted && !r.terminated);
        assert!(!r.liouville_suspect && !r.arithmetic_like);
        let (p, q) = r.convergent();
        assert!((r.beta - p / q).abs() <= r.reconstruction_bound());
    }

    #[test]
    fn rational_terminates() {
        let r = diophantine_diagnostic(3.0, 2.0, 1.0, DiophantineConfig::default()).unwrap();
        assert_eq!(r.beta, 1.0);
        assert!(r.terminated && r.arithmetic_like);
        assert_eq!(r.quotients, vec![1]);
    }

    #[test]
    fn large_quotient_flags_liouville() {
        // beta = [1; 2, 3, 1e9, 2, 2]
        let qs = [1.0, 2.0, 3.0, 1e9, 2.0, 2.0];
        let mut x = qs[qs.len() - 1];
        for a in qs[..qs.len() - 1].iter().rev() {
            x = a + 1.0 / x;
        }
        let r = diophantine_diagnostic(1.0 + x, 1.0, 0.0, DiophantineConfig::default()).unwrap();
        assert_eq!(&r.quotients[..3], &[1, 2, 3]);
        assert!(r.liouville_suspect, "{r:?}");
        assert!(!r.arithmetic_like);
    }

    #[test]
    fn degenerate_denominator() {
        assert!(diophantine_diagnostic(3.0, 2.0, 2.0, DiophantineConfig::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reconstruction_within_bound(l1 in 0.5f64..50.0, l2 in 0.5f64..50.0, l3 in 0.5f64..50.0) {
                prop_assume!((l2 - l3).abs() > 1e-3);
                let r = diophantine_diagnostic(l1, l2, l3, DiophantineConfig::default()).unwrap();
                let (p, q) = r.convergent();
                prop_assert!(r.quotients.iter().skip(1).all(|&a| a >= 1));
                prop_assert!((r.beta - p / q).abs() <= r.reconstruction_bound() * (1.0 + 1e-9),
                    "beta {} p/q {} bound {}", r.beta, p / q, r.reconstruction_bound());
            }
        }
    }
}
