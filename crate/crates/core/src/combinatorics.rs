//! Binomial coefficients and the numeric backends shared by every valuation.
//!
//! Two backends implement [`Scalar`]: [`ExactRational`] (arbitrary precision,
//! the ground truth) and `f64`, which evaluates products of binomials in log
//! space so that weights such as `C(n-1, a+b)^-1 C(|A|, a) C(|B|, b)` stay
//! finite for large `n`.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Num, NumAssign, One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Exact rational number in lowest terms with a positive denominator.
pub type ExactRational = BigRational;

/// Which arithmetic backend a computation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    Exact,
    Float,
}

impl NumericMode {
    /// Documented relative tolerance of float mode against exact mode.
    pub const FLOAT_RELATIVE_TOLERANCE: f64 = 1e-9;
}

impl std::fmt::Display for NumericMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumericMode::Exact => f.write_str("exact"),
            NumericMode::Float => f.write_str("float"),
        }
    }
}

impl std::str::FromStr for NumericMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(NumericMode::Exact),
            "float" => Ok(NumericMode::Float),
            other => Err(format!("unknown numeric mode {other:?} (expected exact or float)")),
        }
    }
}

/// Arithmetic used by the valuation formulas.
pub trait Scalar:
    Clone + Debug + PartialEq + Num + NumAssign + Neg<Output = Self> + Send + Sync + 'static
{
    const MODE: NumericMode;

    /// `num / den`; `den` must be non-zero.
    fn from_ratio(num: u64, den: u64) -> Self;

    /// Converts a finite monetary amount. Exact for the rational backend.
    fn from_money(value: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// `prod C(n, k) over numer / prod C(n, k) over denom`.
    ///
    /// Zero when any numerator coefficient vanishes. A vanishing denominator
    /// coefficient also yields zero: every call site pairs it with a numerator
    /// that vanishes on the same index range.
    fn binom_ratio(numer: &[(i64, i64)], denom: &[(i64, i64)]) -> Self;

    /// Exact textual form, when the backend has one.
    fn exact_repr(&self) -> Option<String>;
}

impl Scalar for ExactRational {
    const MODE: NumericMode = NumericMode::Exact;

    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_money(value: f64) -> Self {
        BigRational::from_float(value).expect("monetary values are validated finite")
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }

    fn binom_ratio(numer: &[(i64, i64)], denom: &[(i64, i64)]) -> Self {
        let mut top = BigUint::one();
        for &(n, k) in numer {
            let c = binom(n, k);
            if c.is_zero() {
                return Self::zero();
            }
            top *= c;
        }
        let mut bottom = BigUint::one();
        for &(n, k) in denom {
            let c = binom(n, k);
            if c.is_zero() {
                return Self::zero();
            }
            bottom *= c;
        }
        BigRational::new(BigInt::from(top), BigInt::from(bottom))
    }

    fn exact_repr(&self) -> Option<String> {
        Some(self.to_string())
    }
}

impl Scalar for f64 {
    const MODE: NumericMode = NumericMode::Float;

    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn from_money(value: f64) -> Self {
        value
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn binom_ratio(numer: &[(i64, i64)], denom: &[(i64, i64)]) -> Self {
        let mut log = 0.0;
        for &(n, k) in numer {
            let l = log_binom(n, k);
            if l == f64::NEG_INFINITY {
                return 0.0;
            }
            log += l;
        }
        for &(n, k) in denom {
            let l = log_binom(n, k);
            if l == f64::NEG_INFINITY {
                return 0.0;
            }
            log -= l;
        }
        log.exp()
    }

    fn exact_repr(&self) -> Option<String> {
        None
    }
}

/// Nearest `f64` to a big rational, robust to numerators and denominators
/// beyond the `f64` range.
fn ratio_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Scale so the integer quotient carries 64+ significant bits.
    let nbits = r.numer().bits() as i64;
    let dbits = r.denom().bits() as i64;
    let shift = 64 - (nbits - dbits);
    let (num, den) = if shift >= 0 {
        (r.numer() << shift as usize, r.denom().clone())
    } else {
        (r.numer().clone(), r.denom() << (-shift) as usize)
    };
    let q = (num / den).to_f64().unwrap_or(0.0);
    q * 2f64.powi(-shift as i32)
}

/// `C(a, b)` with `C(a, b) = 0` whenever `b < 0` or `b > a`.
pub fn binom(a: i64, b: i64) -> BigUint {
    if b < 0 || a < 0 || b > a {
        return BigUint::zero();
    }
    let r = b.min(a - b) as u64;
    let a = a as u64;
    let mut acc = BigUint::one();
    for i in 1..=r {
        // acc * (a - r + i) is divisible by i: acc is C(a - r + i - 1, i - 1).
        acc *= a - r + i;
        acc /= i;
    }
    acc
}

/// Above this many factors `log_binom` switches from a direct sum of logs to
/// log-gamma differences.
const DIRECT_LOG_LIMIT: i64 = 24;

/// Natural log of `C(a, b)`; `f64::NEG_INFINITY` when the coefficient is zero.
pub fn log_binom(a: i64, b: i64) -> f64 {
    if b < 0 || a < 0 || b > a {
        return f64::NEG_INFINITY;
    }
    let r = b.min(a - b);
    if r == 0 {
        return 0.0;
    }
    if r <= DIRECT_LOG_LIMIT {
        let base = (a - r) as f64;
        let mut prod = 1.0f64;
        let mut log = 0.0f64;
        for i in 1..=r {
            prod *= (base + i as f64) / i as f64;
            if prod > 1e280 {
                log += prod.ln();
                prod = 1.0;
            }
        }
        return log + prod.ln();
    }
    use statrs::function::gamma::ln_gamma;
    ln_gamma(a as f64 + 1.0) - ln_gamma(b as f64 + 1.0) - ln_gamma((a - b) as f64 + 1.0)
}

/// Probability that a uniformly random permutation of `S_1 ∪ … ∪ S_m ∪ {i}`
/// places exactly `chosen[h]` elements of each `S_h` before `i`, for disjoint
/// sets of sizes `set_sizes`.
///
/// Returns zero when some `chosen[h]` is out of `0..=set_sizes[h]`.
pub fn precede_probability<S: Scalar>(set_sizes: &[u64], chosen: &[u64]) -> S {
    assert_eq!(set_sizes.len(), chosen.len(), "one chosen count per set");
    let t: u64 = 1 + set_sizes.iter().sum::<u64>();
    let u: u64 = chosen.iter().sum();
    let numer: Vec<(i64, i64)> = set_sizes
        .iter()
        .zip(chosen)
        .map(|(&size, &s)| (size as i64, s as i64))
        .collect();
    S::binom_ratio(&numer, &[(t as i64 - 1, u as i64)]) * S::from_ratio(1, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> ExactRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn binom_small_values() {
        assert_eq!(binom(5, 2), BigUint::from(10u32));
        assert_eq!(binom(3, 5), BigUint::zero());
        assert_eq!(binom(6, -1), BigUint::zero());
        assert_eq!(binom(0, 0), BigUint::one());
        assert_eq!(binom(-1, 0), BigUint::zero());
    }

    #[test]
    fn pascal_identity_exhaustive() {
        for a in 1..=60i64 {
            for b in 0..=a {
                assert_eq!(binom(a, b), binom(a - 1, b - 1) + binom(a - 1, b), "C({a},{b})");
            }
        }
    }

    #[test]
    fn log_binom_values() {
        assert!((log_binom(5, 2) - 10f64.ln()).abs() < 1e-15);
        assert_eq!(log_binom(3, 5), f64::NEG_INFINITY);
        assert_eq!(log_binom(7, 0), 0.0);
    }

    #[test]
    fn log_binom_matches_exact_in_both_regimes() {
        for &(a, b) in &[(40i64, 10i64), (40, 24), (200, 25), (1000, 500), (123_456, 7)] {
            let exact = big_ln(&binom(a, b));
            let approx = log_binom(a, b);
            assert!(((approx - exact) / exact).abs() < 1e-12, "C({a},{b}): {approx} vs {exact}");
        }
    }

    #[test]
    fn log_binom_half_of_a_million() {
        // ln C(a, b) = ln(a! / (a - b)!) - ln(b!), each side an exact integer.
        let (a, b) = (1_000_000u64, 500_000u64);
        let exact = big_ln(&product(a - b + 1, a)) - big_ln(&product(1, b));
        let approx = log_binom(a as i64, b as i64);
        assert!(((approx - exact) / exact).abs() < 1e-12, "{approx} vs {exact}");
    }

    /// `lo * (lo + 1) * ... * hi` by balanced splitting.
    fn product(lo: u64, hi: u64) -> BigUint {
        if hi - lo < 32 {
            return (lo..=hi).fold(BigUint::one(), |acc, x| acc * x);
        }
        let mid = lo + (hi - lo) / 2;
        product(lo, mid) * product(mid + 1, hi)
    }

    fn big_ln(x: &BigUint) -> f64 {
        let bits = x.bits();
        if bits <= 60 {
            return x.to_f64().unwrap().ln();
        }
        let shift = bits - 60;
        let top = (x >> shift).to_f64().unwrap();
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }

    #[test]
    fn precede_probability_examples() {
        assert_eq!(precede_probability::<ExactRational>(&[2, 1], &[1, 0]), q(1, 6));
        assert_eq!(precede_probability::<ExactRational>(&[], &[]), q(1, 1));
        assert_eq!(precede_probability::<ExactRational>(&[2], &[0]), q(1, 3));
        assert_eq!(precede_probability::<ExactRational>(&[2], &[3]), q(0, 1));
    }

    #[test]
    fn float_ratio_matches_exact() {
        let terms = [(499i64, 200i64), (250, 100)];
        let denom = [(749i64, 300i64)];
        let exact = Scalar::to_f64(&ExactRational::binom_ratio(&terms, &denom));
        let float = f64::binom_ratio(&terms, &denom);
        assert!(((float - exact) / exact).abs() < 1e-11);
    }

    #[test]
    fn ratio_to_f64_handles_huge_parts() {
        let big = BigInt::from(10u32).pow(400);
        let r = BigRational::new(big.clone() * 3, big * 4);
        assert_eq!(Scalar::to_f64(&r), 0.75);
        let tiny = BigRational::new(BigInt::one(), BigInt::from(2u32).pow(400) * 3);
        let expect = 2f64.powi(-400) / 3.0;
        assert!(((Scalar::to_f64(&tiny) - expect) / expect).abs() < 1e-15);
    }

    #[test]
    fn numeric_mode_parses() {
        assert_eq!("exact".parse::<NumericMode>().unwrap(), NumericMode::Exact);
        assert!("double".parse::<NumericMode>().is_err());
    }
}
