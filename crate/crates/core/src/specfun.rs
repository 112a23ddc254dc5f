//! Configurable-precision real arithmetic and the special functions used by
//! the weight formulas and series terms.
//!
//! Everything runs on MPFR floats whose precision is derived from a
//! [`PrecisionContext`]. Functions evaluate internally with a few guard words
//! and round the result to the context precision.

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use thiserror::Error;

/// Arbitrary-precision real number. Arithmetic (`+ - * /`, `exp`, `ln`,
/// `pow`) is closed at the precision the value was created with.
pub type RealHP = Float;

const LOG2_10: f64 = std::f64::consts::LOG2_10;
const GUARD_BITS: u32 = 64;
const MAX_SERIES_TERMS: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecFunError {
    #[error("{func}: argument outside the domain ({detail})")]
    Domain { func: &'static str, detail: String },
    #[error("working precision of {0} digits is below the minimum of 30")]
    Precision(u32),
    #[error("2F1: z = {0} lies outside the implemented domain (z >= 1)")]
    HypergeometricDomain(f64),
    #[error("{func}: series failed to converge after {terms} terms")]
    NoConvergence { func: &'static str, terms: usize },
}

pub type Result<T> = std::result::Result<T, SpecFunError>;

/// Working precision in decimal digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrecisionContext {
    digits: u32,
}

impl PrecisionContext {
    pub const MIN_DIGITS: u32 = 30;

    pub fn new(digits: u32) -> Result<Self> {
        if digits < Self::MIN_DIGITS {
            return Err(SpecFunError::Precision(digits));
        }
        Ok(Self { digits })
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    /// Binary precision of values created by this context.
    pub fn bits(&self) -> u32 {
        (f64::from(self.digits) * LOG2_10).ceil() as u32 + 16
    }

    /// Precision used inside special-function kernels.
    pub fn guard_bits(&self) -> u32 {
        self.bits() + GUARD_BITS
    }

    pub fn doubled(&self) -> Self {
        Self {
            digits: self.digits * 2,
        }
    }

    pub fn real(&self, v: f64) -> RealHP {
        Float::with_val(self.bits(), v)
    }

    pub fn int(&self, v: i64) -> RealHP {
        Float::with_val(self.bits(), v)
    }

    pub fn zero(&self) -> RealHP {
        Float::new(self.bits())
    }

    pub fn one(&self) -> RealHP {
        Float::with_val(self.bits(), 1)
    }

    pub fn pi(&self) -> RealHP {
        Float::with_val(self.bits(), Constant::Pi)
    }

    /// Rounds `v` to this context's precision.
    pub fn round(&self, v: &RealHP) -> RealHP {
        Float::with_val(self.bits(), v)
    }

    /// 10^(-digits).
    pub fn epsilon(&self) -> RealHP {
        let ten = Float::with_val(self.bits(), 10);
        ten.pow(-i64::from(self.digits))
    }
}

fn positive(func: &'static str, name: &str, x: &RealHP) -> Result<()> {
    if x.is_nan() || *x <= 0 {
        return Err(SpecFunError::Domain {
            func,
            detail: format!("{name} = {} must be > 0", x.to_f64()),
        });
    }
    Ok(())
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: &RealHP, ctx: &PrecisionContext) -> Result<RealHP> {
    positive("ln_gamma", "x", x)?;
    Ok(Float::with_val(ctx.bits(), x.ln_gamma_ref()))
}

/// Γ(x) for x > 0, via `exp(ln_gamma)`.
pub fn gamma(x: &RealHP, ctx: &PrecisionContext) -> Result<RealHP> {
    positive("gamma", "x", x)?;
    let lg = Float::with_val(ctx.guard_bits(), x.ln_gamma_ref());
    Ok(Float::with_val(ctx.bits(), lg.exp_ref()))
}

/// Regularized lower incomplete gamma Υ(a, x)/Γ(a).
///
/// Lower power series for `x < a + 1`, upper continued fraction otherwise.
pub fn reg_lower_inc_gamma(a: &RealHP, x: &RealHP, ctx: &PrecisionContext) -> Result<RealHP> {
    positive("reg_lower_inc_gamma", "a", a)?;
    check_nonnegative_x("reg_lower_inc_gamma", x)?;
    if x.is_zero() {
        return Ok(ctx.zero());
    }
    let prec = ctx.guard_bits();
    let a = Float::with_val(prec, a);
    let x = Float::with_val(prec, x);
    let v = if x < Float::with_val(prec, &a + 1u32) {
        lower_series(&a, &x, prec)?
    } else {
        let q = upper_fraction(&a, &x, prec)?;
        Float::with_val(prec, 1) - q
    };
    Ok(Float::with_val(ctx.bits(), v))
}

/// Regularized upper incomplete gamma Γ(a, x)/Γ(a).
pub fn reg_upper_inc_gamma(a: &RealHP, x: &RealHP, ctx: &PrecisionContext) -> Result<RealHP> {
    positive("reg_upper_inc_gamma", "a", a)?;
    check_nonnegative_x("reg_upper_inc_gamma", x)?;
    if x.is_zero() {
        return Ok(ctx.one());
    }
    let prec = ctx.guard_bits();
    let a = Float::with_val(prec, a);
    let x = Float::with_val(prec, x);
    let v = if x < Float::with_val(prec, &a + 1u32) {
        Float::with_val(prec, 1) - lower_series(&a, &x, prec)?
    } else {
        upper_fraction(&a, &x, prec)?
    };
    Ok(Float::with_val(ctx.bits(), v))
}

fn check_nonnegative_x(func: &'static str, x: &RealHP) -> Result<()> {
    if x.is_nan() || *x < 0 {
        return Err(SpecFunError::Domain {
            func,
            detail: format!("x = {} must be >= 0", x.to_f64()),
        });
    }
    Ok(())
}

// x^a e^-x / Γ(a+1) · Σ x^k / (a+1)_k
fn lower_series(a: &Float, x: &Float, prec: u32) -> Result<Float> {
    let mut term = Float::with_val(prec, 1);
    let mut sum = Float::with_val(prec, 1);
    let mut denom = Float::with_val(prec, a);
    for k in 1..MAX_SERIES_TERMS {
        denom += 1u32;
        term *= x;
        term /= &denom;
        sum += &term;
        if k > 2 && negligible(&term, &sum, prec) {
            let ln_pref = Float::with_val(prec, a * Float::with_val(prec, x.ln_ref()))
                - x
                - Float::with_val(prec, Float::with_val(prec, a + 1u32).ln_gamma_ref());
            return Ok(ln_pref.exp() * sum);
        }
    }
    Err(SpecFunError::NoConvergence {
        func: "reg_lower_inc_gamma",
        terms: MAX_SERIES_TERMS,
    })
}

// Modified Lentz evaluation of the Legendre continued fraction for Γ(a,x)/Γ(a).
fn upper_fraction(a: &Float, x: &Float, prec: u32) -> Result<Float> {
    let tiny = Float::with_val(prec, Float::i_exp(1, -(prec as i32) * 4));
    let mut b = Float::with_val(prec, x + 1u32) - a;
    let mut c = Float::with_val(prec, 1) / &tiny;
    let mut d = Float::with_val(prec, 1) / &b;
    let mut h = d.clone();
    for i in 1..MAX_SERIES_TERMS {
        let an = -Float::with_val(prec, i) * (Float::with_val(prec, i) - a);
        b += 2u32;
        d = Float::with_val(prec, &an * &d) + &b;
        if d.is_zero() {
            d = tiny.clone();
        }
        c = Float::with_val(prec, &an / &c) + &b;
        if c.is_zero() {
            c = tiny.clone();
        }
        d.recip_mut();
        let delta = Float::with_val(prec, &d * &c);
        h *= &delta;
        let dev = Float::with_val(prec, &delta - 1u32).abs();
        if dev.get_exp().is_some_and(|e| e < -(prec as i32) + 2) || dev.is_zero() {
            let ln_pref = Float::with_val(prec, a * Float::with_val(prec, x.ln_ref()))
                - x
                - Float::with_val(prec, a.ln_gamma_ref());
            return Ok(ln_pref.exp() * h);
        }
    }
    Err(SpecFunError::NoConvergence {
        func: "reg_upper_inc_gamma",
        terms: MAX_SERIES_TERMS,
    })
}

fn negligible(term: &Float, sum: &Float, prec: u32) -> bool {
    if term.is_zero() {
        return true;
    }
    match (term.get_exp(), sum.get_exp()) {
        (Some(te), Some(se)) => te < se - prec as i32 - 2,
        (Some(_), None) => false,
        _ => true,
    }
}

fn is_nonpositive_integer(c: &Float) -> bool {
    *c <= 0 && c.is_integer()
}

/// Gauss hypergeometric ₂F₁(a, b; c; z) for real z < 1.
///
/// Negative arguments go through the Pfaff transformation
/// `(1-z)^(-a) ₂F₁(a, c-b; c; z/(z-1))`, whose argument lies in (0, 1).
pub fn gauss_2f1(
    a: &RealHP,
    b: &RealHP,
    c: &RealHP,
    z: &RealHP,
    ctx: &PrecisionContext,
) -> Result<RealHP> {
    if is_nonpositive_integer(c) {
        return Err(SpecFunError::Domain {
            func: "gauss_2f1",
            detail: format!("c = {} is a non-positive integer", c.to_f64()),
        });
    }
    if *z >= 1 {
        return Err(SpecFunError::HypergeometricDomain(z.to_f64()));
    }
    let prec = ctx.guard_bits();
    let v = if *z < 0 {
        let one_minus_z = Float::with_val(prec, 1) - z;
        let w = Float::with_val(prec, z / Float::with_val(prec, z - 1u32));
        let cb = Float::with_val(prec, c - b);
        let series = hyp_series(a, &cb, c, &w, prec)?;
        let scale = one_minus_z.pow(Float::with_val(prec, -a));
        scale * series
    } else {
        hyp_series(a, b, c, z, prec)?
    };
    Ok(Float::with_val(ctx.bits(), v))
}

/// Direct Gauss series Σ (a)_k (b)_k / ((c)_k k!) z^k, valid for |z| < 1.
pub fn gauss_2f1_series(
    a: &RealHP,
    b: &RealHP,
    c: &RealHP,
    z: &RealHP,
    ctx: &PrecisionContext,
) -> Result<RealHP> {
    if is_nonpositive_integer(c) {
        return Err(SpecFunError::Domain {
            func: "gauss_2f1_series",
            detail: format!("c = {} is a non-positive integer", c.to_f64()),
        });
    }
    if Float::with_val(53, z.abs_ref()) >= 1 {
        return Err(SpecFunError::HypergeometricDomain(z.to_f64()));
    }
    let v = hyp_series(a, b, c, z, ctx.guard_bits())?;
    Ok(Float::with_val(ctx.bits(), v))
}

fn hyp_series(a: &Float, b: &Float, c: &Float, z: &Float, prec: u32) -> Result<Float> {
    let mut term = Float::with_val(prec, 1);
    let mut sum = Float::with_val(prec, 1);
    let mut ak = Float::with_val(prec, a);
    let mut bk = Float::with_val(prec, b);
    let mut ck = Float::with_val(prec, c);
    let mut small_run = 0;
    for k in 1..MAX_SERIES_TERMS {
        term *= &ak;
        term *= &bk;
        term /= &ck;
        term /= k as u32;
        term *= z;
        if term.is_zero() {
            return Ok(sum);
        }
        sum += &term;
        ak += 1u32;
        bk += 1u32;
        ck += 1u32;
        // Terms may grow before they decay; require a run of negligible ones.
        if negligible(&term, &sum, prec) {
            small_run += 1;
            if small_run >= 3 {
                return Ok(sum);
            }
        } else {
            small_run = 0;
        }
    }
    Err(SpecFunError::NoConvergence {
        func: "gauss_2f1",
        terms: MAX_SERIES_TERMS,
    })
}

/// Generalized Laguerre polynomial L_k^a(x) by the three-term recurrence.
pub fn laguerre(k: usize, a: &RealHP, x: &RealHP, ctx: &PrecisionContext) -> RealHP {
    laguerre_sequence(k + 1, a, x, ctx)
        .pop()
        .unwrap_or_else(|| ctx.one())
}

/// L_0^a(x), …, L_{count-1}^a(x).
pub fn laguerre_sequence(count: usize, a: &RealHP, x: &RealHP, ctx: &PrecisionContext) -> Vec<RealHP> {
    let prec = ctx.guard_bits();
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let a = Float::with_val(prec, a);
    let x = Float::with_val(prec, x);
    let mut prev = Float::with_val(prec, 1);
    out.push(Float::with_val(ctx.bits(), &prev));
    if count == 1 {
        return out;
    }
    let mut cur = Float::with_val(prec, 1u32 + &a) - &x;
    out.push(Float::with_val(ctx.bits(), &cur));
    for n in 1..count - 1 {
        // (n+1) L_{n+1} = (2n+1+a-x) L_n - (n+a) L_{n-1}
        let lead = Float::with_val(prec, &a - &x) + (2 * n + 1) as u32;
        let lag = Float::with_val(prec, &a + n as u32);
        let next = (lead * &cur - lag * &prev) / (n as u32 + 1);
        prev = cur;
        cur = next;
        out.push(Float::with_val(ctx.bits(), &cur));
    }
    out
}

/// Pochhammer symbol (a)_n = a (a+1) ⋯ (a+n-1).
pub fn pochhammer(a: &RealHP, n: usize, ctx: &PrecisionContext) -> RealHP {
    let prec = ctx.guard_bits();
    let mut acc = Float::with_val(prec, 1);
    let mut f = Float::with_val(prec, a);
    for _ in 0..n {
        acc *= &f;
        f += 1u32;
    }
    Float::with_val(ctx.bits(), acc)
}

/// Relative distance |a - b| / max(|b|, tiny), as an f64 for reporting.
pub fn rel_diff(a: &RealHP, b: &RealHP) -> f64 {
    let prec = a.prec().max(b.prec());
    let diff = Float::with_val(prec, a - b).abs();
    if b.is_zero() {
        return diff.to_f64();
    }
    let scale = Float::with_val(prec, b.abs_ref());
    (diff / scale).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(50).unwrap()
    }

    fn close(a: &RealHP, b: f64, tol: f64) {
        let v = a.to_f64();
        assert!((v - b).abs() <= tol * b.abs().max(1e-300), "{v} vs {b}");
    }

    #[test]
    fn precision_floor_is_enforced() {
        assert!(PrecisionContext::new(29).is_err());
        assert_eq!(PrecisionContext::new(30).unwrap().digits(), 30);
    }

    #[test]
    fn ln_gamma_small_integers_and_half() {
        let c = ctx();
        close(&ln_gamma(&c.real(5.0), &c).unwrap(), 24f64.ln(), 1e-15);
        close(
            &ln_gamma(&c.real(0.5), &c).unwrap(),
            std::f64::consts::PI.sqrt().ln(),
            1e-15,
        );
        assert!(ln_gamma(&c.real(0.0), &c).is_err());
        assert!(ln_gamma(&c.real(-1.5), &c).is_err());
    }

    #[test]
    fn incomplete_gamma_exponential_and_origin() {
        let c = ctx();
        for x in [0.1, 1.0, 2.5, 7.0, 30.0] {
            let p = reg_lower_inc_gamma(&c.one(), &c.real(x), &c).unwrap();
            let expect = -(-x as f64).exp_m1();
            close(&p, expect, 1e-15);
        }
        assert!(reg_lower_inc_gamma(&c.real(3.0), &c.zero(), &c).unwrap().is_zero());
        assert!(reg_lower_inc_gamma(&c.zero(), &c.one(), &c).is_err());
        assert!(reg_lower_inc_gamma(&c.one(), &c.real(-1.0), &c).is_err());
    }

    #[test]
    fn incomplete_gamma_regions_agree_at_the_split() {
        let c = ctx();
        let a = c.real(4.25);
        // just either side of x = a + 1
        let lo = reg_lower_inc_gamma(&a, &c.real(5.2499999), &c).unwrap();
        let hi = reg_lower_inc_gamma(&a, &c.real(5.2500001), &c).unwrap();
        assert!(hi > lo);
        assert!((hi.to_f64() - lo.to_f64()).abs() < 1e-6);
        let sum = reg_lower_inc_gamma(&a, &c.real(9.0), &c).unwrap()
            + reg_upper_inc_gamma(&a, &c.real(9.0), &c).unwrap();
        assert!(rel_diff(&sum, &c.one()) < 1e-45);
    }

    #[test]
    fn hypergeometric_identities() {
        let c = ctx();
        let a = c.real(1.7);
        let b = c.real(0.3);
        for z in [-3.0, -0.8, -0.1, 0.2, 0.7] {
            let zz = c.real(z);
            let f = gauss_2f1(&a, &b, &b, &zz, &c).unwrap();
            let expect = Float::with_val(c.bits(), 1 - zz.clone()).pow(-a.clone());
            assert!(rel_diff(&f, &expect) < 1e-45, "z={z}");
            let one = c.one();
            let two = c.real(2.0);
            let g = gauss_2f1(&one, &one, &two, &zz, &c).unwrap();
            let expect = -Float::with_val(c.bits(), 1 - zz.clone()).ln() / &zz;
            assert!(rel_diff(&g, &expect) < 1e-45, "z={z}");
        }
        assert!(gauss_2f1(&a, &b, &c.real(-2.0), &c.real(0.5), &c).is_err());
        assert!(matches!(
            gauss_2f1(&a, &b, &c.real(1.5), &c.real(1.0), &c),
            Err(SpecFunError::HypergeometricDomain(_))
        ));
    }

    #[test]
    fn laguerre_low_degrees() {
        let c = ctx();
        let a = c.real(0.75);
        let x = c.real(-1.3);
        assert_eq!(laguerre(0, &a, &x, &c), 1);
        close(&laguerre(1, &a, &x, &c), 1.0 + 0.75 + 1.3, 1e-15);
        let (af, xf) = (0.75, -1.3);
        let l2 = xf * xf / 2.0 - (af + 2.0) * xf + (af + 1.0) * (af + 2.0) / 2.0;
        close(&laguerre(2, &a, &x, &c), l2, 1e-15);
    }

    #[test]
    fn pochhammer_products() {
        let c = ctx();
        assert_eq!(pochhammer(&c.real(2.5), 0, &c), 1);
        assert_eq!(pochhammer(&c.real(3.0), 4, &c), 360);
        assert_eq!(pochhammer(&c.real(0.5), 3, &c), 1.875);
    }
}
