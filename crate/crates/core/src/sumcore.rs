//! Composition of per-summand Laplace coefficient streams into one series for
//! the sum, with PDF/CDF evaluation and truncation control.
//!
//! A summand with `L{f}(s) = Ψ Σ η_i s^(-β-iθ)` is a [`LaplaceSeriesDescriptor`].
//! A [`SumSeries`] multiplies the transforms of its members, which in
//! coefficient space is the δ recursion driven by the logarithmic derivatives
//! φ of each stream. Inverting term by term gives
//!
//! ```text
//! f_X(x) = ΠΨ Σ δ_i x^(θi+B-1) / Γ(θi+B)
//! F_X(x) = ΠΨ Σ δ_i x^(θi+B)   / Γ(θi+B+1)        B = Σβ
//! ```
//!
//! The δ terms grow like Γ(θi+B)/i! and cancel, so all tables live at a
//! working precision that scales with the number of terms (see
//! [`working_digits`]).

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Assign, Float, Rational};
use thiserror::Error;

use crate::specfun::{self, PrecisionContext, RealHP, SpecFunError};

/// Default upper limit on the number of series terms.
pub const T_CAP: usize = 600;

/// Boxed error raised by a coefficient stream implementation.
pub type StreamError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum SumError {
    #[error("x = {0} must be positive")]
    Domain(f64),
    #[error("summands do not share one theta: {0} vs {1}")]
    ThetaMismatch(f64, f64),
    #[error("a sum needs at least one summand")]
    Empty,
    #[error("leading coefficient eta_0 is zero")]
    ZeroLeadingCoefficient,
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("invalid truncation policy: {0}")]
    Policy(String),
    #[error(
        "domain too wide for tolerance: no term count up to {t_cap} certifies epsilon = {epsilon:e} at x_max = {x_max}"
    )]
    DomainTooWide { x_max: f64, epsilon: f64, t_cap: usize },
    #[error("coefficient stream failed: {0}")]
    Stream(StreamError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

pub type Result<T> = std::result::Result<T, SumError>;

/// A summand's Laplace coefficient stream.
///
/// `eta(count, ctx)` must be deterministic and prefix-stable: asking for more
/// coefficients never changes the ones already returned.
pub trait LaplaceStream: Send + Sync + fmt::Debug {
    fn psi(&self, ctx: &PrecisionContext) -> RealHP;
    fn beta(&self, ctx: &PrecisionContext) -> RealHP;
    fn theta(&self) -> f64;
    fn eta(&self, count: usize, ctx: &PrecisionContext) -> std::result::Result<Vec<RealHP>, StreamError>;
}

/// Which series is evaluated: the density (ϱ = 0) or the CDF (ϱ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Pdf,
    Cdf,
}

impl Quantity {
    pub fn varrho(self) -> u32 {
        match self {
            Quantity::Pdf => 0,
            Quantity::Cdf => 1,
        }
    }
}

#[derive(Debug)]
struct DescriptorInner {
    stream: Box<dyn LaplaceStream>,
    theta: f64,
    cache: RwLock<HashMap<u32, Vec<RealHP>>>,
}

/// One summand's `(Ψ, β, θ, η_i)`, with η memoized per precision.
///
/// Cloning is cheap and clones share the coefficient cache; a sum built from
/// clones of one descriptor takes the i.i.d. path.
#[derive(Debug, Clone)]
pub struct LaplaceSeriesDescriptor {
    inner: Arc<DescriptorInner>,
}

impl LaplaceSeriesDescriptor {
    pub fn new(stream: impl LaplaceStream + 'static) -> Result<Self> {
        let theta = stream.theta();
        if !(theta.is_finite() && theta > 0.0) {
            return Err(SumError::InvalidDescriptor(format!("theta = {theta} must be > 0")));
        }
        let ctx = PrecisionContext::new(PrecisionContext::MIN_DIGITS)?;
        let psi = stream.psi(&ctx);
        let beta = stream.beta(&ctx);
        if !(psi.is_finite() && psi > 0) {
            return Err(SumError::InvalidDescriptor(format!("psi = {} must be > 0", psi.to_f64())));
        }
        if !(beta.is_finite() && beta > 0) {
            return Err(SumError::InvalidDescriptor(format!("beta = {} must be > 0", beta.to_f64())));
        }
        let desc = Self {
            inner: Arc::new(DescriptorInner {
                stream: Box::new(stream),
                theta,
                cache: RwLock::new(HashMap::new()),
            }),
        };
        if desc.eta(1, &ctx)?[0].is_zero() {
            return Err(SumError::ZeroLeadingCoefficient);
        }
        Ok(desc)
    }

    /// Descriptor from a closure `i ↦ η_i`; handy for synthetic streams.
    pub fn from_fn<F>(psi: f64, beta: f64, theta: f64, eta: F) -> Result<Self>
    where
        F: Fn(usize, &PrecisionContext) -> RealHP + Send + Sync + 'static,
    {
        Self::new(FnStream {
            psi,
            beta,
            theta,
            eta: Box::new(eta),
        })
    }

    pub fn theta(&self) -> f64 {
        self.inner.theta
    }

    pub fn psi(&self, ctx: &PrecisionContext) -> RealHP {
        self.inner.stream.psi(ctx)
    }

    pub fn beta(&self, ctx: &PrecisionContext) -> RealHP {
        self.inner.stream.beta(ctx)
    }

    /// η_0..η_{count-1} at `ctx`.
    pub fn eta(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        let key = ctx.digits();
        let mut want = count;
        if let Some(v) = self.inner.cache.read().expect("eta cache poisoned").get(&key) {
            if v.len() >= count {
                return Ok(v[..count].to_vec());
            }
            // grow geometrically so repeated small extensions stay linear
            want = count.max(v.len() + v.len() / 2);
        }
        let fresh = self.inner.stream.eta(want, ctx).map_err(SumError::Stream)?;
        if fresh.len() < count {
            return Err(SumError::Stream(
                format!("stream returned {} of {count} coefficients", fresh.len()).into(),
            ));
        }
        let mut cache = self.inner.cache.write().expect("eta cache poisoned");
        let slot = cache.entry(key).or_default();
        if slot.len() < fresh.len() {
            *slot = fresh.clone();
        }
        Ok(fresh[..count].to_vec())
    }

    pub fn same_as(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }
}

struct FnStream {
    psi: f64,
    beta: f64,
    theta: f64,
    eta: Box<dyn Fn(usize, &PrecisionContext) -> RealHP + Send + Sync>,
}

impl fmt::Debug for FnStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnStream")
            .field("psi", &self.psi)
            .field("beta", &self.beta)
            .field("theta", &self.theta)
            .finish_non_exhaustive()
    }
}

impl LaplaceStream for FnStream {
    fn psi(&self, ctx: &PrecisionContext) -> RealHP {
        ctx.real(self.psi)
    }
    fn beta(&self, ctx: &PrecisionContext) -> RealHP {
        ctx.real(self.beta)
    }
    fn theta(&self) -> f64 {
        self.theta
    }
    fn eta(&self, count: usize, ctx: &PrecisionContext) -> std::result::Result<Vec<RealHP>, StreamError> {
        Ok((0..count).map(|i| ctx.round(&(self.eta)(i, ctx))).collect())
    }
}

/// Field operations needed by the coefficient recursions, so the same code
/// runs on MPFR floats and on exact rationals.
pub trait SeriesScalar: Clone {
    fn zero_like(&self) -> Self;
    fn from_i64_like(&self, v: i64) -> Self;
    fn is_zero_value(&self) -> bool;
    fn add_mul(&mut self, a: &Self, b: &Self);
    fn mul_ref(&self, o: &Self) -> Self;
    fn div_ref(&self, o: &Self) -> Self;
    fn sub_ref(&self, o: &Self) -> Self;
}

impl SeriesScalar for Float {
    fn zero_like(&self) -> Self {
        Float::new(self.prec())
    }
    fn from_i64_like(&self, v: i64) -> Self {
        Float::with_val(self.prec(), v)
    }
    fn is_zero_value(&self) -> bool {
        self.is_zero()
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn mul_ref(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self * o)
    }
    fn div_ref(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self / o)
    }
    fn sub_ref(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self - o)
    }
}

impl SeriesScalar for Rational {
    fn zero_like(&self) -> Self {
        Rational::new()
    }
    fn from_i64_like(&self, v: i64) -> Self {
        Rational::from(v)
    }
    fn is_zero_value(&self) -> bool {
        *self.numer() == 0
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += Rational::from(a * b);
    }
    fn mul_ref(&self, o: &Self) -> Self {
        Rational::from(self * o)
    }
    fn div_ref(&self, o: &Self) -> Self {
        Rational::from(self / o)
    }
    fn sub_ref(&self, o: &Self) -> Self {
        Rational::from(self - o)
    }
}

/// Extends `phi` up to `target` entries from `eta` (needs `eta.len() > target`).
///
/// φ_0 = η_1/η_0, φ_h = ((h+1)η_{h+1} - Σ_{t=1}^{h} η_t φ_{h-t}) / η_0.
pub fn extend_phi<T: SeriesScalar>(eta: &[T], phi: &mut Vec<T>, target: usize) -> Result<()> {
    if eta[0].is_zero_value() {
        return Err(SumError::ZeroLeadingCoefficient);
    }
    assert!(eta.len() > target, "phi_{} needs eta up to index {}", target - 1, target);
    for h in phi.len()..target {
        let mut acc = eta[0].zero_like();
        for t in 1..=h {
            acc.add_mul(&eta[t], &phi[h - t]);
        }
        let lead = eta[h + 1].mul_ref(&eta[0].from_i64_like(h as i64 + 1));
        phi.push(lead.sub_ref(&acc).div_ref(&eta[0]));
    }
    Ok(())
}

/// Extends `delta` up to `target` entries; `s[h]` is Σ_ℓ φ_{h,ℓ} and
/// `delta[0]` must already hold Π η_{0,ℓ}.
pub fn extend_delta<T: SeriesScalar>(s: &[T], delta: &mut Vec<T>, target: usize) {
    assert!(!delta.is_empty(), "delta_0 must be seeded");
    for i in delta.len()..target {
        let mut acc = delta[0].zero_like();
        for h in 1..=i {
            acc.add_mul(&delta[i - h], &s[h - 1]);
        }
        delta.push(acc.div_ref(&delta[0].from_i64_like(i as i64)));
    }
}

/// i.i.d. form: δ_i = Σ_{h=1}^{i} δ_{i-h} η_h (hL + h - i) / (i η_0).
pub fn extend_delta_iid<T: SeriesScalar>(eta: &[T], l: usize, delta: &mut Vec<T>, target: usize) -> Result<()> {
    if eta[0].is_zero_value() {
        return Err(SumError::ZeroLeadingCoefficient);
    }
    if delta.is_empty() {
        let mut d0 = eta[0].from_i64_like(1);
        for _ in 0..l {
            d0 = d0.mul_ref(&eta[0]);
        }
        delta.push(d0);
    }
    let l = l as i64;
    for i in delta.len()..target {
        let mut acc = eta[0].zero_like();
        for h in 1..=i {
            let w = eta[h].mul_ref(&eta[0].from_i64_like(h as i64 * l + h as i64 - i as i64));
            acc.add_mul(&delta[i - h], &w);
        }
        let denom = eta[0].mul_ref(&eta[0].from_i64_like(i as i64));
        delta.push(acc.div_ref(&denom));
    }
    Ok(())
}

/// φ_0..φ_{h_max} of one descriptor.
pub fn phi_coeffs(desc: &LaplaceSeriesDescriptor, h_max: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
    let eta = desc.eta(h_max + 2, ctx)?;
    let mut phi = Vec::with_capacity(h_max + 1);
    extend_phi(&eta, &mut phi, h_max + 1)?;
    Ok(phi)
}

/// δ_0..δ_{i_max} by the general recursion over all members.
pub fn delta_coeffs(descs: &[LaplaceSeriesDescriptor], i_max: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
    check_theta(descs)?;
    let mut s: Vec<RealHP> = (0..i_max).map(|_| ctx.zero()).collect();
    let mut d0 = ctx.one();
    for d in descs {
        let eta = d.eta(i_max + 1, ctx)?;
        d0 *= &eta[0];
        let mut phi = Vec::with_capacity(i_max);
        extend_phi(&eta, &mut phi, i_max)?;
        for (acc, p) in s.iter_mut().zip(&phi) {
            *acc += p;
        }
    }
    let mut delta = vec![d0];
    extend_delta(&s, &mut delta, i_max + 1);
    Ok(delta)
}

/// δ_0..δ_{i_max} for L i.i.d. copies of `desc`.
pub fn delta_coeffs_iid(
    desc: &LaplaceSeriesDescriptor,
    l: usize,
    i_max: usize,
    ctx: &PrecisionContext,
) -> Result<Vec<RealHP>> {
    if l == 0 {
        return Err(SumError::Empty);
    }
    let eta = desc.eta(i_max + 1, ctx)?;
    let mut delta = Vec::with_capacity(i_max + 1);
    extend_delta_iid(&eta, l, &mut delta, i_max + 1)?;
    Ok(delta)
}

fn check_theta(descs: &[LaplaceSeriesDescriptor]) -> Result<f64> {
    let first = descs.first().ok_or(SumError::Empty)?.theta();
    for d in &descs[1..] {
        if d.theta() != first {
            return Err(SumError::ThetaMismatch(first, d.theta()));
        }
    }
    Ok(first)
}

/// Working precision for a series truncated at `t0` terms.
pub fn working_digits(t0: usize, theta: f64) -> u32 {
    let t = t0.max(2) as f64;
    let est = (0.45 * t0 as f64 * theta * t.log10()).ceil() as u32 + 25;
    est.max(50)
}

#[derive(Debug, Default)]
struct Tables {
    eta: Vec<Vec<RealHP>>,
    phi: Vec<Vec<RealHP>>,
    s: Vec<RealHP>,
    delta: Vec<RealHP>,
    inv_gamma: [Vec<RealHP>; 2],
}

/// The composed series for a sum of independent summands.
#[derive(Debug)]
pub struct SumSeries {
    groups: Vec<(LaplaceSeriesDescriptor, usize)>,
    count: usize,
    ctx: PrecisionContext,
    psi_prod: RealHP,
    beta_sum: RealHP,
    theta: f64,
    tables: RwLock<Tables>,
}

const CHUNK: usize = 16;

impl SumSeries {
    /// Sum of `members`; repeated clones of one descriptor are grouped, and a
    /// sum of a single group uses the i.i.d. recursion.
    pub fn new(members: &[LaplaceSeriesDescriptor], ctx: PrecisionContext) -> Result<Self> {
        let theta = check_theta(members)?;
        let mut groups: Vec<(LaplaceSeriesDescriptor, usize)> = Vec::new();
        for m in members {
            match groups.iter_mut().find(|(d, _)| d.same_as(m)) {
                Some(g) => g.1 += 1,
                None => groups.push((m.clone(), 1)),
            }
        }
        let mut psi_prod = ctx.one();
        let mut beta_sum = ctx.zero();
        for m in members {
            psi_prod *= m.psi(&ctx);
            beta_sum += m.beta(&ctx);
        }
        Ok(Self {
            groups,
            count: members.len(),
            ctx,
            psi_prod,
            beta_sum,
            theta,
            tables: RwLock::new(Tables::default()),
        })
    }

    /// `l` i.i.d. copies of `desc`.
    pub fn iid(desc: &LaplaceSeriesDescriptor, l: usize, ctx: PrecisionContext) -> Result<Self> {
        if l == 0 {
            return Err(SumError::Empty);
        }
        Self::new(&vec![desc.clone(); l], ctx)
    }

    pub fn ctx(&self) -> &PrecisionContext {
        &self.ctx
    }
    pub fn len(&self) -> usize {
        self.count
    }
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
    pub fn is_iid(&self) -> bool {
        self.groups.len() == 1
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn psi_prod(&self) -> &RealHP {
        &self.psi_prod
    }
    pub fn beta_sum(&self) -> &RealHP {
        &self.beta_sum
    }
    pub fn members(&self) -> Vec<LaplaceSeriesDescriptor> {
        self.groups
            .iter()
            .flat_map(|(d, k)| std::iter::repeat_n(d.clone(), *k))
            .collect()
    }

    /// Same members at another precision (fresh tables).
    pub fn with_precision(&self, ctx: PrecisionContext) -> Result<Self> {
        Self::new(&self.members(), ctx)
    }

    /// Makes δ_0..δ_{n-1} and the matching 1/Γ tables available.
    pub fn ensure(&self, n: usize) -> Result<()> {
        if self.tables.read().expect("series tables poisoned").delta.len() >= n {
            return Ok(());
        }
        let mut tb = self.tables.write().expect("series tables poisoned");
        if tb.delta.len() >= n {
            return Ok(());
        }
        let target = n.div_ceil(CHUNK) * CHUNK;
        self.extend(&mut tb, target)
    }

    fn extend(&self, tb: &mut Tables, target: usize) -> Result<()> {
        let ctx = &self.ctx;
        if tb.eta.is_empty() {
            tb.eta = vec![Vec::new(); self.groups.len()];
            tb.phi = vec![Vec::new(); self.groups.len()];
        }
        let fresh: Vec<Option<Vec<RealHP>>> = self
            .groups
            .par_iter()
            .zip(&tb.eta)
            .map(|((desc, _), have)| (have.len() < target).then(|| desc.eta(target, ctx)).transpose())
            .collect::<Result<_>>()?;
        for (slot, f) in tb.eta.iter_mut().zip(fresh) {
            if let Some(f) = f {
                *slot = f;
            }
        }
        if self.is_iid() {
            let l = self.groups[0].1;
            let eta = &tb.eta[0];
            extend_delta_iid(eta, l, &mut tb.delta, target)?;
        } else {
            if tb.delta.is_empty() {
                let mut d0 = ctx.one();
                for (g, (_, k)) in self.groups.iter().enumerate() {
                    for _ in 0..*k {
                        d0 *= &tb.eta[g][0];
                    }
                }
                tb.delta.push(d0);
            }
            let have = tb.s.len();
            tb.phi
                .par_iter_mut()
                .zip(&tb.eta)
                .try_for_each(|(phi, eta)| extend_phi(eta, phi, target - 1))?;
            for h in have..target - 1 {
                let mut acc = ctx.zero();
                for (g, (_, k)) in self.groups.iter().enumerate() {
                    acc += Float::with_val(ctx.bits(), &tb.phi[g][h] * *k as u32);
                }
                tb.s.push(acc);
            }
            let Tables { s, delta, .. } = tb;
            extend_delta(s, delta, target);
        }
        for (rho, table) in tb.inv_gamma.iter_mut().enumerate() {
            for i in table.len()..target {
                let arg = Float::with_val(ctx.guard_bits(), self.theta * i as f64) + &self.beta_sum + rho as u32;
                table.push(Float::with_val(ctx.bits(), arg.gamma().recip()));
            }
        }
        Ok(())
    }

    /// δ_0..δ_{n-1}.
    pub fn delta(&self, n: usize) -> Result<Vec<RealHP>> {
        self.ensure(n)?;
        Ok(self.tables.read().expect("series tables poisoned").delta[..n].to_vec())
    }

    /// The first `n` terms of the PDF or CDF series at `x`.
    pub fn terms(&self, x: &RealHP, n: usize, q: Quantity) -> Result<Vec<RealHP>> {
        check_x(x)?;
        self.ensure(n)?;
        let tb = self.tables.read().expect("series tables poisoned");
        let prec = self.ctx.guard_bits();
        let (mut pw, step) = self.powers(x, q, prec);
        let inv = &tb.inv_gamma[q.varrho() as usize];
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let t = Float::with_val(prec, &tb.delta[i] * &pw) * &inv[i];
            out.push(t);
            pw *= &step;
        }
        Ok(out)
    }

    // ΠΨ x^(B-1+ϱ) and x^θ
    fn powers(&self, x: &RealHP, q: Quantity, prec: u32) -> (Float, Float) {
        let x = Float::with_val(prec, x);
        let e0 = Float::with_val(prec, &self.beta_sum - 1u32) + q.varrho();
        let lead = Float::with_val(prec, (&x).pow(&e0)) * &self.psi_prod;
        let step = Float::with_val(prec, (&x).pow(self.theta));
        (lead, step)
    }

    fn partial_sum(&self, x: &RealHP, t0: usize, q: Quantity) -> Result<RealHP> {
        check_x(x)?;
        self.ensure(t0)?;
        let tb = self.tables.read().expect("series tables poisoned");
        let prec = self.ctx.guard_bits();
        let (mut pw, step) = self.powers(x, q, prec);
        let inv = &tb.inv_gamma[q.varrho() as usize];
        let mut acc = Float::new(prec);
        let mut term = Float::new(prec);
        for i in 0..t0 {
            term.assign(&tb.delta[i] * &pw);
            term *= &inv[i];
            acc += &term;
            pw *= &step;
        }
        Ok(self.ctx.round(&acc))
    }

    pub fn sum_density_hp(&self, x: &RealHP, t0: usize) -> Result<RealHP> {
        self.partial_sum(x, t0, Quantity::Pdf)
    }

    pub fn sum_cdf_hp(&self, x: &RealHP, t0: usize) -> Result<RealHP> {
        self.partial_sum(x, t0, Quantity::Cdf)
    }

    /// Partial density sum of the first `t0` terms.
    pub fn sum_density(&self, x: f64, t0: usize) -> Result<f64> {
        Ok(self.sum_density_hp(&self.ctx.real(x), t0)?.to_f64())
    }

    /// Partial CDF sum; `value` is clamped to [0, 1], `raw` is not.
    pub fn sum_cdf(&self, x: f64, t0: usize) -> Result<CdfValue> {
        let raw = self.sum_cdf_hp(&self.ctx.real(x), t0)?.to_f64();
        Ok(CdfValue {
            raw,
            value: raw.clamp(0.0, 1.0),
        })
    }

    /// PDF, CDF and both bounds at `x` with `t0` terms. The point is
    /// certified when both bounds are within ε and the last five terms of
    /// each series are below ε/10 (the same dual test as term selection).
    pub fn evaluate(&self, x: f64, t0: usize, epsilon: f64) -> Result<PointEvaluation> {
        if t0 < 5 {
            return Err(SumError::Policy(format!("t0 = {t0} must be >= 5")));
        }
        let xh = self.ctx.real(x);
        let limit = epsilon / 10.0;
        let mut sums = [0.0; 2];
        let mut tail_ok = true;
        for (k, q) in [Quantity::Pdf, Quantity::Cdf].into_iter().enumerate() {
            let terms = self.terms(&xh, t0, q)?;
            let mut acc = Float::new(self.ctx.guard_bits());
            for t in &terms {
                acc += t;
            }
            sums[k] = acc.to_f64();
            tail_ok &= terms[t0 - 5..].iter().all(|t| Float::with_val(53, t.abs_ref()).to_f64() < limit);
        }
        let pdf_bound = self.truncation_bound(x, t0, Quantity::Pdf)?;
        let cdf_bound = self.truncation_bound(x, t0, Quantity::Cdf)?;
        Ok(PointEvaluation {
            x,
            pdf: sums[0],
            cdf: sums[1],
            pdf_bound,
            cdf_bound,
            tail_ok,
            certified: tail_ok && pdf_bound.max(cdf_bound) <= epsilon,
        })
    }

    /// Truncation bound e^(x^θ) ΠΨ x^(θ+ϱ+B-1) Υ(t0-1, x^θ)/Γ(t0-1).
    pub fn truncation_bound(&self, x: f64, t0: usize, q: Quantity) -> Result<f64> {
        Ok(self.ln_truncation_bound(x, t0, q)?.exp())
    }

    /// Natural log of [`truncation_bound`](Self::truncation_bound); finite
    /// even where the bound itself underflows an f64.
    pub fn ln_truncation_bound(&self, x: f64, t0: usize, q: Quantity) -> Result<f64> {
        if t0 < 3 {
            return Err(SumError::Policy(format!("t0 = {t0} must be >= 3")));
        }
        if !(x > 0.0) {
            return Err(SumError::Domain(x));
        }
        let bctx = PrecisionContext::new(40)?;
        let xh = bctx.real(x);
        let xt = Float::with_val(bctx.bits(), (&xh).pow(self.theta));
        let reg = specfun::reg_lower_inc_gamma(&bctx.int(t0 as i64 - 1), &xt, &bctx)?;
        let expo = Float::with_val(bctx.bits(), &self.beta_sum - 1u32) + self.theta + q.varrho();
        let ln = Float::with_val(bctx.bits(), &xt)
            + Float::with_val(bctx.bits(), self.psi_prod.ln_ref())
            + expo * xh.ln()
            + reg.ln();
        Ok(ln.to_f64())
    }
}

fn check_x(x: &RealHP) -> Result<()> {
    if x.is_nan() || *x <= 0 {
        return Err(SumError::Domain(x.to_f64()));
    }
    Ok(())
}

/// One abscissa of a certified curve. `cdf` is the unclamped partial sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEvaluation {
    pub x: f64,
    pub pdf: f64,
    pub cdf: f64,
    pub pdf_bound: f64,
    pub cdf_bound: f64,
    /// Last five terms of both series below ε/10.
    pub tail_ok: bool,
    pub certified: bool,
}

/// A CDF partial sum: `raw` is the series value, `value` is clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfValue {
    pub raw: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub epsilon: f64,
    pub x_max: f64,
    pub quantity: Quantity,
    pub t_cap: usize,
}

impl TruncationPolicy {
    pub fn new(epsilon: f64, x_max: f64, quantity: Quantity) -> Self {
        Self {
            epsilon,
            x_max,
            quantity,
            t_cap: T_CAP,
        }
    }

    pub fn with_cap(mut self, t_cap: usize) -> Self {
        self.t_cap = t_cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SumError::Policy(format!("epsilon = {} must be > 0", self.epsilon)));
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return Err(SumError::Policy(format!("x_max = {} must be > 0", self.x_max)));
        }
        if self.t_cap < 3 {
            return Err(SumError::Policy(format!("t_cap = {} must be >= 3", self.t_cap)));
        }
        Ok(())
    }

    fn too_wide(&self) -> SumError {
        SumError::DomainTooWide {
            x_max: self.x_max,
            epsilon: self.epsilon,
            t_cap: self.t_cap,
        }
    }
}

/// Smallest t0 whose analytic bound at `x_max` is within ε; no δ needed.
pub fn bound_term_count(series: &SumSeries, policy: &TruncationPolicy) -> Result<usize> {
    policy.validate()?;
    let ln_eps = policy.epsilon.ln();
    let ok = |t: usize| -> Result<bool> {
        Ok(series.ln_truncation_bound(policy.x_max, t, policy.quantity)? <= ln_eps)
    };
    if !ok(policy.t_cap)? {
        return Err(policy.too_wide());
    }
    // the bound decreases in t0, so bisect
    let (mut lo, mut hi) = (3, policy.t_cap);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Smallest t0 in [3, t_cap] meeting both the analytic bound and the
/// empirical check that the last five terms at `x_max` are each below ε/10.
pub fn select_term_count(series: &SumSeries, policy: &TruncationPolicy) -> Result<usize> {
    let start = bound_term_count(series, policy)?;
    let x = series.ctx().real(policy.x_max);
    let limit = policy.epsilon / 10.0;
    let mut have = 0;
    let mut small: Vec<bool> = Vec::new();
    for t in start..=policy.t_cap {
        if t > have {
            have = (t + 32).min(policy.t_cap);
            small = series
                .terms(&x, have, policy.quantity)?
                .iter()
                .map(|v| Float::with_val(53, v.abs_ref()).to_f64() < limit)
                .collect();
        }
        if small[t.saturating_sub(5)..t].iter().all(|&b| b) {
            return Ok(t);
        }
    }
    Err(policy.too_wide())
}

/// Builds the series at a precision matched to its term count and selects
/// t0. A fixed `digits` disables the precision heuristic.
pub fn plan(
    members: &[LaplaceSeriesDescriptor],
    policies: &[TruncationPolicy],
    digits: Option<u32>,
) -> Result<(SumSeries, usize)> {
    let probe = SumSeries::new(members, PrecisionContext::new(50)?)?;
    let theta = probe.theta();
    let mut t_est = 3;
    for p in policies {
        t_est = t_est.max(bound_term_count(&probe, p)?);
    }
    let mut d = digits.unwrap_or_else(|| working_digits(t_est + 8, theta));
    loop {
        let series = SumSeries::new(members, PrecisionContext::new(d)?)?;
        let mut t0 = 3;
        for p in policies {
            t0 = t0.max(select_term_count(&series, p)?);
        }
        let need = working_digits(t0, theta);
        if digits.is_some() || need <= d {
            return Ok((series, t0));
        }
        d = need;
    }
}

/// Report of the growth ratios r_i = |η_i| / Γ(iθ + ε).
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub indices: Vec<usize>,
    pub log10_ratios: Vec<f64>,
    /// Set when r_{i+1}/r_i > 1 across the whole second half of the window.
    pub diverging: bool,
}

/// Heuristic check of the series growth condition on `desc`. Never blocks
/// evaluation.
pub fn growth_diagnostic(
    desc: &LaplaceSeriesDescriptor,
    epsilon_exp: f64,
    i_probe: usize,
    ctx: &PrecisionContext,
) -> Result<GrowthReport> {
    if i_probe < 10 {
        return Err(SumError::Policy(format!("i_probe = {i_probe} must be >= 10")));
    }
    let eta = desc.eta(i_probe + 1, ctx)?;
    let prec = ctx.guard_bits();
    let indices: Vec<usize> = (i_probe / 2..=i_probe).collect();
    let log10_ratios: Vec<f64> = indices
        .iter()
        .map(|&i| {
            let arg = Float::with_val(prec, desc.theta() * i as f64) + epsilon_exp;
            let lg = Float::with_val(prec, arg.ln_gamma_ref());
            let la = Float::with_val(prec, eta[i].abs_ref()).ln();
            ((la - lg) / std::f64::consts::LN_10).to_f64()
        })
        .collect();
    let half = log10_ratios.len() / 2;
    let diverging = log10_ratios[half..].windows(2).all(|w| w[1] > w[0]);
    Ok(GrowthReport {
        indices,
        log10_ratios,
        diverging,
    })
}
