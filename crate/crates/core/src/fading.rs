//! Fading-model front ends: α-μ mixtures (MFTR, α-η-κ-μ, κ-μ, plain α-μ and
//! the deterministic-LoS Gaussian construction) and ratios of α-μ variates,
//! each mapped to a Laplace coefficient stream for [`crate::sumcore`].
//!
//! Scale convention: an [`AlphaMuMixtureModel`] stores `scale = r̂^α` such
//! that, given mixture index i, `W = R^α` is Gamma(T + i) distributed with
//! scale `scale`. For a plain α-μ variate with α-root mean r̂ this is
//! `r̂^α / μ`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;
use thiserror::Error;

use crate::specfun::{self, PrecisionContext, RealHP, SpecFunError};
use crate::sumcore::{LaplaceSeriesDescriptor, LaplaceStream, StreamError, SumError};

/// Gap between α_Q and α_M used by the Fisher-Snedecor style constructors.
pub const FISHER_EPSILON: f64 = 1e-3;

/// Δ used by the closed-form MFTR weight when Δ = 1 is requested.
pub const MFTR_UNIT_DELTA: f64 = 1.0 - 1e-8;

#[derive(Debug, Error)]
pub enum FadingError {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("singular parameters: {0}")]
    Singular(String),
    #[error("ratio model needs alpha_M < alpha_Q (got {alpha_m} >= {alpha_q})")]
    RatioOrder { alpha_m: f64, alpha_q: f64 },
    #[error("moment does not exist: {0}")]
    MomentUndefined(String),
    #[error("{0} did not converge")]
    NoConvergence(String),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Sum(#[from] SumError),
}

pub type Result<T> = std::result::Result<T, FadingError>;

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(FadingError::Domain(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    require(v.is_finite() && v > 0.0, || format!("{name} = {v} must be > 0"))
}

/// A mixture-weight stream φ_i. Must be deterministic and prefix-stable.
pub trait WeightSource: Send + Sync + fmt::Debug {
    fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelTag {
    Generic,
    AlphaMu,
    Mftr,
    Aekm,
    KappaMu,
    GaussianConstruction,
}

/// A Gaussian-class marginal: Σ φ_i × (α-μ density with shape T + i).
#[derive(Debug, Clone)]
pub struct AlphaMuMixtureModel {
    alpha: f64,
    t: f64,
    scale: f64,
    tag: ModelTag,
    source: Arc<dyn WeightSource>,
    cache: Arc<RwLock<HashMap<u32, Vec<RealHP>>>>,
}

impl AlphaMuMixtureModel {
    /// Mixture with user-supplied weights; `scale` is r̂^α in the W = R^α
    /// gamma-scale convention.
    pub fn custom(alpha: f64, t: f64, scale: f64, tag: ModelTag, source: impl WeightSource + 'static) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("T", t)?;
        positive("scale", scale)?;
        let model = Self {
            alpha,
            t,
            scale,
            tag,
            source: Arc::new(source),
            cache: Arc::new(RwLock::new(HashMap::new())),
        };
        let ctx = PrecisionContext::new(PrecisionContext::MIN_DIGITS)?;
        let w0 = &model.weights(1, &ctx)?[0];
        require(*w0 > 0, || format!("leading weight {} must be > 0", w0.to_f64()))?;
        Ok(model)
    }

    /// Plain α-μ variate with α-root mean `r_hat` (E[R^α] = r̂^α).
    pub fn alpha_mu(alpha: f64, mu: f64, r_hat: f64) -> Result<Self> {
        positive("mu", mu)?;
        positive("r_hat", r_hat)?;
        Self::custom(alpha, mu, r_hat.powf(alpha) / mu, ModelTag::AlphaMu, UnitWeights)
    }

    pub fn rayleigh(r_hat: f64) -> Result<Self> {
        Self::alpha_mu(2.0, 1.0, r_hat)
    }

    /// Nakagami-m with mean power `omega`.
    pub fn nakagami(m: f64, omega: f64) -> Result<Self> {
        positive("omega", omega)?;
        Self::alpha_mu(2.0, m, omega.sqrt())
    }

    /// κ-μ with mean power `r_hat²`: Poisson(κμ) mixture weights.
    pub fn kappa_mu(kappa: f64, mu: f64, r_hat: f64) -> Result<Self> {
        positive("kappa", kappa)?;
        positive("mu", mu)?;
        positive("r_hat", r_hat)?;
        let scale = r_hat * r_hat / (mu * (1.0 + kappa));
        Self::custom(2.0, mu, scale, ModelTag::KappaMu, PoissonWeights { mean: kappa * mu })
    }

    pub fn mftr(p: MftrParams) -> Result<Self> {
        p.validate()?;
        let scale = p.gamma_bar / ((p.k + 1.0) * f64::from(p.mu));
        Self::custom(2.0, f64::from(p.mu), scale, ModelTag::Mftr, MftrWeights { p })
    }

    /// α-η-κ-μ model. The weight series is taken in whichever in-phase /
    /// quadrature orientation converges (see [`AekmParams::oriented`]).
    pub fn aekm(p: AekmParams) -> Result<Self> {
        p.validate()?;
        let o = p.oriented();
        let scale = o.scale_alpha();
        Self::custom(o.alpha, o.mu, scale, ModelTag::Aekm, AekmWeights { p: o })
    }

    /// Deterministic-LoS Gaussian construction.
    pub fn gaussian_construction(spec: GaussianConstructionSpec) -> Result<Self> {
        spec.validate()?;
        let mu = spec.mu();
        let scale = spec.r_hat.powf(spec.alpha) / mu;
        let (alpha, src) = (spec.alpha, Prop1Weights::new(spec)?);
        Self::custom(alpha, mu, scale, ModelTag::GaussianConstruction, src)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    /// r̂^α in the W = R^α gamma-scale convention.
    pub fn scale_alpha(&self) -> f64 {
        self.scale
    }
    pub fn tag(&self) -> ModelTag {
        self.tag
    }

    /// φ_0..φ_{count-1}.
    pub fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        let key = ctx.digits();
        let mut want = count;
        if let Some(v) = self.cache.read().expect("weight cache poisoned").get(&key) {
            if v.len() >= count {
                return Ok(v[..count].to_vec());
            }
            want = count.max(v.len() + v.len() / 2);
        }
        let mut fresh = self.source.weights(want, ctx)?;
        let mut cache = self.cache.write().expect("weight cache poisoned");
        let slot = cache.entry(key).or_default();
        if slot.len() < fresh.len() {
            *slot = fresh.clone();
        }
        fresh.truncate(count);
        Ok(fresh)
    }

    /// Smallest count whose partial weight sum is within `tol` of 1, with
    /// the partial sum at that count.
    pub fn normalization(&self, tol: f64, max_terms: usize, ctx: &PrecisionContext) -> Result<(usize, f64)> {
        let mut n = 64.min(max_terms);
        loop {
            let w = self.weights(n, ctx)?;
            let mut acc = ctx.zero();
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                let dev = Float::with_val(ctx.bits(), &acc - 1u32).abs().to_f64();
                if dev <= tol {
                    return Ok((i + 1, acc.to_f64()));
                }
            }
            if n >= max_terms {
                return Err(FadingError::NoConvergence(format!(
                    "weight normalization to {tol:e} within {max_terms} terms (partial sum {})",
                    acc.to_f64()
                )));
            }
            n = (2 * n).min(max_terms);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct UnitWeights;

impl WeightSource for UnitWeights {
    fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        Ok((0..count).map(|i| if i == 0 { ctx.one() } else { ctx.zero() }).collect())
    }
}

#[derive(Debug, Clone, Copy)]
struct PoissonWeights {
    mean: f64,
}

impl WeightSource for PoissonWeights {
    fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        let prec = ctx.guard_bits();
        let mut t = Float::with_val(prec, -self.mean).exp();
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            out.push(ctx.round(&t));
            t *= self.mean;
            t /= (i + 1) as u32;
        }
        Ok(out)
    }
}

/// Weights given as an explicit table (zero beyond its end).
#[derive(Debug, Clone)]
pub struct TableWeights(pub Vec<f64>);

impl WeightSource for TableWeights {
    fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        Ok((0..count)
            .map(|i| self.0.get(i).map_or_else(|| ctx.zero(), |&v| ctx.real(v)))
            .collect())
    }
}

// ---------------------------------------------------------------- MFTR

/// Multi-cluster fluctuating two-ray parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MftrParams {
    pub k: f64,
    pub delta: f64,
    pub mu: u32,
    pub m: f64,
    pub gamma_bar: f64,
}

impl MftrParams {
    pub fn validate(&self) -> Result<()> {
        positive("K", self.k)?;
        positive("m", self.m)?;
        positive("gamma_bar", self.gamma_bar)?;
        require((0.0..=1.0).contains(&self.delta), || {
            format!("Delta = {} must lie in [0, 1]", self.delta)
        })?;
        require(self.mu >= 1, || "mu must be >= 1".into())
    }
}

#[derive(Debug, Clone, Copy)]
struct MftrWeights {
    p: MftrParams,
}

const MFTR_BASE_NODES: usize = 16;
const MFTR_MAX_NODES: usize = 1 << 18;
const MFTR_BLOCK: usize = 32;

impl WeightSource for MftrWeights {
    fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        mftr_weights(&self.p, count, ctx)
    }
}

/// φ_0..φ_{count-1} for MFTR as the mixing integral
/// (1/π) ∫_0^π NB_i(Kμ̄(1 + Δ cos u)) du, NB the negative-binomial pmf with
/// shape m. The trapezoid rule converges geometrically on this periodic
/// analytic integrand; each index stops at the first doubling level where it
/// is stable, so values do not depend on `count`.
pub fn mftr_weights(p: &MftrParams, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
    p.validate()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let prec = ctx.guard_bits();
    let tol = Float::with_val(prec, Float::i_exp(1, -(ctx.bits() as i32) - 8));
    let pi = Float::with_val(prec, rug::float::Constant::Pi);
    let node = |j: usize, n: usize| -> Vec<Float> {
        let u = Float::with_val(prec, &pi * j as u32) / n as u32;
        let a = (Float::with_val(prec, u.cos_ref()) * p.delta + 1u32) * (p.k * f64::from(p.mu));
        nb_pmf(&a, p.m, count, prec)
    };
    let block_sum = |idx: &[usize], n: usize| -> Vec<Float> {
        let parts: Vec<Vec<Float>> = idx
            .par_chunks(MFTR_BLOCK)
            .map(|blk| {
                let mut acc = vec![Float::new(prec); count];
                for &j in blk {
                    for (a, v) in acc.iter_mut().zip(node(j, n)) {
                        *a += v;
                    }
                }
                acc
            })
            .collect();
        let mut acc = vec![Float::new(prec); count];
        for part in parts {
            for (a, v) in acc.iter_mut().zip(part) {
                *a += v;
            }
        }
        acc
    };

    let mut n = MFTR_BASE_NODES;
    // trapezoid sum with halved end points
    let mut sum: Vec<Float> = {
        let interior: Vec<usize> = (1..n).collect();
        let mut s = block_sum(&interior, n);
        for (a, (e0, e1)) in s.iter_mut().zip(node(0, n).into_iter().zip(node(n, n))) {
            *a += (e0 + e1) / 2u32;
        }
        s
    };
    let mut prev: Vec<Float> = sum.iter().map(|s| Float::with_val(prec, s / n as u32)).collect();
    let mut out: Vec<Option<Float>> = vec![None; count];
    while out.iter().any(Option::is_none) {
        if n >= MFTR_MAX_NODES {
            return Err(FadingError::NoConvergence(format!(
                "MFTR mixing integral with {n} nodes"
            )));
        }
        let odd: Vec<usize> = (0..n).map(|j| 2 * j + 1).collect();
        n *= 2;
        for (a, v) in sum.iter_mut().zip(block_sum(&odd, n)) {
            *a += v;
        }
        for i in 0..count {
            let cur = Float::with_val(prec, &sum[i] / n as u32);
            if out[i].is_none() {
                let diff = Float::with_val(prec, &cur - &prev[i]).abs();
                let scale = Float::with_val(prec, cur.abs_ref()) * &tol;
                if diff <= scale {
                    out[i] = Some(cur.clone());
                }
            }
            prev[i] = cur;
        }
    }
    Ok(out.into_iter().map(|v| ctx.round(&v.expect("all indices converged"))).collect())
}

// NB_0..NB_{count-1} at mean a, shape m: Γ(i+m)/(i!Γ(m)) m^m a^i/(a+m)^(i+m)
fn nb_pmf(a: &Float, m: f64, count: usize, prec: u32) -> Vec<Float> {
    let am = Float::with_val(prec, a + m);
    let mut t = Float::with_val(prec, m / Float::with_val(prec, &am)).pow(m);
    let ratio = Float::with_val(prec, a / &am);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push(t.clone());
        t *= &ratio;
        t *= Float::with_val(prec, i as f64 + m);
        t /= (i + 1) as u32;
    }
    out
}

/// The MFTR weight φ_i by its hypergeometric closed form. Δ = 1 is replaced
/// by [`MFTR_UNIT_DELTA`].
pub fn mftr_weight(p: &MftrParams, i: usize, ctx: &PrecisionContext) -> Result<RealHP> {
    p.validate()?;
    let prec = ctx.guard_bits();
    let wctx = PrecisionContext::new(ctx.digits() + 20)?;
    let delta = if p.delta >= 1.0 { MFTR_UNIT_DELTA } else { p.delta };
    let f = |v: f64| Float::with_val(prec, v);
    let (k, m, d) = (f(p.k), f(p.m), f(delta));
    let kmu = k * p.mu;
    let one_d = Float::with_val(prec, 1 - Float::with_val(prec, &d));
    let base = Float::with_val(prec, &one_d * &kmu) + &m;
    let ln_pre = Float::with_val(prec, &m * Float::with_val(prec, m.ln_ref()))
        + Float::with_val(prec, Float::with_val(prec, i as f64 + p.m).ln_gamma_ref())
        - Float::with_val(prec, Float::with_val(prec, (i + 1) as u32).ln_gamma_ref())
        - Float::with_val(prec, m.ln_gamma_ref())
        - Float::with_val(prec, Float::with_val(prec, i as f64 + p.m) * Float::with_val(prec, base.ln_ref()))
        - Float::with_val(prec, rug::float::Constant::Pi).ln() / 2u32;
    // (1-Δ)^i (Kμ̄)^i kept outside the log so Δ = 0 needs no special case
    let mut pre = ln_pre.exp();
    pre *= Float::with_val(prec, &one_d * &kmu).pow(i as u32);
    let z = -Float::with_val(prec, &d * 2u32) * &kmu / &base;
    let ratio = Float::with_val(prec, &d * 2u32) / &one_d;
    let mut acc = Float::new(prec);
    let mut binom = Float::with_val(prec, 1);
    let a = f(i as f64 + p.m);
    for q in 0..=i {
        if q > 0 {
            binom *= (i - q + 1) as u32;
            binom /= q as u32;
        }
        if q > 0 && d.is_zero() {
            break;
        }
        let qh = Float::with_val(prec, q as f64 + 0.5);
        let q1 = Float::with_val(prec, (q + 1) as u32);
        let g = Float::with_val(prec, qh.ln_gamma_ref()) - Float::with_val(prec, q1.ln_gamma_ref());
        let hyp = specfun::gauss_2f1(&a, &qh, &q1, &z, &wctx)?;
        let rq = Float::with_val(prec, (&ratio).pow(q as u32));
        acc += Float::with_val(prec, &binom * &rq) * g.exp() * hyp;
    }
    Ok(ctx.round(&(pre * acc)))
}

/// Negative-binomial pmf at index i, the Δ = 0 MFTR weight.
pub fn negative_binomial_weight(p: &MftrParams, i: usize, ctx: &PrecisionContext) -> RealHP {
    let prec = ctx.guard_bits();
    let a = Float::with_val(prec, p.k * f64::from(p.mu));
    let v = nb_pmf(&a, p.m, i + 1, prec);
    ctx.round(&v[i])
}

// ---------------------------------------------------------------- α-η-κ-μ

/// α-η-κ-μ parameters. `delta_aux` and `xi_bar` default to the values implied
/// by the Gaussian construction when left `None`:
/// δ = (1+p)(1+qη)/(1+η) and ξ̄ = (1+κ)(1+η)/(1+p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AekmParams {
    pub alpha: f64,
    pub eta: f64,
    pub kappa: f64,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
    pub r_bar: f64,
    pub delta_aux: Option<f64>,
    pub xi_bar: Option<f64>,
}

impl AekmParams {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("kappa", self.kappa),
            ("mu", self.mu),
            ("p", self.p),
            ("q", self.q),
            ("r_bar", self.r_bar),
        ] {
            positive(n, v)?;
        }
        if let Some(d) = self.delta_aux {
            positive("delta_aux", d)?;
        }
        if let Some(x) = self.xi_bar {
            positive("xi_bar", x)?;
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta_aux
            .unwrap_or((1.0 + self.p) * (1.0 + self.q * self.eta) / (1.0 + self.eta))
    }

    pub fn xi(&self) -> f64 {
        self.xi_bar
            .unwrap_or((1.0 + self.kappa) * (1.0 + self.eta) / (1.0 + self.p))
    }

    /// r̂^α = η r̄^α / (μ ξ̄ p).
    pub fn scale_alpha(&self) -> f64 {
        self.eta * self.r_bar.powf(self.alpha) / (self.mu * self.xi() * self.p)
    }

    /// Relative perturbation of η̄ away from p, for callers who prefer it to
    /// the exact η̄ = p limit.
    pub fn perturbed(mut self, rel: f64) -> Self {
        self.eta *= 1.0 + rel;
        self
    }

    /// Exchanges the in-phase and quadrature roles:
    /// (η̄, p, q, δ, ξ̄) → (1/η̄, 1/p, 1/q, δ/(pq), ξ̄ p/η̄). The distribution is
    /// unchanged; the weight series is re-expanded about the other
    /// component's scale.
    pub fn swapped(&self) -> Self {
        let (d, x) = (self.delta(), self.xi());
        Self {
            eta: 1.0 / self.eta,
            p: 1.0 / self.p,
            q: 1.0 / self.q,
            delta_aux: Some(d / (self.p * self.q)),
            xi_bar: Some(x * self.p / self.eta),
            ..*self
        }
    }

    /// The weight series is a power series in (p - η̄)/p, so it converges
    /// only for η̄ < 2p. Returns the orientation with |1 - η̄/p| < 1 (the
    /// swapped one has η̄'/p' = p/η̄).
    pub fn oriented(&self) -> Self {
        if (1.0 - self.eta / self.p).abs() >= 1.0 {
            self.swapped()
        } else {
            *self
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct AekmWeights {
    p: AekmParams,
}

impl WeightSource for AekmWeights {
    fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        aekm_weights(&self.p, count, ctx)
    }
}

/// φ_0..φ_{count-1} for α-η-κ-μ in the orientation given (no swap).
///
/// φ_i = pre · Σ_k a_k b_{i-k} with a_k = ((p-η̄)/p)^k L_k^(μ̄/(p+1)-1)(x),
/// b_j = (κμ̄p²q/(δp))^j / j!, x = η̄κμ̄/(δ(η̄-p)). At η̄ = p the product
/// (p-η̄)^k L_k(c/(η̄-p)) tends to c^k/k!, which is used directly.
pub fn aekm_weights(p: &AekmParams, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
    p.validate()?;
    let prec = ctx.guard_bits();
    let wctx = PrecisionContext::new(ctx.digits() + 20)?;
    let f = |v: f64| Float::with_val(prec, v);
    let (eta, kappa, mu, pp, q, delta) = (f(p.eta), f(p.kappa), f(p.mu), f(p.p), f(p.q), f(p.delta()));
    let kmd = Float::with_val(prec, &kappa * &mu) / &delta;
    let pre = {
        let e = -Float::with_val(prec, &kmd * (Float::with_val(prec, &pp * &q) + 1u32));
        let lead = Float::with_val(prec, eta.ln_ref()) * &mu;
        let expo = Float::with_val(prec, &mu * &pp) / Float::with_val(prec, &pp + 1u32);
        let mid = Float::with_val(prec, (Float::with_val(prec, &pp / &eta)).ln()) * expo;
        let tail = Float::with_val(prec, pp.ln_ref()) * &mu;
        (e + lead + mid - tail).exp()
    };
    let a: Vec<Float> = if p.eta == p.p {
        let c = Float::with_val(prec, &eta * &kmd) / &pp;
        let mut t = Float::with_val(prec, 1);
        (0..count)
            .map(|k| {
                let v = t.clone();
                t *= &c;
                t /= (k + 1) as u32;
                v
            })
            .collect()
    } else {
        let ord = Float::with_val(prec, &mu / Float::with_val(prec, &pp + 1u32)) - 1u32;
        let diff = Float::with_val(prec, &eta - &pp);
        let x = Float::with_val(prec, &eta * &kmd) / &diff;
        let lag = specfun::laguerre_sequence(count, &ord, &x, &wctx);
        let r = -diff / &pp;
        let mut rk = Float::with_val(prec, 1);
        lag.into_iter()
            .map(|l| {
                let v = Float::with_val(prec, &rk * &l);
                rk *= &r;
                v
            })
            .collect()
    };
    let bq = Float::with_val(prec, &kmd * Float::with_val(prec, &pp * &q));
    let mut b = Vec::with_capacity(count);
    let mut t = Float::with_val(prec, 1);
    for j in 0..count {
        b.push(t.clone());
        t *= &bq;
        t /= (j + 1) as u32;
    }
    let out = (0..count)
        .map(|i| {
            let mut acc = Float::new(prec);
            for k in 0..=i {
                acc += &a[k] * &b[i - k];
            }
            ctx.round(&(acc * &pre))
        })
        .collect();
    Ok(out)
}

// ---------------------------------------------------------------- Gaussian construction

/// R^α = Σ_n v_n Σ_m (Q_{m,n} + P_{m,n})² with Q_{m,n} ~ N(0, σ_n²) and
/// deterministic line-of-sight means P.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConstructionSpec {
    /// Gaussian count per cluster (T_n); the cluster count N is its length.
    pub t: Vec<u32>,
    pub sigma2: Vec<f64>,
    /// P[n][m]; rows may be shorter than T_n (missing entries are 0).
    pub los: Vec<Vec<f64>>,
    pub alpha: f64,
    pub r_hat: f64,
}

impl GaussianConstructionSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        require(n >= 1, || "at least one cluster is needed".into())?;
        require(self.sigma2.len() == n, || {
            format!("sigma2 has {} entries for {n} clusters", self.sigma2.len())
        })?;
        require(self.los.len() <= n, || format!("los has {} rows for {n} clusters", self.los.len()))?;
        for (i, row) in self.los.iter().enumerate() {
            require(row.len() <= self.t[i] as usize, || {
                format!("cluster {i} has {} LoS means for T = {}", row.len(), self.t[i])
            })?;
            require(row.iter().all(|v| v.is_finite()), || format!("cluster {i} LoS mean not finite"))?;
        }
        require(self.t.iter().all(|&t| t >= 1), || "every T_n must be >= 1".into())?;
        for &s in &self.sigma2 {
            positive("sigma2", s)?;
        }
        positive("alpha", self.alpha)?;
        positive("r_hat", self.r_hat)
    }

    pub fn clusters(&self) -> usize {
        self.t.len()
    }

    /// μ = ½ Σ T_n.
    pub fn mu(&self) -> f64 {
        self.t.iter().map(|&t| f64::from(t)).sum::<f64>() / 2.0
    }

    /// LoS mean P_{m,n} (zero when not given).
    pub fn los_mean(&self, n: usize, m: usize) -> f64 {
        self.los.get(n).and_then(|r| r.get(m)).copied().unwrap_or(0.0)
    }

    /// P̄_n = Σ_m P_{m,n}² / σ_n².
    pub fn p_bar(&self, n: usize) -> f64 {
        self.los.get(n).map_or(0.0, |r| r.iter().map(|v| v * v).sum::<f64>()) / self.sigma2[n]
    }

    /// v_n = r̂^α / (σ_n² N (T_n + P̄_n)), making E[R^α] = r̂^α.
    pub fn v(&self, n: usize) -> f64 {
        let nn = self.clusters() as f64;
        self.r_hat.powf(self.alpha) / (self.sigma2[n] * nn * (f64::from(self.t[n]) + self.p_bar(n)))
    }
}

#[derive(Debug, Clone)]
struct Prop1Weights {
    spec: GaussianConstructionSpec,
}

impl Prop1Weights {
    fn new(spec: GaussianConstructionSpec) -> Result<Self> {
        let ctx = PrecisionContext::new(PrecisionContext::MIN_DIGITS)?;
        prop1_terms(&spec, &ctx)?;
        Ok(Self { spec })
    }
}

impl WeightSource for Prop1Weights {
    fn weights(&self, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
        prop1_weights_deterministic(&self.spec, count, ctx)
    }
}

struct Prop1Terms {
    mu: Float,
    c0: Float,
    /// per cluster: (coefficient of l a^(l-1), a, T_n/2, A_n)
    clusters: Vec<(Float, Float, Float, Float)>,
}

fn prop1_terms(spec: &GaussianConstructionSpec, ctx: &PrecisionContext) -> Result<Prop1Terms> {
    spec.validate()?;
    let prec = ctx.guard_bits();
    let f = |v: f64| Float::with_val(prec, v);
    let mu = f(spec.mu());
    let ra = f(spec.r_hat).pow(spec.alpha);
    let half_s = Float::with_val(prec, &ra / &mu) / 2u32;
    let mut ln_c0 = Float::with_val(prec, mu.ln_ref()) * &mu;
    let mut clusters = Vec::with_capacity(spec.clusters());
    for n in 0..spec.clusters() {
        // w_n = v_n σ_n² = r̂^α / (N (T_n + P̄_n)), kept out of f64
        let mut rho = Float::new(prec);
        if let Some(row) = spec.los.get(n) {
            for &v in row {
                rho += f(v).square();
            }
        }
        rho /= spec.sigma2[n];
        let w = Float::with_val(prec, &ra / Float::with_val(prec, &rho + spec.t[n])) / spec.clusters() as u32;
        let th = f(f64::from(spec.t[n]) / 2.0);
        let den = Float::with_val(prec, &w * Float::with_val(prec, &mu - 1u32)) + &half_s;
        if den.is_zero() {
            return Err(FadingError::Singular(format!(
                "v_n(mu-1) + r^alpha/(2N) vanishes for cluster {n}"
            )));
        }
        let two_mu_w = Float::with_val(prec, &mu * &w) * 2u32 / &ra;
        let b = Float::with_val(prec, &two_mu_w * Float::with_val(prec, &mu - 1u32)) + 1u32;
        let a_big = Float::with_val(prec, 1 - two_mu_w) / &b;
        let a_small = Float::with_val(prec, &half_s - &w) / &den;
        let coef = -Float::with_val(prec, &ra * &rho) * &w / 4u32 / Float::with_val(prec, den.square_ref());
        ln_c0 -= Float::with_val(prec, &mu - 1u32) * &rho * &w / &den / 2u32;
        ln_c0 -= Float::with_val(prec, b.ln_ref()) * &th;
        clusters.push((coef, a_small, th, a_big));
    }
    Ok(Prop1Terms {
        mu,
        c0: ln_c0.exp(),
        clusters,
    })
}

/// Deterministic-LoS mixture weights φ_0..φ_{count-1}.
///
/// The generating coefficients follow c_j = (1/j) Σ_{l<j} c_l g_{j-l} with
/// g_l = Σ_n [ l·coef_n a_n^(l-1) + (T_n/2) A_n^l ], and
/// φ_i = (-μ)^i Σ_{j≥i} C(j, i) c_j. The j-sum runs at doubled precision
/// until its increments fall below 10^-digits, i.e. half the internal digits.
pub fn prop1_weights_deterministic(
    spec: &GaussianConstructionSpec,
    count: usize,
    ctx: &PrecisionContext,
) -> Result<Vec<RealHP>> {
    let ictx = ctx.doubled();
    let pt = prop1_terms(spec, &ictx)?;
    let prec = ictx.guard_bits();
    let tol = Float::with_val(prec, Float::i_exp(1, -(ctx.bits() as i32)));
    let mut c = vec![pt.c0.clone()];
    let mut g: Vec<Float> = vec![Float::new(prec)];
    let grow = |c: &mut Vec<Float>, g: &mut Vec<Float>| {
        let j = c.len();
        let mut gj = Float::new(prec);
        for (coef, a, th, big) in &pt.clusters {
            gj += Float::with_val(prec, a.pow(j as u32 - 1)) * coef * j as u32;
            gj += Float::with_val(prec, big.pow(j as u32)) * th;
        }
        g.push(gj);
        let mut acc = Float::new(prec);
        for l in 0..j {
            acc += &c[l] * &g[j - l];
        }
        c.push(acc / j as u32);
    };
    const MAX_J: usize = 200_000;
    let mut out = Vec::with_capacity(count);
    let mut scale = Float::with_val(prec, 1);
    for i in 0..count {
        let mut sum = Float::new(prec);
        let mut binom = Float::with_val(prec, 1);
        let mut small = 0;
        let mut j = i;
        loop {
            while c.len() <= j {
                grow(&mut c, &mut g);
            }
            if j > i {
                binom *= j as u32;
                binom /= (j - i) as u32;
            }
            let inc = Float::with_val(prec, &binom * &c[j]) * &scale;
            sum += &inc;
            let mag = Float::with_val(prec, inc.abs_ref());
            small = if mag <= tol { small + 1 } else { 0 };
            if small >= 4 {
                break;
            }
            j += 1;
            if j > MAX_J {
                return Err(FadingError::NoConvergence(format!("Gaussian construction weight {i}")));
            }
        }
        out.push(ctx.round(&sum));
        scale *= &pt.mu;
        scale = -scale;
    }
    Ok(out)
}

// ---------------------------------------------------------------- mixture marginals

/// Partial mixture density with `t` components at `r`.
pub fn mixture_marginal_pdf(model: &AlphaMuMixtureModel, r: f64, t: usize, ctx: &PrecisionContext) -> Result<RealHP> {
    require(r > 0.0, || format!("r = {r} must be > 0"))?;
    let w = model.weights(t, ctx)?;
    let prec = ctx.guard_bits();
    let (alpha, s) = (model.alpha, Float::with_val(prec, model.scale));
    let r = Float::with_val(prec, r);
    let ln_r = Float::with_val(prec, r.ln_ref());
    let ra = Float::with_val(prec, (&r).pow(alpha));
    let ln_ra_s = Float::with_val(prec, &ln_r * alpha) - Float::with_val(prec, s.ln_ref());
    let base = Float::with_val(prec, alpha).ln() - &ln_r - Float::with_val(prec, &ra / &s);
    let mut acc = Float::new(prec);
    for (i, wi) in w.iter().enumerate() {
        if wi.is_zero() {
            continue;
        }
        let shape = Float::with_val(prec, model.t + i as f64);
        let ln = Float::with_val(prec, &shape * &ln_ra_s) + &base - Float::with_val(prec, shape.ln_gamma_ref());
        acc += ln.exp() * wi;
    }
    Ok(ctx.round(&acc))
}

/// Partial mixture CDF Σ φ_i P(T + i, r^α / scale).
pub fn mixture_marginal_cdf(model: &AlphaMuMixtureModel, r: f64, t: usize, ctx: &PrecisionContext) -> Result<RealHP> {
    require(r > 0.0, || format!("r = {r} must be > 0"))?;
    let w = model.weights(t, ctx)?;
    let x = Float::with_val(ctx.bits(), ctx.real(r).pow(model.alpha)) / model.scale;
    let mut acc = ctx.zero();
    for (i, wi) in w.iter().enumerate() {
        if wi.is_zero() {
            continue;
        }
        acc += specfun::reg_lower_inc_gamma(&ctx.real(model.t + i as f64), &x, ctx)? * wi;
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
struct MixtureStream {
    model: AlphaMuMixtureModel,
}

impl LaplaceStream for MixtureStream {
    fn psi(&self, ctx: &PrecisionContext) -> RealHP {
        // α / scale^T
        let s = Float::with_val(ctx.guard_bits(), self.model.scale).pow(self.model.t);
        ctx.round(&(Float::with_val(ctx.guard_bits(), self.model.alpha) / s))
    }
    fn beta(&self, ctx: &PrecisionContext) -> RealHP {
        ctx.real(self.model.alpha) * self.model.t
    }
    fn theta(&self) -> f64 {
        self.model.alpha
    }
    fn eta(&self, count: usize, ctx: &PrecisionContext) -> std::result::Result<Vec<RealHP>, StreamError> {
        Ok(lambda_coeffs(&self.model, count, ctx)?)
    }
}

/// λ_i = Γ(α(i+T))/scale^i Σ_{j≤i} (-1)^(i-j) φ_j / ((i-j)! Γ(j+T)).
pub fn lambda_coeffs(model: &AlphaMuMixtureModel, count: usize, ctx: &PrecisionContext) -> Result<Vec<RealHP>> {
    let w = model.weights(count, ctx)?;
    let prec = ctx.guard_bits();
    let mut inv_fact = Vec::with_capacity(count);
    let mut f = Float::with_val(prec, 1);
    for k in 0..count {
        if k > 0 {
            f /= k as u32;
        }
        inv_fact.push(f.clone());
    }
    let scaled: Vec<Float> = w
        .iter()
        .enumerate()
        .map(|(j, wj)| {
            let g = Float::with_val(prec, model.t + j as f64).gamma();
            Float::with_val(prec, wj / g)
        })
        .collect();
    let inv_s = Float::with_val(prec, model.scale).recip();
    let mut s_pow = Float::with_val(prec, 1);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut acc = Float::new(prec);
        for j in 0..=i {
            let term = Float::with_val(prec, &scaled[j] * &inv_fact[i - j]);
            if (i - j) % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        let g = Float::with_val(prec, model.alpha * (i as f64 + model.t)).gamma();
        out.push(ctx.round(&(acc * g * &s_pow)));
        s_pow *= &inv_s;
    }
    Ok(out)
}

/// Laplace descriptor of a mixture: Ψ = α/scale^T, β = αT, θ = α, η = λ.
pub fn mixture_to_series(model: &AlphaMuMixtureModel) -> Result<LaplaceSeriesDescriptor> {
    Ok(LaplaceSeriesDescriptor::new(MixtureStream { model: model.clone() })?)
}

// ---------------------------------------------------------------- ratio of α-μ

/// Z = M / Q with M, Q independent α-μ variates, M = Ω_M (G_M/μ_M)^(1/α_M).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioAlphaMuModel {
    alpha_m: f64,
    alpha_q: f64,
    mu_m: f64,
    mu_q: f64,
    omega_m: f64,
    omega_q: f64,
}

impl RatioAlphaMuModel {
    pub fn new(alpha_m: f64, alpha_q: f64, mu_m: f64, mu_q: f64, omega_m: f64, omega_q: f64) -> Result<Self> {
        for (n, v) in [
            ("alpha_M", alpha_m),
            ("alpha_Q", alpha_q),
            ("mu_M", mu_m),
            ("mu_Q", mu_q),
            ("Omega_M", omega_m),
            ("Omega_Q", omega_q),
        ] {
            positive(n, v)?;
        }
        if alpha_m >= alpha_q {
            return Err(FadingError::RatioOrder { alpha_m, alpha_q });
        }
        Ok(Self {
            alpha_m,
            alpha_q,
            mu_m,
            mu_q,
            omega_m,
            omega_q,
        })
    }

    /// Fisher-Snedecor ℱ: Nakagami over Nakagami, with α_Q = 2 + ε′.
    pub fn fisher_f(mu_m: f64, mu_q: f64, omega_m: f64, omega_q: f64) -> Result<Self> {
        Self::new(2.0, 2.0 + FISHER_EPSILON, mu_m, mu_q, omega_m, omega_q)
    }

    /// ᾱ-ℱ: α-μ over α-μ with a common α, α_Q = α + ε′.
    pub fn alpha_f(alpha: f64, mu_m: f64, mu_q: f64, omega_m: f64, omega_q: f64) -> Result<Self> {
        Self::new(alpha, alpha + FISHER_EPSILON, mu_m, mu_q, omega_m, omega_q)
    }

    pub fn alpha_m(&self) -> f64 {
        self.alpha_m
    }
    pub fn alpha_q(&self) -> f64 {
        self.alpha_q
    }
    pub fn mu_m(&self) -> f64 {
        self.mu_m
    }
    pub fn mu_q(&self) -> f64 {
        self.mu_q
    }
    pub fn omega_m(&self) -> f64 {
        self.omega_m
    }
    pub fn omega_q(&self) -> f64 {
        self.omega_q
    }

    /// ϱ̃ = Ω_Q μ_M^(1/α_M) / (Ω_M μ_Q^(1/α_Q)).
    pub fn rho_tilde(&self) -> f64 {
        self.omega_q * self.mu_m.powf(1.0 / self.alpha_m) / (self.omega_m * self.mu_q.powf(1.0 / self.alpha_q))
    }

    fn rho_hp(&self, prec: u32) -> Float {
        let f = |v: f64| Float::with_val(prec, v);
        let num = f(self.mu_m).pow(f(1.0) / self.alpha_m) * self.omega_q;
        let den = f(self.mu_q).pow(f(1.0) / self.alpha_q) * self.omega_m;
        num / den
    }

    // ln of |i-th series term| without the z-dependent factor, for sizing
    // the working precision
    fn ln_term_bound(&self, i: usize, z: f64) -> f64 {
        let k = self.alpha_m * (i as f64 + self.mu_m);
        let lg = |x: f64| Float::with_val(64, x).ln_gamma().to_f64();
        k * (self.rho_tilde() * z).ln() + lg(k / self.alpha_q + self.mu_q) - lg(i as f64 + 1.0)
    }

    fn prec_for(&self, z: f64, t: usize, ctx: &PrecisionContext) -> u32 {
        let peak = (0..t).map(|i| self.ln_term_bound(i, z)).fold(0.0f64, f64::max);
        ctx.guard_bits() + (peak / std::f64::consts::LN_2).ceil().max(0.0) as u32
    }
}

/// Partial sum of the ratio density series with `t` terms:
/// f_Z(z) = α_M/(zΓ(μ_M)Γ(μ_Q)) Σ (-1)^i/i! (ϱ̃z)^(α_M(i+μ_M)) Γ(α_M(i+μ_M)/α_Q + μ_Q).
/// The alternating sum is carried at extra precision sized to its largest term.
pub fn ratio_marginal_pdf(model: &RatioAlphaMuModel, z: f64, t: usize, ctx: &PrecisionContext) -> Result<RealHP> {
    require(z > 0.0, || format!("z = {z} must be > 0"))?;
    let prec = model.prec_for(z, t, ctx);
    let acc = ratio_series(model, z, t, prec, false);
    let lead = Float::with_val(prec, model.alpha_m) / z / ratio_gamma_norm(model, prec);
    Ok(ctx.round(&(acc * lead)))
}

/// Termwise integral of the density series from 0 to z.
pub fn ratio_marginal_cdf(model: &RatioAlphaMuModel, z: f64, t: usize, ctx: &PrecisionContext) -> Result<RealHP> {
    require(z > 0.0, || format!("z = {z} must be > 0"))?;
    let prec = model.prec_for(z, t, ctx);
    let acc = ratio_series(model, z, t, prec, true);
    let lead = Float::with_val(prec, model.alpha_m) / ratio_gamma_norm(model, prec);
    Ok(ctx.round(&(acc * lead)))
}

fn ratio_gamma_norm(model: &RatioAlphaMuModel, prec: u32) -> Float {
    Float::with_val(prec, model.mu_m).gamma() * Float::with_val(prec, model.mu_q).gamma()
}

fn ratio_series(model: &RatioAlphaMuModel, z: f64, t: usize, prec: u32, integrate: bool) -> Float {
    let rz = model.rho_hp(prec) * z;
    let ln_rz = Float::with_val(prec, rz.ln_ref());
    let mut acc = Float::new(prec);
    let mut inv_fact = Float::with_val(prec, 1);
    for i in 0..t {
        if i > 0 {
            inv_fact /= i as u32;
        }
        let k = Float::with_val(prec, i as f64 + model.mu_m) * model.alpha_m;
        let g = Float::with_val(prec, Float::with_val(prec, &k / model.alpha_q) + model.mu_q).gamma();
        let mut term = Float::with_val(prec, &k * &ln_rz).exp() * g * &inv_fact;
        if integrate {
            term /= &k;
        }
        if i % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy)]
struct RatioStream {
    model: RatioAlphaMuModel,
}

impl LaplaceStream for RatioStream {
    fn psi(&self, ctx: &PrecisionContext) -> RealHP {
        let prec = ctx.guard_bits();
        ctx.round(&(Float::with_val(prec, self.model.alpha_m) / ratio_gamma_norm(&self.model, prec)))
    }
    fn beta(&self, ctx: &PrecisionContext) -> RealHP {
        ctx.real(self.model.alpha_m) * self.model.mu_m
    }
    fn theta(&self) -> f64 {
        self.model.alpha_m
    }
    fn eta(&self, count: usize, ctx: &PrecisionContext) -> std::result::Result<Vec<RealHP>, StreamError> {
        Ok(ratio_coeffs(&self.model, count, ctx))
    }
}

/// u_i = (-1)^i Γ(α_M(i+μ_M)) Γ(α_M(i+μ_M)/α_Q + μ_Q) ϱ̃^(α_M(i+μ_M)) / i!.
pub fn ratio_coeffs(model: &RatioAlphaMuModel, count: usize, ctx: &PrecisionContext) -> Vec<RealHP> {
    let prec = ctx.guard_bits();
    let ln_rho = model.rho_hp(prec).ln();
    (0..count)
        .map(|i| {
            let k = Float::with_val(prec, i as f64 + model.mu_m) * model.alpha_m;
            let lg = Float::with_val(prec, k.ln_gamma_ref())
                + Float::with_val(prec, Float::with_val(prec, &k / model.alpha_q) + model.mu_q).ln_gamma()
                + Float::with_val(prec, &k * &ln_rho)
                - Float::with_val(prec, (i + 1) as u32).ln_gamma();
            let v = lg.exp();
            ctx.round(&if i % 2 == 0 { v } else { -v })
        })
        .collect()
}

/// Laplace descriptor of a ratio: Ψ = α_M/(Γ(μ_M)Γ(μ_Q)), β = α_M μ_M, θ = α_M.
pub fn ratio_to_series(model: &RatioAlphaMuModel) -> Result<LaplaceSeriesDescriptor> {
    Ok(LaplaceSeriesDescriptor::new(RatioStream { model: *model })?)
}

// ---------------------------------------------------------------- marginals

/// Any supported summand.
#[derive(Debug, Clone)]
pub enum Marginal {
    Mixture(AlphaMuMixtureModel),
    Ratio(RatioAlphaMuModel),
}

impl Marginal {
    pub fn to_series(&self) -> Result<LaplaceSeriesDescriptor> {
        match self {
            Marginal::Mixture(m) => mixture_to_series(m),
            Marginal::Ratio(r) => ratio_to_series(r),
        }
    }

    pub fn theta(&self) -> f64 {
        match self {
            Marginal::Mixture(m) => m.alpha,
            Marginal::Ratio(r) => r.alpha_m,
        }
    }

    pub fn mean(&self) -> Result<f64> {
        match self {
            Marginal::Mixture(m) => marginal_mean(m),
            Marginal::Ratio(r) => ratio_mean(r),
        }
    }
}

impl From<AlphaMuMixtureModel> for Marginal {
    fn from(m: AlphaMuMixtureModel) -> Self {
        Marginal::Mixture(m)
    }
}

impl From<RatioAlphaMuModel> for Marginal {
    fn from(r: RatioAlphaMuModel) -> Self {
        Marginal::Ratio(r)
    }
}

/// E[R] = Σ φ_i scale^(1/α) Γ(T+i+1/α)/Γ(T+i), summed until the weights
/// are normalized to 1e-14.
pub fn marginal_mean(model: &AlphaMuMixtureModel) -> Result<f64> {
    let ctx = PrecisionContext::new(50)?;
    let (n, _) = model.normalization(1e-14, 1 << 14, &ctx)?;
    // a few extra terms so signed tails settle
    let w = model.weights(n + 32, &ctx)?;
    let prec = ctx.guard_bits();
    let inv_a = 1.0 / model.alpha;
    let mut acc = Float::new(prec);
    for (i, wi) in w.iter().enumerate() {
        let sh = model.t + i as f64;
        let lr = Float::with_val(prec, sh + inv_a).ln_gamma() - Float::with_val(prec, sh).ln_gamma();
        acc += lr.exp() * wi;
    }
    Ok((acc * Float::with_val(prec, model.scale).pow(inv_a)).to_f64())
}

/// E[Z] = E[M] E[1/Q]; needs α_Q μ_Q > 1.
pub fn ratio_mean(model: &RatioAlphaMuModel) -> Result<f64> {
    if model.alpha_q * model.mu_q <= 1.0 {
        return Err(FadingError::MomentUndefined(format!(
            "E[1/Q] needs alpha_Q mu_Q > 1 (got {})",
            model.alpha_q * model.mu_q
        )));
    }
    let prec = 128;
    let g = |x: f64| Float::with_val(prec, x).ln_gamma();
    let em = (g(model.mu_m + 1.0 / model.alpha_m) - g(model.mu_m)).exp().to_f64() * model.omega_m
        / model.mu_m.powf(1.0 / model.alpha_m);
    let eq = (g(model.mu_q - 1.0 / model.alpha_q) - g(model.mu_q)).exp().to_f64() * model.mu_q.powf(1.0 / model.alpha_q)
        / model.omega_q;
    Ok(em * eq)
}

// ---------------------------------------------------------------- fixtures

/// The twelve parameter rows used in the published figures.
pub mod table2 {
    use super::{AekmParams, MftrParams, RatioAlphaMuModel, Result};

    const K: [f64; 12] = [2.13, 1.77, 1.5, 2.33, 1.11, 3.77, 1.13, 0.61, 0.61, 3.77, 0.81, 2.0];
    const DELTA: [f64; 12] = [0.62, 1.0, 0.59, 0.76, 0.8, 0.47, 0.29, 0.72, 0.72, 0.47, 0.82, 0.44];
    const MU: [u32; 12] = [2, 1, 3, 2, 1, 1, 2, 3, 3, 1, 2, 2];
    const M: [f64; 12] = [1.5, 2.0, 1.0, 3.0, 0.5, 1.0, 3.0, 2.0, 0.75, 1.0, 2.0, 3.0];
    const GAMMA: [f64; 12] = [1.1, 1.2, 1.0, 0.9, 1.0, 1.2, 0.8, 0.7, 1.0, 1.3, 1.0, 1.3];

    const ETA: [f64; 12] = [0.07, 2.0, 3.55, 0.18, 0.72, 0.5, 0.06, 27.0, 0.22, 1.33, 0.25, 9.0];
    const KAPPA: [f64; 12] = [1.20, 2.0, 1.78, 0.25, 0.09, 0.05, 0.47, 0.14, 0.12, 1.0, 0.85, 0.42];
    const AMU: [f64; 12] = [2.5, 1.5, 1.5, 3.5, 1.5, 1.5, 4.0, 2.0, 1.5, 2.0, 2.0, 2.5];
    const P: [f64; 12] = [0.66, 2.0, 0.5, 0.75, 2.0, 0.5, 1.0, 3.0, 2.0, 0.33, 1.0, 4.0];
    const Q: [f64; 12] = [144.0, 0.25, 20.25, 1.0, 0.04, 9.0, 16.0, 0.11, 20.25, 1.0, 0.25, 1.77];
    const RBAR: [f64; 12] = [3.03, 2.40, 2.89, 3.55, 4.67, 2.76, 6.31, 4.0, 2.73, 2.87, 3.21, 5.03];

    const MU_M: [f64; 12] = [4.0, 2.0, 1.0, 3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 2.0, 2.0, 1.0];
    const MU_Q: [f64; 12] = [2.0, 3.0, 2.0, 1.0, 3.0, 3.0, 1.0, 3.0, 1.0, 4.0, 2.0, 2.0];
    const OMEGA_M: [f64; 12] = [2.5, 1.0, 0.5, 1.0, 2.0, 1.5, 2.5, 0.25, 2.0, 3.0, 1.5, 2.0];
    const OMEGA_Q: [f64; 12] = [1.0, 0.5, 0.25, 2.0, 1.5, 2.5, 0.5, 0.25, 2.0, 2.5, 1.0, 1.5];

    pub const ROWS: usize = 12;

    /// MFTR row `l` (1-based).
    pub fn mftr(l: usize) -> MftrParams {
        let i = l - 1;
        MftrParams {
            k: K[i],
            delta: DELTA[i],
            mu: MU[i],
            m: M[i],
            gamma_bar: GAMMA[i],
        }
    }

    /// α-η-κ-μ row `l` (1-based), auxiliaries derived.
    pub fn aekm(l: usize) -> AekmParams {
        let i = l - 1;
        AekmParams {
            alpha: 2.0,
            eta: ETA[i],
            kappa: KAPPA[i],
            mu: AMU[i],
            p: P[i],
            q: Q[i],
            r_bar: RBAR[i],
            delta_aux: None,
            xi_bar: None,
        }
    }

    /// Ratio row `l` (1-based): α_M = 2, α_Q = 2.5.
    pub fn ratio(l: usize) -> Result<RatioAlphaMuModel> {
        let i = l - 1;
        RatioAlphaMuModel::new(2.0, 2.5, MU_M[i], MU_Q[i], OMEGA_M[i], OMEGA_Q[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::rel_diff;

    fn ctx(d: u32) -> PrecisionContext {
        PrecisionContext::new(d).unwrap()
    }

    #[test]
    fn rayleigh_lambda_matches_factorial_form() {
        let c = ctx(40);
        let lam = lambda_coeffs(&AlphaMuMixtureModel::rayleigh(1.0).unwrap(), 4, &c).unwrap();
        let expect = [1.0, -6.0, 60.0, -840.0];
        for (l, e) in lam.iter().zip(expect) {
            assert!((l.to_f64() - e).abs() < 1e-25 * e.abs());
        }
    }

    #[test]
    fn mftr_delta_zero_is_negative_binomial() {
        let c = ctx(60);
        let p = MftrParams {
            k: 1.7,
            delta: 0.0,
            mu: 2,
            m: 1.25,
            gamma_bar: 1.0,
        };
        let w = mftr_weights(&p, 12, &c).unwrap();
        for (i, wi) in w.iter().enumerate() {
            let nb = negative_binomial_weight(&p, i, &c);
            assert!(rel_diff(wi, &nb) < 1e-50);
            let cf = mftr_weight(&p, i, &c).unwrap();
            assert!(rel_diff(&cf, &nb) < 1e-50);
        }
    }

    #[test]
    fn mftr_closed_form_agrees_with_mixing_integral() {
        let c = ctx(50);
        let p = table2::mftr(1);
        let w = mftr_weights(&p, 8, &c).unwrap();
        for (i, wi) in w.iter().enumerate() {
            let cf = mftr_weight(&p, i, &c).unwrap();
            assert!(rel_diff(wi, &cf) < 1e-40, "i={i}");
        }
        assert!((w[0].to_f64() - 0.16594316804373779719).abs() < 1e-17);
    }

    #[test]
    fn mftr_stream_is_prefix_stable() {
        let c = ctx(40);
        let p = table2::mftr(5);
        let short = mftr_weights(&p, 5, &c).unwrap();
        let long = mftr_weights(&p, 40, &c).unwrap();
        assert_eq!(&short[..], &long[..5]);
    }

    #[test]
    fn aekm_swap_picks_convergent_orientation() {
        for l in [3, 8, 10, 12] {
            let p = table2::aekm(l);
            assert!((1.0 - p.eta / p.p).abs() >= 1.0);
            let o = p.oriented();
            assert!((1.0 - o.eta / o.p).abs() < 1.0);
        }
        let p = table2::aekm(1);
        assert_eq!(p.oriented(), p);
    }

    #[test]
    fn aekm_first_weight_is_prefactor() {
        let c = ctx(40);
        let p = table2::aekm(1);
        let w = aekm_weights(&p, 1, &c).unwrap();
        let d = p.delta();
        let expect = (-p.kappa * p.mu * (p.p * p.q + 1.0) / d).exp()
            * p.eta.powf(p.mu)
            * (p.p / p.eta).powf(p.mu * p.p / (p.p + 1.0))
            / p.p.powf(p.mu);
        assert!((w[0].to_f64() / expect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ratio_requires_ordered_alphas() {
        assert!(matches!(
            RatioAlphaMuModel::new(2.5, 2.5, 1.0, 1.0, 1.0, 1.0),
            Err(FadingError::RatioOrder { .. })
        ));
        assert!(RatioAlphaMuModel::fisher_f(2.0, 3.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn ratio_first_coefficient_all_ones() {
        let c = ctx(40);
        let m = RatioAlphaMuModel::new(2.0, 2.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(m.rho_tilde(), 1.0);
        let u = ratio_coeffs(&m, 3, &c);
        assert!((u[0].to_f64() - 0.931_383_770_980_243).abs() < 1e-14);
        assert!(u[1] < 0 && u[2] > 0);
    }

    #[test]
    fn plain_means() {
        let r = marginal_mean(&AlphaMuMixtureModel::rayleigh(1.0).unwrap()).unwrap();
        assert!((r - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
        let a = marginal_mean(&AlphaMuMixtureModel::alpha_mu(2.0, 2.0, 1.0).unwrap()).unwrap();
        assert!((a - 0.939_985_602_986_625).abs() < 1e-12);
        let bad = RatioAlphaMuModel::new(1.0, 2.0, 1.0, 0.4, 1.0, 1.0).unwrap();
        assert!(matches!(ratio_mean(&bad), Err(FadingError::MomentUndefined(_))));
    }
}
