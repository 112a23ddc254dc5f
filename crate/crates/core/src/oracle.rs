//! Independent validation: Monte Carlo samplers for the physical
//! constructions, empirical-CDF comparison, and grid convolution of marginal
//! densities (Brennan's integral). Nothing here touches the series engine;
//! the densities are plain `f64` closed forms and quadratures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::function::gamma::{gamma_lr, ln_gamma};
use thiserror::Error;

use crate::fading::{
    AlphaMuMixtureModel, FadingError, GaussianConstructionSpec, MftrParams, RatioAlphaMuModel,
};
use crate::specfun::PrecisionContext;

/// c(0.99) of the Kolmogorov distribution.
pub const KS_C99: f64 = 1.63;
/// Smallest sample accepted by [`empirical_cdf_compare`].
pub const MIN_SAMPLES: usize = 10_000;
/// Brennan's integral is only attempted for up to this many operands.
pub const BRENNAN_MAX_OPERANDS: usize = 6;
/// Allowed deviation of each convolution operand's mass from 1.
pub const BRENNAN_MASS_TOL: f64 = 1e-4;
/// Mixture weights below this are treated as genuinely negative.
pub const NEGATIVE_WEIGHT_TOL: f64 = -1e-12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("mixture weight {index} is negative ({value:e}); no index sampler exists for signed mixtures")]
    SignedWeights { index: usize, value: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid convolution refuses {0} operands (at most {BRENNAN_MAX_OPERANDS})")]
    TooManyOperands(usize),
    #[error("operand {index} has grid mass {mass} (needs 1 within {BRENNAN_MASS_TOL:e})")]
    Mass { index: usize, mass: f64 },
    #[error(transparent)]
    Fading(#[from] FadingError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(OracleError::Domain(format!("{name} = {v} must be > 0")))
    }
}

// ---------------------------------------------------------------- samplers

#[derive(Debug, Clone)]
pub enum SamplerModel {
    /// r̂ (G/μ)^(1/α), G ~ Gamma(μ, 1).
    AlphaMu { alpha: f64, mu: f64, r_hat: f64 },
    GaussianConstruction(GaussianConstructionSpec),
    MftrConditional(MftrParams),
    Ratio(RatioAlphaMuModel),
    /// Draw i from the mixture weights, then R^α ~ Gamma(T + i, scale).
    MixtureIndex(AlphaMuMixtureModel),
}

#[derive(Debug, Clone)]
pub struct SamplerSpec {
    pub model: SamplerModel,
    pub seed: u64,
    pub n: usize,
    /// Independent ChaCha streams the draw is sharded over.
    pub streams: usize,
}

impl SamplerSpec {
    pub fn new(model: SamplerModel, seed: u64, n: usize) -> Self {
        Self {
            model,
            seed,
            n,
            streams: 1,
        }
    }

    pub fn with_streams(mut self, streams: usize) -> Self {
        self.streams = streams.max(1);
        self
    }
}

struct AlphaMuDraw {
    gamma: Gamma<f64>,
    inv_alpha: f64,
    scale: f64,
}

impl AlphaMuDraw {
    fn new(alpha: f64, mu: f64, r_hat: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("mu", mu)?;
        positive("r_hat", r_hat)?;
        let gamma = Gamma::new(mu, 1.0 / mu).map_err(|e| OracleError::Domain(e.to_string()))?;
        Ok(Self {
            gamma,
            inv_alpha: 1.0 / alpha,
            scale: r_hat,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.scale * self.gamma.sample(rng).powf(self.inv_alpha)
    }
}

enum Prepared {
    AlphaMu(AlphaMuDraw),
    Gaussian {
        // per cluster: (v_n, σ_n, LoS means padded to T_n)
        clusters: Vec<(f64, f64, Vec<f64>)>,
        inv_alpha: f64,
    },
    Mftr {
        zeta: Gamma<f64>,
        k: f64,
        delta: f64,
        sigma: f64,
        nc_scale: f64,
        components: usize,
    },
    Ratio(AlphaMuDraw, AlphaMuDraw),
    Mixture {
        cumulative: Vec<f64>,
        gammas: Vec<Gamma<f64>>,
        inv_alpha: f64,
    },
}

impl Prepared {
    fn new(model: &SamplerModel) -> Result<Self> {
        Ok(match model {
            SamplerModel::AlphaMu { alpha, mu, r_hat } => Prepared::AlphaMu(AlphaMuDraw::new(*alpha, *mu, *r_hat)?),
            SamplerModel::GaussianConstruction(spec) => {
                spec.validate()?;
                let clusters = (0..spec.clusters())
                    .map(|n| {
                        let means = (0..spec.t[n] as usize).map(|m| spec.los_mean(n, m)).collect();
                        (spec.v(n), spec.sigma2[n].sqrt(), means)
                    })
                    .collect();
                Prepared::Gaussian {
                    clusters,
                    inv_alpha: 1.0 / spec.alpha,
                }
            }
            SamplerModel::MftrConditional(p) => {
                p.validate()?;
                let zeta = Gamma::new(p.m, 1.0 / p.m).map_err(|e| OracleError::Domain(e.to_string()))?;
                let mu = f64::from(p.mu);
                Prepared::Mftr {
                    zeta,
                    k: p.k,
                    delta: p.delta,
                    sigma: (p.gamma_bar / (2.0 * mu * (1.0 + p.k))).sqrt(),
                    nc_scale: p.gamma_bar / (1.0 + p.k),
                    components: 2 * p.mu as usize,
                }
            }
            SamplerModel::Ratio(r) => Prepared::Ratio(
                AlphaMuDraw::new(r.alpha_m(), r.mu_m(), r.omega_m())?,
                AlphaMuDraw::new(r.alpha_q(), r.mu_q(), r.omega_q())?,
            ),
            SamplerModel::MixtureIndex(model) => {
                let weights = mixture_weights_f64(model, 1e-12)?;
                let mut cumulative = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for w in &weights {
                    acc += w;
                    cumulative.push(acc);
                }
                let gammas = (0..weights.len())
                    .map(|i| Gamma::new(model.t() + i as f64, model.scale_alpha()))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| OracleError::Domain(e.to_string()))?;
                Prepared::Mixture {
                    cumulative,
                    gammas,
                    inv_alpha: 1.0 / model.alpha(),
                }
            }
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Prepared::AlphaMu(d) => d.sample(rng),
            Prepared::Gaussian { clusters, inv_alpha } => {
                let mut w = 0.0;
                for (v, sigma, means) in clusters {
                    let s: f64 = means
                        .iter()
                        .map(|p| {
                            let g: f64 = rng.sample(StandardNormal);
                            (sigma * g + p).powi(2)
                        })
                        .sum();
                    w += v * s;
                }
                w.powf(*inv_alpha)
            }
            Prepared::Mftr {
                zeta,
                k,
                delta,
                sigma,
                nc_scale,
                components,
            } => {
                let z = zeta.sample(rng);
                let u = rng.random::<f64>() * std::f64::consts::PI;
                let kappa_c = k * z * (1.0 + delta * u.cos());
                // all of the specular power sits on the first component
                let nc = (nc_scale * kappa_c).sqrt();
                let mut e2 = 0.0;
                for j in 0..*components {
                    let g: f64 = rng.sample(StandardNormal);
                    let x = sigma * g + if j == 0 { nc } else { 0.0 };
                    e2 += x * x;
                }
                e2.sqrt()
            }
            Prepared::Ratio(m, q) => m.sample(rng) / q.sample(rng),
            Prepared::Mixture {
                cumulative,
                gammas,
                inv_alpha,
            } => {
                let total = *cumulative.last().expect("non-empty weights");
                let u = rng.random::<f64>() * total;
                let i = cumulative.partition_point(|&c| c <= u).min(gammas.len() - 1);
                gammas[i].sample(rng).powf(*inv_alpha)
            }
        }
    }
}

/// Draws `spec.n` variates. Shard s uses ChaCha20 seeded with `spec.seed`
/// on stream s, and shards are concatenated in order, so the output depends
/// only on (seed, n, streams).
pub fn draw(spec: &SamplerSpec) -> Result<Vec<f64>> {
    let prepared = Prepared::new(&spec.model)?;
    let k = spec.streams.max(1);
    let shards: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|s| {
            let count = spec.n / k + usize::from(s < spec.n % k);
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            rng.set_stream(s as u64);
            (0..count).map(|_| prepared.sample(&mut rng)).collect()
        })
        .collect();
    Ok(shards.concat())
}

pub fn sample_alpha_mu(alpha: f64, mu: f64, r_hat: f64, seed: u64, n: usize) -> Result<Vec<f64>> {
    draw(&SamplerSpec::new(SamplerModel::AlphaMu { alpha, mu, r_hat }, seed, n))
}

pub fn sample_gaussian_construction(spec: &GaussianConstructionSpec, seed: u64, n: usize) -> Result<Vec<f64>> {
    draw(&SamplerSpec::new(SamplerModel::GaussianConstruction(spec.clone()), seed, n))
}

pub fn sample_mftr_conditional(p: &MftrParams, seed: u64, n: usize) -> Result<Vec<f64>> {
    draw(&SamplerSpec::new(SamplerModel::MftrConditional(*p), seed, n))
}

pub fn sample_ratio(model: &RatioAlphaMuModel, seed: u64, n: usize) -> Result<Vec<f64>> {
    draw(&SamplerSpec::new(SamplerModel::Ratio(*model), seed, n))
}

/// Sum of independent draws: `per_summand[l][k]` summed over l.
pub fn sum_samples(per_summand: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = per_summand.first().map_or(0, Vec::len);
    if per_summand.iter().any(|s| s.len() != n) {
        return Err(OracleError::Domain("summand sample counts differ".into()));
    }
    Ok((0..n).map(|k| per_summand.iter().map(|s| s[k]).sum()).collect())
}

/// f64 mixture weights up to normalization `tol`; negative weights beyond
/// rounding are rejected.
pub fn mixture_weights_f64(model: &AlphaMuMixtureModel, tol: f64) -> Result<Vec<f64>> {
    let ctx = PrecisionContext::new(50).map_err(FadingError::from)?;
    let (n, _) = model.normalization(tol, 1 << 15, &ctx)?;
    let weights: Vec<f64> = model.weights(n, &ctx)?.iter().map(|w| w.to_f64()).collect();
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, &w)| w < NEGATIVE_WEIGHT_TOL) {
        return Err(OracleError::SignedWeights { index, value });
    }
    Ok(weights.into_iter().map(|w| w.max(0.0)).collect())
}

// ---------------------------------------------------------------- ECDF comparison

/// Empirical CDF over a sorted copy of the samples.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Empirical p-quantile (order statistic ⌈pn⌉).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    /// Kolmogorov-Smirnov distance to `cdf`.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// `points` equispaced abscissas between the 1% and 99% empirical quantiles.
pub fn central_mass_grid(samples: &[f64], points: usize) -> Result<Vec<f64>> {
    if samples.is_empty() || points < 2 {
        return Err(OracleError::Domain("central-mass grid needs samples and >= 2 points".into()));
    }
    let e = Ecdf::new(samples);
    let (lo, hi) = (e.quantile(0.01), e.quantile(0.99));
    Ok(linspace(lo, hi, points))
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|k| lo + step * k as f64).collect()
}

/// The analytic side of a comparison at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPoint {
    pub cdf: f64,
    /// Truncation bound of the series at this abscissa.
    pub bound: f64,
    pub certified: bool,
}

impl AnalyticPoint {
    /// A closed form with no truncation.
    pub fn exact(cdf: f64) -> Self {
        Self {
            cdf,
            bound: 0.0,
            certified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointComparison {
    pub x: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub bound: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// max |F_analytic − F_empirical| over certified grid points.
    pub sup_deviation: f64,
    /// 1.63/√n plus the largest certified truncation bound.
    pub ks_threshold: f64,
    pub grid: Vec<f64>,
    pub points: Vec<PointComparison>,
    /// Grid points left out because the series is not certified there.
    pub excluded: Vec<f64>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn certified_count(&self) -> usize {
        self.grid.len() - self.excluded.len()
    }
}

pub fn empirical_cdf_compare(
    samples: &[f64],
    analytic: impl Fn(f64) -> AnalyticPoint,
    grid: &[f64],
) -> Result<ComparisonReport> {
    if samples.len() < MIN_SAMPLES {
        return Err(OracleError::TooFewSamples(samples.len()));
    }
    let ecdf = Ecdf::new(samples);
    compare_with(&ecdf, analytic, grid)
}

/// [`empirical_cdf_compare`] against a prepared ECDF.
pub fn compare_with(ecdf: &Ecdf, analytic: impl Fn(f64) -> AnalyticPoint, grid: &[f64]) -> Result<ComparisonReport> {
    if ecdf.len() < MIN_SAMPLES {
        return Err(OracleError::TooFewSamples(ecdf.len()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut excluded = Vec::new();
    let (mut sup, mut max_bound) = (0.0f64, 0.0f64);
    for &x in grid {
        let a = analytic(x);
        let empirical = ecdf.eval(x);
        if a.certified {
            sup = sup.max((a.cdf - empirical).abs());
            max_bound = max_bound.max(a.bound);
        } else {
            excluded.push(x);
        }
        points.push(PointComparison {
            x,
            analytic: a.cdf,
            empirical,
            bound: a.bound,
            certified: a.certified,
        });
    }
    let ks_threshold = KS_C99 / (ecdf.len() as f64).sqrt() + max_bound;
    Ok(ComparisonReport {
        sup_deviation: sup,
        ks_threshold,
        grid: grid.to_vec(),
        points,
        excluded,
        pass: sup <= ks_threshold,
    })
}

// ---------------------------------------------------------------- f64 densities

/// α-μ density with α-root mean r̂.
pub fn alpha_mu_pdf(alpha: f64, mu: f64, r_hat: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let y = (r / r_hat).powf(alpha);
    let ln = alpha.ln() + mu * mu.ln() + (alpha * mu - 1.0) * r.ln() - alpha * mu * r_hat.ln() - ln_gamma(mu) - mu * y;
    ln.exp()
}

pub fn alpha_mu_cdf(alpha: f64, mu: f64, r_hat: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    gamma_lr(mu, mu * (r / r_hat).powf(alpha))
}

/// A mixture marginal with its weights rounded to `f64` once.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    alpha: f64,
    t: f64,
    scale: f64,
    weights: Vec<f64>,
}

impl MixtureDensity {
    /// Weights are taken until they sum to 1 within `tol`. Signed weights
    /// are allowed here; only the index sampler needs them nonnegative.
    pub fn new(model: &AlphaMuMixtureModel, tol: f64) -> Result<Self> {
        let ctx = PrecisionContext::new(50).map_err(FadingError::from)?;
        let (n, _) = model.normalization(tol, 1 << 15, &ctx)?;
        let weights = model.weights(n, &ctx)?.iter().map(|w| w.to_f64()).collect();
        Ok(Self {
            alpha: model.alpha(),
            t: model.t(),
            scale: model.scale_alpha(),
            weights,
        })
    }

    pub fn terms(&self) -> usize {
        self.weights.len()
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let w = r.powf(self.alpha) / self.scale;
        let base = self.alpha.ln() + (self.alpha - 1.0) * r.ln() - self.scale.ln() - w;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, phi)| {
                let k = self.t + i as f64;
                phi * (base + (k - 1.0) * w.ln() - ln_gamma(k)).exp()
            })
            .sum()
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let w = r.powf(self.alpha) / self.scale;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, phi)| phi * gamma_lr(self.t + i as f64, w))
            .sum()
    }
}

// ln of the α-μ density, parameterised as in the ratio model
fn ln_alpha_mu(alpha: f64, mu: f64, omega: f64, r: f64) -> f64 {
    let y = (r / omega).powf(alpha);
    alpha.ln() + mu * mu.ln() + (alpha * mu - 1.0) * r.ln() - alpha * mu * omega.ln() - ln_gamma(mu) - mu * y
}

/// ∫ g(q) f_Q(q) dq over q = e^t by the trapezoid rule, which converges
/// geometrically for this smooth, doubly decaying integrand.
fn integrate_over_q(model: &RatioAlphaMuModel, ln_g: impl Fn(f64) -> f64) -> f64 {
    let ln_f = |t: f64| {
        let q = t.exp();
        ln_g(q) + ln_alpha_mu(model.alpha_q(), model.mu_q(), model.omega_q(), q) + t
    };
    // locate the bulk on a coarse scan, then refine
    let coarse = 0.05;
    let (mut peak, mut at) = (f64::NEG_INFINITY, 0.0);
    let mut t = -60.0;
    while t <= 30.0 {
        let v = ln_f(t);
        if v > peak {
            peak = v;
            at = t;
        }
        t += coarse;
    }
    if !peak.is_finite() {
        return 0.0;
    }
    let floor = peak - 45.0;
    let mut lo = at;
    while lo > -80.0 && ln_f(lo) > floor {
        lo -= coarse;
    }
    let mut hi = at;
    while hi < 60.0 && ln_f(hi) > floor {
        hi += coarse;
    }
    let n = (((hi - lo) / 2e-3).ceil() as usize).max(64);
    let h = (hi - lo) / n as f64;
    let mut acc = 0.5 * ((ln_f(lo) - peak).exp() + (ln_f(hi) - peak).exp());
    for k in 1..n {
        acc += (ln_f(lo + h * k as f64) - peak).exp();
    }
    acc * h * peak.exp()
}

/// f_Z(z) = ∫ q f_M(zq) f_Q(q) dq for Z = M/Q.
pub fn ratio_pdf_quadrature(model: &RatioAlphaMuModel, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    integrate_over_q(model, |q| {
        q.ln() + ln_alpha_mu(model.alpha_m(), model.mu_m(), model.omega_m(), z * q)
    })
}

/// F_Z(z) = ∫ F_M(zq) f_Q(q) dq.
pub fn ratio_cdf_quadrature(model: &RatioAlphaMuModel, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    integrate_over_q(model, |q| {
        alpha_mu_cdf(model.alpha_m(), model.mu_m(), model.omega_m(), z * q).ln()
    })
}

// ---------------------------------------------------------------- grid convolution

/// Density samples on the uniform grid x_k = k·step, k = 0..len.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub step: f64,
    pub values: Vec<f64>,
    /// Known probability mass beyond the grid end, excluded from the
    /// normalization check (heavy-tailed marginals).
    pub tail_mass: f64,
}

impl GridDensity {
    pub fn sample(step: f64, len: usize, pdf: impl Fn(f64) -> f64 + Sync) -> Self {
        let values = (0..len).into_par_iter().map(|k| pdf(step * k as f64)).collect();
        Self {
            step,
            values,
            tail_mass: 0.0,
        }
    }

    pub fn with_tail_mass(mut self, tail: f64) -> Self {
        self.tail_mass = tail;
        self
    }

    pub fn grid_mass(&self) -> f64 {
        trapezoid(&self.values, self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrennanResult {
    pub step: f64,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl BrennanResult {
    /// Linear interpolation of the CDF; `None` outside the grid.
    pub fn cdf_at(&self, x: f64) -> Option<f64> {
        interpolate(&self.cdf, self.step, x)
    }

    pub fn pdf_at(&self, x: f64) -> Option<f64> {
        interpolate(&self.pdf, self.step, x)
    }
}

fn interpolate(v: &[f64], step: f64, x: f64) -> Option<f64> {
    let pos = x / step;
    if !(pos >= 0.0) || pos > (v.len() - 1) as f64 {
        return None;
    }
    let k = (pos.floor() as usize).min(v.len() - 2);
    let f = pos - k as f64;
    Some(v[k] * (1.0 - f) + v[k + 1] * f)
}

pub fn trapezoid(v: &[f64], step: f64) -> f64 {
    match v.len() {
        0 | 1 => 0.0,
        n => step * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1])),
    }
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(v: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in v.windows(2) {
        acc += 0.5 * step * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(v.len());
    out
}

/// Density of the sum of independent variates by iterated trapezoid-rule
/// convolution on a common grid. Each product is taken by zero-padded FFT,
/// so the truncated grid is exact on [0, x_max]; no renormalization is
/// applied.
pub fn brennan_convolve(marginals: &[GridDensity]) -> Result<BrennanResult> {
    let first = marginals
        .first()
        .ok_or_else(|| OracleError::Domain("no densities to convolve".into()))?;
    if marginals.len() > BRENNAN_MAX_OPERANDS {
        return Err(OracleError::TooManyOperands(marginals.len()));
    }
    let (step, len) = (first.step, first.values.len());
    positive("step", step)?;
    if len < 2 {
        return Err(OracleError::GridMismatch("grid needs at least two points".into()));
    }
    for (index, m) in marginals.iter().enumerate() {
        if m.values.len() != len || (m.step - step).abs() > 1e-12 * step {
            return Err(OracleError::GridMismatch(format!(
                "operand {index} has {} points at step {}, expected {len} at {step}",
                m.values.len(),
                m.step
            )));
        }
        let mass = m.grid_mass() + m.tail_mass;
        if (mass - 1.0).abs() > BRENNAN_MASS_TOL {
            return Err(OracleError::Mass { index, mass });
        }
    }
    let mut acc = first.values.clone();
    for m in &marginals[1..] {
        acc = convolve_trapezoid(&acc, &m.values, step);
    }
    let cdf = cumulative_trapezoid(&acc, step);
    Ok(BrennanResult { step, pdf: acc, cdf })
}

// c_k = h (Σ_{j=0..k} f_j g_{k-j} − (f_0 g_k + f_k g_0)/2), k < len
fn convolve_trapezoid(f: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    let len = f.len();
    let size = (2 * len - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut out: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        out.resize(size, Complex::new(0.0, 0.0));
        out
    };
    let (mut a, mut b) = (pad(f), pad(g));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let norm = 1.0 / size as f64;
    (0..len)
        .map(|k| step * (a[k].re * norm - 0.5 * (f[0] * g[k] + f[k] * g[0])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_convolution_of_uniforms_is_triangular() {
        let h = 0.01;
        let n = 301;
        let box1: Vec<f64> = (0..n).map(|k| if (k as f64) * h <= 1.0 + 1e-12 { 1.0 } else { 0.0 }).collect();
        let c = convolve_trapezoid(&box1, &box1, h);
        // triangle peak at x = 1
        assert!((c[100] - 1.0).abs() < 0.02, "{}", c[100]);
        assert!((c[50] - 0.5).abs() < 0.02);
    }

    #[test]
    fn ecdf_quantiles() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let e = Ecdf::new(&s);
        assert_eq!(e.quantile(0.01), 1.0);
        assert_eq!(e.quantile(0.99), 99.0);
        assert_eq!(e.eval(50.0), 0.5);
    }

    #[test]
    fn interpolation_stays_on_grid() {
        let r = BrennanResult {
            step: 0.5,
            pdf: vec![0.0, 1.0, 2.0],
            cdf: vec![0.0, 0.5, 1.0],
        };
        assert_eq!(r.cdf_at(0.75), Some(0.75));
        assert_eq!(r.cdf_at(1.0), Some(1.0));
        assert_eq!(r.cdf_at(1.01), None);
    }
}
