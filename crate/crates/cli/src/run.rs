use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use sumstat::fading::{FadingError, Marginal};
use sumstat::oracle::{
    self, brennan_convolve, central_mass_grid, compare_with, AnalyticPoint, Ecdf, GridDensity, MixtureDensity,
    OracleError, SamplerSpec,
};
use sumstat::specfun::PrecisionContext;
use sumstat::sumcore::{
    plan, select_term_count, working_digits, LaplaceSeriesDescriptor, PointEvaluation, Quantity, SumError,
    SumSeries, TruncationPolicy,
};
use thiserror::Error;

use crate::config::{OracleKind, ScenarioConfig};

/// Sup-deviation tolerance of the grid-convolution oracle.
pub const BRENNAN_TOLERANCE: f64 = 2e-3;
/// Grid intervals used for the convolution oracle.
pub const BRENNAN_INTERVALS: usize = 8192;
/// Fixed shard count, so sample sets do not depend on the machine.
pub const SAMPLER_STREAMS: usize = 8;
/// Points of the central-mass comparison grid.
pub const MC_GRID_POINTS: usize = 40;
/// Fixed term counts reported by `terms`.
pub const TERM_SWEEP: [usize; 4] = [15, 30, 60, 120];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sum(#[from] SumError),
    #[error(transparent)]
    Fading(#[from] FadingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    SpecFun(#[from] sumstat::specfun::SpecFunError),
    #[error("summand {index} has no physical sampler (alpha-eta-kappa-mu); use --oracle brennan")]
    NoSampler { index: usize },
    #[error("grid convolution handles at most {max} summands, config has {got}; use --oracle mc")]
    TooManyForBrennan { got: usize, max: usize },
    #[error("no oracle requested; pass --oracle mc|brennan|both")]
    NoOracle,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub x: f64,
    pub pdf: f64,
    pub cdf: f64,
    pub pdf_bound: f64,
    pub cdf_bound: f64,
    pub certified: bool,
}

impl From<PointEvaluation> for CurveRow {
    fn from(p: PointEvaluation) -> Self {
        Self {
            x: p.x,
            pdf: p.pdf,
            cdf: p.cdf,
            pdf_bound: p.pdf_bound,
            cdf_bound: p.cdf_bound,
            certified: p.certified,
        }
    }
}

pub const CSV_HEADER: &str = "x,pdf,cdf,pdf_bound,cdf_bound,certified";

pub fn write_csv(rows: &[CurveRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.x),
            num(r.pdf),
            num(r.cdf),
            num(r.pdf_bound),
            num(r.cdf_bound),
            r.certified
        )?;
    }
    Ok(())
}

/// Shortest round-trip form (at most 17 significant digits), switching to
/// exponent notation for very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// A series with its term count, ready for evaluation.
pub struct PlannedSeries {
    pub series: SumSeries,
    pub t0: usize,
    /// Largest abscissa at which t0 passed selection.
    pub x_selected: Option<f64>,
}

impl PlannedSeries {
    pub fn digits(&self) -> u32 {
        self.series.ctx().digits()
    }

    pub fn evaluate(&self, x: f64, epsilon: f64) -> Result<CurveRow> {
        if x == 0.0 {
            // every summand has a zero density at the origin
            return Ok(CurveRow {
                x,
                pdf: 0.0,
                cdf: 0.0,
                pdf_bound: 0.0,
                cdf_bound: 0.0,
                certified: true,
            });
        }
        Ok(self.series.evaluate(x, self.t0, epsilon)?.into())
    }

    pub fn evaluate_all(&self, xs: &[f64], epsilon: f64) -> Result<Vec<CurveRow>> {
        self.series.ensure(self.t0)?;
        xs.par_iter().map(|&x| self.evaluate(x, epsilon)).collect()
    }
}

fn descriptors(marginals: &[Marginal]) -> Result<Vec<LaplaceSeriesDescriptor>> {
    Ok(marginals.iter().map(Marginal::to_series).collect::<std::result::Result<_, _>>()?)
}

fn policies(epsilon: f64, x: f64, t_cap: usize) -> [TruncationPolicy; 2] {
    [Quantity::Pdf, Quantity::Cdf].map(|q| TruncationPolicy::new(epsilon, x, q).with_cap(t_cap))
}

/// Selects t0 for the whole grid, or, when that needs more than `t_cap`
/// terms, for the largest grid abscissa that can be certified.
pub fn plan_grid(cfg: &ScenarioConfig, xs: &[f64], digits: Option<u32>) -> Result<PlannedSeries> {
    let members = descriptors(&cfg.marginals)?;
    let positive: Vec<f64> = xs.iter().copied().filter(|&x| x > 0.0).collect();
    let Some(&x_max) = positive.iter().max_by(|a, b| a.total_cmp(b)) else {
        let series = SumSeries::new(&members, PrecisionContext::new(digits.unwrap_or(50))?)?;
        return Ok(PlannedSeries {
            series,
            t0: 5,
            x_selected: None,
        });
    };
    match plan(&members, &policies(cfg.epsilon, x_max, cfg.t_cap), digits) {
        Ok((series, t0)) => Ok(PlannedSeries {
            series,
            t0,
            x_selected: Some(x_max),
        }),
        Err(SumError::DomainTooWide { .. }) => {
            let theta = cfg.marginals[0].theta();
            let d = digits.unwrap_or_else(|| working_digits(cfg.t_cap, theta));
            let series = SumSeries::new(&members, PrecisionContext::new(d)?)?;
            let mut sorted = positive.clone();
            sorted.sort_by(f64::total_cmp);
            let select = |x: f64| -> Result<Option<usize>> {
                let mut t0 = 5;
                for p in policies(cfg.epsilon, x, cfg.t_cap) {
                    match select_term_count(&series, &p) {
                        Ok(t) => t0 = t0.max(t),
                        Err(SumError::DomainTooWide { .. }) => return Ok(None),
                        Err(e) => return Err(e.into()),
                    }
                }
                Ok(Some(t0))
            };
            // certification is monotone in x, so bisect over the sorted grid
            let (mut lo, mut hi) = (0usize, sorted.len());
            let mut best = None;
            while lo < hi {
                let mid = (lo + hi) / 2;
                match select(sorted[mid])? {
                    Some(t) => {
                        best = Some((sorted[mid], t));
                        lo = mid + 1;
                    }
                    None => hi = mid,
                }
            }
            Ok(match best {
                Some((x, t0)) => PlannedSeries {
                    series,
                    t0,
                    x_selected: Some(x),
                },
                None => PlannedSeries {
                    series,
                    t0: cfg.t_cap,
                    x_selected: None,
                },
            })
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub rows: Vec<CurveRow>,
    pub t0: usize,
    pub digits: u32,
}

impl Curve {
    pub fn all_certified(&self) -> bool {
        self.rows.iter().all(|r| r.certified)
    }
}

pub fn run_evaluate(cfg: &ScenarioConfig, digits: Option<u32>) -> Result<Curve> {
    let xs = cfg.grid.abscissas();
    let planned = plan_grid(cfg, &xs, digits.or(cfg.precision_digits))?;
    let rows = planned.evaluate_all(&xs, cfg.epsilon)?;
    Ok(Curve {
        rows,
        t0: planned.t0,
        digits: planned.digits(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationPoint {
    pub x: f64,
    pub analytic: f64,
    pub reference: f64,
    pub bound: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub oracle: &'static str,
    pub sup_deviation: f64,
    pub threshold: f64,
    pub pass: bool,
    pub certified_points: usize,
    pub excluded_points: usize,
    pub t0: usize,
    pub digits: u32,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub points: Vec<ValidationPoint>,
}

/// Samples of the sum, one independent seed per summand.
pub fn sample_sum(cfg: &ScenarioConfig, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let mut per = Vec::with_capacity(cfg.summands.len());
    for (index, s) in cfg.summands.iter().enumerate() {
        let model = s.sampler()?.ok_or(RunError::NoSampler { index })?;
        let spec = SamplerSpec::new(model, summand_seed(seed, index), samples).with_streams(SAMPLER_STREAMS);
        per.push(oracle::draw(&spec)?);
    }
    Ok(oracle::sum_samples(&per)?)
}

pub fn summand_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1))
}

pub fn run_mc(cfg: &ScenarioConfig, samples: usize, seed: u64, digits: Option<u32>) -> Result<ValidationReport> {
    // fail fast before any sampling
    for (index, s) in cfg.summands.iter().enumerate() {
        if s.sampler()?.is_none() {
            return Err(RunError::NoSampler { index });
        }
    }
    let draws = sample_sum(cfg, samples, seed)?;
    let grid = central_mass_grid(&draws, MC_GRID_POINTS)?;
    let planned = plan_grid(cfg, &grid, digits.or(cfg.precision_digits))?;
    let rows = planned.evaluate_all(&grid, cfg.epsilon)?;
    let ecdf = Ecdf::new(&draws);
    let lookup = |x: f64| {
        let r = rows.iter().find(|r| r.x == x).expect("grid row");
        AnalyticPoint {
            cdf: r.cdf,
            bound: r.cdf_bound,
            certified: r.certified,
        }
    };
    let rep = compare_with(&ecdf, lookup, &grid)?;
    Ok(ValidationReport {
        oracle: "mc",
        sup_deviation: rep.sup_deviation,
        threshold: rep.ks_threshold,
        pass: rep.pass,
        certified_points: rep.certified_count(),
        excluded_points: rep.excluded.len(),
        t0: planned.t0,
        digits: planned.digits(),
        samples: Some(samples),
        seed: Some(seed),
        points: rep
            .points
            .iter()
            .map(|p| ValidationPoint {
                x: p.x,
                analytic: p.analytic,
                reference: p.empirical,
                bound: p.bound,
                certified: p.certified,
            })
            .collect(),
    })
}

/// Grid-sampled marginal density with its mass beyond `x_end`.
pub fn marginal_grid(m: &Marginal, step: f64, len: usize) -> Result<GridDensity> {
    let x_end = step * (len - 1) as f64;
    Ok(match m {
        Marginal::Mixture(model) => {
            let d = MixtureDensity::new(model, 1e-12)?;
            let tail = 1.0 - d.cdf(x_end);
            GridDensity::sample(step, len, |x| d.pdf(x)).with_tail_mass(tail)
        }
        Marginal::Ratio(r) => {
            let tail = 1.0 - oracle::ratio_cdf_quadrature(r, x_end);
            GridDensity::sample(step, len, |x| oracle::ratio_pdf_quadrature(r, x)).with_tail_mass(tail)
        }
    })
}

/// Grid convolution of the marginals over [0, x_end].
pub fn brennan_reference(marginals: &[Marginal], x_end: f64) -> Result<oracle::BrennanResult> {
    if marginals.len() > oracle::BRENNAN_MAX_OPERANDS {
        return Err(RunError::TooManyForBrennan {
            got: marginals.len(),
            max: oracle::BRENNAN_MAX_OPERANDS,
        });
    }
    let step = x_end / BRENNAN_INTERVALS as f64;
    let grids = marginals
        .iter()
        .map(|m| marginal_grid(m, step, BRENNAN_INTERVALS + 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(brennan_convolve(&grids)?)
}

pub fn run_brennan(cfg: &ScenarioConfig, digits: Option<u32>) -> Result<ValidationReport> {
    let reference = brennan_reference(&cfg.marginals, cfg.grid.max)?;
    let xs: Vec<f64> = cfg.grid.abscissas().into_iter().filter(|&x| x > 0.0).collect();
    let planned = plan_grid(cfg, &xs, digits.or(cfg.precision_digits))?;
    let rows = planned.evaluate_all(&xs, cfg.epsilon)?;
    let (mut sup, mut max_bound) = (0.0f64, 0.0f64);
    let points: Vec<ValidationPoint> = rows
        .iter()
        .map(|r| {
            let refv = reference.cdf_at(r.x).expect("abscissa on the convolution grid");
            if r.certified {
                sup = sup.max((r.cdf - refv).abs());
                max_bound = max_bound.max(r.cdf_bound);
            }
            ValidationPoint {
                x: r.x,
                analytic: r.cdf,
                reference: refv,
                bound: r.cdf_bound,
                certified: r.certified,
            }
        })
        .collect();
    let certified = points.iter().filter(|p| p.certified).count();
    let threshold = BRENNAN_TOLERANCE + max_bound;
    Ok(ValidationReport {
        oracle: "brennan",
        sup_deviation: sup,
        threshold,
        pass: sup <= threshold,
        certified_points: certified,
        excluded_points: points.len() - certified,
        t0: planned.t0,
        digits: planned.digits(),
        samples: None,
        seed: None,
        points,
    })
}

pub fn run_validate(
    cfg: &ScenarioConfig,
    oracle: OracleKind,
    samples: usize,
    seed: u64,
    digits: Option<u32>,
) -> Result<Vec<ValidationReport>> {
    if oracle == OracleKind::None {
        return Err(RunError::NoOracle);
    }
    let mut out = Vec::new();
    if oracle.wants_mc() {
        out.push(run_mc(cfg, samples, seed, digits)?);
    }
    if oracle.wants_brennan() {
        out.push(run_brennan(cfg, digits)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub t0: usize,
    /// Largest x certified with this many terms (0 when none).
    pub certified_x_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermsReport {
    pub epsilon: f64,
    pub x_max: f64,
    pub t0: usize,
    pub pdf_bound: f64,
    pub cdf_bound: f64,
    pub digits: u32,
    pub sweep: Vec<SweepRow>,
}

pub fn run_terms(cfg: &ScenarioConfig, digits: Option<u32>) -> Result<TermsReport> {
    let members = descriptors(&cfg.marginals)?;
    let x_max = cfg.grid.max;
    let (series, t0) = plan(&members, &policies(cfg.epsilon, x_max, cfg.t_cap), digits.or(cfg.precision_digits))?;
    let at = series.evaluate(x_max, t0, cfg.epsilon)?;
    let sweep = TERM_SWEEP
        .iter()
        .map(|&t| {
            let ok = |x: f64| -> Result<bool> { Ok(series.evaluate(x, t, cfg.epsilon)?.certified) };
            // bracket, then bisect on the certified predicate
            let (mut lo, mut hi) = (0.0, x_max);
            while ok(hi)? {
                lo = hi;
                hi *= 2.0;
                if hi > 1e3 * x_max {
                    break;
                }
            }
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if mid > 0.0 && ok(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(SweepRow {
                t0: t,
                certified_x_max: lo,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TermsReport {
        epsilon: cfg.epsilon,
        x_max,
        t0,
        pdf_bound: at.pdf_bound,
        cdf_bound: at.cdf_bound,
        digits: series.ctx().digits(),
        sweep,
    })
}
