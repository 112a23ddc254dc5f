//! Scenario configuration files. Model blocks use the parameter names of the
//! published parameter table so rows can be transcribed verbatim.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sumstat::fading::{
    AekmParams, AlphaMuMixtureModel, FadingError, GaussianConstructionSpec, Marginal, MftrParams,
    RatioAlphaMuModel,
};
use sumstat::oracle::SamplerModel;
use thiserror::Error;

pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("summand {index}: {message}")]
    Summand { index: usize, message: String },
    #[error("summand {index}: theta = {theta} differs from summand 0 (theta = {expected}); mixed sums need one theta")]
    ThetaMismatch { index: usize, theta: f64, expected: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    None,
    Mc,
    Brennan,
    Both,
}

impl OracleKind {
    pub fn wants_mc(self) -> bool {
        matches!(self, OracleKind::Mc | OracleKind::Both)
    }
    pub fn wants_brennan(self) -> bool {
        matches!(self, OracleKind::Brennan | OracleKind::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid {
    pub fn abscissas(&self) -> Vec<f64> {
        let span = self.max - self.min;
        let n = (self.points - 1) as f64;
        (0..self.points).map(|k| self.min + span * k as f64 / n).collect()
    }
}

/// One model block, tagged by `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum Summand {
    Rayleigh {
        #[serde(default = "one")]
        r_hat: f64,
    },
    Nakagami {
        m: f64,
        #[serde(default = "one")]
        omega: f64,
    },
    AlphaMu {
        alpha: f64,
        mu: f64,
        #[serde(default = "one")]
        r_hat: f64,
    },
    KappaMu {
        kappa: f64,
        mu: f64,
        #[serde(default = "one")]
        r_hat: f64,
    },
    Mftr {
        #[serde(rename = "K")]
        k: f64,
        #[serde(rename = "Delta")]
        delta: f64,
        mu: u32,
        m: f64,
        gamma_bar: f64,
    },
    #[serde(rename = "alpha_eta_kappa_mu")]
    Aekm {
        alpha: f64,
        eta: f64,
        kappa: f64,
        mu: f64,
        p: f64,
        q: f64,
        r_bar: f64,
        #[serde(default)]
        delta_aux: Option<f64>,
        #[serde(default)]
        xi_bar: Option<f64>,
    },
    Ratio {
        #[serde(rename = "alpha_M")]
        alpha_m: f64,
        #[serde(rename = "alpha_Q")]
        alpha_q: f64,
        #[serde(rename = "mu_M")]
        mu_m: f64,
        #[serde(rename = "mu_Q")]
        mu_q: f64,
        #[serde(rename = "Omega_M")]
        omega_m: f64,
        #[serde(rename = "Omega_Q")]
        omega_q: f64,
    },
    GaussianConstruction {
        #[serde(rename = "T")]
        t: Vec<u32>,
        sigma2: Vec<f64>,
        #[serde(default)]
        los: Vec<Vec<f64>>,
        alpha: f64,
        #[serde(default = "one")]
        r_hat: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Summand {
    pub fn marginal(&self) -> Result<Marginal, FadingError> {
        Ok(match self.clone() {
            Summand::Rayleigh { r_hat } => AlphaMuMixtureModel::rayleigh(r_hat)?.into(),
            Summand::Nakagami { m, omega } => AlphaMuMixtureModel::nakagami(m, omega)?.into(),
            Summand::AlphaMu { alpha, mu, r_hat } => AlphaMuMixtureModel::alpha_mu(alpha, mu, r_hat)?.into(),
            Summand::KappaMu { kappa, mu, r_hat } => AlphaMuMixtureModel::kappa_mu(kappa, mu, r_hat)?.into(),
            Summand::Mftr { .. } => AlphaMuMixtureModel::mftr(self.mftr_params().expect("mftr block"))?.into(),
            Summand::Aekm {
                alpha,
                eta,
                kappa,
                mu,
                p,
                q,
                r_bar,
                delta_aux,
                xi_bar,
            } => AlphaMuMixtureModel::aekm(AekmParams {
                alpha,
                eta,
                kappa,
                mu,
                p,
                q,
                r_bar,
                delta_aux,
                xi_bar,
            })?
            .into(),
            Summand::Ratio {
                alpha_m,
                alpha_q,
                mu_m,
                mu_q,
                omega_m,
                omega_q,
            } => RatioAlphaMuModel::new(alpha_m, alpha_q, mu_m, mu_q, omega_m, omega_q)?.into(),
            Summand::GaussianConstruction {
                t,
                sigma2,
                los,
                alpha,
                r_hat,
            } => AlphaMuMixtureModel::gaussian_construction(GaussianConstructionSpec {
                t,
                sigma2,
                los,
                alpha,
                r_hat,
            })?
            .into(),
        })
    }

    fn mftr_params(&self) -> Option<MftrParams> {
        match *self {
            Summand::Mftr {
                k,
                delta,
                mu,
                m,
                gamma_bar,
            } => Some(MftrParams {
                k,
                delta,
                mu,
                m,
                gamma_bar,
            }),
            _ => None,
        }
    }

    /// The physical sampler for this block, if one exists.
    pub fn sampler(&self) -> Result<Option<SamplerModel>, FadingError> {
        Ok(match self.clone() {
            Summand::Rayleigh { r_hat } => Some(SamplerModel::AlphaMu {
                alpha: 2.0,
                mu: 1.0,
                r_hat,
            }),
            Summand::Nakagami { m, omega } => Some(SamplerModel::AlphaMu {
                alpha: 2.0,
                mu: m,
                r_hat: omega.sqrt(),
            }),
            Summand::AlphaMu { alpha, mu, r_hat } => Some(SamplerModel::AlphaMu { alpha, mu, r_hat }),
            Summand::Mftr { .. } => Some(SamplerModel::MftrConditional(self.mftr_params().expect("mftr block"))),
            Summand::Ratio { .. } => match self.marginal()? {
                Marginal::Ratio(r) => Some(SamplerModel::Ratio(r)),
                Marginal::Mixture(_) => unreachable!("ratio block builds a ratio model"),
            },
            Summand::GaussianConstruction {
                t,
                sigma2,
                los,
                alpha,
                r_hat,
            } => Some(SamplerModel::GaussianConstruction(GaussianConstructionSpec {
                t,
                sigma2,
                los,
                alpha,
                r_hat,
            })),
            // κ-μ draws through its Poisson mixture index
            Summand::KappaMu { .. } => match self.marginal()? {
                Marginal::Mixture(m) => Some(SamplerModel::MixtureIndex(m)),
                Marginal::Ratio(_) => unreachable!("kappa-mu block builds a mixture"),
            },
            Summand::Aekm { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    precision_digits: Option<u32>,
    epsilon: f64,
    #[serde(default)]
    t_cap: Option<usize>,
    grid: Grid,
    summands: Vec<Value>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    oracle: Option<OracleKind>,
    #[serde(default)]
    samples: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// `None` selects digits from the term count.
    pub precision_digits: Option<u32>,
    pub epsilon: f64,
    pub t_cap: usize,
    pub grid: Grid,
    pub summands: Vec<Summand>,
    pub marginals: Vec<Marginal>,
    pub seed: u64,
    pub oracle: OracleKind,
    pub samples: usize,
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    if !(raw.epsilon > 0.0 && raw.epsilon < 1.0) {
        return Err(ConfigError::Invalid(format!("epsilon = {} must lie in (0, 1)", raw.epsilon)));
    }
    let g = raw.grid;
    if !(g.min >= 0.0 && g.max > g.min && g.max.is_finite()) || g.points < 2 {
        return Err(ConfigError::Grid(format!(
            "need 0 <= min < max and points >= 2 (got min {}, max {}, points {})",
            g.min, g.max, g.points
        )));
    }
    if raw.summands.is_empty() {
        return Err(ConfigError::Invalid("at least one summand is required".into()));
    }
    let mut summands = Vec::with_capacity(raw.summands.len());
    let mut marginals = Vec::with_capacity(raw.summands.len());
    for (index, v) in raw.summands.into_iter().enumerate() {
        let s: Summand = serde_json::from_value(v).map_err(|e| ConfigError::Summand {
            index,
            message: e.to_string(),
        })?;
        let m = s.marginal().map_err(|e| ConfigError::Summand {
            index,
            message: e.to_string(),
        })?;
        if let Some(first) = marginals.first().map(Marginal::theta) {
            if (m.theta() - first).abs() > 1e-12 * first {
                return Err(ConfigError::ThetaMismatch {
                    index,
                    theta: m.theta(),
                    expected: first,
                });
            }
        }
        summands.push(s);
        marginals.push(m);
    }
    if raw.samples.is_some_and(|n| n < sumstat::oracle::MIN_SAMPLES) {
        return Err(ConfigError::Invalid(format!(
            "samples must be at least {}",
            sumstat::oracle::MIN_SAMPLES
        )));
    }
    Ok(ScenarioConfig {
        precision_digits: raw.precision_digits,
        epsilon: raw.epsilon,
        t_cap: raw.t_cap.unwrap_or(sumstat::sumcore::T_CAP),
        grid: g,
        summands,
        marginals,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        oracle: raw.oracle.unwrap_or(OracleKind::None),
        samples: raw.samples.unwrap_or(DEFAULT_SAMPLES),
    })
}
