//! Exact, truncation-controlled PDF and CDF series for sums of independent
//! positive random variables.
//!
//! Each summand is described by its Laplace coefficient stream
//! `L{f}(s) = Ψ Σ η_i s^(-β-iθ)`. [`sumcore`] composes the streams into a
//! single series for the sum and bounds the truncation error, [`fading`]
//! builds streams for α-μ mixtures and ratios of α-μ variates, and
//! [`oracle`] provides Monte Carlo and grid-convolution cross-checks.

pub mod specfun;
pub mod sumcore;
pub mod fading;
pub mod oracle;
