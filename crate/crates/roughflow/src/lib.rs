//! Simulation and numerical-analysis toolkit for stochastic differential
//! equations driven by rough (low-Hurst) fractional noise.
//!
//! The crate is organised around a handful of capabilities:
//!
//! * [`fbm`] — fractional Brownian motion: covariance, Volterra kernel,
//!   exact (Cholesky) and kernel-based samplers, conditional variances.
//! * [`regnoise`] — an infinite-sum "regularizing" Gaussian process built
//!   from countably many independent fBms with Hurst indices accumulating
//!   at zero, plus diagnostics for the summability conditions its
//!   coefficients must satisfy.
//! * [`fraccalc`] — Riemann–Liouville fractional integrals/derivatives on
//!   uniform grids and the kernel operator `K_H` together with its inverse
//!   on absolutely continuous inputs.
//! * [`girsanov`] — drift-removal: the integrand `theta`, the exponential
//!   density weight, a Novikov-type series bound, and weak-solution
//!   expectations computed by reweighting driftless paths.
//! * [`sde`] — Euler schemes for drifted equations, drift mollification,
//!   flow maps under common random numbers, finite-difference and
//!   variational/Malliavin derivatives of the flow.
//! * [`shuffle`] — shuffle enumeration for products of iterated simplex
//!   integrals, adaptive simplex quadrature with endpoint singularities,
//!   and Gamma-function (Dirichlet) closed forms that bound them.
//! * [`averaging`] — the averaging operator `b ↦ ∫_0^t b(x + B_s) ds`,
//!   occupation densities, and small Gaussian moment lemmas (permanent
//!   bound, conditional-variance identity, multi-index moment bounds).
//! * [`scenario`] — declarative TOML scenario configs, the runner behind
//!   the `roughflow` binary, and CSV/JSON report writers.

pub mod averaging;
pub mod error;
pub mod fbm;
pub mod fraccalc;
pub mod girsanov;
pub mod grid;
pub mod quad;
pub mod regnoise;
pub mod rng;
pub mod scenario;
pub mod sde;
pub mod shuffle;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
