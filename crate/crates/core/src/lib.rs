//! Spectral solver for systems of time-fractional partial differential
//! equations with constant-coefficient Hermitian matrix symbols.
//!
//! The linear propagator applies diagonal Mittag-Leffler matrix functions of
//! the eigendecomposed symbol per frequency; the nonlinear solver iterates
//! the associated Volterra integral equation to a fixed point on contraction
//! subintervals. Independent L1-scheme oracles verify solver output by
//! residual and cross-solution checks.

pub mod error;
pub mod fracops;
pub mod field_io;
pub mod grid;
pub mod linear;
pub mod mlf;
pub mod nonlinear;
pub mod oracle;
pub mod quad;
pub mod special;
pub mod symbol;

pub use error::{Error, Result};
pub use fracops::{caputo_l1, inverse_identity_check, rl_integral, SampledPath, TimeGrid};
pub use grid::{Space, SpectralGrid, StateField};
pub use linear::{component_sobolev, Propagator, SourceSpec};
pub use nonlinear::{estimate_c1, gronwall_bound, solve_nonlinear, stability_probe, NonlinearRhs, PicardReport, SolveConfig};
pub use oracle::{fit_refinement_rate, l1_ode_march, residual_check, ResidualReport};
pub use mlf::{
    ml_bound_check, ml_eval, ml_laplace_pair_check, MlEvalResult, MlEvaluator, MlParams, MlRegime,
};
pub use symbol::{
    corollary_asymptotics_check, eig_hermitian, gershgorin_segments, EigenDecomp, MatrixSymbol,
    PolySymbol, ValidationReport,
};
