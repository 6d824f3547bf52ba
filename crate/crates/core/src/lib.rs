//! Solver and verification harness for two-player zero-sum stochastic
//! differential games with impulse controls.
//!
//! The value function of such a game solves a double-obstacle equation: away
//! from intervention it follows a linear parabolic operator, while each
//! player's intervention operator caps it from one side,
//!
//! ```text
//! max{ min[ -dV/dt - LV - f, V - sup-op V ], V - inf-op V } = 0,   V(T,.) = g,
//! ```
//!
//! with `sup-op V(x) = max_a [V(x+a) - c(t,a)]` over player I's actions and
//! `inf-op V(x) = min_a [V(x+a) + chi(t,a)]` over player II's. This crate
//! discretizes the equation with a monotone explicit scheme on a truncated
//! grid, extracts both players' feedback strategies from the solved stack,
//! and verifies the result by Monte Carlo simulation of the controlled
//! diffusion plus structural property checks.
//!
//! Modules mirror the pipeline: [`model`] defines an instance and [`validate`]
//! checks its standing assumptions, [`grid`] builds the lattice under the
//! stability bound, [`operators`] evaluates the intervention and local
//! operators, [`solver`] runs the backward sweep (twice, through an exp-scaled
//! change of variable, as a cross-check), [`policy`] labels the intervention
//! regions, and [`sim`] closes the loop against the payoff functional.

pub mod config;
pub mod error;
pub mod grid;
pub mod model;
pub mod operators;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod validate;

pub use config::{load_config, parse_config, LoadedConfig, SimDefaults};
pub use error::{ConfigError, GridError, ModelError, SimError, SolveError};
pub use grid::{build_grid, check_cfl, BoundaryPolicy, Grid, GridRequest};
pub use model::{
    evaluate_coefficients, Cone, ConeAxis, CostFamily, DiffusionFamily, DriftFamily, Priority,
    ProblemSpec, RunningGain, TerminalGain, TimeModulation,
};
pub use operators::{
    apply_local_operator, interpolate, intervention_inf, intervention_sup, ValueField,
};
pub use policy::{extract_policy, region_masks, MaskSlice, PolicyMap, Regime};
pub use sim::{
    check_dpp, check_impulse_tail, simulate, trace_path, DppReport, SimConfig, SimReport, TailFit,
};
pub use solver::{
    qvi_residual, refixed_slice, solve_backward, solve_backward_transformed, SolveOpts,
    SolveResult,
};
pub use validate::{validate_assumptions, CheckResult, SamplingParams, ValidationReport, Witness};
