//! Scheduling of complex-valued (active plus reactive power) demands under
//! per-slot apparent-power capacities.
//!
//! Each user offers a set of alternative demand preferences; a solution picks
//! at most one per user so that, in every slot, the magnitude of the summed
//! complex load stays within the slot capacity. The crate provides:
//!
//! - [`oracle`]: exhaustive ground truth for small instances.
//! - [`greedy`]: the single-slot greedy with multiple-choice preprocessing.
//! - [`fptas`]: the bi-criteria scheme based on rounding and an exact-fit DP.
//! - [`ptas`]: the guess, relax, purify and round scheme.
//! - [`ufp`]: the reduction to bag unsplittable flow on a path.
//! - [`mixed`]: the reduction of elastic demands to inelastic levels.

pub mod complex;
pub mod error;
pub mod exec;
pub mod fptas;
pub mod generate;
pub mod greedy;
pub mod io;
pub mod mixed;
pub mod model;
pub mod oracle;
pub mod ptas;
pub mod solver;
pub mod ufp;

pub use complex::ComplexPower;
pub use error::{CspError, Result};
pub use exec::Exec;
pub use model::{
    angle_stats, evaluate, evaluate_mixed, is_feasible, validate, DemandPreference, Elasticity,
    FractionalSolution, Instance, MixedSolution, PrefRef, Selection, SolveReport, User,
};
