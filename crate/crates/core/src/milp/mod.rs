//! LP/MILP engine and the counterexample generator built on it.

mod bnb;
pub(crate) mod encode;
mod generator;
mod interval;
mod problem;
mod simplex;

pub use bnb::{BranchAndBound, Heuristic, Limit, MilpOutcome, MilpStatus, PIVOTS_PER_SECOND};
pub use encode::{encode_generator, head_range, monotonicity_big_m, pair_violation, GeneratorEncoding, GAMMA_MIN};
pub use generator::{
    extract_pattern, generate, prepare, Counterexample, GeneratorConfig, GeneratorResult, Snapshot,
};
pub use interval::{affine_interval, interval_bounds, output_bounds, Interval, LayerBounds};
pub use problem::{Constraint, MilpProblem, Sense, VarId, VarKind, Variable};
