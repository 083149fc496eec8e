//! Benchmark datasets, evaluation metrics and the rejection-based defense.

mod data;
mod metrics;

pub use data::{
    gen_monotonic, load_csv, load_csv_str, synthetic_fairness_csv, two_moons, ColumnKind, ColumnSpec, Dataset,
    FeatureMeta, MissingPolicy, Schema, Task, FAIRNESS_SCHEMA,
};
pub use metrics::{accuracy, counterfactual_variation, r2, random_attack, rejection_defense, DefenseVerdict};
