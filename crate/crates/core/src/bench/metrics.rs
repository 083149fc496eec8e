use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::smile::SmileModel;

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::dim("r2 needs equally long, nonempty inputs"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("r2 of a constant target".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Percentage of logits on the correct side of `threshold` (ties count as positive).
pub fn accuracy(y_true: &[f64], logits: &[f64], threshold: f64) -> Result<f64> {
    if y_true.len() != logits.len() || y_true.is_empty() {
        return Err(Error::dim("accuracy needs equally long, nonempty inputs"));
    }
    let hits = y_true
        .iter()
        .zip(logits)
        .filter(|(y, l)| (**l >= threshold) == (**y == 1.0))
        .count();
    Ok(100.0 * hits as f64 / y_true.len() as f64)
}

/// Largest output change from flipping binary column `p` on any row.
pub fn counterfactual_variation(model: &SmileModel, data: &Dataset, p: usize) -> Result<f64> {
    if p >= data.dim() || !data.bx.is_binary(p) {
        return Err(Error::Data(format!("protected column {p} is not binary")));
    }
    let mut worst: f64 = 0.0;
    for r in 0..data.len() {
        let x = data.x.row(r);
        let mut flipped = x.to_vec();
        flipped[p] = 1.0 - flipped[p];
        worst = worst.max((model.predict(x)? - model.predict(&flipped)?).abs());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "verdict", content = "label")]
pub enum DefenseVerdict {
    Certified(u8),
    Warning,
}

/// Certifies the label when the logit lies outside `[−ε, ε]`.
pub fn rejection_defense(model: &SmileModel, x: &[f64], eps: f64) -> Result<DefenseVerdict> {
    let logit = model.predict(x)?;
    Ok(if logit.abs() > eps {
        DefenseVerdict::Certified(u8::from(logit > 0.0))
    } else {
        DefenseVerdict::Warning
    })
}

/// Largest `|f(x + η) − f(x)|` found over `trials` perturbations with
/// `‖η‖_∞ ≤ δ`, clipped to the model's box when it has one. Half the trials
/// are sign corners, the rest uniform.
pub fn random_attack(model: &SmileModel, x: &[f64], delta: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Contract(format!("attack radius must be >= 0, got {delta}")));
    }
    let base = model.predict(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut cand = x.to_vec();
    for t in 0..trials {
        for (i, c) in cand.iter_mut().enumerate() {
            let eta = if delta == 0.0 {
                0.0
            } else if t % 2 == 0 {
                if rng.gen_bool(0.5) {
                    delta
                } else {
                    -delta
                }
            } else {
                rng.gen_range(-delta..=delta)
            };
            *c = x[i] + eta;
        }
        if let Some(bx) = &model.meta.input_box {
            bx.clamp(&mut cand);
        }
        worst = worst.max((model.predict(&cand)? - base).abs());
    }
    Ok(worst)
}
