use serde::Serialize;

use super::config::LossKind;
use super::optim::{gradient_step, DualState};
use crate::error::Result;
use crate::milp::Counterexample;
use crate::numcore::{Gradients, Mat, NodeId, ParamId, Tape};
use crate::property::RelationalProperty;
use crate::smile::{Component, Side, SmileModel, TapeParams};

/// Scalar values of the loss terms, before multipliers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LossParts {
    pub acc: f64,
    #[serde(rename = "box")]
    pub box_: f64,
    pub prop: f64,
    pub total: f64,
}

/// A loss recorded on its own tape.
pub struct RecordedLoss {
    pub tape: Tape,
    pub root: NodeId,
    pub parts: LossParts,
}

impl RecordedLoss {
    pub fn gradients(&self) -> Result<Gradients> {
        self.tape.gradient(self.root, 1.0)
    }
}

fn data_loss(tape: &mut Tape, kind: LossKind, pred: NodeId, y: &Mat) -> Result<NodeId> {
    match kind {
        LossKind::Mse => tape.mse(pred, y),
        LossKind::Bce => tape.bce_logits(pred, y),
    }
}

struct Pathways {
    z: NodeId,
    lo: NodeId,
    up: NodeId,
    clipped: NodeId,
}

fn record_pathways(
    tape: &mut Tape,
    model: &SmileModel,
    params: &TapeParams,
    x: &Mat,
) -> Result<Pathways> {
    let xn = tape.constant(x.clone());
    let z = model.record_mlp(tape, params, Component::Backbone, xn)?;
    let lo = model.record_mlp(tape, params, Component::AuxLow, xn)?;
    let up = model.record_mlp(tape, params, Component::AuxUp, xn)?;
    let clipped = tape.clip(z, lo, up)?;
    Ok(Pathways { z, lo, up, clipped })
}

/// Batch mean of `Σ_i max(0, h_i − up_i) + max(0, lo_i − h_i)`.
fn record_box(tape: &mut Tape, p: &Pathways, rows: usize) -> Result<NodeId> {
    let over = tape.sub(p.z, p.up)?;
    let over = tape.hinge(over);
    let under = tape.sub(p.lo, p.z)?;
    let under = tape.hinge(under);
    let both = tape.add(over, under)?;
    let s = tape.sum(both);
    Ok(tape.scale(s, 1.0 / rows as f64))
}

/// `max(0, ε_low − d, d − ε_high)` with `d = y1 − y2`.
fn record_violation(
    tape: &mut Tape,
    prop: &RelationalProperty,
    y1: NodeId,
    y2: NodeId,
) -> Result<NodeId> {
    let d = tape.sub(y1, y2)?;
    let neg = tape.scale(d, -1.0);
    let below = tape.add_const(neg, prop.eps_low);
    let above = tape.add_const(d, -prop.eps_high);
    let worst = tape.max(below, above)?;
    Ok(tape.hinge(worst))
}

fn record_ce_prop(
    tape: &mut Tape,
    model: &SmileModel,
    params: &TapeParams,
    x: &[f64],
    pattern: &[Side],
) -> Result<NodeId> {
    let xn = tape.constant(Mat::row_vector(x));
    let lo = model.record_mlp(tape, params, Component::AuxLow, xn)?;
    let up = model.record_mlp(tape, params, Component::AuxUp, xn)?;
    let take_up: Vec<bool> = pattern.iter().map(|s| *s == Side::Up).collect();
    let z = tape.select(lo, up, &take_up)?;
    model.record_head(tape, params, z)
}

fn record_ce_violation(
    tape: &mut Tape,
    model: &SmileModel,
    params: &TapeParams,
    ce: &Counterexample,
    prop: &RelationalProperty,
) -> Result<NodeId> {
    let y1 = record_ce_prop(tape, model, params, &ce.x1, &ce.pattern1)?;
    let y2 = record_ce_prop(tape, model, params, &ce.x2, &ce.pattern2)?;
    record_violation(tape, prop, y1, y2)
}

fn weighted_sum(tape: &mut Tape, terms: &[(NodeId, f64)]) -> Result<NodeId> {
    let mut acc = tape.scale(terms[0].0, terms[0].1);
    for &(n, w) in &terms[1..] {
        let s = tape.scale(n, w);
        acc = tape.add(acc, s)?;
    }
    Ok(acc)
}

/// Data loss on all four output pathways plus the weighted degeneracy penalty.
pub fn pretrain_loss(
    model: &SmileModel,
    x: &Mat,
    y: &Mat,
    lambda_box: f64,
    kind: LossKind,
) -> Result<RecordedLoss> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape);
    let p = record_pathways(&mut tape, model, &params, x)?;
    let mut acc_terms = Vec::with_capacity(4);
    for z in [p.clipped, p.lo, p.up, p.z] {
        let y_hat = model.record_head(&mut tape, &params, z)?;
        acc_terms.push((data_loss(&mut tape, kind, y_hat, y)?, 1.0));
    }
    let acc = weighted_sum(&mut tape, &acc_terms)?;
    let bx = record_box(&mut tape, &p, x.rows())?;
    let root = weighted_sum(&mut tape, &[(acc, 1.0), (bx, lambda_box)])?;
    let parts = LossParts {
        acc: tape.scalar(acc),
        box_: tape.scalar(bx),
        prop: 0.0,
        total: tape.scalar(root),
    };
    Ok(RecordedLoss { tape, root, parts })
}

/// Data loss on the deployed output, degeneracy penalty, and the property
/// violation of `ce` rebuilt through the current auxiliaries.
#[allow(clippy::too_many_arguments)]
pub fn train_loss(
    model: &SmileModel,
    x: &Mat,
    y: &Mat,
    lambda_box: f64,
    lambda_prop: f64,
    ce: Option<&Counterexample>,
    prop: &RelationalProperty,
    kind: LossKind,
) -> Result<RecordedLoss> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape);
    let p = record_pathways(&mut tape, model, &params, x)?;
    let y_hat = model.record_head(&mut tape, &params, p.clipped)?;
    let acc = data_loss(&mut tape, kind, y_hat, y)?;
    let bx = record_box(&mut tape, &p, x.rows())?;
    let mut terms = vec![(acc, 1.0), (bx, lambda_box)];
    let mut prop_node = None;
    if let Some(ce) = ce {
        let v = record_ce_violation(&mut tape, model, &params, ce, prop)?;
        terms.push((v, lambda_prop));
        prop_node = Some(v);
    }
    let root = weighted_sum(&mut tape, &terms)?;
    let parts = LossParts {
        acc: tape.scalar(acc),
        box_: tape.scalar(bx),
        prop: prop_node.map_or(0.0, |n| tape.scalar(n)),
        total: tape.scalar(root),
    };
    Ok(RecordedLoss { tape, root, parts })
}

/// Head output on the embedding taken from the current auxiliaries at `pattern`.
pub fn ce_propagate(model: &SmileModel, x: &[f64], pattern: &[Side]) -> Result<f64> {
    model.output_at_pattern(x, pattern)
}

/// Violation of `ce` under the current weights, with its patterns held fixed.
pub fn ce_violation(
    model: &SmileModel,
    ce: &Counterexample,
    prop: &RelationalProperty,
) -> Result<f64> {
    Ok(prop.violation(
        ce_propagate(model, &ce.x1, &ce.pattern1)?,
        ce_propagate(model, &ce.x2, &ce.pattern2)?,
    ))
}

/// Whether a new counterexample is needed.
pub fn resolved(
    model: &SmileModel,
    ce: Option<&Counterexample>,
    prop: &RelationalProperty,
    tol: f64,
) -> Result<bool> {
    match ce {
        None => Ok(true),
        Some(ce) => Ok(ce_violation(model, ce, prop)? <= tol),
    }
}

const PROJECTED: [Component; 3] = [Component::AuxLow, Component::AuxUp, Component::Head];

/// Squared distance of the auxiliaries and head to `orig`, plus `λ` times the
/// violation of `ce`.
pub fn projector_loss(
    model: &SmileModel,
    orig: &SmileModel,
    ce: &Counterexample,
    prop: &RelationalProperty,
    lambda: f64,
) -> Result<RecordedLoss> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape);
    let mut dist = Vec::new();
    for (i, (c, target)) in orig.params().into_iter().enumerate() {
        if PROJECTED.contains(&c) {
            dist.push((tape.sq_dist(params.node(ParamId(i)), target)?, 1.0));
        }
    }
    let acc = weighted_sum(&mut tape, &dist)?;
    let v = record_ce_violation(&mut tape, model, &params, ce, prop)?;
    let root = weighted_sum(&mut tape, &[(acc, 1.0), (v, lambda)])?;
    let parts = LossParts {
        acc: tape.scalar(acc),
        box_: 0.0,
        prop: tape.scalar(v),
        total: tape.scalar(root),
    };
    Ok(RecordedLoss { tape, root, parts })
}

/// Squared norm of `g` restricted to the projected parameters.
fn projected_sq_norm(model: &SmileModel, g: &Gradients) -> f64 {
    model
        .params()
        .iter()
        .enumerate()
        .filter(|(_, (c, _))| PROJECTED.contains(c))
        .filter_map(|(i, _)| g.get(ParamId(i)))
        .map(|m| m.as_slice().iter().map(|x| x * x).sum::<f64>())
        .sum()
}

/// Squared norm of the gradient of the violation of `ce` with respect to the
/// projected parameters.
fn violation_grad_sq(model: &SmileModel, ce: &Counterexample, prop: &RelationalProperty) -> Result<f64> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape);
    let v = record_ce_violation(&mut tape, model, &params, ce, prop)?;
    Ok(projected_sq_norm(model, &tape.gradient(v, 1.0)?))
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectorConfig {
    pub steps: usize,
    /// Gradient-descent step size. Plain descent keeps the move isotropic, so
    /// the result approximates the nearest resolving weights.
    pub lr: f64,
    /// Multiplier step, in units of `L_prop / ‖∇L_prop‖²` so that it is
    /// independent of the scale of the weights.
    pub eta_dual: f64,
    pub tol: f64,
    /// The output interval is shrunk by `margin · γ` on each side while
    /// projecting (at most a quarter of its width), so the counterexample is
    /// resolved with slack rather than exactly on the boundary.
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectorStats {
    pub steps: usize,
    pub lambda: f64,
    pub distance: f64,
    pub violation: f64,
}

/// Moves the auxiliaries and head as little as possible to resolve `ce`.
pub fn projector(
    model: &mut SmileModel,
    ce: &Counterexample,
    prop: &RelationalProperty,
    cfg: &ProjectorConfig,
) -> Result<ProjectorStats> {
    let orig = model.clone();
    let mut dual = DualState::default();
    let mut prev_total = f64::INFINITY;
    let mut stats = ProjectorStats::default();
    let shrink = (cfg.margin * ce.gamma.max(0.0)).min(0.25 * (prop.eps_high - prop.eps_low));
    let target = RelationalProperty {
        eps_low: prop.eps_low + shrink,
        eps_high: prop.eps_high - shrink,
        ..prop.clone()
    };
    for step in 0..cfg.steps {
        let rec = projector_loss(model, &orig, ce, &target, dual.lambda)?;
        let stationary = (prev_total - rec.parts.total).abs() <= 1e-10 * (1.0 + rec.parts.total);
        if step > 0 && rec.parts.prop <= cfg.tol && stationary {
            break;
        }
        prev_total = rec.parts.total;
        // The violation is bilinear in head and auxiliary weights, so a fixed
        // step can overshoot along negative curvature; backtrack until the
        // Lagrangian decreases.
        let grads = rec.gradients()?;
        let g2 = projected_sq_norm(model, &grads);
        let mut lr = cfg.lr;
        let accepted = loop {
            let mut trial = model.clone();
            gradient_step(&mut trial, &grads, lr, Some(&PROJECTED))?;
            let value = projector_loss(&trial, &orig, ce, &target, dual.lambda)?.parts.total;
            if value <= rec.parts.total - 1e-4 * lr * g2 {
                break Some(trial);
            }
            lr *= 0.5;
            if lr < cfg.lr * 1e-12 {
                break None;
            }
        };
        match accepted {
            Some(trial) => *model = trial,
            None if rec.parts.prop <= cfg.tol => break,
            None => {}
        }
        if rec.parts.prop > 0.0 {
            let g2 = violation_grad_sq(model, ce, &target)?;
            if g2 <= f64::MIN_POSITIVE {
                break;
            }
            dual.step(rec.parts.prop, cfg.eta_dual / g2);
        }
        stats.steps = step + 1;
    }
    let last = projector_loss(model, &orig, ce, prop, dual.lambda)?;
    stats.lambda = dual.lambda;
    stats.distance = last.parts.acc;
    stats.violation = last.parts.prop;
    Ok(stats)
}
