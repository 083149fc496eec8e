//! Counterexample generation with a doubling time limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bnb::{BranchAndBound, Limit, MilpOutcome, MilpStatus};
use super::encode::{cell_may_violate, encode_generator_on, pair_violation, GeneratorEncoding, GAMMA_MIN};
use crate::error::Result;
use crate::property::{InputBox, RelationalProperty};
use crate::smile::{Side, SmileModel};

const SEED_PAIRS: usize = 64;
const SEED_CORNERS: usize = 64;
const CLIMB_STARTS: usize = 4;
const CLIMB_ITERS: usize = 300;
/// Work a cell may spend before it is bisected.
const CELL_SLICE: u64 = 2_000;
const MAX_CELLS: usize = 100_000;
const MIN_SPLIT_WIDTH: f64 = 1e-9;
const GAP_TOL: f64 = 1e-9;

/// A violating pair and the box faces its embeddings sit on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Counterexample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub pattern1: Vec<Side>,
    pub pattern2: Vec<Side>,
    pub gamma: f64,
}

/// State after one call of the inner solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub limit: f64,
    pub status: MilpStatus,
    pub incumbent: Option<f64>,
    pub dual_bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorResult {
    pub outcome: MilpOutcome,
    pub counterexample: Option<Counterexample>,
    pub snapshots: Vec<Snapshot>,
}

impl GeneratorResult {
    pub fn status(&self) -> MilpStatus {
        self.outcome.status
    }

    /// Upper bound on the violation of any pair; 0 once infeasibility is proven.
    pub fn viol_bound(&self) -> f64 {
        match self.outcome.status {
            MilpStatus::Infeasible => 0.0,
            _ => self.outcome.dual_bound.max(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub t0: f64,
    pub t_max: f64,
    /// Keep searching after the first counterexample until optimality.
    pub to_optimality: bool,
    /// Distance below which an embedding coordinate counts as on its lower face
    /// even when marginally closer to the upper one.
    pub pattern_tol: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            t0: 1.0,
            t_max: 64.0,
            to_optimality: false,
            pattern_tol: 1e-9,
        }
    }
}

/// Face each embedding coordinate is closest to; ties (within `tol`) go to the lower face.
pub fn extract_pattern(model: &SmileModel, x: &[f64], z: &[f64], tol: f64) -> Result<Vec<Side>> {
    let lo = model.aux_low().forward(x);
    let up = model.aux_up().forward(x);
    if z.len() != lo.len() {
        return Err(crate::error::Error::dim("embedding length differs from latent dim"));
    }
    Ok((0..z.len())
        .map(|i| {
            if (z[i] - lo[i]).abs() <= (z[i] - up[i]).abs() + tol {
                Side::Low
            } else {
                Side::Up
            }
        })
        .collect())
}

fn corner_pair(prop: &RelationalProperty, bx: &InputBox, mask: u64) -> (Vec<f64>, Vec<f64>) {
    let m = bx.dim();
    let mut x1 = Vec::with_capacity(m);
    let mut x2 = Vec::with_capacity(m);
    for i in 0..m {
        let high = (mask >> (i % 64)) & 1 == 1;
        let (c, other) = if high {
            (bx.u[i], (bx.u[i] - prop.delta_high[i]).max(bx.l[i]))
        } else {
            (bx.l[i], (bx.l[i] - prop.delta_low[i]).min(bx.u[i]))
        };
        let other = if bx.is_binary(i) && other != 0.0 && other != 1.0 {
            c
        } else {
            other
        };
        x1.push(c);
        x2.push(other);
    }
    (x1, x2)
}

/// Moves `x1` into `cells[0]` and `x2` into `cells[1]`, rounds binary
/// coordinates, and pulls the difference back into the premise range by
/// adjusting `x2`.
fn repair(prop: &RelationalProperty, bx: &InputBox, cells: [&InputBox; 2], x1: &mut [f64], x2: &mut [f64]) {
    for i in 0..bx.dim() {
        let fix = |v: f64, c: &InputBox| {
            let v = if bx.is_binary(i) { v.round() } else { v };
            v.clamp(c.l[i], c.u[i])
        };
        x1[i] = fix(x1[i], cells[0]);
        x2[i] = fix(x2[i], cells[1]);
        let d = x1[i] - x2[i];
        if d < prop.delta_low[i] || d > prop.delta_high[i] {
            let target = d.clamp(prop.delta_low[i], prop.delta_high[i]);
            x2[i] = fix(x1[i] - target, cells[1]);
        }
    }
}

type Pair = (Vec<f64>, Vec<f64>);

/// Random pairs, equal pairs, and box corners that satisfy the premise.
fn seed_pairs(prop: &RelationalProperty, bx: &InputBox, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let mut out = Vec::new();
    for _ in 0..SEED_PAIRS {
        out.push(prop.sample_pair(bx, rng));
        let x = bx.sample(rng);
        out.push((x.clone(), x));
    }
    let corners = if bx.dim() < 6 { 1u64 << bx.dim() } else { SEED_CORNERS as u64 };
    for mask in 0..corners {
        let mask = if bx.dim() < 6 { mask } else { rng.gen() };
        let (x1, x2) = corner_pair(prop, bx, mask);
        out.push((x2.clone(), x1.clone()));
        out.push((x1, x2));
    }
    out.retain(|(a, b)| prop.pair_satisfies_q(a, b));
    out
}

/// Randomized coordinate hill climbing on the exact abstract violation.
/// Moves shift `x'`, `x''`, or both together, with a step that shrinks after
/// a run of failures.
fn climb(
    model: &SmileModel,
    prop: &RelationalProperty,
    bx: &InputBox,
    start: Pair,
    rng: &mut ChaCha8Rng,
) -> (f64, Pair) {
    let mut best_v = pair_violation(model, prop, &start.0, &start.1);
    let mut best = start;
    let mut scale = 0.1;
    let mut fails = 0;
    for _ in 0..CLIMB_ITERS {
        let i = rng.gen_range(0..bx.dim());
        let (mut x1, mut x2) = best.clone();
        let step = if bx.is_binary(i) {
            1.0
        } else {
            scale * (bx.u[i] - bx.l[i]) * rng.gen_range(-1.0..=1.0)
        };
        match rng.gen_range(0..3) {
            0 => x1[i] = if bx.is_binary(i) { 1.0 - x1[i] } else { x1[i] + step },
            1 => x2[i] = if bx.is_binary(i) { 1.0 - x2[i] } else { x2[i] + step },
            _ if !bx.is_binary(i) => {
                x1[i] += step;
                x2[i] += step;
            }
            _ => {}
        }
        repair(prop, bx, [bx, bx], &mut x1, &mut x2);
        let v = pair_violation(model, prop, &x1, &x2);
        if v > best_v && prop.pair_satisfies_q(&x1, &x2) {
            best_v = v;
            best = (x1, x2);
            fails = 0;
        } else {
            fails += 1;
            if fails >= 30 {
                scale = (scale * 0.5).max(1e-7);
                fails = 0;
            }
        }
    }
    (best_v, best)
}

/// Solver for the pairs with `x'` in `cells[0]` and `x''` in `cells[1]`,
/// with LP points rounded into premise-satisfying candidates.
fn cell_solver<'a>(
    model: &'a SmileModel,
    prop: &'a RelationalProperty,
    bx: &InputBox,
    cells: [InputBox; 2],
) -> Result<(BranchAndBound<'a>, GeneratorEncoding)> {
    let enc = encode_generator_on(model, prop, bx, [&cells[0], &cells[1]])?;
    let heur_enc = enc.clone();
    let full = bx.clone();
    let bnb = BranchAndBound::new(enc.problem.clone()).with_heuristic(Box::new(move |sol: &[f64]| {
        let (mut x1, mut x2) = heur_enc.inputs(sol);
        repair(prop, &full, [&cells[0], &cells[1]], &mut x1, &mut x2);
        if !prop.pair_satisfies_q(&x1, &x2) {
            return None;
        }
        heur_enc.assignment_for(model, prop, &x1, &x2)
    }));
    Ok((bnb, enc))
}

/// Builds the solver for `prop` over the whole box, seeded with sampled,
/// corner, and locally improved candidates.
pub fn prepare<'a>(
    model: &'a SmileModel,
    prop: &'a RelationalProperty,
    bx: &'a InputBox,
) -> Result<(BranchAndBound<'a>, GeneratorEncoding)> {
    let (mut bnb, enc) = cell_solver(model, prop, bx, [bx.clone(), bx.clone()])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut scored: Vec<(f64, Pair)> = seed_pairs(prop, bx, &mut rng)
        .into_iter()
        .map(|p| (pair_violation(model, prop, &p.0, &p.1), p))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(CLIMB_STARTS);
    for (_, start) in scored {
        let (_, (x1, x2)) = climb(model, prop, bx, start, &mut rng);
        if let Some(s) = enc.assignment_for(model, prop, &x1, &x2) {
            bnb.add_candidate(s);
        }
    }
    Ok((bnb, enc))
}

/// A region of the pair domain: `x'` in `boxes[0]`, `x''` in `boxes[1]`.
/// The solver is built on first visit.
struct Cell<'a> {
    boxes: [InputBox; 2],
    solver: Option<(BranchAndBound<'a>, GeneratorEncoding)>,
    bound: f64,
    work: u64,
    seen_work: u64,
    seen_nodes: u64,
}

impl Cell<'_> {
    fn new(boxes: [InputBox; 2], bound: f64) -> Self {
        Cell {
            boxes,
            solver: None,
            bound,
            work: 0,
            seen_work: 0,
            seen_nodes: 0,
        }
    }
}

/// Halves the cell along the input coordinate that is widest relative to the
/// full box; binary coordinates split into their two values.
fn split_cell(bx: &InputBox, boxes: &[InputBox; 2]) -> Option<[[InputBox; 2]; 2]> {
    let mut pick = None;
    let mut widest = MIN_SPLIT_WIDTH;
    for (k, c) in boxes.iter().enumerate() {
        for i in 0..bx.dim() {
            let full = bx.u[i] - bx.l[i];
            if full <= 0.0 {
                continue;
            }
            let rel = (c.u[i] - c.l[i]) / full;
            if rel > widest {
                widest = rel;
                pick = Some((k, i));
            }
        }
    }
    let (k, i) = pick?;
    let c = &boxes[k];
    let (left_hi, right_lo) = if bx.is_binary(i) {
        (0.0, 1.0)
    } else {
        let mid = 0.5 * (c.l[i] + c.u[i]);
        (mid, mid)
    };
    let mut a = boxes.clone();
    a[k].u[i] = left_hi;
    let mut b = boxes.clone();
    b[k].l[i] = right_lo;
    Some([a, b])
}

fn counterexample(
    model: &SmileModel,
    enc: &GeneratorEncoding,
    sol: &[f64],
    tol: f64,
) -> Result<Counterexample> {
    let (x1, x2) = enc.inputs(sol);
    let (z1, z2) = enc.embeddings(sol);
    Ok(Counterexample {
        pattern1: extract_pattern(model, &x1, &z1, tol)?,
        pattern2: extract_pattern(model, &x2, &z2, tol)?,
        gamma: sol[enc.gamma.0],
        x1,
        x2,
        z1,
        z2,
    })
}

/// Searches for the most violating pair, doubling the limit from `t0` until a
/// counterexample is found, infeasibility is proven, or `t_max` is exceeded.
///
/// The pair domain is explored as a set of cells, most promising bound first.
/// A cell whose search does not close within one work slice is bisected, so
/// the big-M constants of its children come from smaller boxes; cells whose
/// interval bounds rule out a violation are dropped without solving.
pub fn generate(
    model: &SmileModel,
    prop: &RelationalProperty,
    bx: &InputBox,
    cfg: GeneratorConfig,
) -> Result<GeneratorResult> {
    let mut root = Cell::new([bx.clone(), bx.clone()], f64::INFINITY);
    root.solver = Some(prepare(model, prop, bx)?);
    let mut open = vec![root];
    let mut best: Option<(f64, Counterexample)> = None;
    let (mut nodes, mut work) = (0u64, 0u64);
    let mut snapshots = Vec::new();
    let mut t = cfg.t0;
    let (status, dual_bound) = loop {
        let mut budget = Limit::Seconds(t).budget();
        while budget > 0 {
            let inc = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
            open.retain(|c| c.bound > inc + GAP_TOL);
            let Some(idx) = (0..open.len()).max_by(|&a, &b| open[a].bound.total_cmp(&open[b].bound)) else {
                break;
            };
            let mut cell = open.swap_remove(idx);
            if cell.solver.is_none() {
                cell.solver = Some(cell_solver(model, prop, bx, cell.boxes.clone())?);
            }
            let (bnb, enc) = cell.solver.as_mut().expect("solver built above");
            let out = bnb.solve(Limit::Work(budget.min(CELL_SLICE)));
            let spent = out.work.saturating_sub(cell.seen_work);
            cell.seen_work = out.work;
            cell.work += spent;
            nodes += out.nodes.saturating_sub(cell.seen_nodes);
            cell.seen_nodes = out.nodes;
            work += spent;
            budget = budget.saturating_sub(spent.max(1));
            if let (Some(sol), Some(obj)) = (&out.incumbent, out.incumbent_objective) {
                if obj > inc && sol[enc.gamma.0] >= GAMMA_MIN {
                    best = Some((obj, counterexample(model, enc, sol, cfg.pattern_tol)?));
                }
            }
            if matches!(out.status, MilpStatus::Optimal | MilpStatus::Infeasible) {
                continue;
            }
            cell.bound = out.dual_bound;
            if cell.work >= CELL_SLICE && open.len() < MAX_CELLS {
                if let Some(children) = split_cell(bx, &cell.boxes) {
                    for boxes in children {
                        if cell_may_violate(model, prop, [&boxes[0], &boxes[1]]) {
                            open.push(Cell::new(boxes, cell.bound));
                        }
                    }
                    continue;
                }
            }
            open.push(cell);
        }
        let inc = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
        open.retain(|c| c.bound > inc + GAP_TOL);
        let open_bound = open.iter().map(|c| c.bound).fold(f64::NEG_INFINITY, f64::max);
        let status = match (open.is_empty(), best.is_some()) {
            (true, true) => MilpStatus::Optimal,
            (true, false) => MilpStatus::Infeasible,
            (false, true) => MilpStatus::FeasibleTimeout,
            (false, false) => MilpStatus::UnknownTimeout,
        };
        let dual_bound = open_bound.max(inc);
        snapshots.push(Snapshot {
            limit: t,
            status,
            incumbent: best.as_ref().map(|b| b.0),
            dual_bound,
        });
        let done = match status {
            MilpStatus::Optimal | MilpStatus::Infeasible => true,
            MilpStatus::FeasibleTimeout => !cfg.to_optimality,
            MilpStatus::UnknownTimeout => false,
        };
        if done || 2.0 * t > cfg.t_max {
            break (status, dual_bound);
        }
        t *= 2.0;
    };
    let counterexample = best.map(|b| b.1);
    Ok(GeneratorResult {
        outcome: MilpOutcome {
            status,
            incumbent: None,
            incumbent_objective: counterexample.as_ref().map(|c| c.gamma),
            dual_bound,
            nodes,
            work,
        },
        counterexample,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::encode::tests::hand_model;
    use crate::smile::LinearHead;

    #[test]
    fn hand_model_optimum() {
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 1.0, 0.5).unwrap();
        let res = generate(
            &hand_model(),
            &prop,
            &bx,
            GeneratorConfig {
                to_optimality: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(res.status(), MilpStatus::Optimal);
        let ce = res.counterexample.unwrap();
        assert!((ce.gamma - 1.5).abs() < 1e-6);
        // the optimum is symmetric in the pair order
        let (xh, zh, ph, xl, zl, pl) = if ce.x1[0] > ce.x2[0] {
            (ce.x1[0], ce.z1[0], &ce.pattern1, ce.x2[0], ce.z2[0], &ce.pattern2)
        } else {
            (ce.x2[0], ce.z2[0], &ce.pattern2, ce.x1[0], ce.z1[0], &ce.pattern1)
        };
        assert!((xh - 1.0).abs() < 1e-6 && xl.abs() < 1e-6);
        assert!((zh - 2.0).abs() < 1e-6 && zl.abs() < 1e-6);
        assert_eq!(ph, &vec![Side::Up]);
        assert_eq!(pl, &vec![Side::Low]);
    }

    #[test]
    fn constant_head_is_infeasible() {
        let m = hand_model();
        let model = SmileModel::new(
            m.backbone().clone(),
            m.aux_low().clone(),
            m.aux_up().clone(),
            LinearHead::new(vec![0.0], 0.3).unwrap(),
        )
        .unwrap();
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 0.2, 0.1).unwrap();
        let res = generate(&model, &prop, &bx, GeneratorConfig::default()).unwrap();
        assert_eq!(res.status(), MilpStatus::Infeasible);
        assert!(res.counterexample.is_none());
        assert_eq!(res.viol_bound(), 0.0);
    }

    #[test]
    fn tiny_limit_gives_valid_bound() {
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 1.0, 0.5).unwrap();
        let model = hand_model();
        let (mut bnb, _) = prepare(&model, &prop, &bx).unwrap();
        let out = bnb.solve(Limit::Work(0));
        assert!(out.dual_bound.is_finite());
        assert!(out.dual_bound >= 1.5 - 1e-6);
    }
}
