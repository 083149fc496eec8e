//! Mixed-integer encoding of the search for the most violating input pair.
//!
//! Only the auxiliaries and the head are encoded; the backbone can place the
//! embedding anywhere, so each embedding coordinate ranges over the clip image
//! `[lo, max(lo, up)]` of the auxiliary outputs.

use super::interval::{affine_interval, interval_bounds, output_bounds, Interval};
use super::problem::{MilpProblem, Sense, VarId, VarKind};
use crate::error::{Error, Result};
use crate::numcore::relu_scalar;
use crate::property::{InputBox, RelationalProperty};
use crate::smile::{Activation, Side, SmileModel};

/// Smallest violation the encoding searches for.
pub const GAMMA_MIN: f64 = 1e-6;

const M_SLACK: f64 = 1.1;
const M_PAD: f64 = 1e-6;

fn big_m(tight: f64) -> f64 {
    tight.max(0.0) * M_SLACK + M_PAD
}

fn pad(iv: Interval) -> Interval {
    Interval::new(
        iv.lo - 1e-9 * (1.0 + iv.lo.abs()),
        iv.hi + 1e-9 * (1.0 + iv.hi.abs()),
    )
}

#[derive(Clone, Debug, Default)]
struct LinExpr {
    terms: Vec<(VarId, f64)>,
    constant: f64,
}

impl LinExpr {
    fn scaled_into(&self, c: f64, out: &mut LinExpr) {
        out.terms.extend(self.terms.iter().map(|(v, a)| (*v, a * c)));
        out.constant += self.constant * c;
    }
}

/// Binary-activated hidden neuron of a ReLU auxiliary.
#[derive(Clone, Copy, Debug)]
struct ReluVar {
    pair: usize,
    side: Side,
    layer: usize,
    neuron: usize,
    a: VarId,
    s: VarId,
}

/// The encoded problem plus the handles needed to read solutions back.
#[derive(Clone, Debug)]
pub struct GeneratorEncoding {
    pub problem: MilpProblem,
    /// `x[0]` is `x'`, `x[1]` is `x''`; likewise for the other pairs.
    pub x: [Vec<VarId>; 2],
    pub z: [Vec<VarId>; 2],
    pub t: [Vec<VarId>; 2],
    pub y: [VarId; 2],
    pub b: VarId,
    pub gamma: VarId,
    relu: Vec<ReluVar>,
    latent_bounds: Vec<Interval>,
}

/// Interval range of `g` over every embedding the clip can produce on `bx`.
pub fn head_range(model: &SmileModel, bx: &InputBox) -> Interval {
    let zb = latent_bounds(model, bx);
    let h = model.head();
    affine_interval(h.weights(), &[h.bias()], &zb)[0]
}

/// Default relaxation constant for monotonicity: twice the head's output range plus one.
pub fn monotonicity_big_m(model: &SmileModel, bx: &InputBox) -> f64 {
    2.0 * head_range(model, bx).width() + 1.0
}

fn latent_bounds(model: &SmileModel, bx: &InputBox) -> Vec<Interval> {
    let lo = output_bounds(model.aux_low(), bx);
    let up = output_bounds(model.aux_up(), bx);
    lo.iter()
        .zip(&up)
        .map(|(l, u)| pad(Interval::new(l.lo, l.hi.max(u.hi))))
        .collect()
}

/// Builds the maximum-violation problem for `prop` over `bx`.
pub fn encode_generator(
    model: &SmileModel,
    prop: &RelationalProperty,
    bx: &InputBox,
) -> Result<GeneratorEncoding> {
    encode_generator_on(model, prop, bx, [bx, bx])
}

/// Range of `x' − x''` per coordinate when the inputs are confined to `cells`.
fn diff_range(cells: [&InputBox; 2], i: usize) -> (f64, f64) {
    (cells[0].l[i] - cells[1].u[i], cells[0].u[i] - cells[1].l[i])
}

/// Interval bounds on the clip images of `x` ranging over `cell`.
fn cell_latent_bounds(model: &SmileModel, cell: &InputBox) -> (Vec<Interval>, Vec<Interval>, Vec<Interval>) {
    let lo = output_bounds(model.aux_low(), cell);
    let up = output_bounds(model.aux_up(), cell);
    let zb = lo
        .iter()
        .zip(&up)
        .map(|(l, u)| pad(Interval::new(l.lo, l.hi.max(u.hi))))
        .collect();
    (lo, up, zb)
}

/// Cheap necessary condition for a violating pair with `x'` in `cells[0]`
/// and `x''` in `cells[1]`: the premise must be satisfiable there and the
/// interval range of `y' − y''` must reach past a tolerance band.
pub fn cell_may_violate(model: &SmileModel, prop: &RelationalProperty, cells: [&InputBox; 2]) -> bool {
    for i in 0..prop.dim() {
        let (lo, hi) = diff_range(cells, i);
        if lo > prop.delta_high[i] + 1e-12 || hi < prop.delta_low[i] - 1e-12 {
            return false;
        }
    }
    let head = model.head();
    let yb: Vec<Interval> = cells
        .iter()
        .map(|c| affine_interval(head.weights(), &[head.bias()], &cell_latent_bounds(model, c).2)[0])
        .collect();
    let (d_min, d_max) = (yb[0].lo - yb[1].hi, yb[0].hi - yb[1].lo);
    prop.eps_low - d_min >= GAMMA_MIN || d_max - prop.eps_high >= GAMMA_MIN
}

/// As [`encode_generator`], with `x'` restricted to `cells[0]` and `x''` to
/// `cells[1]`, both inside `bx`. Big-M constants come from the cell boxes.
pub fn encode_generator_on(
    model: &SmileModel,
    prop: &RelationalProperty,
    bx: &InputBox,
    cells: [&InputBox; 2],
) -> Result<GeneratorEncoding> {
    let m = model.input_dim();
    let n = model.latent_dim();
    bx.validate_dim(m)?;
    prop.validate(bx)?;
    for c in cells {
        c.validate_dim(m)?;
    }
    for side in [Side::Low, Side::Up] {
        if model.aux(side).aux_family().is_none() {
            return Err(Error::Unsupported(format!(
                "{side:?} auxiliary must be affine or have one hidden ReLU layer"
            )));
        }
    }

    let mut p = MilpProblem::new();
    let names = ["p", "q"];

    let mut x: [Vec<VarId>; 2] = [Vec::new(), Vec::new()];
    for (k, xs) in x.iter_mut().enumerate() {
        for i in 0..m {
            let kind = if bx.is_binary(i) {
                VarKind::Binary
            } else {
                VarKind::Continuous
            };
            xs.push(p.add_var(format!("x{}_{i}", names[k]), cells[k].l[i], cells[k].u[i], kind));
        }
    }

    for i in 0..m {
        let (dl, dh) = (prop.delta_low[i], prop.delta_high[i]);
        let diff = [(x[0][i], 1.0), (x[1][i], -1.0)];
        if dl == dh {
            p.add_constraint(format!("q_eq_{i}"), diff, Sense::Eq, dl);
            continue;
        }
        let (lo, hi) = diff_range(cells, i);
        if dl > lo {
            p.add_constraint(format!("q_lo_{i}"), diff, Sense::Ge, dl);
        }
        if dh < hi {
            p.add_constraint(format!("q_hi_{i}"), diff, Sense::Le, dh);
        }
    }

    // auxiliary outputs as linear expressions in x and hidden activations
    let mut relu = Vec::new();
    let mut aux_out: [[Vec<LinExpr>; 2]; 2] = Default::default();
    for side in [Side::Low, Side::Up] {
        let mlp = model.aux(side);
        for k in 0..2 {
            let bounds = interval_bounds(mlp, cells[k]);
            let mut cur: Vec<LinExpr> = x[k]
                .iter()
                .map(|&v| LinExpr {
                    terms: vec![(v, 1.0)],
                    constant: 0.0,
                })
                .collect();
            for (li, layer) in mlp.layers().iter().enumerate() {
                let cols = layer.inputs();
                let w = layer.w.as_slice();
                let mut next = Vec::with_capacity(layer.outputs());
                for j in 0..layer.outputs() {
                    let mut pre = LinExpr {
                        terms: Vec::new(),
                        constant: layer.bias()[j],
                    };
                    for c in 0..cols {
                        if w[j * cols + c] != 0.0 {
                            cur[c].scaled_into(w[j * cols + c], &mut pre);
                        }
                    }
                    if layer.act == Activation::Identity {
                        next.push(pre);
                        continue;
                    }
                    let iv = pad(bounds[li].pre[j]);
                    if iv.hi <= 0.0 {
                        next.push(LinExpr::default());
                    } else if iv.lo >= 0.0 {
                        next.push(pre);
                    } else {
                        let tag = format!("{}{}_{li}_{j}_{}", side_tag(side), "h", names[k]);
                        let a = p.add_var(format!("a{tag}"), 0.0, iv.hi, VarKind::Continuous);
                        let s = p.add_binary(format!("s{tag}"));
                        // a ≥ pre
                        let mut row: Vec<(VarId, f64)> = vec![(a, 1.0)];
                        row.extend(pre.terms.iter().map(|(v, c)| (*v, -c)));
                        p.add_constraint(format!("relu_ge{tag}"), row.clone(), Sense::Ge, pre.constant);
                        // a ≤ pre − L(1 − s)
                        let mut row2 = row;
                        row2.push((s, -iv.lo));
                        p.add_constraint(
                            format!("relu_le{tag}"),
                            row2,
                            Sense::Le,
                            pre.constant - iv.lo,
                        );
                        // a ≤ U s
                        p.add_constraint(format!("relu_on{tag}"), [(a, 1.0), (s, -iv.hi)], Sense::Le, 0.0);
                        relu.push(ReluVar {
                            pair: k,
                            side,
                            layer: li,
                            neuron: j,
                            a,
                            s,
                        });
                        next.push(LinExpr {
                            terms: vec![(a, 1.0)],
                            constant: 0.0,
                        });
                    }
                }
                cur = next;
            }
            aux_out[side as usize][k] = cur;
        }
    }

    // clip linearization
    let bounds = [cell_latent_bounds(model, cells[0]), cell_latent_bounds(model, cells[1])];
    let mut z: [Vec<VarId>; 2] = [Vec::new(), Vec::new()];
    let mut t: [Vec<VarId>; 2] = [Vec::new(), Vec::new()];
    for k in 0..2 {
        let (lo_b, up_b, zb) = &bounds[k];
        for i in 0..n {
            let zi = p.add_var(format!("z{}_{i}", names[k]), zb[i].lo, zb[i].hi, VarKind::Continuous);
            let ti = p.add_binary(format!("t{}_{i}", names[k]));
            let m1 = big_m(up_b[i].hi - lo_b[i].lo);
            let m2 = big_m(lo_b[i].hi - up_b[i].lo);
            let lo = &aux_out[Side::Low as usize][k][i];
            let up = &aux_out[Side::Up as usize][k][i];
            let minus = |e: &LinExpr| -> Vec<(VarId, f64)> {
                let mut r = vec![(zi, 1.0)];
                r.extend(e.terms.iter().map(|(v, c)| (*v, -c)));
                r
            };
            // ẑ ≥ lo
            p.add_constraint(format!("clip_lo{}_{i}", names[k]), minus(lo), Sense::Ge, lo.constant);
            // ẑ ≤ lo + M1 (1 − t)
            let mut r = minus(lo);
            r.push((ti, m1));
            p.add_constraint(format!("clip_at_lo{}_{i}", names[k]), r, Sense::Le, lo.constant + m1);
            // ẑ ≤ up + M2 t
            let mut r = minus(up);
            r.push((ti, -m2));
            p.add_constraint(format!("clip_up{}_{i}", names[k]), r, Sense::Le, up.constant);
            z[k].push(zi);
            t[k].push(ti);
        }
    }

    // head
    let head = model.head();
    let yb: Vec<Interval> = bounds
        .iter()
        .map(|(_, _, zb)| pad(affine_interval(head.weights(), &[head.bias()], zb)[0]))
        .collect();
    let mut y = [VarId(0); 2];
    for k in 0..2 {
        y[k] = p.add_var(format!("y{}", names[k]), yb[k].lo, yb[k].hi, VarKind::Continuous);
        let mut row = vec![(y[k], 1.0)];
        row.extend(z[k].iter().zip(head.weights()).map(|(v, w)| (*v, -w)));
        p.add_constraint(format!("head{}", names[k]), row, Sense::Eq, head.bias());
    }

    // violation
    let (el, eh) = (prop.eps_low, prop.eps_high);
    let (d_min, d_max) = (yb[0].lo - yb[1].hi, yb[0].hi - yb[1].lo);
    let gamma_max = (el - d_min).max(d_max - eh).max(GAMMA_MIN);
    let gamma = p.add_var("gamma", GAMMA_MIN, gamma_max, VarKind::Continuous);
    let b = p.add_binary("b");
    let mb1 = big_m(el + eh - 2.0 * d_min);
    let mb2 = big_m(2.0 * d_max - el - eh);
    // γ ≤ y' − y'' − ε̄ + M b
    p.add_constraint(
        "viol_hi",
        [(gamma, 1.0), (y[0], -1.0), (y[1], 1.0), (b, -mb1)],
        Sense::Le,
        -eh,
    );
    // γ ≤ −y' + y'' + ε̲ + M (1 − b)
    p.add_constraint(
        "viol_lo",
        [(gamma, 1.0), (y[0], 1.0), (y[1], -1.0), (b, mb2)],
        Sense::Le,
        el + mb2,
    );
    // a side that cannot reach γ_min within the output range is ruled out
    if el - d_min < GAMMA_MIN {
        p.set_var_bounds(b, 0.0, 0.0);
    } else if d_max - eh < GAMMA_MIN {
        p.set_var_bounds(b, 1.0, 1.0);
    }
    p.set_objective([(gamma, 1.0)]);
    p.validate()?;

    Ok(GeneratorEncoding {
        problem: p,
        x,
        z,
        t,
        y,
        b,
        gamma,
        relu,
        latent_bounds: bounds[0]
            .2
            .iter()
            .zip(&bounds[1].2)
            .map(|(a, b)| Interval::new(a.lo.min(b.lo), a.hi.max(b.hi)))
            .collect(),
    })
}

fn side_tag(s: Side) -> &'static str {
    match s {
        Side::Low => "l",
        Side::Up => "u",
    }
}

/// Per-layer post-activation values and pre-activations of an auxiliary.
fn trace_mlp(model: &SmileModel, side: Side, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pres = Vec::new();
    let mut cur = x.to_vec();
    for layer in model.aux(side).layers() {
        let pre = crate::numcore::affine_unchecked(&layer.w, layer.bias(), &cur);
        cur = match layer.act {
            Activation::Relu => pre.iter().map(|v| relu_scalar(*v)).collect(),
            Activation::Identity => pre.clone(),
        };
        pres.push(pre);
    }
    (pres, cur)
}

/// Face choice per coordinate that maximizes the violation for fixed inputs,
/// given each input's `(lower, effective upper)` faces. Flipped boxes collapse
/// to the lower face.
fn worst_faces(
    model: &SmileModel,
    prop: &RelationalProperty,
    f1: (Vec<f64>, Vec<f64>),
    f2: (Vec<f64>, Vec<f64>),
) -> (f64, Vec<f64>, Vec<f64>) {
    let w = model.head().weights();
    let pick = |f: &(Vec<f64>, Vec<f64>), widen: bool| -> Vec<f64> {
        (0..w.len())
            .map(|i| {
                let (a, b) = (f.0[i], f.1[i]);
                if (w[i] * b > w[i] * a) == widen {
                    b
                } else {
                    a
                }
            })
            .collect()
    };
    let mut best = (f64::NEG_INFINITY, Vec::new(), Vec::new());
    for up_dir in [true, false] {
        let z1 = pick(&f1, up_dir);
        let z2 = pick(&f2, !up_dir);
        let v = prop.violation(model.head().apply(&z1), model.head().apply(&z2));
        if v > best.0 {
            best = (v, z1, z2);
        }
    }
    best
}

/// Largest violation the abstraction admits for the input pair `(x1, x2)`,
/// over every embedding pair inside the two clip boxes.
pub fn pair_violation(model: &SmileModel, prop: &RelationalProperty, x1: &[f64], x2: &[f64]) -> f64 {
    let faces = |x: &[f64]| {
        let lo = model.aux_low().forward(x);
        let up = model.aux_up().forward(x);
        let eff = lo.iter().zip(&up).map(|(l, u)| l.max(*u)).collect();
        (lo, eff)
    };
    worst_faces(model, prop, faces(x1), faces(x2)).0
}

impl GeneratorEncoding {
    pub fn latent_bounds(&self) -> &[Interval] {
        &self.latent_bounds
    }

    /// Reads `(x', x'')` from a solution vector.
    pub fn inputs(&self, sol: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let get = |vs: &[VarId]| vs.iter().map(|v| sol[v.0]).collect();
        (get(&self.x[0]), get(&self.x[1]))
    }

    pub fn embeddings(&self, sol: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let get = |vs: &[VarId]| vs.iter().map(|v| sol[v.0]).collect();
        (get(&self.z[0]), get(&self.z[1]))
    }

    /// The best complete assignment with inputs fixed at `(x1, x2)`: each
    /// embedding coordinate goes to the clip face that most widens the output
    /// gap in the more violating direction. `None` when the pair does not
    /// violate by at least [`GAMMA_MIN`] or the assignment is infeasible.
    pub fn assignment_for(
        &self,
        model: &SmileModel,
        prop: &RelationalProperty,
        x1: &[f64],
        x2: &[f64],
    ) -> Option<Vec<f64>> {
        let xs = [x1, x2];
        let mut sol = vec![0.0; self.problem.num_vars()];
        let mut traces: [[(Vec<Vec<f64>>, Vec<f64>); 2]; 2] = Default::default();
        for k in 0..2 {
            for (xv, &val) in self.x[k].iter().zip(xs[k]) {
                sol[xv.0] = val;
            }
            for side in [Side::Low, Side::Up] {
                traces[side as usize][k] = trace_mlp(model, side, xs[k]);
            }
        }
        for r in &self.relu {
            let pre = traces[r.side as usize][r.pair].0[r.layer][r.neuron];
            sol[r.a.0] = relu_scalar(pre);
            sol[r.s.0] = if pre > 0.0 { 1.0 } else { 0.0 };
        }
        let faces = |k: usize| {
            let lo = &traces[Side::Low as usize][k].1;
            let up = &traces[Side::Up as usize][k].1;
            (lo.clone(), lo.iter().zip(up).map(|(l, u)| l.max(*u)).collect::<Vec<_>>())
        };
        let (v, z1, z2) = worst_faces(model, prop, faces(0), faces(1));
        if v < GAMMA_MIN {
            return None;
        }
        let zs = [z1, z2];
        let mut ys = [0.0; 2];
        for k in 0..2 {
            for i in 0..zs[k].len() {
                sol[self.z[k][i].0] = zs[k][i];
                let lo = traces[Side::Low as usize][k].1[i];
                sol[self.t[k][i].0] = if zs[k][i] == lo { 1.0 } else { 0.0 };
            }
            ys[k] = model.head().apply(&zs[k]);
            sol[self.y[k].0] = ys[k];
        }
        let d = ys[0] - ys[1];
        sol[self.b.0] = if d - prop.eps_high >= prop.eps_low - d {
            0.0
        } else {
            1.0
        };
        sol[self.gamma.0] = v;
        (self.problem.max_violation(&sol) <= 1e-6).then_some(sol)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numcore::Mat;
    use crate::smile::{Layer, LinearHead, Mlp};

    pub(crate) fn scalar_affine(w: f64, b: f64) -> Mlp {
        Mlp::new(vec![Layer::new(Mat::scalar(w), vec![b], Activation::Identity).unwrap()]).unwrap()
    }

    pub(crate) fn hand_model() -> SmileModel {
        SmileModel::new(
            scalar_affine(2.0, 0.0),
            scalar_affine(1.0, 0.0),
            scalar_affine(1.0, 1.0),
            LinearHead::new(vec![1.0], 0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn counts_for_scalar_affine_model() {
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 0.5, 0.5).unwrap();
        let enc = encode_generator(&hand_model(), &prop, &bx).unwrap();
        let p = &enc.problem;
        assert_eq!(p.num_continuous(), 7);
        assert_eq!(p.num_binaries(), 3);
        // Q 2, clip 6, head 2, violation 2
        assert_eq!(p.num_constraints(), 12);
    }

    #[test]
    fn hand_model_assignment_reaches_known_optimum() {
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 1.0, 0.5).unwrap();
        let model = hand_model();
        let enc = encode_generator(&model, &prop, &bx).unwrap();
        let sol = enc.assignment_for(&model, &prop, &[1.0], &[0.0]).unwrap();
        assert!((sol[enc.gamma.0] - 1.5).abs() < 1e-12);
        assert_eq!(enc.embeddings(&sol), (vec![2.0], vec![0.0]));
    }

    #[test]
    fn lp_text_dump_names_every_variable() {
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 1.0, 0.5).unwrap();
        let enc = encode_generator(&hand_model(), &prop, &bx).unwrap();
        let text = enc.problem.to_lp_text();
        for v in ["xp_0", "xq_0", "zp_0", "tq_0", "gamma", "b"] {
            assert!(text.contains(v), "{v}");
        }
    }

    #[test]
    fn monotonicity_big_m_from_head_range() {
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        // latent range [0, 2], g = id → range width 2 → M = 5
        assert!((monotonicity_big_m(&hand_model(), &bx) - 5.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_deep_auxiliaries() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let model = SmileModel::new(
            Mlp::random(1, &[3], 1, &mut rng),
            Mlp::random(1, &[3, 3], 1, &mut rng),
            Mlp::random(1, &[], 1, &mut rng),
            LinearHead::new(vec![1.0], 0.0).unwrap(),
        );
        // construction itself refuses unsupported auxiliaries
        assert!(model.is_err());
    }
}
