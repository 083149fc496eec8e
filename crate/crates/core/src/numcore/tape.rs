//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Every operation is evaluated eagerly when pushed, so node values are always
//! available. Inputs of a node always have smaller ids than the node itself,
//! so walking the node list backwards is a reverse topological order.

use std::collections::BTreeMap;

use super::mat::{affine_batch, clip, relu_scalar, Mat};
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Identifies a trainable parameter tensor across tapes.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    /// `x · Wᵀ + b`, row-wise.
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Relu(NodeId),
    Clip {
        z: NodeId,
        lo: NodeId,
        up: NodeId,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId, f64),
    Max(NodeId, NodeId),
    Hinge(NodeId),
    /// Per-column choice between two equally shaped nodes.
    Select {
        low: NodeId,
        up: NodeId,
        take_up: Vec<bool>,
    },
    Sum(NodeId),
    Mean(NodeId),
    Mse {
        pred: NodeId,
        target: Mat,
    },
    BceLogits {
        pred: NodeId,
        target: Mat,
    },
    SqDist {
        a: NodeId,
        target: Mat,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Mat,
}

#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by parameter.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Mat>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn all_finite(&self) -> bool {
        self.by_param.values().all(Mat::is_finite)
    }
}

fn same_shape(a: &Mat, b: &Mat, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Mat::from_raw(a.rows(), a.cols(), data)
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.as_slice()[0]
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, id: ParamId, value: &Mat) -> NodeId {
        self.push(Op::Param(id), value.clone())
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows() {
            return Err(Error::dim(format!(
                "affine: x {:?}, W {:?}, b {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let out = affine_batch(xv, wv, bv);
        Ok(self.push(Op::Affine { x, w, b }, out))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(relu_scalar);
        self.push(Op::Relu(x), out)
    }

    pub fn clip(&mut self, z: NodeId, lo: NodeId, up: NodeId) -> Result<NodeId> {
        same_shape(self.value(z), self.value(lo), "clip")?;
        same_shape(self.value(z), self.value(up), "clip")?;
        let (zv, lv, uv) = (self.value(z), self.value(lo), self.value(up));
        let data = (0..zv.len())
            .map(|i| clip(zv.as_slice()[i], lv.as_slice()[i], uv.as_slice()[i]))
            .collect();
        let out = Mat::from_raw(zv.rows(), zv.cols(), data);
        Ok(self.push(Op::Clip { z, lo, up }, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape(self.value(a), self.value(b), "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).map(|v| v * c);
        self.push(Op::Scale(a, c), out)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).map(|v| v + c);
        self.push(Op::AddConst(a, c), out)
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape(self.value(a), self.value(b), "max")?;
        let out = zip_map(self.value(a), self.value(b), f64::max);
        Ok(self.push(Op::Max(a, b), out))
    }

    /// `max(0, a)`.
    pub fn hinge(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(relu_scalar);
        self.push(Op::Hinge(a), out)
    }

    pub fn select(&mut self, low: NodeId, up: NodeId, take_up: &[bool]) -> Result<NodeId> {
        same_shape(self.value(low), self.value(up), "select")?;
        let (lv, uv) = (self.value(low), self.value(up));
        if take_up.len() != lv.cols() {
            return Err(Error::dim(format!(
                "select: mask of {} for {} columns",
                take_up.len(),
                lv.cols()
            )));
        }
        let mut out = lv.clone();
        for r in 0..lv.rows() {
            for (c, &up_side) in take_up.iter().enumerate() {
                if up_side {
                    out.set(r, c, uv.get(r, c));
                }
            }
        }
        Ok(self.push(
            Op::Select {
                low,
                up,
                take_up: take_up.to_vec(),
            },
            out,
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).as_slice().iter().sum();
        self.push(Op::Sum(a), Mat::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s = v.as_slice().iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(Op::Mean(a), Mat::scalar(s))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: NodeId, target: &Mat) -> Result<NodeId> {
        same_shape(self.value(pred), target, "mse")?;
        let v = Self::mse_value(self.value(pred), target);
        Ok(self.push(
            Op::Mse {
                pred,
                target: target.clone(),
            },
            Mat::scalar(v),
        ))
    }

    /// Mean binary cross-entropy of logits against 0/1 targets.
    pub fn bce_logits(&mut self, pred: NodeId, target: &Mat) -> Result<NodeId> {
        same_shape(self.value(pred), target, "bce")?;
        let v = Self::bce_value(self.value(pred), target);
        Ok(self.push(
            Op::BceLogits {
                pred,
                target: target.clone(),
            },
            Mat::scalar(v),
        ))
    }

    /// `‖a − target‖²` (sum of squares).
    pub fn sq_dist(&mut self, a: NodeId, target: &Mat) -> Result<NodeId> {
        same_shape(self.value(a), target, "sq_dist")?;
        let v = zip_map(self.value(a), target, |x, y| (x - y) * (x - y))
            .as_slice()
            .iter()
            .sum();
        Ok(self.push(
            Op::SqDist {
                a,
                target: target.clone(),
            },
            Mat::scalar(v),
        ))
    }

    fn mse_value(pred: &Mat, target: &Mat) -> f64 {
        let n = pred.len().max(1) as f64;
        pred.as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n
    }

    fn bce_value(pred: &Mat, target: &Mat) -> f64 {
        let n = pred.len().max(1) as f64;
        pred.as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(&p, &t)| softplus(p) - t * p)
            .sum::<f64>()
            / n
    }

    fn eval(&self, op: &Op, fallback: &Mat) -> Mat {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        match op {
            Op::Constant | Op::Param(_) => fallback.clone(),
            Op::Affine { x, w, b } => affine_batch(v(x), v(w), v(b)),
            Op::Relu(a) | Op::Hinge(a) => v(a).map(relu_scalar),
            Op::Clip { z, lo, up } => {
                let (zv, lv, uv) = (v(z), v(lo), v(up));
                let data = (0..zv.len())
                    .map(|i| clip(zv.as_slice()[i], lv.as_slice()[i], uv.as_slice()[i]))
                    .collect();
                Mat::from_raw(zv.rows(), zv.cols(), data)
            }
            Op::Add(a, b) => zip_map(v(a), v(b), |x, y| x + y),
            Op::Sub(a, b) => zip_map(v(a), v(b), |x, y| x - y),
            Op::Scale(a, c) => v(a).map(|x| x * c),
            Op::AddConst(a, c) => v(a).map(|x| x + c),
            Op::Max(a, b) => zip_map(v(a), v(b), f64::max),
            Op::Select { low, up, take_up } => {
                let mut out = v(low).clone();
                for r in 0..out.rows() {
                    for (c, &u) in take_up.iter().enumerate() {
                        if u {
                            out.set(r, c, v(up).get(r, c));
                        }
                    }
                }
                out
            }
            Op::Sum(a) => Mat::scalar(v(a).as_slice().iter().sum()),
            Op::Mean(a) => {
                Mat::scalar(v(a).as_slice().iter().sum::<f64>() / v(a).len().max(1) as f64)
            }
            Op::Mse { pred, target } => Mat::scalar(Self::mse_value(v(pred), target)),
            Op::BceLogits { pred, target } => Mat::scalar(Self::bce_value(v(pred), target)),
            Op::SqDist { a, target } => Mat::scalar(
                zip_map(v(a), target, |x, y| (x - y) * (x - y))
                    .as_slice()
                    .iter()
                    .sum(),
            ),
        }
    }

    /// Re-evaluates every node from its recorded inputs and reports whether
    /// all values match the recorded ones bit for bit.
    pub fn replay_matches(&self) -> bool {
        self.nodes.iter().all(|node| {
            let again = self.eval(&node.op, &node.value);
            again
                .as_slice()
                .iter()
                .zip(node.value.as_slice())
                .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }

    /// Backpropagates from the scalar node `root`, scaled by `seed`.
    ///
    /// Every parameter recorded on the tape gets an entry, zero if it does not
    /// influence `root`.
    pub fn gradient(&self, root: NodeId, seed: f64) -> Result<Gradients> {
        if self.value(root).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "gradient root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut adj: Vec<Option<Mat>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Mat::scalar(seed));

        let mut grads = Gradients::default();
        for node in &self.nodes {
            if let Op::Param(pid) = node.op {
                let (r, c) = node.value.shape();
                grads.by_param.entry(pid).or_insert_with(|| Mat::zeros(r, c));
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    let acc = grads.by_param.get_mut(pid).expect("registered above");
                    for (a, d) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a += d;
                    }
                }
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (batch, p, q) = (xv.rows(), wv.rows(), wv.cols());
                    let mut dx = Mat::zeros(batch, q);
                    let mut dw = Mat::zeros(p, q);
                    let mut db = Mat::zeros(1, p);
                    for r in 0..batch {
                        let xr = xv.row(r);
                        for i in 0..p {
                            let gi = g.get(r, i);
                            if gi == 0.0 {
                                continue;
                            }
                            db.as_mut_slice()[i] += gi;
                            let wrow = wv.row(i);
                            let dxr = dx.row_mut(r);
                            for k in 0..q {
                                dxr[k] += gi * wrow[k];
                            }
                            let dwr = dw.row_mut(i);
                            for k in 0..q {
                                dwr[k] += gi * xr[k];
                            }
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                    accumulate(&mut adj, *b, db);
                }
                Op::Relu(a) | Op::Hinge(a) => {
                    let av = self.value(*a);
                    let d = zip_map(av, &g, |x, gi| if x > 0.0 { gi } else { 0.0 });
                    accumulate(&mut adj, *a, d);
                }
                Op::Clip { z, lo, up } => {
                    let (zv, lv, uv) = (self.value(*z), self.value(*lo), self.value(*up));
                    let n = zv.len();
                    let (mut dz, mut dl, mut du) = (
                        Mat::zeros(zv.rows(), zv.cols()),
                        Mat::zeros(zv.rows(), zv.cols()),
                        Mat::zeros(zv.rows(), zv.cols()),
                    );
                    for i in 0..n {
                        let (zi, li, ui, gi) = (
                            zv.as_slice()[i],
                            lv.as_slice()[i],
                            uv.as_slice()[i],
                            g.as_slice()[i],
                        );
                        if li > ui || zi < li {
                            dl.as_mut_slice()[i] = gi;
                        } else if zi > ui {
                            du.as_mut_slice()[i] = gi;
                        } else {
                            dz.as_mut_slice()[i] = gi;
                        }
                    }
                    accumulate(&mut adj, *z, dz);
                    accumulate(&mut adj, *lo, dl);
                    accumulate(&mut adj, *up, du);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|v| -v));
                    accumulate(&mut adj, *a, g);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.map(|v| v * c)),
                Op::AddConst(a, _) => accumulate(&mut adj, *a, g),
                Op::Max(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = Mat::zeros(av.rows(), av.cols());
                    let mut db = Mat::zeros(av.rows(), av.cols());
                    for i in 0..av.len() {
                        if av.as_slice()[i] >= bv.as_slice()[i] {
                            da.as_mut_slice()[i] = g.as_slice()[i];
                        } else {
                            db.as_mut_slice()[i] = g.as_slice()[i];
                        }
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Select { low, up, take_up } => {
                    let mut dl = g.clone();
                    let mut du = Mat::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        for (c, &u) in take_up.iter().enumerate() {
                            if u {
                                du.set(r, c, g.get(r, c));
                                dl.set(r, c, 0.0);
                            }
                        }
                    }
                    accumulate(&mut adj, *low, dl);
                    accumulate(&mut adj, *up, du);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Mat::filled(r, c, g.as_slice()[0]));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let n = (r * c).max(1) as f64;
                    accumulate(&mut adj, *a, Mat::filled(r, c, g.as_slice()[0] / n));
                }
                Op::Mse { pred, target } => {
                    let pv = self.value(*pred);
                    let k = 2.0 * g.as_slice()[0] / pv.len().max(1) as f64;
                    accumulate(&mut adj, *pred, zip_map(pv, target, |p, t| k * (p - t)));
                }
                Op::BceLogits { pred, target } => {
                    let pv = self.value(*pred);
                    let k = g.as_slice()[0] / pv.len().max(1) as f64;
                    accumulate(
                        &mut adj,
                        *pred,
                        zip_map(pv, target, |p, t| k * (sigmoid(p) - t)),
                    );
                }
                Op::SqDist { a, target } => {
                    let k = 2.0 * g.as_slice()[0];
                    accumulate(
                        &mut adj,
                        *a,
                        zip_map(self.value(*a), target, |x, t| k * (x - t)),
                    );
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Mat>], id: NodeId, g: Mat) {
    match &mut adj[id.0] {
        Some(acc) => {
            for (a, d) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
