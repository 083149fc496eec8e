use crate::property::InputBox;
use crate::smile::{Activation, Mlp};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Bounds on one layer's neurons before and after the activation.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerBounds {
    pub pre: Vec<Interval>,
    pub post: Vec<Interval>,
}

/// Sound interval propagation of `bx` through every layer of `mlp`.
pub fn interval_bounds(mlp: &Mlp, bx: &InputBox) -> Vec<LayerBounds> {
    let mut cur: Vec<Interval> = bx
        .l
        .iter()
        .zip(&bx.u)
        .map(|(&l, &u)| Interval::new(l, u))
        .collect();
    let mut out = Vec::with_capacity(mlp.layers().len());
    for layer in mlp.layers() {
        let pre = affine_interval(layer.w.as_slice(), layer.bias(), &cur);
        let post = match layer.act {
            Activation::Relu => pre
                .iter()
                .map(|iv| Interval::new(iv.lo.max(0.0), iv.hi.max(0.0)))
                .collect(),
            Activation::Identity => pre.clone(),
        };
        cur = post.clone();
        out.push(LayerBounds { pre, post });
    }
    out
}

/// Output range of `mlp` over `bx`.
pub fn output_bounds(mlp: &Mlp, bx: &InputBox) -> Vec<Interval> {
    interval_bounds(mlp, bx)
        .pop()
        .map(|b| b.post)
        .unwrap_or_default()
}

/// Interval image of `W x + b` with `W` row-major, one row per output.
pub fn affine_interval(w: &[f64], b: &[f64], x: &[Interval]) -> Vec<Interval> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            let (mut lo, mut hi) = (bias, bias);
            for (a, iv) in w[r * cols..(r + 1) * cols].iter().zip(x) {
                if *a >= 0.0 {
                    lo += a * iv.lo;
                    hi += a * iv.hi;
                } else {
                    lo += a * iv.hi;
                    hi += a * iv.lo;
                }
            }
            Interval::new(lo, hi)
        })
        .collect()
}
