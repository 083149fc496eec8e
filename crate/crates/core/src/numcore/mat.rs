use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Vectors are represented either as plain slices or as `1 × n` matrices when
/// they need to live on a [`Tape`](super::Tape).
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from external data, rejecting bad shapes and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry {pos} of {rows}x{cols} matrix is {}",
                data[pos]
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged rows"));
        }
        Mat::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    /// A single-row matrix holding `v`.
    pub fn row_vector(v: &[f64]) -> Self {
        Mat {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Mat {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    // Internal constructor for results of kernels, whose shapes are known to agree.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// The scalar held by a `1 × 1` matrix.
    pub fn item(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Selects the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Mat::from_raw(idx.len(), self.cols, data)
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `y = W x + b` for a single vector.
pub fn affine(w: &Mat, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::dim(format!(
            "affine: W is {}x{}, b has {}, x has {}",
            w.rows(),
            w.cols(),
            b.len(),
            x.len()
        )));
    }
    Ok(affine_unchecked(w, b, x))
}

#[inline]
pub(crate) fn affine_unchecked(w: &Mat, b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| dot_with_bias(w.row(i), x, b[i]))
        .collect()
}

#[inline]
pub(crate) fn dot_with_bias(w: &[f64], x: &[f64], bias: f64) -> f64 {
    let mut acc = bias;
    for (a, v) in w.iter().zip(x) {
        acc += a * v;
    }
    acc
}

/// Batched affine map: each row of `x` (batch × q) is mapped through `W` (p × q) plus `b` (1 × p).
pub(crate) fn affine_batch(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    let (batch, p) = (x.rows(), w.rows());
    let mut out = Vec::with_capacity(batch * p);
    for r in 0..batch {
        let xr = x.row(r);
        for i in 0..p {
            out.push(dot_with_bias(w.row(i), xr, b.as_slice()[i]));
        }
    }
    Mat::from_raw(batch, p, out)
}

#[inline]
pub fn relu_scalar(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| relu_scalar(v)).collect()
}

/// `max(l, min(u, z))`. Flipped bounds (`l > u`) collapse onto `l`.
#[inline]
pub fn clip(z: f64, l: f64, u: f64) -> f64 {
    l.max(u.min(z))
}
