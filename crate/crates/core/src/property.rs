//! Global two-input relational properties.
//!
//! A property pairs an input-difference box `δ_low ≤ x' − x'' ≤ δ_high` (the
//! premise) with an output-difference interval `ε_low ≤ f(x') − f(x'') ≤ ε_high`
//! (the conclusion). Robustness, individual fairness and monotonicity are all
//! instances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const Q_TOL: f64 = 1e-9;

/// The input domain: a product of intervals, some coordinates restricted to {0, 1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    /// Zero-based indices of binary coordinates.
    #[serde(default)]
    pub binary: Vec<usize>,
}

impl InputBox {
    pub fn new(l: Vec<f64>, u: Vec<f64>, binary: Vec<usize>) -> Result<Self> {
        if l.len() != u.len() {
            return Err(Error::dim(format!(
                "box bounds have {} and {} entries",
                l.len(),
                u.len()
            )));
        }
        for i in 0..l.len() {
            if !(l[i].is_finite() && u[i].is_finite()) || l[i] > u[i] {
                return Err(Error::InvalidProperty(format!(
                    "box coordinate {i} has bounds [{}, {}]",
                    l[i], u[i]
                )));
            }
        }
        let mut binary = binary;
        binary.sort_unstable();
        binary.dedup();
        for &i in &binary {
            if i >= l.len() || l[i] != 0.0 || u[i] != 1.0 {
                return Err(Error::InvalidProperty(format!(
                    "binary coordinate {i} must have bounds [0, 1]"
                )));
            }
        }
        Ok(InputBox { l, u, binary })
    }

    /// The box `[lo, hi]^m` without binary coordinates.
    pub fn uniform(m: usize, lo: f64, hi: f64) -> Result<Self> {
        InputBox::new(vec![lo; m], vec![hi; m], vec![])
    }

    pub fn dim(&self) -> usize {
        self.l.len()
    }

    pub fn is_binary(&self, i: usize) -> bool {
        self.binary.binary_search(&i).is_ok()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &v)| {
                v >= self.l[i] - tol
                    && v <= self.u[i] + tol
                    && (!self.is_binary(i) || v.abs() <= tol || (v - 1.0).abs() <= tol)
            })
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.l[i], self.u[i]);
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.sample_coord(i, self.l[i], self.u[i], rng))
            .collect()
    }

    pub(crate) fn sample_coord(&self, i: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
        if self.is_binary(i) {
            let options: Vec<f64> = [0.0, 1.0]
                .into_iter()
                .filter(|v| *v >= lo - Q_TOL && *v <= hi + Q_TOL)
                .collect();
            options[rng.gen_range(0..options.len())]
        } else if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    }

    pub fn validate_dim(&self, m: usize) -> Result<()> {
        if self.dim() != m {
            return Err(Error::dim(format!(
                "box has {} coordinates, model takes {m}",
                self.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Nondecreasing,
    Nonincreasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Robustness,
    Fairness,
    Monotonicity,
}

/// `δ_low ≤ x' − x'' ≤ δ_high  ⇒  ε_low ≤ f(x') − f(x'') ≤ ε_high`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelationalProperty {
    pub delta_low: Vec<f64>,
    pub delta_high: Vec<f64>,
    pub eps_low: f64,
    pub eps_high: f64,
}

impl RelationalProperty {
    pub fn new(
        bx: &InputBox,
        delta_low: Vec<f64>,
        delta_high: Vec<f64>,
        eps_low: f64,
        eps_high: f64,
    ) -> Result<Self> {
        let p = RelationalProperty {
            delta_low,
            delta_high,
            eps_low,
            eps_high,
        };
        p.validate(bx)?;
        Ok(p)
    }

    pub fn validate(&self, bx: &InputBox) -> Result<()> {
        let m = bx.dim();
        if self.delta_low.len() != m || self.delta_high.len() != m {
            return Err(Error::dim(format!(
                "property has {}/{} difference bounds for a {m}-dimensional box",
                self.delta_low.len(),
                self.delta_high.len()
            )));
        }
        if !(self.eps_low.is_finite() && self.eps_high.is_finite()) || self.eps_low > self.eps_high
        {
            return Err(Error::InvalidProperty(format!(
                "output interval [{}, {}] is empty",
                self.eps_low, self.eps_high
            )));
        }
        for i in 0..m {
            let (dl, dh) = (self.delta_low[i], self.delta_high[i]);
            if !(dl.is_finite() && dh.is_finite()) || dl > dh {
                return Err(Error::InvalidProperty(format!(
                    "difference interval [{dl}, {dh}] at coordinate {i} is empty"
                )));
            }
            if dl > 0.0 || dh < 0.0 {
                return Err(Error::InvalidProperty(format!(
                    "difference interval [{dl}, {dh}] at coordinate {i} excludes 0"
                )));
            }
            if dh < bx.l[i] - bx.u[i] || dl > bx.u[i] - bx.l[i] {
                return Err(Error::InvalidProperty(format!(
                    "no pair of box points has a difference in [{dl}, {dh}] at coordinate {i}"
                )));
            }
        }
        Ok(())
    }

    /// `‖x' − x''‖_∞ ≤ δ ⇒ |f(x') − f(x'')| ≤ ε`.
    pub fn robustness(bx: &InputBox, delta: f64, eps: f64) -> Result<Self> {
        if !(delta >= 0.0 && eps >= 0.0) {
            return Err(Error::InvalidProperty(format!(
                "robustness needs delta, eps >= 0 (got {delta}, {eps})"
            )));
        }
        let m = bx.dim();
        Self::new(bx, vec![-delta; m], vec![delta; m], -eps, eps)
    }

    /// Inputs that differ only on `protected` must have outputs within `eps`.
    pub fn fairness(bx: &InputBox, protected: &[usize], eps: f64) -> Result<Self> {
        if protected.is_empty() {
            return Err(Error::InvalidProperty(
                "fairness needs at least one protected feature".into(),
            ));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidProperty(format!("fairness needs eps >= 0, got {eps}")));
        }
        let (dl, dh) = Self::sensitive_range(bx, protected, true)?;
        Self::new(bx, dl, dh, -eps, eps)
    }

    /// Increasing (decreasing) the `monotone` features, all else equal, may not
    /// decrease (increase) the output. `big_m` relaxes the unbounded side.
    pub fn monotonicity(
        bx: &InputBox,
        monotone: &[usize],
        direction: Direction,
        big_m: f64,
    ) -> Result<Self> {
        if monotone.is_empty() {
            return Err(Error::InvalidProperty(
                "monotonicity needs at least one monotone feature".into(),
            ));
        }
        if !(big_m > 0.0) || !big_m.is_finite() {
            return Err(Error::InvalidProperty(format!(
                "monotonicity needs a positive finite M, got {big_m}"
            )));
        }
        let (dl, dh) = Self::sensitive_range(bx, monotone, false)?;
        let (el, eh) = match direction {
            Direction::Nondecreasing => (-big_m, 0.0),
            Direction::Nonincreasing => (0.0, big_m),
        };
        Self::new(bx, dl, dh, el, eh)
    }

    fn sensitive_range(
        bx: &InputBox,
        features: &[usize],
        symmetric: bool,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = bx.dim();
        let mut dl = vec![0.0; m];
        let mut dh = vec![0.0; m];
        for &i in features {
            if i >= m {
                return Err(Error::InvalidProperty(format!(
                    "feature index {i} out of range for {m} inputs"
                )));
            }
            dl[i] = bx.l[i] - bx.u[i];
            dh[i] = if symmetric { bx.u[i] - bx.l[i] } else { 0.0 };
        }
        Ok((dl, dh))
    }

    pub fn dim(&self) -> usize {
        self.delta_low.len()
    }

    /// Positive overshoot of `y' − y''` outside `[ε_low, ε_high]`, else 0.
    #[inline]
    pub fn violation(&self, y1: f64, y2: f64) -> f64 {
        (self.eps_low - y1 + y2).max(y1 - y2 - self.eps_high).max(0.0)
    }

    pub fn pair_satisfies_q(&self, x1: &[f64], x2: &[f64]) -> bool {
        x1.len() == self.dim()
            && x2.len() == self.dim()
            && (0..self.dim()).all(|i| {
                let d = x1[i] - x2[i];
                d >= self.delta_low[i] - Q_TOL && d <= self.delta_high[i] + Q_TOL
            })
    }

    /// Draws a random pair from the box that satisfies the premise.
    pub fn sample_pair(&self, bx: &InputBox, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let x2 = bx.sample(rng);
        let x1 = (0..bx.dim())
            .map(|i| {
                let lo = bx.l[i].max(x2[i] + self.delta_low[i]);
                let hi = bx.u[i].min(x2[i] + self.delta_high[i]);
                bx.sample_coord(i, lo, hi, rng)
            })
            .collect();
        (x1, x2)
    }
}

/// On-disk property description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PropertySpec {
    pub kind: PropertyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Zero-based feature indices (protected for fairness, monotone for monotonicity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Explicit relaxation constant for monotonicity; derived from the model when absent.
    #[serde(default, rename = "bigM", skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
}

impl PropertySpec {
    pub fn robustness(delta: f64, eps: f64) -> Self {
        PropertySpec {
            kind: PropertyKind::Robustness,
            delta: Some(delta),
            eps: Some(eps),
            protected: None,
            direction: None,
            big_m: None,
        }
    }

    pub fn fairness(protected: Vec<usize>, eps: f64) -> Self {
        PropertySpec {
            kind: PropertyKind::Fairness,
            delta: None,
            eps: Some(eps),
            protected: Some(protected),
            direction: None,
            big_m: None,
        }
    }

    pub fn monotonicity(monotone: Vec<usize>, direction: Direction) -> Self {
        PropertySpec {
            kind: PropertyKind::Monotonicity,
            delta: None,
            eps: None,
            protected: Some(monotone),
            direction: Some(direction),
            big_m: None,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Builds the concrete property on `bx`. `default_big_m` is used for
    /// monotonicity when the spec carries no explicit constant.
    pub fn resolve(&self, bx: &InputBox, default_big_m: Option<f64>) -> Result<RelationalProperty> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::InvalidProperty(format!("{:?} property needs `{name}`", self.kind)))
        };
        match self.kind {
            PropertyKind::Robustness => {
                RelationalProperty::robustness(bx, need(self.delta, "delta")?, need(self.eps, "eps")?)
            }
            PropertyKind::Fairness => RelationalProperty::fairness(
                bx,
                self.protected.as_deref().unwrap_or(&[]),
                need(self.eps, "eps")?,
            ),
            PropertyKind::Monotonicity => RelationalProperty::monotonicity(
                bx,
                self.protected.as_deref().unwrap_or(&[]),
                self.direction.unwrap_or(Direction::Nondecreasing),
                need(self.big_m.or(default_big_m), "bigM")?,
            ),
        }
    }
}
