use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{affine_unchecked, relu_scalar, Mat, NodeId, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "id")]
    Identity,
}

/// Dense layer `act(W x + b)` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: Mat,
    /// `1 × out`
    pub b: Mat,
    pub act: Activation,
}

impl Layer {
    pub fn new(w: Mat, b: Vec<f64>, act: Activation) -> Result<Self> {
        if b.len() != w.rows() {
            return Err(Error::dim(format!(
                "layer bias has {} entries for {} outputs",
                b.len(),
                w.rows()
            )));
        }
        let b = Mat::new(1, b.len(), b)?;
        Ok(Layer { w, b, act })
    }

    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    pub fn bias(&self) -> &[f64] {
        self.b.as_slice()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = affine_unchecked(&self.w, self.b.as_slice(), x);
        if self.act == Activation::Relu {
            y.iter_mut().for_each(|v| *v = relu_scalar(*v));
        }
        y
    }

    /// Uniform initialization: He scaling ahead of a ReLU, Xavier otherwise.
    fn random(inputs: usize, outputs: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let limit = match act {
            Activation::Relu => (6.0 / inputs as f64).sqrt(),
            Activation::Identity => (6.0 / (inputs + outputs) as f64).sqrt(),
        };
        let data = (0..inputs * outputs)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Layer {
            w: Mat::from_raw(outputs, inputs, data),
            b: Mat::zeros(1, outputs),
            act,
        }
    }
}

/// The two auxiliary shapes the counterexample encoder understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxFamily {
    Affine,
    OneHiddenRelu { hidden: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::dim(format!(
                    "layer with {} outputs feeds a layer with {} inputs",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        if layers.last().map(|l| l.act) != Some(Activation::Identity) {
            return Err(Error::Contract(
                "the final layer must be linear (identity activation)".into(),
            ));
        }
        Ok(Mlp { layers })
    }

    /// Randomly initialized network: `hidden` ReLU layers then a linear output.
    pub fn random(inputs: usize, hidden: &[usize], outputs: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = inputs;
        for &h in hidden {
            layers.push(Layer::random(fan_in, h, Activation::Relu, rng));
            fan_in = h;
        }
        layers.push(Layer::random(fan_in, outputs, Activation::Identity, rng));
        Mlp { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = self.layers[0].apply(x);
        for layer in &self.layers[1..] {
            cur = layer.apply(&cur);
        }
        cur
    }

    pub fn aux_family(&self) -> Option<AuxFamily> {
        match self.layers.as_slice() {
            [only] if only.act == Activation::Identity => Some(AuxFamily::Affine),
            [hidden, out] if hidden.act == Activation::Relu && out.act == Activation::Identity => {
                Some(AuxFamily::OneHiddenRelu {
                    hidden: hidden.outputs(),
                })
            }
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Records the network on `tape`; `params` holds (W, b) node pairs per layer.
    pub(crate) fn record(&self, tape: &mut Tape, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let mut cur = x;
        for (layer, p) in self.layers.iter().zip(params.chunks(2)) {
            cur = tape.affine(cur, p[0], p[1])?;
            if layer.act == Activation::Relu {
                cur = tape.relu(cur);
            }
        }
        Ok(cur)
    }
}
