use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, AuxFamily, Layer, Mlp};
use crate::error::{Error, Result};
use crate::numcore::{clip, dot_with_bias, Mat, NodeId, ParamId, Tape};
use crate::property::{InputBox, PropertySpec};

/// Linear output function `g(z) = w·z + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    w: Mat,
    b: Mat,
}

impl LinearHead {
    pub fn new(w: Vec<f64>, b: f64) -> Result<Self> {
        let n = w.len();
        Ok(LinearHead {
            w: Mat::new(1, n, w)?,
            b: Mat::new(1, 1, vec![b])?,
        })
    }

    pub fn weights(&self) -> &[f64] {
        self.w.as_slice()
    }

    pub fn bias(&self) -> f64 {
        self.b.as_slice()[0]
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    #[inline]
    pub fn apply(&self, z: &[f64]) -> f64 {
        dot_with_bias(self.w.as_slice(), z, self.bias())
    }
}

/// Which box face an embedding coordinate sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Low,
    Up,
}

/// Parameter groups of a model, in the order parameters are numbered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Backbone,
    AuxLow,
    AuxUp,
    Head,
}

/// Layer sizes for a freshly initialized model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Architecture {
    pub backbone_hidden: Vec<usize>,
    /// `None` gives affine auxiliaries, `Some(k)` one hidden ReLU layer of width `k`.
    pub aux_hidden: Option<usize>,
    pub latent_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            backbone_hidden: vec![32, 32],
            aux_hidden: None,
            latent_dim: 8,
        }
    }
}

/// Everything a forward pass computes.
#[derive(Clone, Debug, PartialEq)]
pub struct PathwayOutputs {
    pub z: Vec<f64>,
    pub z_low: Vec<f64>,
    pub z_up: Vec<f64>,
    pub z_clip: Vec<f64>,
    pub y_f: f64,
    pub y_low: f64,
    pub y_up: f64,
    pub y_h: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<PropertySpec>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub input_box: Option<InputBox>,
    #[serde(default)]
    pub viol_bound: Option<f64>,
}

/// Backbone `h`, auxiliaries `h_low`/`h_up`, clip, and linear head `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmileModel {
    input_dim: usize,
    latent_dim: usize,
    backbone: Mlp,
    aux_low: Mlp,
    aux_up: Mlp,
    head: LinearHead,
    pub meta: ModelMeta,
}

/// Parameter nodes of a model registered on a tape, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct TapeParams {
    nodes: Vec<NodeId>,
}

impl TapeParams {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }
}

impl SmileModel {
    pub fn new(backbone: Mlp, aux_low: Mlp, aux_up: Mlp, head: LinearHead) -> Result<Self> {
        let m = backbone.inputs();
        let n = backbone.outputs();
        for (name, aux) in [("auxLow", &aux_low), ("auxUp", &aux_up)] {
            if aux.inputs() != m || aux.outputs() != n {
                return Err(Error::dim(format!(
                    "{name} maps {}->{}, backbone maps {m}->{n}",
                    aux.inputs(),
                    aux.outputs()
                )));
            }
            if aux.aux_family().is_none() {
                return Err(Error::Unsupported(format!(
                    "{name} must be affine or have one hidden relu layer"
                )));
            }
        }
        if head.dim() != n {
            return Err(Error::dim(format!(
                "head expects {} latent features, backbone emits {n}",
                head.dim()
            )));
        }
        Ok(SmileModel {
            input_dim: m,
            latent_dim: n,
            backbone,
            aux_low,
            aux_up,
            head,
            meta: ModelMeta::default(),
        })
    }

    pub fn random(input_dim: usize, arch: &Architecture, rng: &mut impl Rng) -> Self {
        let n = arch.latent_dim;
        let aux_hidden: Vec<usize> = arch.aux_hidden.into_iter().collect();
        let backbone = Mlp::random(input_dim, &arch.backbone_hidden, n, rng);
        let aux_low = Mlp::random(input_dim, &aux_hidden, n, rng);
        let aux_up = Mlp::random(input_dim, &aux_hidden, n, rng);
        let limit = (6.0 / (n + 1) as f64).sqrt();
        let w = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        let head = LinearHead::new(w, 0.0).expect("finite initialization");
        SmileModel::new(backbone, aux_low, aux_up, head).expect("consistent architecture")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn backbone(&self) -> &Mlp {
        &self.backbone
    }

    pub fn aux_low(&self) -> &Mlp {
        &self.aux_low
    }

    pub fn aux_up(&self) -> &Mlp {
        &self.aux_up
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }

    pub fn aux(&self, side: Side) -> &Mlp {
        match side {
            Side::Low => &self.aux_low,
            Side::Up => &self.aux_up,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::dim(format!(
                "model takes {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<PathwayOutputs> {
        self.check_input(x)?;
        if let Some(bx) = &self.meta.input_box {
            debug_assert!(bx.contains(x, 1e-9), "input outside the model's box");
        }
        let z = self.backbone.forward(x);
        let z_low = self.aux_low.forward(x);
        let z_up = self.aux_up.forward(x);
        let z_clip: Vec<f64> = (0..self.latent_dim)
            .map(|i| clip(z[i], z_low[i], z_up[i]))
            .collect();
        Ok(PathwayOutputs {
            y_f: self.head.apply(&z_clip),
            y_low: self.head.apply(&z_low),
            y_up: self.head.apply(&z_up),
            y_h: self.head.apply(&z),
            z,
            z_low,
            z_up,
            z_clip,
        })
    }

    /// The deployed output `f(x) = g(clip(h(x), h_low(x), h_up(x)))`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let z = self.backbone.forward(x);
        let lo = self.aux_low.forward(x);
        let up = self.aux_up.forward(x);
        let zc: Vec<f64> = (0..self.latent_dim)
            .map(|i| clip(z[i], lo[i], up[i]))
            .collect();
        Ok(self.head.apply(&zc))
    }

    pub fn predict_rows(&self, x: &Mat) -> Result<Vec<f64>> {
        (0..x.rows()).map(|r| self.predict(x.row(r))).collect()
    }

    /// Binary label from the logit; a logit equal to the threshold counts as positive.
    pub fn predict_label(&self, x: &[f64], threshold: f64) -> Result<u8> {
        Ok(u8::from(self.predict(x)? >= threshold))
    }

    /// `h_up(x) − h_low(x)`; negative entries mark flipped coordinates.
    pub fn box_width(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let lo = self.aux_low.forward(x);
        let up = self.aux_up.forward(x);
        Ok(up.iter().zip(&lo).map(|(u, l)| u - l).collect())
    }

    /// Head output on the embedding rebuilt from the auxiliaries at a fixed pattern.
    pub fn output_at_pattern(&self, x: &[f64], pattern: &[Side]) -> Result<f64> {
        self.check_input(x)?;
        if pattern.len() != self.latent_dim {
            return Err(Error::dim(format!(
                "pattern has {} entries for latent dim {}",
                pattern.len(),
                self.latent_dim
            )));
        }
        let lo = self.aux_low.forward(x);
        let up = self.aux_up.forward(x);
        let z: Vec<f64> = pattern
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                Side::Low => lo[i],
                Side::Up => up[i],
            })
            .collect();
        Ok(self.head.apply(&z))
    }

    // ---- parameters ----

    fn mlp(&self, c: Component) -> Option<&Mlp> {
        match c {
            Component::Backbone => Some(&self.backbone),
            Component::AuxLow => Some(&self.aux_low),
            Component::AuxUp => Some(&self.aux_up),
            Component::Head => None,
        }
    }

    /// Parameter tensors in [`ParamId`] order, tagged with their component.
    pub fn params(&self) -> Vec<(Component, &Mat)> {
        let mut out = Vec::new();
        for c in [Component::Backbone, Component::AuxLow, Component::AuxUp] {
            for l in self.mlp(c).expect("mlp component").layers() {
                out.push((c, &l.w));
                out.push((c, &l.b));
            }
        }
        out.push((Component::Head, &self.head.w));
        out.push((Component::Head, &self.head.b));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(Component, &mut Mat)> {
        let mut out = Vec::new();
        for (c, mlp) in [
            (Component::Backbone, &mut self.backbone),
            (Component::AuxLow, &mut self.aux_low),
            (Component::AuxUp, &mut self.aux_up),
        ] {
            for l in mlp.layers_mut() {
                out.push((c, &mut l.w));
                out.push((c, &mut l.b));
            }
        }
        out.push((Component::Head, &mut self.head.w));
        out.push((Component::Head, &mut self.head.b));
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, m)| m.len()).sum()
    }

    fn param_range(&self, c: Component) -> Range<usize> {
        let nb = 2 * self.backbone.layers().len();
        let nl = 2 * self.aux_low.layers().len();
        let nu = 2 * self.aux_up.layers().len();
        match c {
            Component::Backbone => 0..nb,
            Component::AuxLow => nb..nb + nl,
            Component::AuxUp => nb + nl..nb + nl + nu,
            Component::Head => nb + nl + nu..nb + nl + nu + 2,
        }
    }

    pub fn register(&self, tape: &mut Tape) -> TapeParams {
        let nodes = self
            .params()
            .into_iter()
            .enumerate()
            .map(|(i, (_, m))| tape.param(ParamId(i), m))
            .collect();
        TapeParams { nodes }
    }

    /// Records one of the three networks on `x` (rows are samples).
    pub fn record_mlp(
        &self,
        tape: &mut Tape,
        params: &TapeParams,
        c: Component,
        x: NodeId,
    ) -> Result<NodeId> {
        let mlp = self
            .mlp(c)
            .ok_or_else(|| Error::Contract("the head is not an MLP".into()))?;
        mlp.record(tape, &params.nodes[self.param_range(c)], x)
    }

    /// Records `g` on latent rows `z`, giving a `batch × 1` node.
    pub fn record_head(&self, tape: &mut Tape, params: &TapeParams, z: NodeId) -> Result<NodeId> {
        let r = self.param_range(Component::Head);
        tape.affine(z, params.nodes[r.start], params.nodes[r.start + 1])
    }

    // ---- serialization ----

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
    act: Activation,
}

#[derive(Serialize, Deserialize)]
struct HeadDoc {
    w: Vec<f64>,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    m: usize,
    n: usize,
    backbone: Vec<LayerDoc>,
    #[serde(rename = "auxLow")]
    aux_low: Vec<LayerDoc>,
    #[serde(rename = "auxUp")]
    aux_up: Vec<LayerDoc>,
    head: HeadDoc,
    #[serde(default)]
    meta: ModelMeta,
}

fn layers_to_doc(mlp: &Mlp) -> Vec<LayerDoc> {
    mlp.layers()
        .iter()
        .map(|l| LayerDoc {
            rows: l.w.rows(),
            cols: l.w.cols(),
            w: l.w.as_slice().to_vec(),
            b: l.b.as_slice().to_vec(),
            act: l.act,
        })
        .collect()
}

fn layers_from_doc(docs: Vec<LayerDoc>) -> Result<Mlp> {
    let layers = docs
        .into_iter()
        .map(|d| Layer::new(Mat::new(d.rows, d.cols, d.w)?, d.b, d.act))
        .collect::<Result<Vec<_>>>()?;
    Mlp::new(layers)
}

impl From<&SmileModel> for ModelDoc {
    fn from(m: &SmileModel) -> Self {
        ModelDoc {
            m: m.input_dim,
            n: m.latent_dim,
            backbone: layers_to_doc(&m.backbone),
            aux_low: layers_to_doc(&m.aux_low),
            aux_up: layers_to_doc(&m.aux_up),
            head: HeadDoc {
                w: m.head.weights().to_vec(),
                b: m.head.bias(),
            },
            meta: m.meta.clone(),
        }
    }
}

impl TryFrom<ModelDoc> for SmileModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        let mut model = SmileModel::new(
            layers_from_doc(doc.backbone)?,
            layers_from_doc(doc.aux_low)?,
            layers_from_doc(doc.aux_up)?,
            LinearHead::new(doc.head.w, doc.head.b)?,
        )?;
        if model.input_dim != doc.m || model.latent_dim != doc.n {
            return Err(Error::dim(format!(
                "document declares m={}, n={} but layers give m={}, n={}",
                doc.m, doc.n, model.input_dim, model.latent_dim
            )));
        }
        model.meta = doc.meta;
        Ok(model)
    }
}

impl AuxFamily {
    pub fn of(model: &SmileModel, side: Side) -> AuxFamily {
        model
            .aux(side)
            .aux_family()
            .expect("validated at construction")
    }
}
