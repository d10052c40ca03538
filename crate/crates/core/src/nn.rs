//! Fully-connected layers, deterministic and stochastic.
//!
//! A stochastic layer carries two affine heads and produces
//! `act(mu(h) + sigma(h) * eps)` with `eps ~ N(0, I)` — the reparameterized
//! Gaussian conditional. With the sigma head at zero it reduces bitwise to
//! the deterministic layer, so a plain feedforward generator is the special
//! case. The sigma head is a raw affine map and may go negative; only
//! `sigma * eps` enters the forward pass, so the conditional law is
//! `N(mu, |sigma|)`.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{AutodiffError, DataError};
use crate::graph::{Graph, NodeId};
use crate::rng::Prng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId, AutodiffError> {
        match self {
            Activation::None => Ok(x),
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu(a) => g.leaky_relu(x, a),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::None => write!(f, "none"),
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(a) => write!(f, "lrelu@{a:?}"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Sigmoid => write!(f, "sigmoid"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Deterministic,
    Stochastic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn det(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        LayerSpec {
            kind: LayerKind::Deterministic,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn stochastic(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        LayerSpec {
            kind: LayerKind::Stochastic,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        let affine = self.in_dim * self.out_dim + self.out_dim;
        match self.kind {
            LayerKind::Deterministic => affine,
            LayerKind::Stochastic => 2 * affine,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            LayerKind::Deterministic => "det",
            LayerKind::Stochastic => "sto",
        };
        write!(f, "{kind}:{}:{}:{}", self.in_dim, self.out_dim, self.activation)
    }
}

/// Indices into the flat tensor store, per layer.
#[derive(Clone, Debug)]
enum LayerParamIds {
    Det { w: usize, b: usize },
    Sto { w_mu: usize, b_mu: usize, w_sigma: usize, b_sigma: usize },
}

/// Parameter store for a whole model. Weight matrices are out_dim x in_dim;
/// biases 1 x out_dim.
#[derive(Clone, Debug)]
pub struct ModelParams {
    spec: Vec<LayerSpec>,
    tensors: Vec<Tensor>,
    layers: Vec<LayerParamIds>,
}

/// Leaves registered for one graph, parallel to `ModelParams::tensors`.
pub struct BoundParams {
    pub ids: Vec<NodeId>,
}

/// Weights ~ N(0, 0.02^2), biases zero. Draw order: layer by layer, the mu
/// head before the sigma head, weight matrices row-major.
pub fn init_params(spec: &[LayerSpec], rng: &mut Prng) -> ModelParams {
    let mut tensors = Vec::new();
    let mut layers = Vec::new();
    let weight = |rng: &mut Prng, out: usize, inp: usize| {
        let mut w = Tensor::zeros(out, inp);
        for v in w.values_mut() {
            *v = 0.02 * rng.gaussian();
        }
        w
    };
    for layer in spec {
        match layer.kind {
            LayerKind::Deterministic => {
                let w = tensors.len();
                tensors.push(weight(rng, layer.out_dim, layer.in_dim));
                let b = tensors.len();
                tensors.push(Tensor::zeros(1, layer.out_dim));
                layers.push(LayerParamIds::Det { w, b });
            }
            LayerKind::Stochastic => {
                let w_mu = tensors.len();
                tensors.push(weight(rng, layer.out_dim, layer.in_dim));
                let b_mu = tensors.len();
                tensors.push(Tensor::zeros(1, layer.out_dim));
                let w_sigma = tensors.len();
                tensors.push(weight(rng, layer.out_dim, layer.in_dim));
                let b_sigma = tensors.len();
                tensors.push(Tensor::zeros(1, layer.out_dim));
                layers.push(LayerParamIds::Sto {
                    w_mu,
                    b_mu,
                    w_sigma,
                    b_sigma,
                });
            }
        }
    }
    ModelParams {
        spec: spec.to_vec(),
        tensors,
        layers,
    }
}

impl ModelParams {
    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Build params directly from explicit tensors (tests, frozen networks).
    /// Tensor order and shapes must follow `init_params` layout.
    pub fn from_tensors(spec: &[LayerSpec], tensors: Vec<Tensor>) -> ModelParams {
        let mut dummy = Prng::new(0);
        let mut p = init_params(spec, &mut dummy);
        assert_eq!(p.tensors.len(), tensors.len(), "tensor count mismatch");
        for (slot, t) in p.tensors.iter_mut().zip(tensors) {
            assert_eq!(slot.shape(), t.shape(), "tensor shape mismatch");
            *slot = t;
        }
        p
    }

    /// Register every parameter tensor as a leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph) -> BoundParams {
        BoundParams {
            ids: self.tensors.iter().map(|t| graph.leaf(t.clone())).collect(),
        }
    }
}

fn affine(
    g: &mut Graph,
    w: NodeId,
    b: NodeId,
    h: NodeId,
) -> Result<NodeId, AutodiffError> {
    let wt = g.transpose(w)?;
    let prod = g.matmul(h, wt)?;
    g.add_broadcast_row(prod, b)
}

/// `act(h W^T + b)` for one deterministic layer.
pub fn forward_deterministic(
    g: &mut Graph,
    bound: &BoundParams,
    params: &ModelParams,
    layer_index: usize,
    h: NodeId,
) -> Result<NodeId, AutodiffError> {
    let layer = &params.spec[layer_index];
    let LayerParamIds::Det { w, b } = params.layers[layer_index] else {
        panic!("layer {layer_index} is not deterministic");
    };
    let pre = affine(g, bound.ids[w], bound.ids[b], h)?;
    layer.activation.apply(g, pre)
}

/// `act(mu(h) + sigma(h) * eps)` for one stochastic layer. `eps` must be a
/// leaf of shape (batch, out_dim); gradients reach both heads.
pub fn forward_stochastic(
    g: &mut Graph,
    bound: &BoundParams,
    params: &ModelParams,
    layer_index: usize,
    h: NodeId,
    eps: NodeId,
) -> Result<NodeId, AutodiffError> {
    let layer = &params.spec[layer_index];
    let LayerParamIds::Sto { w_mu, b_mu, w_sigma, b_sigma } = params.layers[layer_index] else {
        panic!("layer {layer_index} is not stochastic");
    };
    if g.value(eps).shape() != (g.value(h).rows(), layer.out_dim) {
        return Err(AutodiffError::ShapeMismatch {
            op: "forward-stochastic(eps)",
            lhs: g.value(eps).shape(),
            rhs: (g.value(h).rows(), layer.out_dim),
        });
    }
    let mu = affine(g, bound.ids[w_mu], bound.ids[b_mu], h)?;
    let sigma = affine(g, bound.ids[w_sigma], bound.ids[b_sigma], h)?;
    let noise = g.mul(sigma, eps)?;
    let pre = g.add(mu, noise)?;
    layer.activation.apply(g, pre)
}

/// Noise source for stochastic layers in a whole-model forward pass.
pub enum EpsSource<'a> {
    /// Draw a fresh eps tensor per stochastic layer, after the layer's
    /// mu/sigma nodes are built.
    Rng(&'a mut Prng),
    /// Replay the given eps tensors, one per stochastic layer in order.
    Fixed(&'a [Tensor]),
}

/// Compose every layer of the model. Stochastic layers consume one eps
/// tensor each.
pub fn model_forward(
    g: &mut Graph,
    bound: &BoundParams,
    params: &ModelParams,
    z: NodeId,
    mut eps: EpsSource<'_>,
) -> Result<NodeId, AutodiffError> {
    let mut h = z;
    let mut sto_seen = 0usize;
    for (i, layer) in params.spec.iter().enumerate() {
        match layer.kind {
            LayerKind::Deterministic => {
                h = forward_deterministic(g, bound, params, i, h)?;
            }
            LayerKind::Stochastic => {
                let rows = g.value(h).rows();
                let eps_tensor = match &mut eps {
                    EpsSource::Rng(rng) => rng.gaussian_tensor(rows, layer.out_dim),
                    EpsSource::Fixed(list) => list
                        .get(sto_seen)
                        .unwrap_or_else(|| panic!("missing eps for stochastic layer {i}"))
                        .clone(),
                };
                sto_seen += 1;
                let eps_id = g.leaf(eps_tensor);
                h = forward_stochastic(g, bound, params, i, h, eps_id)?;
            }
        }
    }
    Ok(h)
}

/// One-shot forward pass on a private graph, returning plain values.
pub fn forward_values(
    params: &ModelParams,
    z: &Tensor,
    eps: EpsSource<'_>,
) -> Result<Tensor, AutodiffError> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let zid = g.leaf(z.clone());
    let out = model_forward(&mut g, &bound, params, zid, eps)?;
    Ok(g.value(out).clone())
}

fn spec_string(spec: &[LayerSpec]) -> String {
    spec.iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "none" => Ok(Activation::None),
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        _ => {
            if let Some(a) = s.strip_prefix("lrelu@") {
                a.parse::<f64>()
                    .map(Activation::LeakyRelu)
                    .map_err(|e| format!("bad leaky-relu slope {a:?}: {e}"))
            } else {
                Err(format!("unknown activation {s:?}"))
            }
        }
    }
}

/// Parse the textual layer list, e.g. `det:2:100:none,sto:2:100:lrelu@0.2`.
pub fn parse_spec_string(s: &str) -> Result<Vec<LayerSpec>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 4 {
            return Err(format!("layer {part:?} must have 4 colon-separated fields"));
        }
        let kind = match fields[0] {
            "det" => LayerKind::Deterministic,
            "sto" => LayerKind::Stochastic,
            other => return Err(format!("unknown layer kind {other:?}")),
        };
        let in_dim: usize = fields[1].parse().map_err(|e| format!("in-dim: {e}"))?;
        let out_dim: usize = fields[2].parse().map_err(|e| format!("out-dim: {e}"))?;
        if in_dim == 0 || out_dim == 0 {
            return Err(format!("layer {part:?} has zero dimension"));
        }
        let activation = parse_activation(fields[3])?;
        out.push(LayerSpec {
            kind,
            in_dim,
            out_dim,
            activation,
        });
    }
    if out.is_empty() {
        return Err("empty layer spec".into());
    }
    Ok(out)
}

/// Serialize parameters: one text header line
/// `layers=<spec-string>;count=<n>` followed by `n` little-endian f64s in
/// layout order.
pub fn write_params(params: &ModelParams, mut w: impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "layers={};count={}",
        spec_string(&params.spec),
        params.param_count()
    )?;
    for t in &params.tensors {
        for v in t.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params(mut r: impl BufRead, path: &str) -> Result<ModelParams, DataError> {
    let mut header = String::new();
    r.read_line(&mut header).map_err(|e| DataError::Io {
        path: path.into(),
        source: e,
    })?;
    let header = header.trim_end();
    let parse_err = |msg: String| DataError::Parse {
        path: path.into(),
        line: 1,
        msg,
    };
    let rest = header
        .strip_prefix("layers=")
        .ok_or_else(|| parse_err("header must start with `layers=`".into()))?;
    let (spec_str, count_str) = rest
        .split_once(";count=")
        .ok_or_else(|| parse_err("header missing `;count=`".into()))?;
    let spec = parse_spec_string(spec_str).map_err(parse_err)?;
    let count: usize = count_str
        .parse()
        .map_err(|e| parse_err(format!("bad count: {e}")))?;
    let expected: usize = spec.iter().map(LayerSpec::param_count).sum();
    if count != expected {
        return Err(parse_err(format!(
            "count {count} does not match spec ({expected} parameters)"
        )));
    }
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| DataError::Io {
        path: path.into(),
        source: e,
    })?;
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));

    let mut dummy = Prng::new(0);
    let mut params = init_params(&spec, &mut dummy);
    for t in params.tensors.iter_mut() {
        for v in t.values_mut() {
            *v = values.next().expect("length checked above");
        }
    }
    Ok(params)
}
