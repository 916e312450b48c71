//! Gated residual perceptron and its plain-MLP baseline.
//!
//! Inputs are rows `[r, g, b, thick_norm, one_hot(class)]`. The gated network:
//!
//! ```text
//! e  = relu(W_e · base)                       base-color embedding (d)
//! g  = σ(W_g2 · σ(W_g1 · [thick; class]))     gate (d)
//! h0 = relu(W_t · [e ⊙ g; thick; class])      trunk input (d)
//! h_i = relu(W_b · relu(W_a · h_{i-1})) + h_{i-1}   for each residual block
//! y  = W_o · h_B                              identity head (3)
//! ```
//!
//! Layers are stored in declaration order: embed, gate 1, gate 2, trunk input,
//! two layers per block, head.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer, LayerGrad};
use crate::dataset::{PaintSampleRecord, ThickNorm};
use crate::{Error, Result};

pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_BLOCKS: usize = 4;
/// Parameter budget both architectures aim for.
pub const TARGET_PARAMS: usize = 155_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum Architecture {
    Spcp { width: usize, blocks: usize },
    PlainMlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Spcp,
    PlainMlp,
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spcp" => Ok(ArchKind::Spcp),
            "plain_mlp" => Ok(ArchKind::PlainMlp),
            other => Err(Error::Config(format!("unknown architecture `{other}` (spcp | plain_mlp)"))),
        }
    }
}

impl Architecture {
    pub fn kind(&self) -> ArchKind {
        match self {
            Architecture::Spcp { .. } => ArchKind::Spcp,
            Architecture::PlainMlp { .. } => ArchKind::PlainMlp,
        }
    }

    pub fn spcp_default() -> Self {
        Architecture::Spcp {
            width: DEFAULT_WIDTH,
            blocks: DEFAULT_BLOCKS,
        }
    }

    /// Plain MLP with as many hidden layers as the gated trunk path
    /// (`2 * blocks + 2`) and the uniform width whose parameter count is
    /// closest to the gated network with the same `classes`.
    pub fn plain_matching(width: usize, blocks: usize, classes: usize) -> Self {
        let target = Self::Spcp { width, blocks }.param_count(classes);
        let depth = 2 * blocks + 2;
        let best = (1..=4 * width)
            .min_by_key(|&w| {
                let n = Self::PlainMlp { hidden: vec![w; depth] }.param_count(classes);
                n.abs_diff(target)
            })
            .unwrap_or(width);
        Self::PlainMlp {
            hidden: vec![best; depth],
        }
    }

    pub fn for_kind(kind: ArchKind, classes: usize) -> Self {
        match kind {
            ArchKind::Spcp => Self::spcp_default(),
            ArchKind::PlainMlp => Self::plain_matching(DEFAULT_WIDTH, DEFAULT_BLOCKS, classes),
        }
    }

    /// `(inputs, outputs, activation)` per layer in declaration order.
    pub fn layer_shapes(&self, classes: usize) -> Vec<(usize, usize, Activation)> {
        let ctrl = 1 + classes;
        match self {
            Architecture::Spcp { width: d, blocks } => {
                let mut shapes = vec![
                    (3, *d, Activation::Relu),
                    (ctrl, *d, Activation::Sigmoid),
                    (*d, *d, Activation::Sigmoid),
                    (d + ctrl, *d, Activation::Relu),
                ];
                for _ in 0..*blocks {
                    shapes.push((*d, *d, Activation::Relu));
                    shapes.push((*d, *d, Activation::Relu));
                }
                shapes.push((*d, 3, Activation::Identity));
                shapes
            }
            Architecture::PlainMlp { hidden } => {
                let mut shapes = Vec::with_capacity(hidden.len() + 1);
                let mut prev = 3 + ctrl;
                for &h in hidden {
                    shapes.push((prev, h, Activation::Relu));
                    prev = h;
                }
                shapes.push((prev, 3, Activation::Identity));
                shapes
            }
        }
    }

    pub fn param_count(&self, classes: usize) -> usize {
        self.layer_shapes(classes).iter().map(|(i, o, _)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    classes: usize,
    layers: Vec<DenseLayer>,
    norm: ThickNorm,
}

/// Intermediate activations kept for back-propagation.
#[derive(Debug)]
pub struct ForwardCache {
    input: Array2<f64>,
    /// Output of each layer in declaration order.
    outputs: Vec<Array2<f64>>,
    /// Gated networks only: trunk input `[e ⊙ g; ctrl]` and hidden states `h_0..h_B`.
    trunk_in: Option<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Raw (unclamped) predictions, shape (batch, 3).
    pub fn prediction(&self) -> &Array2<f64> {
        self.outputs.last().expect("model has a head layer")
    }
}

impl Model {
    pub fn new_random(arch: Architecture, classes: usize, norm: ThickNorm, rng: &mut impl Rng) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Model("class count must be positive".into()));
        }
        let layers = arch
            .layer_shapes(classes)
            .into_iter()
            .map(|(i, o, f)| DenseLayer::he_uniform(i, o, f, rng))
            .collect();
        Ok(Self {
            arch,
            classes,
            layers,
            norm,
        })
    }

    /// Assemble a model from explicit layers, checking every shape.
    pub fn from_layers(arch: Architecture, classes: usize, layers: Vec<DenseLayer>, norm: ThickNorm) -> Result<Self> {
        let shapes = arch.layer_shapes(classes);
        if shapes.len() != layers.len() {
            return Err(Error::Model(format!(
                "architecture needs {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (k, ((i, o, f), l)) in shapes.iter().zip(&layers).enumerate() {
            if l.inputs() != *i || l.outputs() != *o || l.bias.len() != *o || l.activation != *f {
                return Err(Error::Model(format!("layer {k} does not match the architecture")));
            }
        }
        Ok(Self {
            arch,
            classes,
            layers,
            norm,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn norm(&self) -> ThickNorm {
        self.norm
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        4 + self.classes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Rows `[base, thick_norm, one_hot]` for a batch of records.
    pub fn design(&self, records: &[PaintSampleRecord]) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut x = Array2::zeros((records.len(), self.input_dim()));
        let mut y = Array2::zeros((records.len(), 3));
        for (i, r) in records.iter().enumerate() {
            let class = r.class_id as usize;
            if class >= self.classes {
                return Err(Error::Model(format!("class {class} >= model class count {}", self.classes)));
            }
            for c in 0..3 {
                x[[i, c]] = r.base[c];
                y[[i, c]] = r.painted[c];
            }
            x[[i, 3]] = r.thick_norm;
            x[[i, 4 + class]] = 1.0;
        }
        Ok((x, y))
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Model(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(match &self.arch {
            Architecture::Spcp { blocks, .. } => self.forward_spcp(x, *blocks),
            Architecture::PlainMlp { .. } => {
                let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
                for layer in &self.layers {
                    let out = match outputs.last() {
                        Some(prev) => layer.forward(prev.view()),
                        None => layer.forward(x),
                    };
                    outputs.push(out);
                }
                ForwardCache {
                    input: x.to_owned(),
                    outputs,
                    trunk_in: None,
                    hidden: Vec::new(),
                }
            }
        })
    }

    fn forward_spcp(&self, x: ArrayView2<f64>, blocks: usize) -> ForwardCache {
        let base = x.slice(s![.., 0..3]);
        let ctrl = x.slice(s![.., 3..]);
        let l = &self.layers;
        let e = l[0].forward(base);
        let g1 = l[1].forward(ctrl);
        let g = l[2].forward(g1.view());
        let gated = &e * &g;
        let trunk_in = concatenate(Axis(1), &[gated.view(), ctrl]).expect("row counts agree");
        let h0 = l[3].forward(trunk_in.view());
        let mut outputs = vec![e, g1, g, h0.clone()];
        let mut hidden = vec![h0];
        for b in 0..blocks {
            let h = hidden.last().expect("h0 present");
            let u = l[4 + 2 * b].forward(h.view());
            let v = l[5 + 2 * b].forward(u.view());
            let next = &v + h;
            outputs.push(u);
            outputs.push(v);
            hidden.push(next);
        }
        let y = l[4 + 2 * blocks].forward(hidden.last().expect("h_B present").view());
        outputs.push(y);
        ForwardCache {
            input: x.to_owned(),
            outputs,
            trunk_in: Some(trunk_in),
            hidden,
        }
    }

    /// Gradients of every layer given `d_pred`, the loss gradient w.r.t. the
    /// raw predictions.
    pub fn backward(&self, cache: &ForwardCache, d_pred: Array2<f64>) -> Vec<LayerGrad> {
        match &self.arch {
            Architecture::Spcp { blocks, .. } => self.backward_spcp(cache, d_pred, *blocks),
            Architecture::PlainMlp { .. } => {
                let n = self.layers.len();
                let mut grads = Vec::with_capacity(n);
                let mut d = d_pred;
                for k in (0..n).rev() {
                    let input = if k == 0 { cache.input.view() } else { cache.outputs[k - 1].view() };
                    let (g, d_in) = self.layers[k].backward(input, cache.outputs[k].view(), d, k > 0);
                    grads.push(g);
                    if let Some(d_in) = d_in {
                        d = d_in;
                    } else {
                        break;
                    }
                }
                grads.reverse();
                grads
            }
        }
    }

    fn backward_spcp(&self, cache: &ForwardCache, d_pred: Array2<f64>, blocks: usize) -> Vec<LayerGrad> {
        let l = &self.layers;
        let o = &cache.outputs;
        let mut grads: Vec<Option<LayerGrad>> = vec![None; l.len()];
        let head = 4 + 2 * blocks;

        let (g, d_h) = l[head].backward(cache.hidden[blocks].view(), o[head].view(), d_pred, true);
        grads[head] = Some(g);
        let mut d_h = d_h.expect("requested");
        for b in (0..blocks).rev() {
            let (ia, ib) = (4 + 2 * b, 5 + 2 * b);
            let (gb, d_u) = l[ib].backward(o[ia].view(), o[ib].view(), d_h.clone(), true);
            let (ga, d_skip) = l[ia].backward(cache.hidden[b].view(), o[ia].view(), d_u.expect("requested"), true);
            grads[ib] = Some(gb);
            grads[ia] = Some(ga);
            d_h += &d_skip.expect("requested");
        }
        let trunk_in = cache.trunk_in.as_ref().expect("gated forward cache");
        let (gt, d_trunk) = l[3].backward(trunk_in.view(), o[3].view(), d_h, true);
        grads[3] = Some(gt);
        let d_trunk = d_trunk.expect("requested");
        let width = o[0].ncols();
        let d_gated = d_trunk.slice(s![.., 0..width]);
        let d_embed = &d_gated * &o[2];
        let d_gate = &d_gated * &o[0];
        let (g2, d_g1) = l[2].backward(o[1].view(), o[2].view(), d_gate, true);
        let (g1, _) = l[1].backward(cache.input.slice(s![.., 3..]), o[1].view(), d_g1.expect("requested"), false);
        let (g0, _) = l[0].backward(cache.input.slice(s![.., 0..3]), o[0].view(), d_embed, false);
        grads[2] = Some(g2);
        grads[1] = Some(g1);
        grads[0] = Some(g0);
        grads.into_iter().map(|g| g.expect("every layer visited")).collect()
    }

    /// Raw prediction for one sample.
    pub fn forward_raw(&self, base: [f64; 3], thick_norm: f64, class_onehot: &[f64]) -> Result<[f64; 3]> {
        if class_onehot.len() != self.classes {
            return Err(Error::Model(format!(
                "one-hot has {} entries, model expects {}",
                class_onehot.len(),
                self.classes
            )));
        }
        let mut x = Array2::zeros((1, self.input_dim()));
        for c in 0..3 {
            x[[0, c]] = base[c];
        }
        x[[0, 3]] = thick_norm;
        for (k, v) in class_onehot.iter().enumerate() {
            x[[0, 4 + k]] = *v;
        }
        let cache = self.forward_batch(x.view())?;
        let y = cache.prediction();
        Ok([y[[0, 0]], y[[0, 1]], y[[0, 2]]])
    }

    /// Inference prediction, clamped to [0, 1] per channel.
    pub fn forward(&self, base: [f64; 3], thick_norm: f64, class_onehot: &[f64]) -> Result<[f64; 3]> {
        Ok(self.forward_raw(base, thick_norm, class_onehot)?.map(|v| v.clamp(0.0, 1.0)))
    }

    /// Clamped predictions for many records; rows are evaluated in fixed-size
    /// chunks so results do not depend on thread scheduling.
    pub fn predict_records(&self, records: &[PaintSampleRecord]) -> Result<Vec<[f64; 3]>> {
        use rayon::prelude::*;
        const CHUNK: usize = 512;
        let chunks: Vec<Vec<[f64; 3]>> = records
            .par_chunks(CHUNK)
            .map(|chunk| {
                let (x, _) = self.design(chunk)?;
                let cache = self.forward_batch(x.view())?;
                Ok(cache
                    .prediction()
                    .rows()
                    .into_iter()
                    .map(|r| [r[0], r[1], r[2]].map(|v| v.clamp(0.0, 1.0)))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }
}

/// `(1/m) Σ ||y - ŷ||²` over raw predictions.
pub fn loss(model: &Model, batch: &[PaintSampleRecord]) -> Result<f64> {
    let (x, y) = model.design(batch)?;
    let cache = model.forward_batch(x.view())?;
    Ok(batch_loss(cache.prediction(), &y))
}

pub(crate) fn batch_loss(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let m = pred.nrows() as f64;
    pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / m
}

/// Exact gradient of the batch loss with respect to every layer parameter.
pub fn gradients(model: &Model, batch: &[PaintSampleRecord]) -> Result<Vec<LayerGrad>> {
    if batch.is_empty() {
        return Err(Error::Model("gradient of an empty batch".into()));
    }
    let (x, y) = model.design(batch)?;
    Ok(loss_and_gradients(model, x.view(), &y)?.1)
}

pub(crate) fn loss_and_gradients(model: &Model, x: ArrayView2<f64>, y: &Array2<f64>) -> Result<(f64, Vec<LayerGrad>)> {
    let cache = model.forward_batch(x)?;
    let pred = cache.prediction();
    let m = pred.nrows() as f64;
    let loss = batch_loss(pred, y);
    let d_pred = (pred - y) * (2.0 / m);
    Ok((loss, model.backward(&cache, d_pred)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn norm() -> ThickNorm {
        ThickNorm::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn default_parameter_budget() {
        for classes in [1, 2, 4, 8] {
            let spcp = Architecture::spcp_default().param_count(classes);
            let plain = Architecture::for_kind(ArchKind::PlainMlp, classes).param_count(classes);
            let within = |n: usize, pct: f64| (n as f64 - TARGET_PARAMS as f64).abs() <= pct * TARGET_PARAMS as f64;
            assert!(within(spcp, 0.2), "spcp {spcp}");
            assert!(within(plain, 0.2), "plain {plain}");
            assert!((spcp as f64 - plain as f64).abs() <= 0.05 * spcp as f64);
        }
    }

    #[test]
    fn zero_gate_halves_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arch = Architecture::Spcp { width: 6, blocks: 1 };
        let mut model = Model::new_random(arch, 2, norm(), &mut rng).unwrap();
        for k in [1, 2] {
            model.layers[k].weight.fill(0.0);
            model.layers[k].bias.fill(0.0);
        }
        let x = ndarray::array![[0.2, 0.5, 0.9, 0.3, 0.0, 1.0]];
        let cache = model.forward_batch(x.view()).unwrap();
        assert!(cache.outputs[2].iter().all(|&g| g == 0.5));
        let gated = cache.trunk_in.as_ref().unwrap();
        for j in 0..6 {
            assert_eq!(gated[[0, j]], 0.5 * cache.outputs[0][[0, j]]);
        }
    }

    #[test]
    fn zero_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let arch = Architecture::Spcp { width: 5, blocks: 2 };
        let mut model = Model::new_random(arch, 1, norm(), &mut rng).unwrap();
        for k in 4..8 {
            model.layers[k].weight.fill(0.0);
        }
        let x = ndarray::array![[0.2, 0.5, 0.9, 0.3, 1.0]];
        let cache = model.forward_batch(x.view()).unwrap();
        assert_eq!(cache.hidden[0], cache.hidden[2]);
    }

    #[test]
    fn dimension_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::new_random(Architecture::Spcp { width: 4, blocks: 1 }, 2, norm(), &mut rng).unwrap();
        assert!(model.forward([0.1; 3], 0.5, &[1.0]).is_err());
        assert!(model.forward_batch(Array2::zeros((1, 5)).view()).is_err());
        let bad = vec![DenseLayer::zeros(3, 4, Activation::Relu)];
        assert!(Model::from_layers(Architecture::Spcp { width: 4, blocks: 1 }, 2, bad, norm()).is_err());
        assert!("spcp".parse::<ArchKind>().is_ok());
        assert!("cnn".parse::<ArchKind>().is_err());
    }

    #[test]
    fn loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Model::new_random(Architecture::PlainMlp { hidden: vec![4] }, 1, norm(), &mut rng).unwrap();
        let rec = |p: [f64; 3]| PaintSampleRecord {
            base: [0.3, 0.2, 0.1],
            thick_norm: 0.4,
            class_id: 0,
            painted: p,
        };
        let pred = model.forward_raw([0.3, 0.2, 0.1], 0.4, &[1.0]).unwrap();
        assert_eq!(loss(&model, &[rec(pred)]).unwrap(), 0.0);
        let shifted = [pred[0] + 1.0, pred[1], pred[2]];
        assert!((loss(&model, &[rec(shifted)]).unwrap() - 1.0).abs() < 1e-12);
        for g in gradients(&model, &[rec(pred)]).unwrap() {
            assert!(g.weight.iter().chain(g.bias.iter()).all(|&v| v == 0.0));
        }
    }
}
