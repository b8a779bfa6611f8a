//! Dense feedforward networks with embedding lookups, reverse-mode gradients
//! and Adam.
//!
//! All parameters of a network live in one flat `Vec<f64>`; embedding tables
//! and layer weights are views into it. This keeps the optimizer, checkpoints
//! and finite-difference checks trivially uniform.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EMBEDDING_INIT: f64 = 0.05;
const CHECKPOINT_MAGIC: &[u8; 8] = b"TRCVCKPT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub rows: usize,
    pub dim: usize,
}

/// Architecture of a [`DenseNet`]: dense inputs and embedded categorical
/// fields are concatenated, then passed through ReLU hidden layers and a
/// linear output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub dense_inputs: usize,
    pub embeddings: Vec<EmbeddingSpec>,
    pub hidden: Vec<usize>,
    pub outputs: usize,
}

impl NetSpec {
    pub fn input_width(&self) -> usize {
        self.dense_inputs + self.embeddings.iter().map(|e| e.dim).sum::<usize>()
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_width();
        for &h in self.hidden.iter().chain(std::iter::once(&self.outputs)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerSlot {
    weights: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embeddings: Vec<usize>,
    layers: Vec<LayerSlot>,
    total: usize,
}

impl Layout {
    fn new(spec: &NetSpec) -> Self {
        let mut offset = 0;
        let embeddings = spec
            .embeddings
            .iter()
            .map(|e| {
                let at = offset;
                offset += e.rows * e.dim;
                at
            })
            .collect();
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let weights = offset;
                let bias = weights + fan_in * fan_out;
                offset = bias + fan_out;
                LayerSlot {
                    weights,
                    bias,
                    fan_in,
                    fan_out,
                }
            })
            .collect();
        Self {
            embeddings,
            layers,
            total: offset,
        }
    }
}

/// A mini-batch of network inputs in row-major order.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    rows: usize,
    dense: Vec<f64>,
    cats: Vec<u32>,
}

impl Inputs {
    pub fn with_capacity(spec: &NetSpec, rows: usize) -> Self {
        Self {
            rows: 0,
            dense: Vec::with_capacity(rows * spec.dense_inputs),
            cats: Vec::with_capacity(rows * spec.embeddings.len()),
        }
    }

    pub fn push(&mut self, dense: &[f64], cats: &[u32]) {
        self.dense.extend_from_slice(dense);
        self.cats.extend_from_slice(cats);
        self.rows += 1;
    }

    /// Appends one row assembled from several dense segments.
    pub fn push_parts(&mut self, dense_parts: &[&[f64]], cats: &[u32]) {
        for part in dense_parts {
            self.dense.extend_from_slice(part);
        }
        self.cats.extend_from_slice(cats);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }
}

/// Recorded forward pass: the input of every layer.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Array2<f64>>,
    cats: Vec<u32>,
}

/// Gradient of a scalar loss with respect to every parameter, in the same
/// flat layout as [`DenseNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(Vec<f64>);

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    spec: NetSpec,
    layout: Layout,
    params: Vec<f64>,
    seed: u64,
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases, small uniform embeddings.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self> {
        if spec.outputs == 0 {
            return Err(Error::Shape("network needs at least one output".into()));
        }
        if spec.input_width() == 0 {
            return Err(Error::Shape("network needs at least one input".into()));
        }
        if spec.hidden.contains(&0) || spec.embeddings.iter().any(|e| e.rows == 0 || e.dim == 0)
        {
            return Err(Error::Shape("zero-sized layer or embedding".into()));
        }
        let layout = Layout::new(&spec);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (e, &at) in spec.embeddings.iter().zip(&layout.embeddings) {
            for p in &mut params[at..at + e.rows * e.dim] {
                *p = rng.random_range(-EMBEDDING_INIT..EMBEDDING_INIT);
            }
        }
        for slot in &layout.layers {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            for p in &mut params[slot.weights..slot.bias] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(Self {
            spec,
            layout,
            params,
            seed,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Zeroes the output layer so logits equal the (zero) bias.
    pub fn zero_output_layer(&mut self) {
        let slot = *self.layout.layers.last().expect("at least one layer");
        self.params[slot.weights..slot.bias + slot.fan_out].fill(0.0);
    }

    /// Sets the output bias vector.
    pub fn set_output_bias(&mut self, bias: &[f64]) -> Result<()> {
        let slot = *self.layout.layers.last().expect("at least one layer");
        if bias.len() != slot.fan_out {
            return Err(Error::Shape(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                slot.fan_out
            )));
        }
        self.params[slot.bias..slot.bias + slot.fan_out].copy_from_slice(bias);
        Ok(())
    }

    /// Mutable access to layer `l`'s weight matrix (fan_in x fan_out, row-major).
    pub fn layer_weights_mut(&mut self, l: usize) -> &mut [f64] {
        let slot = self.layout.layers[l];
        &mut self.params[slot.weights..slot.bias]
    }

    /// Order-sensitive FNV-1a over the parameter bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for p in &self.params {
            for b in p.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    fn weights(&self, slot: &LayerSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(
            (slot.fan_in, slot.fan_out),
            &self.params[slot.weights..slot.bias],
        )
        .expect("layout")
    }

    fn bias(&self, slot: &LayerSlot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[slot.bias..slot.bias + slot.fan_out])
    }

    fn assemble(&self, inputs: &Inputs) -> Result<Array2<f64>> {
        let fields = self.spec.embeddings.len();
        if inputs.dense.len() != inputs.rows * self.spec.dense_inputs
            || inputs.cats.len() != inputs.rows * fields
        {
            return Err(Error::Shape(format!(
                "inputs carry {} dense / {} categorical values for {} rows; network expects {} / {} per row",
                inputs.dense.len(),
                inputs.cats.len(),
                inputs.rows,
                self.spec.dense_inputs,
                fields
            )));
        }
        let width = self.spec.input_width();
        let mut x = Array2::zeros((inputs.rows, width));
        for (r, mut row) in x.rows_mut().into_iter().enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            let d = self.spec.dense_inputs;
            row[..d].copy_from_slice(&inputs.dense[r * d..(r + 1) * d]);
            let mut col = d;
            for (f, e) in self.spec.embeddings.iter().enumerate() {
                let idx = inputs.cats[r * fields + f] as usize;
                if idx >= e.rows {
                    return Err(Error::Shape(format!(
                        "category {idx} out of range for field {f} with {} rows",
                        e.rows
                    )));
                }
                let at = self.layout.embeddings[f] + idx * e.dim;
                row[col..col + e.dim].copy_from_slice(&self.params[at..at + e.dim]);
                col += e.dim;
            }
        }
        Ok(x)
    }

    /// Logits for every input row.
    pub fn forward(&self, inputs: &Inputs) -> Result<Array2<f64>> {
        self.run(inputs, false).map(|(out, _)| out)
    }

    /// Forward pass that records what [`DenseNet::backward`] needs.
    pub fn forward_tape(&self, inputs: &Inputs) -> Result<(Array2<f64>, Tape)> {
        self.run(inputs, true)
            .map(|(out, acts)| (out, Tape { acts, cats: inputs.cats.clone() }))
    }

    fn run(&self, inputs: &Inputs, record: bool) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
        let mut act = self.assemble(inputs)?;
        let mut acts = Vec::new();
        let last = self.layout.layers.len() - 1;
        for (l, slot) in self.layout.layers.iter().enumerate() {
            let mut z = act.dot(&self.weights(slot));
            z += &self.bias(slot);
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if record {
                acts.push(std::mem::replace(&mut act, z));
            } else {
                act = z;
            }
        }
        if act.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((act, acts))
    }

    /// Back-propagates `upstream` (dLoss/dLogits, one row per input row).
    pub fn backward(&self, tape: &Tape, upstream: &Array2<f64>) -> Result<Gradients> {
        let rows = tape.acts.first().map_or(0, |a| a.nrows());
        if upstream.dim() != (rows, self.spec.outputs) {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} for {rows} rows x {} outputs",
                upstream.dim(),
                self.spec.outputs
            )));
        }
        let mut grads = vec![0.0; self.layout.total];
        let mut delta = upstream.to_owned();
        let has_embeddings = !self.spec.embeddings.is_empty();
        for l in (0..self.layout.layers.len()).rev() {
            let slot = &self.layout.layers[l];
            let a_in = &tape.acts[l];
            let dw = a_in.t().dot(&delta);
            grads[slot.weights..slot.bias]
                .iter_mut()
                .zip(dw.iter())
                .for_each(|(g, d)| *g += d);
            let db = delta.sum_axis(Axis(0));
            grads[slot.bias..slot.bias + slot.fan_out]
                .iter_mut()
                .zip(db.iter())
                .for_each(|(g, d)| *g += d);
            if l > 0 || has_embeddings {
                let mut d_in = delta.dot(&self.weights(slot).t());
                if l > 0 {
                    d_in.zip_mut_with(a_in, |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
                delta = d_in;
            }
        }
        if has_embeddings {
            let fields = self.spec.embeddings.len();
            for (r, row) in delta.rows().into_iter().enumerate() {
                let mut col = self.spec.dense_inputs;
                for (f, e) in self.spec.embeddings.iter().enumerate() {
                    let idx = tape.cats[r * fields + f] as usize;
                    let at = self.layout.embeddings[f] + idx * e.dim;
                    for j in 0..e.dim {
                        grads[at + j] += row[col + j];
                    }
                    col += e.dim;
                }
            }
        }
        Ok(Gradients(grads))
    }

    /// `l2 * sum(p^2)` over all parameters.
    pub fn l2_penalty(&self, l2: f64) -> f64 {
        l2 * self.params.iter().map(|p| p * p).sum::<f64>()
    }

    pub fn l2_gradient(&self, l2: f64) -> Gradients {
        Gradients(self.params.iter().map(|p| 2.0 * l2 * p).collect())
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("network parameters".into()))
        }
    }
}

/// Adam with bias correction. The L2 term is part of the loss, so its
/// gradient `2 * l2 * p` is added to the supplied gradient before the moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
    step: u64,
    #[serde(skip)]
    m: Vec<f64>,
    #[serde(skip)]
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64, l2: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        let n = net.param_count();
        if grads.len() != n || self.m.len() != n {
            return Err(Error::Shape(format!(
                "optimizer for {} parameters given {} gradients for a {n}-parameter network",
                self.m.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..n {
            let p = net.params[i];
            let g = grads.0[i] + 2.0 * self.l2 * p;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            net.params[i] = p - self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        net.ensure_finite()
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: NetSpec,
    seed: u64,
    param_count: usize,
    optimizer: Option<Adam>,
}

/// Serializes a network (and optionally its optimizer state) into a
/// self-describing binary container: magic, version, JSON header, then raw
/// little-endian `f64` parameters and moments.
pub fn checkpoint_bytes(net: &DenseNet, optimizer: Option<&Adam>) -> Vec<u8> {
    let header = CheckpointHeader {
        spec: net.spec.clone(),
        seed: net.seed,
        param_count: net.param_count(),
        optimizer: optimizer.cloned(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(24 + header.len() + net.param_count() * 24);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    put(&net.params);
    if let Some(opt) = optimizer {
        put(&opt.m);
        put(&opt.v);
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(DenseNet, Option<Adam>)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(20..20 + header_len)
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let layout = Layout::new(&header.spec);
    if layout.total != header.param_count {
        return Err(bad("parameter count disagrees with architecture"));
    }
    let mut rest = &bytes[20 + header_len..];
    let mut take = |n: usize| -> Result<Vec<f64>> {
        if rest.len() < n * 8 {
            return Err(bad("truncated parameter block"));
        }
        let (head, tail) = rest.split_at(n * 8);
        rest = tail;
        Ok(head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let params = take(layout.total)?;
    let optimizer = match header.optimizer {
        Some(mut opt) => {
            opt.m = take(layout.total)?;
            opt.v = take(layout.total)?;
            Some(opt)
        }
        None => None,
    };
    if !rest.is_empty() {
        return Err(bad("trailing bytes after checkpoint"));
    }
    let net = DenseNet {
        spec: header.spec,
        layout,
        params,
        seed: header.seed,
    };
    net.ensure_finite()?;
    Ok((net, optimizer))
}

pub fn save_checkpoint(path: &Path, net: &DenseNet, optimizer: Option<&Adam>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&checkpoint_bytes(net, optimizer))
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(DenseNet, Option<Adam>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-class softmax.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let p1 = sigmoid(logits[1] - logits[0]);
    [1.0 - p1, p1]
}

/// Log-probabilities of a two-class softmax, stable for large logit gaps.
pub fn log_softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    [logits[0] - lse, logits[1] - lse]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dense: usize, emb: Vec<EmbeddingSpec>, hidden: Vec<usize>, out: usize) -> NetSpec {
        NetSpec {
            dense_inputs: dense,
            embeddings: emb,
            hidden,
            outputs: out,
        }
    }

    fn sample_inputs(s: &NetSpec, rows: usize, seed: u64) -> Inputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Inputs::with_capacity(s, rows);
        for _ in 0..rows {
            let dense: Vec<f64> = (0..s.dense_inputs)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let cats: Vec<u32> = s
                .embeddings
                .iter()
                .map(|e| rng.random_range(0..e.rows as u32))
                .collect();
            inputs.push(&dense, &cats);
        }
        inputs
    }

    #[test]
    fn zero_output_layer_yields_bias() {
        let s = spec(3, vec![EmbeddingSpec { rows: 4, dim: 2 }], vec![5], 2);
        let mut net = DenseNet::new(s.clone(), 1).unwrap();
        net.zero_output_layer();
        net.set_output_bias(&[0.25, -1.5]).unwrap();
        let out = net.forward(&sample_inputs(&s, 4, 2)).unwrap();
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![0.25, -1.5]);
        }
    }

    #[test]
    fn identity_linear_layer() {
        let s = spec(2, vec![], vec![], 2);
        let mut net = DenseNet::new(s.clone(), 0).unwrap();
        net.layer_weights_mut(0).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let mut x = Inputs::with_capacity(&s, 1);
        x.push(&[3.0, 4.0], &[]);
        assert_eq!(net.forward(&x).unwrap().row(0).to_vec(), vec![3.0, 4.0]);
    }

    /// Straight-line recomputation of a seeded two-layer network.
    #[test]
    fn forward_matches_manual_arithmetic() {
        let s = spec(2, vec![EmbeddingSpec { rows: 3, dim: 2 }], vec![3], 1);
        let net = DenseNet::new(s.clone(), 11).unwrap();
        let p = net.params();
        let mut x = Inputs::with_capacity(&s, 1);
        x.push(&[0.7, -0.2], &[2]);
        let input = [0.7, -0.2, p[4], p[5]];
        let w1 = &p[6..18];
        let b1 = &p[18..21];
        let w2 = &p[21..24];
        let b2 = p[24];
        let mut out = b2;
        for j in 0..3 {
            let mut z = b1[j];
            for (i, xi) in input.iter().enumerate() {
                z += xi * w1[i * 3 + j];
            }
            out += z.max(0.0) * w2[j];
        }
        assert_eq!(net.param_count(), 25);
        let got = net.forward(&x).unwrap()[[0, 0]];
        assert!((got - out).abs() < 1e-14, "{got} vs {out}");
    }

    #[test]
    fn arity_mismatch_errors() {
        let s = spec(3, vec![EmbeddingSpec { rows: 4, dim: 2 }], vec![5], 2);
        let net = DenseNet::new(s, 1).unwrap();
        let mut bad = Inputs::default();
        bad.push(&[1.0, 2.0], &[0]);
        assert!(matches!(net.forward(&bad), Err(Error::Shape(_))));
        let mut out_of_range = Inputs::default();
        out_of_range.push(&[1.0, 2.0, 3.0], &[4]);
        assert!(net.forward(&out_of_range).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let s = spec(3, vec![EmbeddingSpec { rows: 4, dim: 2 }], vec![5, 4], 2);
        let net = DenseNet::new(s.clone(), 3).unwrap();
        let (out, tape) = net.forward_tape(&sample_inputs(&s, 6, 4)).unwrap();
        let g = net.backward(&tape, &Array2::zeros(out.dim())).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(net.backward(&tape, &Array2::zeros((2, 2))).is_err());
    }

    /// Loss = sum_r sum_o c_{r,o} * logit_{r,o}; checked against central
    /// differences at 12 random coordinates.
    #[test]
    fn gradient_matches_finite_differences() {
        let s = spec(
            3,
            vec![EmbeddingSpec { rows: 5, dim: 3 }, EmbeddingSpec { rows: 2, dim: 2 }],
            vec![8, 6],
            2,
        );
        let mut net = DenseNet::new(s.clone(), 5).unwrap();
        let x = sample_inputs(&s, 7, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coef = Array2::from_shape_fn((7, 2), |_| rng.random_range(-1.0..1.0));
        let loss = |n: &DenseNet| -> f64 {
            let out = n.forward(&x).unwrap();
            (&out * &coef).sum()
        };
        let (_, tape) = net.forward_tape(&x).unwrap();
        let g = net.backward(&tape, &coef).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        while checked < 12 {
            let i = rng.random_range(0..net.param_count());
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net);
            net.params_mut()[i] = orig - h;
            let down = loss(&net);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = g.as_slice()[i];
            if fd.abs() < 1e-9 && an.abs() < 1e-9 {
                continue;
            }
            let rel = (fd - an).abs() / fd.abs().max(an.abs());
            assert!(rel < 1e-4, "coord {i}: fd {fd} analytic {an}");
            checked += 1;
        }
    }

    #[test]
    fn l2_gradient_is_analytic() {
        let s = spec(2, vec![], vec![3], 1);
        let net = DenseNet::new(s, 7).unwrap();
        let g = net.l2_gradient(1e-3);
        for (gi, p) in g.as_slice().iter().zip(net.params()) {
            assert_eq!(*gi, 2.0 * 1e-3 * p);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let s = spec(2, vec![], vec![3], 1);
        let mut net = DenseNet::new(s, 7).unwrap();
        let before = net.params().to_vec();
        let mut opt = Adam::new(net.param_count(), 1e-3, 0.0);
        let zero = Gradients::zeros(net.param_count());
        opt.step(&mut net, &zero).unwrap();
        assert_eq!(net.params(), &before[..]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let s = spec(1, vec![], vec![], 1);
        let mut net = DenseNet::new(s, 0).unwrap();
        let before = net.params().to_vec();
        let mut opt = Adam::new(net.param_count(), 1e-3, 0.0);
        opt.step(&mut net, &Gradients(vec![1.0; 2])).unwrap();
        let expected = 1e-3 * 1.0 / (1.0 + 1e-8);
        for (a, b) in net.params().iter().zip(&before) {
            assert!(((b - a) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_constant_gradient_approaches_lr_sign() {
        let s = spec(1, vec![], vec![], 1);
        let mut net = DenseNet::new(s, 0).unwrap();
        let mut opt = Adam::new(net.param_count(), 1e-3, 0.0);
        let g = Gradients(vec![-0.3, -0.3]);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = net.params()[0];
            opt.step(&mut net, &g).unwrap();
            last = net.params()[0] - before;
        }
        assert!((last - 1e-3).abs() < 1e-6, "{last}");
    }

    #[test]
    fn adam_shape_mismatch() {
        let s = spec(1, vec![], vec![], 1);
        let mut net = DenseNet::new(s, 0).unwrap();
        let mut opt = Adam::new(3, 1e-3, 0.0);
        assert!(opt.step(&mut net, &Gradients::zeros(2)).is_err());
    }

    #[test]
    fn nan_gradient_is_a_hard_error() {
        let s = spec(1, vec![], vec![], 1);
        let mut net = DenseNet::new(s, 0).unwrap();
        let mut opt = Adam::new(2, 1e-3, 0.0);
        let r = opt.step(&mut net, &Gradients(vec![f64::NAN, 0.0]));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let s = spec(2, vec![EmbeddingSpec { rows: 3, dim: 2 }], vec![4], 2);
        let mut net = DenseNet::new(s.clone(), 42).unwrap();
        let mut opt = Adam::new(net.param_count(), 1e-3, 1e-6);
        let (out, tape) = net.forward_tape(&sample_inputs(&s, 3, 1)).unwrap();
        let g = net.backward(&tape, &out).unwrap();
        opt.step(&mut net, &g).unwrap();
        let bytes = checkpoint_bytes(&net, Some(&opt));
        let (net2, opt2) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(net2.checksum(), net.checksum());
        assert_eq!(net2.seed(), 42);
        let opt2 = opt2.unwrap();
        assert_eq!(opt2, opt);
        assert_eq!(checkpoint_bytes(&net2, Some(&opt2)), bytes);
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn softmax_is_a_distribution() {
        for z in [[0.0, 0.0], [5.0, -700.0], [1e3, 1e3 + 1.0], [-3.0, 2.0]] {
            let p = softmax2(z);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            let lp = log_softmax2(z);
            assert!(lp.iter().all(|v| v.is_finite()));
        }
        let p = softmax2([0.0, 3f64.ln()]);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }
}
