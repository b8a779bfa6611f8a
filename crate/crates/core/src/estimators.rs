//! The three learned components and their fusion.
//!
//! * [`StaticIntent`]: `p_theta(y | x)` from pre-click features, 2-logit softmax head.
//! * [`TrajectoryLikelihood`]: `p_psi(o_h | x, y)`, one shared network taking the
//!   window and class as one-hot inputs and emitting one Bernoulli logit per behavior.
//! * [`Completer`]: `q_phi(y = 1 | x, xi)` over a truncated trajectory plus a learned
//!   horizon embedding indexed by the number of visible windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{FeatureVector, TrajectoryView};
use crate::losses::alpha_weights;
use crate::nn::{log_softmax2, sigmoid, softmax2, DenseNet, EmbeddingSpec, Inputs, NetSpec};

/// Likelihoods are clamped to this distance from 0 and 1 before taking logs.
pub const LIKELIHOOD_CLAMP: f64 = 1e-6;

/// Shape of the feature vectors: numeric arity and per-field category space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric: usize,
    pub categorical: Vec<usize>,
}

impl FeatureSchema {
    pub fn check(&self, x: &FeatureVector) -> Result<()> {
        if x.numeric.len() != self.numeric || x.categorical.len() != self.categorical.len() {
            return Err(Error::Shape(format!(
                "feature vector has {}/{} numeric/categorical values, schema expects {}/{}",
                x.numeric.len(),
                x.categorical.len(),
                self.numeric,
                self.categorical.len()
            )));
        }
        for (f, (&c, &space)) in x.categorical.iter().zip(&self.categorical).enumerate() {
            if c as usize >= space {
                return Err(Error::Shape(format!(
                    "category {c} out of range for field {f} (space {space})"
                )));
            }
        }
        Ok(())
    }

    fn embeddings(&self, dim: usize) -> Vec<EmbeddingSpec> {
        self.categorical
            .iter()
            .map(|&rows| EmbeddingSpec { rows, dim })
            .collect()
    }
}

/// Hidden layer sizes and embedding width shared by the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub emb_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256, 128],
            emb_dim: 8,
        }
    }
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

#[derive(Debug, Clone)]
pub struct StaticIntent {
    net: DenseNet,
    schema: FeatureSchema,
}

impl StaticIntent {
    pub fn new(schema: FeatureSchema, arch: &Architecture, seed: u64) -> Result<Self> {
        let spec = NetSpec {
            dense_inputs: schema.numeric,
            embeddings: schema.embeddings(arch.emb_dim),
            hidden: arch.hidden.clone(),
            outputs: 2,
        };
        Ok(Self {
            net: DenseNet::new(spec, seed)?,
            schema,
        })
    }

    pub fn from_net(net: DenseNet, schema: FeatureSchema) -> Result<Self> {
        let s = net.spec();
        if s.outputs != 2
            || s.dense_inputs != schema.numeric
            || s.embeddings.len() != schema.categorical.len()
        {
            return Err(Error::Shape("network does not fit a static intent head".into()));
        }
        Ok(Self { net, schema })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn inputs<'a>(&self, xs: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Inputs> {
        let mut inputs = Inputs::with_capacity(self.net.spec(), 0);
        for x in xs {
            self.schema.check(x)?;
            inputs.push(&x.numeric, &x.categorical);
        }
        Ok(inputs)
    }

    pub fn logits<'a>(
        &self,
        xs: impl IntoIterator<Item = &'a FeatureVector>,
    ) -> Result<Vec<[f64; 2]>> {
        let out = self.net.forward(&self.inputs(xs)?)?;
        Ok(out.rows().into_iter().map(|r| [r[0], r[1]]).collect())
    }

    /// `(p(y=0|x), p(y=1|x))`.
    pub fn posterior(&self, x: &FeatureVector) -> Result<[f64; 2]> {
        Ok(softmax2(self.logits([x])?[0]))
    }
}

/// Per-sample Bernoulli probabilities `p_psi(o_{h,k} = 1 | x, y)` for every
/// window and class.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodTable {
    horizons: usize,
    behaviors: usize,
    probs: Vec<f64>,
}

impl LikelihoodTable {
    /// `probs` is laid out `[h][y][k]`.
    pub fn new(horizons: usize, behaviors: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizons * 2 * behaviors {
            return Err(Error::Shape("likelihood table size".into()));
        }
        Ok(Self {
            horizons,
            behaviors,
            probs,
        })
    }

    pub fn horizons(&self) -> usize {
        self.horizons
    }

    pub fn probs(&self, h: usize, y: usize) -> &[f64] {
        let at = (h * 2 + y) * self.behaviors;
        &self.probs[at..at + self.behaviors]
    }

    /// Factorized Bernoulli likelihood of the state row `o` at window `h`
    /// under class `y`, clamped away from 0 and 1.
    pub fn window_likelihood(&self, h: usize, y: usize, o: &[bool]) -> f64 {
        bernoulli_likelihood(self.probs(h, y), o)
    }

    /// Clamped likelihoods `[lik(y=0), lik(y=1)]` for every window of the
    /// view; masked windows hold `[1, 1]`.
    pub fn window_pairs(&self, view: &TrajectoryView) -> Vec<[f64; 2]> {
        (0..self.horizons)
            .map(|h| {
                if view.mask()[h] {
                    let row = view.row(h);
                    [
                        self.window_likelihood(h, 0, row),
                        self.window_likelihood(h, 1, row),
                    ]
                } else {
                    [1.0, 1.0]
                }
            })
            .collect()
    }
}

/// `prod_k p_k^{o_k} (1 - p_k)^{1 - o_k}`, clamped.
pub fn bernoulli_likelihood(probs: &[f64], o: &[bool]) -> f64 {
    let lik: f64 = probs
        .iter()
        .zip(o)
        .map(|(&p, &bit)| if bit { p } else { 1.0 - p })
        .product();
    lik.clamp(LIKELIHOOD_CLAMP, 1.0 - LIKELIHOOD_CLAMP)
}

/// `sum_h alpha_h * log lik_h[y]`; zero for an empty mask.
pub fn trajectory_score_from_pairs(
    mask: &[bool],
    pairs: &[[f64; 2]],
    y: usize,
    eta: &[f64],
    epsilon: f64,
) -> f64 {
    alpha_weights(mask, eta, epsilon)
        .iter()
        .zip(pairs)
        .filter(|(a, _)| **a != 0.0)
        .map(|(a, l)| a * l[y].ln())
        .sum()
}

/// Log-domain Bayesian fusion: softmax over `y` of `log p(y|x) + score(y)`.
pub fn fuse(static_logits: [f64; 2], scores: [f64; 2]) -> [f64; 2] {
    let ls = log_softmax2(static_logits);
    softmax2([ls[0] + scores[0], ls[1] + scores[1]])
}

#[derive(Debug, Clone)]
pub struct TrajectoryLikelihood {
    net: DenseNet,
    schema: FeatureSchema,
    horizons: usize,
    behaviors: usize,
    frozen: bool,
}

impl TrajectoryLikelihood {
    pub fn new(
        schema: FeatureSchema,
        arch: &Architecture,
        horizons: usize,
        behaviors: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = NetSpec {
            dense_inputs: schema.numeric + horizons + 2,
            embeddings: schema.embeddings(arch.emb_dim),
            hidden: arch.hidden.clone(),
            outputs: behaviors,
        };
        Ok(Self {
            net: DenseNet::new(spec, seed)?,
            schema,
            horizons,
            behaviors,
            frozen: false,
        })
    }

    pub fn from_net(
        net: DenseNet,
        schema: FeatureSchema,
        horizons: usize,
        behaviors: usize,
    ) -> Result<Self> {
        let s = net.spec();
        if s.outputs != behaviors || s.dense_inputs != schema.numeric + horizons + 2 {
            return Err(Error::Shape(
                "network does not fit a trajectory likelihood head".into(),
            ));
        }
        Ok(Self {
            net,
            schema,
            horizons,
            behaviors,
            frozen: true,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> Result<&mut DenseNet> {
        if self.frozen {
            return Err(Error::Config("trajectory likelihood is frozen".into()));
        }
        Ok(&mut self.net)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn horizons(&self) -> usize {
        self.horizons
    }

    pub fn behaviors(&self) -> usize {
        self.behaviors
    }

    /// Appends the input row for `(x, h, y)`.
    pub fn push_input(&self, inputs: &mut Inputs, x: &FeatureVector, h: usize, y: usize) {
        inputs.push_parts(
            &[&x.numeric, &one_hot(h, self.horizons), &one_hot(y, 2)],
            &x.categorical,
        );
    }

    /// Probability tables for a batch of feature vectors.
    pub fn tables<'a>(
        &self,
        xs: impl IntoIterator<Item = &'a FeatureVector>,
    ) -> Result<Vec<LikelihoodTable>> {
        let mut inputs = Inputs::with_capacity(self.net.spec(), 0);
        let mut n = 0;
        for x in xs {
            self.schema.check(x)?;
            for h in 0..self.horizons {
                for y in 0..2 {
                    self.push_input(&mut inputs, x, h, y);
                }
            }
            n += 1;
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let out = self.net.forward(&inputs)?;
        let per = self.horizons * 2 * self.behaviors;
        let flat: Vec<f64> = out.iter().map(|&z| sigmoid(z)).collect();
        flat.chunks(per)
            .map(|c| LikelihoodTable::new(self.horizons, self.behaviors, c.to_vec()))
            .collect()
    }

    pub fn table(&self, x: &FeatureVector) -> Result<LikelihoodTable> {
        Ok(self.tables([x])?.remove(0))
    }

    pub fn window_likelihood(
        &self,
        x: &FeatureVector,
        h: usize,
        y: usize,
        o: &[bool],
    ) -> Result<f64> {
        if h >= self.horizons || y > 1 || o.len() != self.behaviors {
            return Err(Error::Shape("window likelihood arguments".into()));
        }
        Ok(self.table(x)?.window_likelihood(h, y, o))
    }

    pub fn trajectory_score(
        &self,
        x: &FeatureVector,
        view: &TrajectoryView,
        y: usize,
        eta: &[f64],
        epsilon: f64,
    ) -> Result<f64> {
        if view.visible() == 0 {
            return Ok(0.0);
        }
        let pairs = self.table(x)?.window_pairs(view);
        Ok(trajectory_score_from_pairs(view.mask(), &pairs, y, eta, epsilon))
    }
}

/// Trajectory-conditional posterior `p(y | x, xi)`.
pub fn fused_posterior(
    intent: &StaticIntent,
    likelihood: &TrajectoryLikelihood,
    x: &FeatureVector,
    view: &TrajectoryView,
    eta: &[f64],
    epsilon: f64,
) -> Result<[f64; 2]> {
    let logits = intent.logits([x])?[0];
    let scores = [
        likelihood.trajectory_score(x, view, 0, eta, epsilon)?,
        likelihood.trajectory_score(x, view, 1, eta, epsilon)?,
    ];
    Ok(fuse(logits, scores))
}

#[derive(Debug, Clone)]
pub struct Completer {
    net: DenseNet,
    schema: FeatureSchema,
    horizons: usize,
    behaviors: usize,
    frozen: bool,
}

impl Completer {
    pub fn new(
        schema: FeatureSchema,
        arch: &Architecture,
        horizons: usize,
        behaviors: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut embeddings = schema.embeddings(arch.emb_dim);
        // horizon embedding e_k, k = 0..=H visible windows
        embeddings.push(EmbeddingSpec {
            rows: horizons + 1,
            dim: horizons,
        });
        let spec = NetSpec {
            dense_inputs: schema.numeric + horizons * behaviors + horizons,
            embeddings,
            hidden: arch.hidden.clone(),
            outputs: 1,
        };
        Ok(Self {
            net: DenseNet::new(spec, seed)?,
            schema,
            horizons,
            behaviors,
            frozen: false,
        })
    }

    pub fn from_net(
        net: DenseNet,
        schema: FeatureSchema,
        horizons: usize,
        behaviors: usize,
    ) -> Result<Self> {
        let s = net.spec();
        if s.outputs != 1
            || s.dense_inputs != schema.numeric + horizons * behaviors + horizons
            || s.embeddings.len() != schema.categorical.len() + 1
        {
            return Err(Error::Shape("network does not fit a completer head".into()));
        }
        Ok(Self {
            net,
            schema,
            horizons,
            behaviors,
            frozen: true,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> Result<&mut DenseNet> {
        if self.frozen {
            return Err(Error::Config("completer is frozen".into()));
        }
        Ok(&mut self.net)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn push_input(
        &self,
        inputs: &mut Inputs,
        x: &FeatureVector,
        view: &TrajectoryView,
    ) -> Result<()> {
        self.schema.check(x)?;
        if view.horizons() != self.horizons || view.behaviors() != self.behaviors {
            return Err(Error::Shape("trajectory shape differs from completer".into()));
        }
        let k = view.visible();
        if view.mask()[k..].iter().any(|&m| m) {
            return Err(Error::NonPrefixMask);
        }
        let states: Vec<f64> = view.states().iter().map(|&s| s as u8 as f64).collect();
        let mask: Vec<f64> = view.mask().iter().map(|&m| m as u8 as f64).collect();
        let mut cats = x.categorical.clone();
        cats.push(k as u32);
        inputs.push_parts(&[&x.numeric, &states, &mask], &cats);
        Ok(())
    }

    pub fn probs<'a>(
        &self,
        items: impl IntoIterator<Item = (&'a FeatureVector, &'a TrajectoryView)>,
    ) -> Result<Vec<f64>> {
        let mut inputs = Inputs::with_capacity(self.net.spec(), 0);
        for (x, v) in items {
            self.push_input(&mut inputs, x, v)?;
        }
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.net.forward(&inputs)?.iter().map(|&z| sigmoid(z)).collect())
    }

    /// `q_phi(y = 1 | x, xi)`.
    pub fn posterior(&self, x: &FeatureVector, view: &TrajectoryView) -> Result<f64> {
        Ok(self.probs([(x, view)])?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema {
            numeric: 3,
            categorical: vec![5, 4],
        }
    }

    fn arch() -> Architecture {
        Architecture {
            hidden: vec![8, 6],
            emb_dim: 3,
        }
    }

    fn x() -> FeatureVector {
        FeatureVector::new(vec![0.3, -1.2, 0.8], vec![4, 1])
    }

    #[test]
    fn zeroed_static_head_is_uniform() {
        let mut m = StaticIntent::new(schema(), &arch(), 1).unwrap();
        m.net_mut().zero_output_layer();
        assert_eq!(m.posterior(&x()).unwrap(), [0.5, 0.5]);
        m.net_mut().set_output_bias(&[0.0, 3f64.ln()]).unwrap();
        let p = m.posterior(&x()).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn static_posterior_matches_forward_plus_softmax() {
        let m = StaticIntent::new(schema(), &arch(), 7).unwrap();
        let mut inputs = Inputs::default();
        inputs.push(&x().numeric, &x().categorical);
        let z = m.net().forward(&inputs).unwrap();
        let (a, b) = (z[[0, 0]], z[[0, 1]]);
        let p1 = b.exp() / (a.exp() + b.exp());
        let p = m.posterior(&x()).unwrap();
        assert!((p[1] - p1).abs() < 1e-14);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let m = StaticIntent::new(schema(), &arch(), 1).unwrap();
        let bad = FeatureVector::new(vec![0.0; 2], vec![0, 0]);
        assert!(m.posterior(&bad).is_err());
        let bad = FeatureVector::new(vec![0.0; 3], vec![5, 0]);
        assert!(m.posterior(&bad).is_err());
    }

    #[test]
    fn bernoulli_likelihood_examples() {
        assert_eq!(bernoulli_likelihood(&[0.5], &[true]), 0.5);
        assert_eq!(bernoulli_likelihood(&[0.5], &[false]), 0.5);
        let l = bernoulli_likelihood(&[0.9, 0.5, 0.1], &[true, false, true]);
        assert!((l - 0.045).abs() < 1e-15);
        assert_eq!(bernoulli_likelihood(&[0.0], &[true]), LIKELIHOOD_CLAMP);
    }

    #[test]
    fn zero_logit_likelihood_is_half() {
        let mut t = TrajectoryLikelihood::new(schema(), &arch(), 4, 1, 2).unwrap();
        t.net_mut().unwrap().zero_output_layer();
        for h in 0..4 {
            assert_eq!(t.window_likelihood(&x(), h, 1, &[true]).unwrap(), 0.5);
        }
    }

    #[test]
    fn trajectory_score_conventions() {
        let t = TrajectoryLikelihood::new(schema(), &arch(), 3, 2, 2).unwrap();
        let eta = [0.5, 0.3, 0.2];
        let empty = TrajectoryView::empty(3, 2);
        assert_eq!(t.trajectory_score(&x(), &empty, 1, &eta, 1e-8).unwrap(), 0.0);

        let one = TrajectoryView::from_parts(
            3,
            2,
            vec![true, false, false, false, false, false],
            vec![true, false, false],
        )
        .unwrap();
        let s = t.trajectory_score(&x(), &one, 1, &eta, 1e-8).unwrap();
        let l = t.window_likelihood(&x(), 0, 1, &[true, false]).unwrap();
        assert!((s - l.ln()).abs() < 1e-7);
    }

    #[test]
    fn trajectory_score_hand_computed() {
        let table = LikelihoodTable::new(
            3,
            1,
            vec![0.2, 0.6, 0.3, 0.7, 0.1, 0.9], // [h][y][k]
        )
        .unwrap();
        let view =
            TrajectoryView::from_parts(3, 1, vec![false, true, true], vec![true; 3]).unwrap();
        let eta = [0.5, 0.3, 0.2];
        let eps = 1e-8;
        let pairs = table.window_pairs(&view);
        let z = 1.0 + eps;
        let want1 = (0.5 * 0.4f64.ln() + 0.3 * 0.7f64.ln() + 0.2 * 0.9f64.ln()) / z;
        let want0 = (0.5 * 0.8f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.1f64.ln()) / z;
        let got1 = trajectory_score_from_pairs(view.mask(), &pairs, 1, &eta, eps);
        let got0 = trajectory_score_from_pairs(view.mask(), &pairs, 0, &eta, eps);
        assert!((got1 - want1).abs() < 1e-14);
        assert!((got0 - want0).abs() < 1e-14);
    }

    #[test]
    fn fusion_examples() {
        let s = [0.3, -0.4];
        let p = fuse(s, [0.0, 0.0]);
        let q = softmax2(s);
        assert!((p[0] - q[0]).abs() < 1e-15);
        let p = fuse(s, [-1.7, -1.7]);
        assert!((p[1] - q[1]).abs() < 1e-15);
        let p = fuse([0.0, 0.0], [0.2f64.ln(), 0.8f64.ln()]);
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn empty_mask_fused_equals_static() {
        let m = StaticIntent::new(schema(), &arch(), 3).unwrap();
        let t = TrajectoryLikelihood::new(schema(), &arch(), 3, 1, 4).unwrap();
        let view = TrajectoryView::empty(3, 1);
        let fused = fused_posterior(&m, &t, &x(), &view, &[0.3, 0.3, 0.4], 1e-8).unwrap();
        assert_eq!(fused, m.posterior(&x()).unwrap());
    }

    #[test]
    fn completer_zero_head_and_prefix_check() {
        let mut c = Completer::new(schema(), &arch(), 3, 2, 5).unwrap();
        c.net_mut().unwrap().zero_output_layer();
        for k in 0..=3 {
            let full = TrajectoryView::from_parts(3, 2, vec![true; 6], vec![true; 3]).unwrap();
            assert_eq!(c.posterior(&x(), &full.truncated(k)).unwrap(), 0.5);
        }
        c.freeze();
        assert!(c.net_mut().is_err());
    }

    #[test]
    fn frozen_after_load() {
        let t = TrajectoryLikelihood::new(schema(), &arch(), 3, 1, 4).unwrap();
        let mut loaded = TrajectoryLikelihood::from_net(t.net().clone(), schema(), 3, 1).unwrap();
        assert!(loaded.is_frozen());
        assert!(loaded.net_mut().is_err());
    }
}
