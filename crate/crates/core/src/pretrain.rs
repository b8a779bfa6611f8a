//! Offline pretraining on full-lifecycle samples: entropy-based window
//! weights, the trajectory likelihood, the completer and the warm-start
//! static intent.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Architecture, Completer, FeatureSchema, StaticIntent, TrajectoryLikelihood};
use crate::event::{full_trajectory, ground_truth_label, ClickEvent, FeatureVector, HorizonConfig, TrajectoryView};
use crate::nn::{log_softmax2, sigmoid, softmax2, Adam, DenseNet, Inputs};

/// Pre-computed window weights `eta` and normalized conditional entropies.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowWeights {
    pub eta: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub beta: f64,
}

impl WindowWeights {
    /// One line per window: `h c_tilde eta`, preceded by a `# beta` line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# beta {}\n# h\tc_tilde\teta\n", self.beta);
        for (h, (c, e)) in self.c_tilde.iter().zip(&self.eta).enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", h + 1, c, e);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::Parse {
            path: "window_weights".into(),
            line,
            reason: reason.to_string(),
        };
        let mut beta = None;
        let mut eta = Vec::new();
        let mut c_tilde = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# beta") {
                beta = Some(rest.trim().parse().map_err(|_| bad(i + 1, "bad beta"))?);
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(i + 1, "expected h, c_tilde, eta"));
            }
            let h: usize = fields[0].parse().map_err(|_| bad(i + 1, "bad window index"))?;
            if h != eta.len() + 1 {
                return Err(bad(i + 1, "window indices must be 1..H in order"));
            }
            c_tilde.push(fields[1].parse().map_err(|_| bad(i + 1, "bad c_tilde"))?);
            eta.push(fields[2].parse().map_err(|_| bad(i + 1, "bad eta"))?);
        }
        let beta = beta.ok_or_else(|| bad(0, "missing beta line"))?;
        if eta.is_empty() {
            return Err(bad(0, "no windows"));
        }
        Ok(Self { eta, c_tilde, beta })
    }
}

/// A fully observed sample: label and complete trajectory.
#[derive(Debug, Clone)]
pub struct LifecycleSample {
    pub features: FeatureVector,
    pub label: bool,
    pub trajectory: TrajectoryView,
}

pub fn lifecycle_samples(log: &[ClickEvent], cfg: &HorizonConfig) -> Vec<LifecycleSample> {
    log.iter()
        .map(|e| LifecycleSample {
            features: e.features.clone(),
            label: ground_truth_label(e, cfg.d_max()),
            trajectory: full_trajectory(e, cfg),
        })
        .collect()
}

/// Empirical `H(y | o_h)` per window, treating the K-bit state as one
/// discrete variable. Natural log.
pub fn conditional_entropy_per_window(data: &[LifecycleSample]) -> Result<Vec<f64>> {
    let first = data
        .first()
        .ok_or_else(|| Error::Config("conditional entropy of empty data".into()))?;
    let horizons = first.trajectory.horizons();
    let n = data.len() as f64;
    let mut out = Vec::with_capacity(horizons);
    for h in 0..horizons {
        let mut counts: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
        for s in data {
            if s.trajectory.horizons() != horizons || !s.trajectory.mask()[h] {
                return Err(Error::Config("samples must carry full trajectories".into()));
            }
            let key = s
                .trajectory
                .row(h)
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &b)| acc | ((b as u64) << k));
            let c = counts.entry(key).or_default();
            c.0 += 1;
            c.1 += s.label as usize;
        }
        let entropy = counts
            .values()
            .map(|&(total, pos)| {
                let p = pos as f64 / total as f64;
                let term = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
                (total as f64 / n) * (term(p) + term(1.0 - p))
            })
            .sum();
        out.push(entropy);
    }
    Ok(out)
}

/// `eta_h ∝ (H-h+1)^-1 exp(-h/H - beta C_h)` with `C = entropies / max`.
pub fn compute_window_weights(entropies: &[f64], beta: f64) -> WindowWeights {
    let horizons = entropies.len();
    let max = entropies.iter().cloned().fold(0.0, f64::max);
    let c_tilde: Vec<f64> = if max > 0.0 {
        entropies.iter().map(|e| e / max).collect()
    } else {
        vec![0.0; horizons]
    };
    let hf = horizons as f64;
    let raw: Vec<f64> = c_tilde
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let h = (i + 1) as f64;
            (-(h / hf) - beta * c).exp() / (hf - h + 1.0)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    WindowWeights {
        eta: raw.iter().map(|r| r / total).collect(),
        c_tilde,
        beta,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Fraction held out for early stopping.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 4096,
            learning_rate: 1e-3,
            l2: 1e-6,
            holdout: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Head {
    /// Two logits, one class target per row.
    Softmax2,
    /// Independent Bernoulli logits, one target per output.
    Sigmoid,
}

/// Mean loss per row and its gradient with respect to the logits.
fn head_loss(logits: &Array2<f64>, targets: &[f64], head: Head) -> (f64, Array2<f64>) {
    let rows = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    match head {
        Head::Softmax2 => {
            for (r, z) in logits.rows().into_iter().enumerate() {
                let y = targets[r] as usize;
                let z = [z[0], z[1]];
                loss -= log_softmax2(z)[y];
                let p = softmax2(z);
                grad[[r, 0]] = (p[0] - (y == 0) as u8 as f64) / rows;
                grad[[r, 1]] = (p[1] - (y == 1) as u8 as f64) / rows;
            }
        }
        Head::Sigmoid => {
            for ((g, &z), &t) in grad.iter_mut().zip(logits.iter()).zip(targets) {
                loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
                *g = (sigmoid(z) - t) / rows;
            }
        }
    }
    (loss / rows, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub epochs_run: usize,
    pub best_holdout: Option<f64>,
}

/// Mini-batch Adam over `units` with early stopping on a held-out slice.
/// `build` turns a list of unit indices into network inputs and targets.
fn fit<F>(
    net: &mut DenseNet,
    units: usize,
    cfg: &TrainConfig,
    head: Head,
    mut build: F,
) -> Result<FitReport>
where
    F: FnMut(&[usize], &mut ChaCha8Rng) -> Result<(Inputs, Vec<f64>)>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(&mut rng);
    let n_hold = if units >= 20 {
        ((units as f64) * cfg.holdout).round() as usize
    } else {
        0
    };
    let (holdout, train) = order.split_at(n_hold);
    let (holdout, mut train) = (holdout.to_vec(), train.to_vec());
    let batch = cfg.batch_size.max(1);
    let mut opt = Adam::new(net.param_count(), cfg.learning_rate, cfg.l2);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut epochs_run = 0;

    for _ in 0..cfg.epochs {
        epochs_run += 1;
        train.shuffle(&mut rng);
        for chunk in train.chunks(batch) {
            let (inputs, targets) = build(chunk, &mut rng)?;
            let (logits, tape) = net.forward_tape(&inputs)?;
            let (_, grad) = head_loss(&logits, &targets, head);
            let grads = net.backward(&tape, &grad)?;
            opt.step(net, &grads)?;
        }
        if holdout.is_empty() {
            continue;
        }
        // fixed draws so holdout losses are comparable across epochs
        let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
        let mut total = 0.0;
        let mut rows = 0usize;
        for chunk in holdout.chunks(batch) {
            let (inputs, targets) = build(chunk, &mut eval_rng)?;
            let logits = net.forward(&inputs)?;
            let (loss, _) = head_loss(&logits, &targets, head);
            total += loss * logits.nrows() as f64;
            rows += logits.nrows();
        }
        let loss = total / rows.max(1) as f64;
        match &best {
            Some((b, _)) if loss >= *b => break,
            _ => best = Some((loss, net.params().to_vec())),
        }
    }
    if let Some((_, params)) = &best {
        net.params_mut().copy_from_slice(params);
    }
    Ok(FitReport {
        epochs_run,
        best_holdout: best.map(|b| b.0),
    })
}

/// Binary cross-entropy training of the static intent on ground-truth labels.
pub fn pretrain_static_intent(
    data: &[LifecycleSample],
    schema: &FeatureSchema,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<StaticIntent> {
    let mut model = StaticIntent::new(schema.clone(), arch, cfg.seed.wrapping_add(1))?;
    let spec = model.net().spec().clone();
    for s in data {
        schema.check(&s.features)?;
    }
    fit(model.net_mut(), data.len(), cfg, Head::Softmax2, |idx, _| {
        let mut inputs = Inputs::with_capacity(&spec, idx.len());
        let mut targets = Vec::with_capacity(idx.len());
        for &i in idx {
            inputs.push(&data[i].features.numeric, &data[i].features.categorical);
            targets.push(data[i].label as u8 as f64);
        }
        Ok((inputs, targets))
    })?;
    Ok(model)
}

/// Per-window Bernoulli cross-entropy of `p_psi(o_h | x, y)` with the true
/// label as input. Returns the model frozen.
pub fn pretrain_trajectory_likelihood(
    data: &[LifecycleSample],
    schema: &FeatureSchema,
    arch: &Architecture,
    horizons: usize,
    behaviors: usize,
    cfg: &TrainConfig,
) -> Result<TrajectoryLikelihood> {
    let mut model =
        TrajectoryLikelihood::new(schema.clone(), arch, horizons, behaviors, cfg.seed.wrapping_add(2))?;
    for s in data {
        schema.check(&s.features)?;
    }
    let shape = model.clone();
    fit(model.net_mut()?, data.len(), cfg, Head::Sigmoid, |idx, _| {
        let mut inputs = Inputs::with_capacity(shape.net().spec(), idx.len() * horizons);
        let mut targets = Vec::with_capacity(idx.len() * horizons * behaviors);
        for &i in idx {
            let s = &data[i];
            for h in 0..horizons {
                shape.push_input(&mut inputs, &s.features, h, s.label as usize);
                targets.extend(s.trajectory.row(h).iter().map(|&b| b as u8 as f64));
            }
        }
        Ok((inputs, targets))
    })?;
    model.freeze();
    Ok(model)
}

/// Uniform truncation point in `1..=horizons`.
pub fn draw_truncation(rng: &mut impl Rng, horizons: usize) -> usize {
    rng.random_range(1..=horizons)
}

/// Completer training with a fresh random truncation per sample per epoch.
/// Returns the model frozen.
pub fn pretrain_completer(
    data: &[LifecycleSample],
    schema: &FeatureSchema,
    arch: &Architecture,
    horizons: usize,
    behaviors: usize,
    cfg: &TrainConfig,
) -> Result<Completer> {
    let mut model = Completer::new(schema.clone(), arch, horizons, behaviors, cfg.seed.wrapping_add(3))?;
    let shape = model.clone();
    fit(model.net_mut()?, data.len(), cfg, Head::Sigmoid, |idx, rng| {
        let mut inputs = Inputs::with_capacity(shape.net().spec(), idx.len());
        let mut targets = Vec::with_capacity(idx.len());
        for &i in idx {
            let s = &data[i];
            let k = draw_truncation(rng, horizons);
            shape.push_input(&mut inputs, &s.features, &s.trajectory.truncated(k))?;
            targets.push(s.label as u8 as f64);
        }
        Ok((inputs, targets))
    })?;
    model.freeze();
    Ok(model)
}
