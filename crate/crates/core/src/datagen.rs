//! Synthetic delayed-feedback logs with known ground truth.
//!
//! Every sample draws from its own ChaCha stream, so the log is a pure
//! function of the spec and each sample can be regenerated in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::FeatureSchema;
use crate::event::{ClickEvent, FeatureVector, HorizonConfig, Timestamp};
use crate::metrics::auc;
use crate::nn::sigmoid;

const DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureDims {
    pub numeric: usize,
    /// Cardinality of each categorical field.
    pub categorical: Vec<usize>,
}

impl Default for FeatureDims {
    fn default() -> Self {
        Self {
            numeric: 8,
            categorical: vec![16, 32, 64, 8],
        }
    }
}

/// Logistic conversion model. Weights are drawn from the seed with the given
/// scales; a zero scale gives zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvrModel {
    pub bias: f64,
    pub numeric_scale: f64,
    pub categorical_scale: f64,
    /// Scale of a second weight vector whose contribution ramps linearly
    /// from `-1` to `+1` over the span.
    pub drift_scale: f64,
}

impl Default for CvrModel {
    fn default() -> Self {
        Self {
            bias: -1.0,
            numeric_scale: 1.0,
            categorical_scale: 1.0,
            drift_scale: 0.25,
        }
    }
}

/// Two-component exponential delay mixture. The fast fraction is a logistic
/// function of the features around `fast_fraction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayModel {
    pub fast_fraction: f64,
    /// Scale of the feature effects on the fast fraction logit.
    pub fast_feature_scale: f64,
    pub mean_fast: f64,
    pub mean_slow: f64,
    /// Lowers the fast fraction logit by this multiple of the drift-free
    /// conversion logit, so likelier converters tend to convert later.
    pub cvr_coupling: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            fast_fraction: 0.3,
            fast_feature_scale: 0.0,
            mean_fast: 3_600.0,
            mean_slow: 1.25 * DAY as f64,
            cvr_coupling: 2.0,
        }
    }
}

/// A non-purchase behavior: occurrence probability and mean delay, each
/// conditioned on the final label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    pub name: String,
    pub prob_pos: f64,
    pub prob_neg: f64,
    pub mean_delay_pos: f64,
    pub mean_delay_neg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub n_samples: usize,
    pub start_ts: Timestamp,
    pub span_secs: i64,
    pub d_max: i64,
    pub seed: u64,
    pub features: FeatureDims,
    pub cvr: CvrModel,
    pub delay: DelayModel,
    pub behaviors: Vec<BehaviorModel>,
    /// Whether purchases are appended as the last tracked behavior.
    pub track_purchase: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_samples: 200_000,
            start_ts: 0,
            span_secs: 10 * DAY,
            d_max: 3 * DAY,
            seed: 0,
            features: FeatureDims::default(),
            cvr: CvrModel::default(),
            delay: DelayModel::default(),
            behaviors: vec![
                BehaviorModel {
                    name: "cart".into(),
                    prob_pos: 0.8,
                    prob_neg: 0.05,
                    mean_delay_pos: 900.0,
                    mean_delay_neg: 3_600.0,
                },
                BehaviorModel {
                    name: "favorite".into(),
                    prob_pos: 0.5,
                    prob_neg: 0.05,
                    mean_delay_pos: 1_800.0,
                    mean_delay_neg: 7_200.0,
                },
            ],
            track_purchase: true,
        }
    }
}

impl GeneratorSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::GeneratorSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::GeneratorSpec(m.to_string()));
        if self.n_samples == 0 {
            return fail("n_samples must be positive");
        }
        if self.span_secs <= 0 || self.d_max <= 0 {
            return fail("span and d_max must be positive");
        }
        if self.features.categorical.iter().any(|&c| c == 0 || c > u32::MAX as usize) {
            return fail("categorical cardinalities must be positive");
        }
        let c = &self.cvr;
        let scales = [c.bias, c.numeric_scale, c.categorical_scale, c.drift_scale];
        if scales.iter().any(|v| !v.is_finite()) {
            return fail("logistic weights must be finite");
        }
        let d = &self.delay;
        if !(0.0..=1.0).contains(&d.fast_fraction) || !d.fast_feature_scale.is_finite() {
            return fail("fast fraction must be in [0, 1]");
        }
        if !d.cvr_coupling.is_finite() {
            return fail("cvr coupling must be finite");
        }
        if !(d.mean_fast > 0.0 && d.mean_slow > 0.0) {
            return fail("delay means must be positive");
        }
        for b in &self.behaviors {
            if !(0.0..=1.0).contains(&b.prob_pos) || !(0.0..=1.0).contains(&b.prob_neg) {
                return fail("behavior probabilities must be in [0, 1]");
            }
            if !(b.mean_delay_pos > 0.0 && b.mean_delay_neg > 0.0) {
                return fail("behavior delay means must be positive");
            }
        }
        if self.behaviors.is_empty() && !self.track_purchase {
            return fail("at least one tracked behavior required");
        }
        Ok(())
    }

    pub fn behavior_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.behaviors.iter().map(|b| b.name.clone()).collect();
        if self.track_purchase {
            names.push("purchase".into());
        }
        names
    }

    pub fn purchase_index(&self) -> Option<usize> {
        self.track_purchase.then_some(self.behaviors.len())
    }

    pub fn feature_schema(&self) -> FeatureSchema {
        FeatureSchema {
            numeric: self.features.numeric,
            categorical: self.features.categorical.clone(),
        }
    }

    /// Taobao-style windows scaled to `d_max`, ending exactly at `d_max`.
    pub fn horizon_config(&self) -> Result<HorizonConfig> {
        let base = HorizonConfig::taobao();
        let scale = self.d_max as f64 / base.d_max() as f64;
        let mut b: Vec<i64> = base
            .boundaries()
            .iter()
            .map(|&x| ((x as f64 * scale).round() as i64).max(1))
            .collect();
        *b.last_mut().expect("nonempty") = self.d_max;
        b.dedup();
        HorizonConfig::new(b, self.behavior_names(), self.purchase_index())
    }
}

/// Hidden parameters derived from the spec seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel {
    spec: GeneratorSpec,
    w_num: Vec<f64>,
    w_cat: Vec<Vec<f64>>,
    w_drift: Vec<f64>,
    f_num: Vec<f64>,
    f_cat: Vec<Vec<f64>>,
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GroundTruthModel {
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::MAX);
        let dn = spec.features.numeric;
        let cats = &spec.features.categorical;
        // scale by field count so the logit variance stays comparable
        let num_scale = spec.cvr.numeric_scale / (dn.max(1) as f64).sqrt();
        let cat_scale = spec.cvr.categorical_scale / (cats.len().max(1) as f64).sqrt();
        let drift_scale = spec.cvr.drift_scale / (dn.max(1) as f64).sqrt();
        let fast_scale = spec.delay.fast_feature_scale / ((dn + cats.len()).max(1) as f64).sqrt();
        let w_num = normals(&mut rng, dn, num_scale);
        let w_cat = cats.iter().map(|&c| normals(&mut rng, c, cat_scale)).collect();
        let w_drift = normals(&mut rng, dn, drift_scale);
        let f_num = normals(&mut rng, dn, fast_scale);
        let f_cat = cats.iter().map(|&c| normals(&mut rng, c, fast_scale)).collect();
        Ok(Self {
            spec: spec.clone(),
            w_num,
            w_cat,
            w_drift,
            f_num,
            f_cat,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Probability that the click ever converts.
    pub fn p_cvr(&self, x: &FeatureVector, t: Timestamp) -> f64 {
        let s = &self.spec;
        let ramp = 2.0 * (t - s.start_ts) as f64 / s.span_secs as f64 - 1.0;
        let mut z = s.cvr.bias;
        for (i, v) in x.numeric.iter().enumerate() {
            z += v * (self.w_num[i] + ramp * self.w_drift[i]);
        }
        for (f, &c) in x.categorical.iter().enumerate() {
            z += self.w_cat[f][c as usize];
        }
        sigmoid(z)
    }

    pub fn fast_fraction(&self, x: &FeatureVector) -> f64 {
        let f = self.spec.delay.fast_fraction;
        if f <= 0.0 || f >= 1.0 {
            return f;
        }
        let mut z = logit(f);
        for (i, v) in x.numeric.iter().enumerate() {
            z += v * self.f_num[i];
        }
        for (j, &c) in x.categorical.iter().enumerate() {
            z += self.f_cat[j][c as usize];
        }
        let coupling = self.spec.delay.cvr_coupling;
        if coupling != 0.0 {
            let mut c = 0.0;
            for (i, v) in x.numeric.iter().enumerate() {
                c += v * self.w_num[i];
            }
            for (f, &k) in x.categorical.iter().enumerate() {
                c += self.w_cat[f][k as usize];
            }
            z -= coupling * c;
        }
        sigmoid(z)
    }

    /// `P(delay <= d_max | x)`.
    pub fn attribution_probability(&self, x: &FeatureVector) -> f64 {
        let d = &self.spec.delay;
        let f = self.fast_fraction(x);
        let dm = self.spec.d_max as f64;
        f * (1.0 - (-dm / d.mean_fast).exp()) + (1.0 - f) * (1.0 - (-dm / d.mean_slow).exp())
    }

    /// Ground-truth `p*(y = 1 | x)` at click time `t`.
    pub fn p_star(&self, x: &FeatureVector, t: Timestamp) -> f64 {
        self.p_cvr(x, t) * self.attribution_probability(x)
    }
}

/// One row of the ground-truth side file.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub sample_id: u64,
    pub p_star: f64,
    pub y: bool,
    /// Conversion delay in seconds, if the click ever converts.
    pub delay: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub log: Vec<ClickEvent>,
    pub truth: Vec<TruthRow>,
}

fn exp_delay(rng: &mut ChaCha8Rng, mean: f64) -> i64 {
    let d: f64 = Exp::new(1.0 / mean).expect("positive mean").sample(rng);
    (d.ceil() as i64).max(1)
}

fn sample_event(model: &GroundTruthModel, i: usize) -> (ClickEvent, TruthRow) {
    let s = &model.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(i as u64);
    // stratified arrivals: one uniform draw inside each 1/n slot
    let u: f64 = rng.random();
    let click_ts = s.start_ts + (((i as f64 + u) / s.n_samples as f64) * s.span_secs as f64) as i64;
    let numeric: Vec<f64> = (0..s.features.numeric)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let categorical: Vec<u32> = s
        .features
        .categorical
        .iter()
        .map(|&c| rng.random_range(0..c as u32))
        .collect();
    let features = FeatureVector::new(numeric, categorical);

    let converts = rng.random_bool(model.p_cvr(&features, click_ts));
    let fast = rng.random_bool(model.fast_fraction(&features));
    let mean = if fast { s.delay.mean_fast } else { s.delay.mean_slow };
    let delay = exp_delay(&mut rng, mean);
    let delay = converts.then_some(delay);
    let y = matches!(delay, Some(d) if d <= s.d_max);

    let mut behavior_ts = Vec::with_capacity(s.behaviors.len() + 1);
    for b in &s.behaviors {
        let (p, mean) = if y {
            (b.prob_pos, b.mean_delay_pos)
        } else {
            (b.prob_neg, b.mean_delay_neg)
        };
        let happens = rng.random_bool(p);
        let d = exp_delay(&mut rng, mean);
        behavior_ts.push(happens.then_some(click_ts + d));
    }
    let conv_ts = delay.map(|d| click_ts + d);
    if s.track_purchase {
        behavior_ts.push(conv_ts);
    }
    let p_star = model.p_star(&features, click_ts);
    let sample_id = i as u64;
    (
        ClickEvent {
            sample_id,
            features,
            click_ts,
            conv_ts,
            behavior_ts,
        },
        TruthRow {
            sample_id,
            p_star,
            y,
            delay,
        },
    )
}

/// Draws the log and its ground-truth table. Pure in `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    let model = GroundTruthModel::new(spec)?;
    let (log, truth) = (0..spec.n_samples).map(|i| sample_event(&model, i)).unzip();
    Ok(Generated { log, truth })
}

/// AUC of `p_star` against the realized labels: the Bayes-optimal ceiling.
pub fn bayes_auc(truth: &[TruthRow]) -> Result<f64> {
    let pairs: Vec<(f64, bool)> = truth.iter().map(|t| (t.p_star, t.y)).collect();
    let first = pairs.first().map(|p| p.0);
    if pairs.iter().all(|p| Some(p.0) == first) {
        return Err(Error::UndefinedMetric("bayes auc with constant scores"));
    }
    auc(&pairs)
}
