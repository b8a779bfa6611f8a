//! Time-ordered replay with delayed feedback and predict-then-update
//! training.
//!
//! Learners only see the log through [`FeedbackSource`]. Feedback is
//! requested at the current clock, so nothing later than `tau` can reach the
//! trace or vanilla objectives. Ground truth is reachable through
//! [`FeedbackSource::ground_truth`] (oracle only) and
//! [`FeedbackSource::eval_label`] (evaluator only).

use std::cell::RefCell;
use std::collections::HashMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Completer, LikelihoodTable, StaticIntent, TrajectoryLikelihood};
use crate::event::{
    build_trajectory, ground_truth_label, is_revealed, observed_label, revealed_label, ClickEvent,
    FeatureVector, HorizonConfig, Timestamp, TrajectoryView,
};
use crate::losses::{
    bce_objective, consistency_term, gates, trace_objective, GateConfig, LossBreakdown,
    ObjectiveConfig, SampleTerms,
};
use crate::metrics::{aggregate, Aggregate, IntervalMetrics, MetricAccumulator};
use crate::nn::{softmax2, Adam};
use crate::pretrain::WindowWeights;

/// Read access to a time-sorted click log.
pub trait FeedbackSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn click_ts(&self, i: usize) -> Timestamp;

    fn features(&self, i: usize) -> &FeatureVector;

    /// Called whenever the replay clock moves.
    fn on_clock(&self, _tau: Timestamp) {}

    /// Sample `i` as observable at `tau`.
    fn observe(&self, i: usize, tau: Timestamp) -> ClickEvent;

    /// Samples whose conversion arrives in `(lo, hi]`, ascending.
    fn conversions_in(&self, lo: Timestamp, hi: Timestamp) -> Vec<usize>;

    /// Final attributed label, for the oracle backbone.
    fn ground_truth(&self, i: usize) -> bool;

    /// Final attributed label, for scoring predictions.
    fn eval_label(&self, i: usize) -> bool;
}

/// In-memory source over a sorted log.
#[derive(Debug, Clone)]
pub struct LogSource<'a> {
    log: &'a [ClickEvent],
    d_max: i64,
    /// `(conv_ts, index)` sorted by time.
    conversions: Vec<(Timestamp, usize)>,
}

impl<'a> LogSource<'a> {
    pub fn new(log: &'a [ClickEvent], d_max: i64) -> Result<Self> {
        if log.windows(2).any(|w| w[0].click_ts > w[1].click_ts) {
            return Err(Error::Stream("log is not sorted by click time".into()));
        }
        let mut conversions: Vec<(Timestamp, usize)> = log
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.conv_ts.map(|v| (v, i)))
            .collect();
        conversions.sort_unstable();
        Ok(Self {
            log,
            d_max,
            conversions,
        })
    }
}

impl FeedbackSource for LogSource<'_> {
    fn len(&self) -> usize {
        self.log.len()
    }

    fn click_ts(&self, i: usize) -> Timestamp {
        self.log[i].click_ts
    }

    fn features(&self, i: usize) -> &FeatureVector {
        &self.log[i].features
    }

    fn observe(&self, i: usize, tau: Timestamp) -> ClickEvent {
        self.log[i].censored(tau)
    }

    fn conversions_in(&self, lo: Timestamp, hi: Timestamp) -> Vec<usize> {
        let a = self.conversions.partition_point(|&(t, _)| t <= lo);
        let b = self.conversions.partition_point(|&(t, _)| t <= hi);
        let mut out: Vec<usize> = self.conversions[a..b].iter().map(|&(_, i)| i).collect();
        out.sort_unstable();
        out
    }

    fn ground_truth(&self, i: usize) -> bool {
        ground_truth_label(&self.log[i], self.d_max)
    }

    fn eval_label(&self, i: usize) -> bool {
        ground_truth_label(&self.log[i], self.d_max)
    }
}

/// Counters kept by [`AuditedSource`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditLog {
    pub clock: Option<Timestamp>,
    pub observes: usize,
    pub timestamps_read: usize,
    /// Feedback timestamps handed out that lie beyond the clock.
    pub lookahead_reads: usize,
    /// Requests for feedback at a time beyond the clock.
    pub future_requests: usize,
    pub ground_truth_reads: usize,
    pub eval_reads: usize,
}

/// Test double that records every feedback access against the clock.
#[derive(Debug)]
pub struct AuditedSource<'a> {
    inner: LogSource<'a>,
    audit: RefCell<AuditLog>,
}

impl<'a> AuditedSource<'a> {
    pub fn new(inner: LogSource<'a>) -> Self {
        Self {
            inner,
            audit: RefCell::new(AuditLog::default()),
        }
    }

    pub fn audit(&self) -> AuditLog {
        self.audit.borrow().clone()
    }

    fn check_request(&self, tau: Timestamp) {
        let mut a = self.audit.borrow_mut();
        if matches!(a.clock, Some(c) if tau > c) || a.clock.is_none() {
            a.future_requests += 1;
        }
    }
}

impl FeedbackSource for AuditedSource<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn click_ts(&self, i: usize) -> Timestamp {
        self.inner.click_ts(i)
    }

    fn features(&self, i: usize) -> &FeatureVector {
        self.inner.features(i)
    }

    fn on_clock(&self, tau: Timestamp) {
        self.audit.borrow_mut().clock = Some(tau);
    }

    fn observe(&self, i: usize, tau: Timestamp) -> ClickEvent {
        self.check_request(tau);
        let e = self.inner.observe(i, tau);
        let mut a = self.audit.borrow_mut();
        a.observes += 1;
        let clock = a.clock.unwrap_or(Timestamp::MIN);
        for t in e.conv_ts.iter().chain(e.behavior_ts.iter().flatten()) {
            a.timestamps_read += 1;
            if *t > clock {
                a.lookahead_reads += 1;
            }
        }
        e
    }

    fn conversions_in(&self, lo: Timestamp, hi: Timestamp) -> Vec<usize> {
        self.check_request(hi);
        let out = self.inner.conversions_in(lo, hi);
        let mut a = self.audit.borrow_mut();
        a.timestamps_read += out.len();
        if matches!(a.clock, Some(c) if hi > c) {
            a.lookahead_reads += out.len();
        }
        out
    }

    fn ground_truth(&self, i: usize) -> bool {
        self.audit.borrow_mut().ground_truth_reads += 1;
        self.inner.ground_truth(i)
    }

    fn eval_label(&self, i: usize) -> bool {
        self.audit.borrow_mut().eval_reads += 1;
        self.inner.eval_label(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Trace,
    Vanilla,
    Oracle,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::Trace => "trace",
            Backbone::Vanilla => "vanilla",
            Backbone::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(Backbone::Trace),
            "vanilla" => Ok(Backbone::Vanilla),
            "oracle" => Ok(Backbone::Oracle),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Static posterior online, no trajectory loss.
    pub no_traj: bool,
    /// No completer and no consistency term.
    pub no_retro: bool,
    /// Every gate fixed to 1.
    pub no_gate: bool,
}

impl Ablation {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_traj {
            parts.push("no_traj");
        }
        if self.no_retro {
            parts.push("no_retro");
        }
        if self.no_gate {
            parts.push("no_gate");
        }
        parts.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub delta: i64,
    pub lambda: f64,
    pub gate: GateConfig,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub ablation: Ablation,
    /// Adds the gated consistency term to vanilla or oracle.
    pub plugin: bool,
    /// Train on every clicked sample at every step instead of the changed ones.
    pub full_prefix: bool,
    /// Seeds the mini-batch shuffle.
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            delta: 3_600,
            lambda: 0.1,
            gate: GateConfig::default(),
            batch_size: 4096,
            learning_rate: 1e-3,
            l2: 1e-6,
            ablation: Ablation::default(),
            plugin: false,
            full_prefix: false,
            seed: 0,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta <= 0 {
            return Err(Error::Config("delta must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.gate.validate()
    }
}

/// Frozen pretrained parts used by the trace objective and the plug-in.
#[derive(Debug, Clone, Copy)]
pub struct Auxiliary<'a> {
    pub likelihood: Option<&'a TrajectoryLikelihood>,
    pub completer: Option<&'a Completer>,
    pub weights: Option<&'a WindowWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Unclicked,
    Pending,
    Revealed,
}

/// Replay clock and per-sample bookkeeping.
#[derive(Debug, Clone)]
pub struct StreamState {
    pub tau: Timestamp,
    pub delta: i64,
    status: Vec<Status>,
    /// First sample that can still be pending at the start.
    origin: usize,
    /// First sample of the prediction range.
    first: usize,
    pending: usize,
    pub accumulators: Vec<MetricAccumulator>,
}

impl StreamState {
    /// Streaming predicts the samples clicked after `start`. Earlier clicks
    /// still unrevealed at `start` carry over as pending.
    pub fn new(source: &dyn FeedbackSource, start: Timestamp, delta: i64, d_max: i64) -> Self {
        let n = source.len();
        source.on_clock(start);
        let origin = partition(source, |c| c < start - d_max);
        let first = partition(source, |c| c <= start);
        let mut status = vec![Status::Unclicked; n];
        let mut pending = 0;
        for (i, s) in status.iter_mut().enumerate().take(first) {
            *s = if i >= origin && !is_revealed(&source.observe(i, start), start, d_max) {
                pending += 1;
                Status::Pending
            } else {
                Status::Revealed
            };
        }
        Self {
            tau: start,
            delta,
            status,
            origin,
            first,
            pending,
            accumulators: Vec::new(),
        }
    }

    pub fn pending_count(&self) -> usize {
        self.pending
    }

    pub fn is_pending(&self, i: usize) -> bool {
        self.status[i] == Status::Pending
    }

    pub fn is_revealed(&self, i: usize) -> bool {
        self.status[i] == Status::Revealed
    }

    pub fn first_index(&self) -> usize {
        self.first
    }
}

/// Index of the first sample whose click time fails `pred`.
fn partition(source: &dyn FeedbackSource, pred: impl Fn(Timestamp) -> bool) -> usize {
    let (mut lo, mut hi) = (0, source.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(source.click_ts(mid)) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// One training example observed at `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub index: usize,
    pub observed: ClickEvent,
    pub view: TrajectoryView,
    pub revealed: Option<bool>,
    /// Conversion visible at `min(tau, click + d_max)`.
    pub observed_label: bool,
}

/// Samples whose observable state changed in `(tau - delta, tau]`: new
/// clicks, pending samples that gained a window and newly revealed samples.
/// Updates the pending set. Sorted by index.
pub fn assemble_update_batch(
    state: &mut StreamState,
    source: &dyn FeedbackSource,
    cfg: &HorizonConfig,
    full_prefix: bool,
) -> Result<Vec<BatchItem>> {
    let tau = state.tau;
    let lo = tau - state.delta;
    let d_max = cfg.d_max();
    let origin = state.origin;
    let range = |a: Timestamp, b: Timestamp| {
        // clicks in (a, b] that can take part in streaming
        let s = partition(source, |c| c <= a).max(origin);
        let e = partition(source, |c| c <= b).max(origin);
        s..e
    };

    let mut chosen: Vec<usize> = Vec::new();
    // (a) new clicks
    for i in range(lo, tau) {
        if state.status[i] == Status::Unclicked {
            state.status[i] = Status::Pending;
            state.pending += 1;
            chosen.push(i);
        }
    }
    // (b) window crossings: click + b_h in (lo, tau]
    for &b in cfg.boundaries() {
        chosen.extend(range(lo - b, tau - b).filter(|&i| state.status[i] == Status::Pending));
    }
    // (c) conversions and closed attribution windows
    chosen.extend(
        source
            .conversions_in(lo, tau)
            .into_iter()
            .filter(|&i| i >= origin && state.status[i] == Status::Pending),
    );
    // tau > c + d_max first holds at this step
    let s = partition(source, |c| c < lo - d_max).max(origin);
    let e = partition(source, |c| c < tau - d_max).max(origin);
    chosen.extend((s..e).filter(|&i| state.status[i] == Status::Pending));

    if full_prefix {
        chosen = (origin..partition(source, |c| c <= tau).max(origin)).collect();
    }
    chosen.sort_unstable();
    chosen.dedup();

    let mut batch = Vec::with_capacity(chosen.len());
    for i in chosen {
        let observed = source.observe(i, tau);
        let view = build_trajectory(&observed, tau, cfg)?;
        let revealed = revealed_label(&observed, tau, d_max);
        let label_time = tau.min(observed.click_ts + d_max);
        let observed_label = observed_label(&observed, label_time)?;
        if revealed.is_some() && state.status[i] == Status::Pending {
            state.status[i] = Status::Revealed;
            state.pending -= 1;
        }
        batch.push(BatchItem {
            index: i,
            observed,
            view,
            revealed,
            observed_label,
        });
    }
    Ok(batch)
}

/// Per-step training record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub tau: Timestamp,
    pub batch: usize,
    pub breakdown: LossBreakdown,
}

/// Online model plus its objective.
pub struct Learner<'a> {
    pub backbone: Backbone,
    pub model: StaticIntent,
    optimizer: Adam,
    cfg: StreamConfig,
    aux: Auxiliary<'a>,
    horizons: usize,
    /// Likelihood tables of samples still in play; dropped on reveal.
    tables: HashMap<usize, LikelihoodTable>,
}

impl<'a> Learner<'a> {
    pub fn new(
        backbone: Backbone,
        model: StaticIntent,
        cfg: StreamConfig,
        aux: Auxiliary<'a>,
        horizon: &HorizonConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let needs_completer = match backbone {
            Backbone::Trace => !cfg.ablation.no_retro,
            _ => cfg.plugin,
        };
        if needs_completer && aux.completer.is_none() {
            return Err(Error::Config("completer required for the consistency term".into()));
        }
        if backbone == Backbone::Trace {
            let (Some(lik), Some(w)) = (aux.likelihood, aux.weights) else {
                return Err(Error::Config("trace backbone requires a model bundle".into()));
            };
            if lik.horizons() != horizon.horizons()
                || lik.behaviors() != horizon.behaviors()
                || w.eta.len() != horizon.horizons()
            {
                return Err(Error::Config("bundle horizons differ from run config".into()));
            }
        }
        if let Some(c) = aux.completer {
            let s = c.net().spec();
            let want = model.schema().numeric + horizon.horizons() * (horizon.behaviors() + 1);
            if s.dense_inputs != want {
                return Err(Error::Config("completer shape differs from run config".into()));
            }
        }
        let optimizer = Adam::new(model.net().param_count(), cfg.learning_rate, cfg.l2);
        Ok(Self {
            backbone,
            model,
            optimizer,
            cfg,
            aux,
            horizons: horizon.horizons(),
            tables: HashMap::new(),
        })
    }

    fn objective_config(&self) -> ObjectiveConfig {
        let a = self.cfg.ablation;
        ObjectiveConfig {
            lambda: if a.no_retro { 0.0 } else { self.cfg.lambda },
            gate: self.cfg.gate,
            use_trajectory: !a.no_traj,
            use_gate: !a.no_gate,
        }
    }

    fn uses_completer(&self) -> bool {
        match self.backbone {
            Backbone::Trace => !self.cfg.ablation.no_retro,
            _ => self.cfg.plugin,
        }
    }

    /// Scores for a batch of fresh clicks.
    pub fn predict(&self, xs: &[&FeatureVector]) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let logits = self.model.logits(xs.iter().copied())?;
        Ok(logits.into_iter().map(|z| softmax2(z)[1]).collect())
    }

    /// One optimizer pass over `batch` in shuffled mini-batches.
    pub fn update(
        &mut self,
        batch: &[BatchItem],
        source: &dyn FeedbackSource,
        tau: Timestamp,
    ) -> Result<LossBreakdown> {
        let mut total = LossBreakdown::default();
        // index order groups old timeouts apart from fresh conversions
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(tau as u64);
        let mut order: Vec<&BatchItem> = batch.iter().collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<BatchItem> = order.into_iter().cloned().collect();
        let chunks = shuffled.chunks(self.cfg.batch_size);
        let n_chunks = chunks.len().max(1) as f64;
        for chunk in chunks {
            let b = self.update_chunk(chunk, source)?;
            total.l_trj += b.l_trj / n_chunks;
            total.l_sup += b.l_sup / n_chunks;
            total.l_con += b.l_con / n_chunks;
            total.total += b.total / n_chunks;
            total.n_revealed += b.n_revealed;
            total.n_unrevealed += b.n_unrevealed;
            total.n_visible_pairs += b.n_visible_pairs;
        }
        Ok(total)
    }

    fn completer_targets(&self, chunk: &[BatchItem]) -> Result<Vec<Option<f64>>> {
        let Some(completer) = self.aux.completer.filter(|_| self.uses_completer()) else {
            return Ok(vec![None; chunk.len()]);
        };
        let open: Vec<&BatchItem> = chunk.iter().filter(|b| b.revealed.is_none()).collect();
        let q = completer.probs(open.iter().map(|b| (&b.observed.features, &b.view)))?;
        let mut q = q.into_iter();
        Ok(chunk
            .iter()
            .map(|b| b.revealed.is_none().then(|| q.next().expect("one per open item")))
            .collect())
    }

    fn update_chunk(&mut self, chunk: &[BatchItem], source: &dyn FeedbackSource) -> Result<LossBreakdown> {
        let inputs = self.model.inputs(chunk.iter().map(|b| &b.observed.features))?;
        let (out, tape) = self.model.net().forward_tape(&inputs)?;
        let logits: Vec<[f64; 2]> = out.rows().into_iter().map(|r| [r[0], r[1]]).collect();
        let targets = self.completer_targets(chunk)?;

        let (breakdown, grads) = match self.backbone {
            Backbone::Trace => self.trace_terms(chunk, &logits, targets)?,
            Backbone::Vanilla | Backbone::Oracle => {
                let labels: Vec<bool> = chunk
                    .iter()
                    .map(|b| match self.backbone {
                        Backbone::Oracle => source.ground_truth(b.index),
                        _ => b.observed_label,
                    })
                    .collect();
                let (value, mut grads) = bce_objective(&logits, &labels);
                let mut b = LossBreakdown {
                    l_sup: value,
                    total: value,
                    n_revealed: chunk.iter().filter(|b| b.revealed.is_some()).count(),
                    ..LossBreakdown::default()
                };
                b.n_unrevealed = chunk.len() - b.n_revealed;
                if self.uses_completer() {
                    let terms: Vec<SampleTerms> = chunk
                        .iter()
                        .zip(&logits)
                        .zip(&targets)
                        .map(|((item, &z), &q)| SampleTerms {
                            static_logits: z,
                            mask: Vec::new(),
                            window_lik: Vec::new(),
                            kappa: item.view.kappa(),
                            label: item.revealed,
                            q,
                        })
                        .collect();
                    let cfg = ObjectiveConfig {
                        use_trajectory: false,
                        ..self.objective_config()
                    };
                    let w = gates(&terms, &[], &cfg);
                    let (l_con, con, empty) =
                        consistency_term(&logits, &targets, &w, cfg.gate.epsilon);
                    for (g, c) in grads.iter_mut().zip(&con) {
                        g[0] += cfg.lambda * c[0];
                        g[1] += cfg.lambda * c[1];
                    }
                    b.l_con = l_con;
                    b.con_empty = empty;
                    b.total += cfg.lambda * l_con;
                }
                (b, grads)
            }
        };

        let upstream = Array2::from_shape_fn((grads.len(), 2), |(r, c)| grads[r][c]);
        let g = self.model.net().backward(&tape, &upstream)?;
        self.optimizer.step(self.model.net_mut(), &g)?;
        Ok(breakdown)
    }

    fn trace_terms(
        &mut self,
        chunk: &[BatchItem],
        logits: &[[f64; 2]],
        targets: Vec<Option<f64>>,
    ) -> Result<(LossBreakdown, Vec<[f64; 2]>)> {
        let cfg = self.objective_config();
        let eta = &self.aux.weights.expect("checked in new").eta;
        let lik = self.aux.likelihood.expect("checked in new");
        let missing: Vec<usize> = chunk
            .iter()
            .map(|b| b.index)
            .filter(|i| !self.tables.contains_key(i))
            .collect();
        if !missing.is_empty() {
            let fresh = lik.tables(chunk.iter().filter(|b| missing.contains(&b.index)).map(|b| &b.observed.features))?;
            self.tables.extend(missing.into_iter().zip(fresh));
        }
        let terms: Vec<SampleTerms> = chunk
            .iter()
            .zip(logits)
            .zip(targets)
            .map(|((item, &z), q)| SampleTerms {
                static_logits: z,
                mask: item.view.mask().to_vec(),
                window_lik: self.tables[&item.index].window_pairs(&item.view),
                kappa: item.view.kappa(),
                label: item.revealed,
                q,
            })
            .collect();
        let w = gates(&terms, eta, &cfg);
        let out = trace_objective(&terms, eta, &w, &cfg);
        for item in chunk.iter().filter(|b| b.revealed.is_some()) {
            self.tables.remove(&item.index);
        }
        debug_assert!(terms.iter().all(|t| t.mask.len() == self.horizons));
        Ok((out.breakdown, out.total))
    }

    pub fn cached_tables(&self) -> usize {
        self.tables.len()
    }
}

/// Predict `(tau, tau + delta]`, update on the batch at `tau`, then advance
/// the clock.
pub fn replay_step(
    state: &mut StreamState,
    source: &dyn FeedbackSource,
    learner: &mut Learner<'_>,
    cfg: &HorizonConfig,
    full_prefix: bool,
) -> Result<Option<StepRecord>> {
    let tau = state.tau;
    source.on_clock(tau);

    // predict
    let s = partition(source, |c| c <= tau).max(state.first);
    let e = partition(source, |c| c <= tau + state.delta).max(state.first);
    let mut acc = MetricAccumulator::new(tau);
    if s < e {
        let xs: Vec<&FeatureVector> = (s..e).map(|i| source.features(i)).collect();
        let scores = learner.predict(&xs)?;
        for (i, p) in (s..e).zip(scores) {
            acc.push(p, source.eval_label(i))?;
        }
    }
    state.accumulators.push(acc);

    // update
    let batch = assemble_update_batch(state, source, cfg, full_prefix)?;
    let record = if batch.is_empty() {
        None
    } else {
        let breakdown = learner.update(&batch, source, tau)?;
        log::debug!(
            "tau={tau} batch={} l_trj={:.5} l_sup={:.5} l_con={:.5} total={:.5}",
            batch.len(),
            breakdown.l_trj,
            breakdown.l_sup,
            breakdown.l_con,
            breakdown.total
        );
        Some(StepRecord {
            tau,
            batch: batch.len(),
            breakdown,
        })
    };
    state.tau += state.delta;
    Ok(record)
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub intervals: Vec<IntervalMetrics>,
    pub aggregate: Aggregate,
    pub steps: Vec<StepRecord>,
    pub model: StaticIntent,
}

/// Replays every sample clicked after `start` through `learner`.
pub fn run_simulation(
    source: &dyn FeedbackSource,
    mut learner: Learner<'_>,
    cfg: &HorizonConfig,
    start: Timestamp,
) -> Result<SimulationResult> {
    if source.is_empty() {
        return Err(Error::Stream("empty log".into()));
    }
    let last = source.click_ts(source.len() - 1);
    if start >= last {
        return Err(Error::Stream(format!(
            "stream start {start} is not before the last click {last}"
        )));
    }
    let full_prefix = learner.cfg.full_prefix;
    let mut state = StreamState::new(source, start, learner.cfg.delta, cfg.d_max());
    let mut steps = Vec::new();
    while state.tau < last {
        if let Some(r) = replay_step(&mut state, source, &mut learner, cfg, full_prefix)? {
            steps.push(r);
        }
        if let Some(m) = state.accumulators.last() {
            if !m.is_empty() {
                log::trace!("interval {} n={}", m.interval_start, m.len());
            }
        }
    }
    let (intervals, aggregate) = aggregate(&state.accumulators)?;
    for m in &intervals {
        log::info!(
            "interval {} n={} auc={:?} nll={:?}",
            m.interval_start,
            m.n,
            m.auc,
            m.nll
        );
    }
    Ok(SimulationResult {
        intervals,
        aggregate,
        steps,
        model: learner.model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{Architecture, FeatureSchema};

    fn cfg() -> HorizonConfig {
        HorizonConfig::new(vec![100, 1_000], vec!["purchase".into()], Some(0)).unwrap()
    }

    fn ev(id: u64, click: Timestamp, conv: Option<Timestamp>) -> ClickEvent {
        ClickEvent {
            sample_id: id,
            features: FeatureVector::new(vec![id as f64 * 0.1], vec![]),
            click_ts: click,
            conv_ts: conv,
            behavior_ts: vec![conv],
        }
    }

    fn schema() -> FeatureSchema {
        FeatureSchema {
            numeric: 1,
            categorical: vec![],
        }
    }

    fn small_arch() -> Architecture {
        Architecture {
            hidden: vec![4],
            emb_dim: 2,
        }
    }

    #[test]
    fn batch_rule_cases() {
        let log = vec![
            ev(0, -2_000, None),    // matured before the start
            ev(1, 10, None),        // crosses 100 at 110, 1000 at 1010
            ev(2, 20, Some(80)),    // converts inside the first step after click
            ev(3, 150, None),       // new click in step 2
        ];
        let src = LogSource::new(&log, 1_000).unwrap();
        let c = cfg();
        let mut st = StreamState::new(&src, 5, 100, 1_000);
        assert_eq!(st.first_index(), 1);

        st.tau = 105;
        let b = assemble_update_batch(&mut st, &src, &c, false).unwrap();
        let ids: Vec<usize> = b.iter().map(|x| x.index).collect();
        assert_eq!(ids, vec![1, 2]);
        assert_eq!(b[1].revealed, Some(true));
        assert!(st.is_revealed(2) && st.is_pending(1));
        assert_eq!(st.pending_count(), 1);

        st.tau = 205;
        let b = assemble_update_batch(&mut st, &src, &c, false).unwrap();
        let ids: Vec<usize> = b.iter().map(|x| x.index).collect();
        // sample 1 crossed the first boundary at 110
        assert_eq!(ids, vec![1, 3]);
        assert_eq!(b[0].view.visible(), 1);
        assert_eq!(b[0].revealed, None);

        st.tau = 305;
        let b = assemble_update_batch(&mut st, &src, &c, false).unwrap();
        // sample 3 crosses 100 at 250; nothing else changes
        assert_eq!(b.iter().map(|x| x.index).collect::<Vec<_>>(), vec![3]);

        st.tau = 1_105;
        let b = assemble_update_batch(&mut st, &src, &c, false).unwrap();
        // 1 crosses 1000 at 1010 and is revealed negative at 1105 > 1010
        assert_eq!(b.iter().map(|x| x.index).collect::<Vec<_>>(), vec![1]);
        assert_eq!(b[0].revealed, Some(false));
        assert_eq!(st.pending_count(), 1);
    }

    #[test]
    fn boundary_crossing_carries_prefix_mask() {
        let log = vec![ev(0, 0, None), ev(1, 10, None)];
        let src = LogSource::new(&log, 1_000).unwrap();
        let c = HorizonConfig::new(vec![50, 100, 1_000], vec!["purchase".into()], Some(0)).unwrap();
        let mut st = StreamState::new(&src, 0, 100, 1_000);
        st.tau = 100;
        assemble_update_batch(&mut st, &src, &c, false).unwrap();
        st.tau = 200;
        let b = assemble_update_batch(&mut st, &src, &c, false).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].view.mask(), &[true, true, false]);
    }

    #[test]
    fn clicks_before_start_carry_over_as_pending() {
        let log = vec![
            ev(0, -5_000, None),     // window closed long ago
            ev(1, -500, None),       // still open at the start
            ev(2, -400, Some(-300)), // converted before the start
            ev(3, 50, None),
        ];
        let src = LogSource::new(&log, 1_000).unwrap();
        let mut st = StreamState::new(&src, 0, 100, 1_000);
        assert_eq!(st.pending_count(), 1);
        assert!(st.is_pending(1) && st.is_revealed(0) && st.is_revealed(2));
        assert_eq!(st.first_index(), 3);
        // 1 gains its last window at 500 and is revealed negative at 600
        let mut seen = Vec::new();
        for tau in (100..=600).step_by(100) {
            st.tau = tau;
            let b = assemble_update_batch(&mut st, &src, &cfg(), false).unwrap();
            seen.extend(b.iter().filter(|x| x.index == 1).map(|x| (tau, x.revealed)));
        }
        assert_eq!(seen, vec![(500, None), (600, Some(false))]);
    }

    #[test]
    fn unsorted_log_is_rejected() {
        let log = vec![ev(0, 10, None), ev(1, 5, None)];
        assert!(LogSource::new(&log, 100).is_err());
    }

    #[test]
    fn empty_interval_leaves_parameters_alone() {
        let log = vec![ev(0, 0, None), ev(1, 10, None), ev(2, 100_000, None)];
        let src = LogSource::new(&log, 1_000).unwrap();
        let c = cfg();
        let model = StaticIntent::new(schema(), &small_arch(), 1).unwrap();
        let aux = Auxiliary {
            likelihood: None,
            completer: None,
            weights: None,
        };
        let scfg = StreamConfig {
            delta: 100,
            ..StreamConfig::default()
        };
        let mut learner = Learner::new(Backbone::Vanilla, model, scfg, aux, &c).unwrap();
        let mut st = StreamState::new(&src, 5_000, 100, 1_000);
        let before = learner.model.net().checksum();
        let r = replay_step(&mut st, &src, &mut learner, &c, false).unwrap();
        assert!(r.is_none());
        assert_eq!(learner.model.net().checksum(), before);
        assert!(st.accumulators[0].is_empty());
        assert_eq!(st.tau, 5_100);
    }

    #[test]
    fn fast_positive_is_predicted_then_revealed_next_step() {
        let log = vec![ev(0, 0, None), ev(1, 150, Some(190))];
        let src = AuditedSource::new(LogSource::new(&log, 1_000).unwrap());
        let c = cfg();
        let model = StaticIntent::new(schema(), &small_arch(), 1).unwrap();
        let aux = Auxiliary {
            likelihood: None,
            completer: None,
            weights: None,
        };
        let scfg = StreamConfig {
            delta: 100,
            ..StreamConfig::default()
        };
        let mut learner = Learner::new(Backbone::Vanilla, model, scfg, aux, &c).unwrap();
        let mut st = StreamState::new(&src, 100, 100, 1_000);
        replay_step(&mut st, &src, &mut learner, &c, false).unwrap();
        assert_eq!(st.accumulators[0].len(), 1);
        assert!(!st.is_revealed(1));
        let r = replay_step(&mut st, &src, &mut learner, &c, false).unwrap().unwrap();
        assert_eq!(r.breakdown.n_revealed, 1);
        assert!(st.is_revealed(1));
        let a = src.audit();
        assert_eq!(a.lookahead_reads, 0);
        assert_eq!(a.ground_truth_reads, 0);
        assert_eq!(a.eval_reads, 1);
    }

    #[test]
    fn vanilla_and_oracle_labels_coincide_without_delay() {
        // every conversion lands within a second of the click
        let log: Vec<ClickEvent> = (0..40)
            .map(|i| ev(i, i as i64 * 30 + 5, (i % 3 == 0).then_some(i as i64 * 30 + 6)))
            .collect();
        let src = LogSource::new(&log, 1_000).unwrap();
        let c = cfg();
        let run = |backbone| {
            let model = StaticIntent::new(schema(), &small_arch(), 3).unwrap();
            let aux = Auxiliary {
                likelihood: None,
                completer: None,
                weights: None,
            };
            let scfg = StreamConfig {
                delta: 100,
                ..StreamConfig::default()
            };
            let learner = Learner::new(backbone, model, scfg, aux, &c).unwrap();
            run_simulation(&src, learner, &c, 0).unwrap()
        };
        let v = run(Backbone::Vanilla);
        let o = run(Backbone::Oracle);
        assert_eq!(v.steps, o.steps);
        assert_eq!(v.model.net().checksum(), o.model.net().checksum());
    }

    #[test]
    fn trace_requires_bundle() {
        let model = StaticIntent::new(schema(), &small_arch(), 1).unwrap();
        let aux = Auxiliary {
            likelihood: None,
            completer: None,
            weights: None,
        };
        assert!(Learner::new(Backbone::Trace, model, StreamConfig::default(), aux, &cfg()).is_err());
        assert!(Backbone::parse("bogus").is_err());
        assert_eq!(Backbone::parse("trace").unwrap(), Backbone::Trace);
    }
}
