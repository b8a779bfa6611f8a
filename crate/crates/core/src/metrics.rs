//! Ranking and calibration metrics over `(score, label)` pairs.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub const NLL_CLAMP: f64 = 1e-7;
pub const ECE_BINS: usize = 10;

pub type Pair = (f64, bool);

/// Scores collected for one evaluation interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricAccumulator {
    pub interval_start: i64,
    pairs: Vec<Pair>,
}

impl MetricAccumulator {
    pub fn new(interval_start: i64) -> Self {
        Self {
            interval_start,
            pairs: Vec::new(),
        }
    }

    pub fn push(&mut self, score: f64, label: bool) -> Result<()> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::NonFinite(format!("score {score} outside [0, 1]")));
        }
        self.pairs.push((score, label));
        Ok(())
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn class_counts(pairs: &[Pair]) -> (usize, usize) {
    let pos = pairs.iter().filter(|p| p.1).count();
    (pos, pairs.len() - pos)
}

fn by_score(a: &Pair, b: &Pair) -> Ordering {
    a.0.total_cmp(&b.0)
}

/// Mann-Whitney AUC with tied scores counted as half.
pub fn auc(pairs: &[Pair]) -> Result<f64> {
    let (pos, neg) = class_counts(pairs);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes"));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(by_score);
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = sorted[i..j].iter().filter(|p| p.1).count();
        rank_sum += mean_rank * tied_pos as f64;
        i = j;
    }
    let pos_f = pos as f64;
    Ok((rank_sum - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// Mean log loss with scores clamped to `[1e-7, 1 - 1e-7]`.
pub fn nll(pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("nll of empty set"));
    }
    let total: f64 = pairs
        .iter()
        .map(|&(s, y)| {
            let p = s.clamp(NLL_CLAMP, 1.0 - NLL_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Average precision: precision at each distinct score threshold weighted by
/// the recall gained there.
pub fn pr_auc(pairs: &[Pair]) -> Result<f64> {
    let (pos, _) = class_counts(pairs);
    if pos == 0 {
        return Err(Error::UndefinedMetric("pr_auc needs a positive"));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| by_score(b, a));
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut gained = 0;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            gained += sorted[j].1 as usize;
            j += 1;
        }
        tp += gained;
        seen += j - i;
        if gained > 0 {
            ap += (gained as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    Ok(ap)
}

/// Expected calibration error over `bins` equal-width bins on `[0, 1]`.
pub fn ece(pairs: &[Pair], bins: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("ece of empty set"));
    }
    if bins == 0 {
        return Err(Error::UndefinedMetric("ece needs at least one bin"));
    }
    let mut count = vec![0usize; bins];
    let mut score_sum = vec![0.0; bins];
    let mut label_sum = vec![0.0; bins];
    for &(s, y) in pairs {
        let b = ((s * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        score_sum[b] += s;
        label_sum[b] += y as u8 as f64;
    }
    let n = pairs.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let c = count[b] as f64;
            (c / n) * (label_sum[b] / c - score_sum[b] / c).abs()
        })
        .sum())
}

/// Metrics of one interval; `None` where the metric is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalMetrics {
    pub interval_start: i64,
    pub n: usize,
    pub n_pos: usize,
    pub auc: Option<f64>,
    pub nll: Option<f64>,
    pub pr_auc: Option<f64>,
    pub ece: Option<f64>,
}

impl IntervalMetrics {
    pub fn compute(interval_start: i64, pairs: &[Pair]) -> Self {
        let (n_pos, _) = class_counts(pairs);
        Self {
            interval_start,
            n: pairs.len(),
            n_pos,
            auc: auc(pairs).ok(),
            nll: nll(pairs).ok(),
            pr_auc: pr_auc(pairs).ok(),
            ece: ece(pairs, ECE_BINS).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSet {
    pub auc: Option<f64>,
    pub nll: Option<f64>,
    pub pr_auc: Option<f64>,
    pub ece: Option<f64>,
}

/// Number of intervals over which each averaged metric was defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DefinedCounts {
    pub intervals: usize,
    pub auc: usize,
    pub nll: usize,
    pub pr_auc: usize,
    pub ece: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub n_pos: usize,
    /// Arithmetic mean over intervals where each metric is defined.
    pub mean: MetricSet,
    /// Metrics over all pairs pooled together.
    pub pooled: MetricSet,
    pub counts: DefinedCounts,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        (None, 0)
    } else {
        (Some(sum / n as f64), n)
    }
}

/// Per-interval metrics plus their mean and the pooled metrics.
pub fn aggregate(intervals: &[MetricAccumulator]) -> Result<(Vec<IntervalMetrics>, Aggregate)> {
    let nonempty: Vec<&MetricAccumulator> = intervals.iter().filter(|a| !a.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(Error::UndefinedMetric("no scored intervals"));
    }
    let rows: Vec<IntervalMetrics> = nonempty
        .iter()
        .map(|a| IntervalMetrics::compute(a.interval_start, a.pairs()))
        .collect();
    let (auc_mean, auc_n) = mean_of(rows.iter().map(|r| r.auc));
    let (nll_mean, nll_n) = mean_of(rows.iter().map(|r| r.nll));
    let (pr_mean, pr_n) = mean_of(rows.iter().map(|r| r.pr_auc));
    let (ece_mean, ece_n) = mean_of(rows.iter().map(|r| r.ece));
    let all: Vec<Pair> = nonempty.iter().flat_map(|a| a.pairs().iter().copied()).collect();
    let pooled = MetricSet {
        auc: auc(&all).ok(),
        nll: nll(&all).ok(),
        pr_auc: pr_auc(&all).ok(),
        ece: ece(&all, ECE_BINS).ok(),
    };
    let agg = Aggregate {
        n: all.len(),
        n_pos: class_counts(&all).0,
        mean: MetricSet {
            auc: auc_mean,
            nll: nll_mean,
            pr_auc: pr_mean,
            ece: ece_mean,
        },
        pooled,
        counts: DefinedCounts {
            intervals: rows.len(),
            auc: auc_n,
            nll: nll_n,
            pr_auc: pr_n,
            ece: ece_n,
        },
    };
    Ok((rows, agg))
}
