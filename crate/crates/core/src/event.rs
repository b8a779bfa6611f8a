//! Click events, horizon discretization, labels and partial feedback trajectories.
//!
//! Timestamps are integer seconds. A trajectory is the cumulative state of each
//! post-click behavior at the end of each horizon window, restricted to the
//! windows whose full extent has elapsed at the observation time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = i64;

/// Window cut points over `[0, d_max]` and the tracked post-click behaviors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonConfig {
    boundaries: Vec<i64>,
    behavior_names: Vec<String>,
    purchase: Option<usize>,
}

impl HorizonConfig {
    /// `purchase` is the index of the purchase behavior among `behavior_names`,
    /// if purchases are tracked as a behavior.
    pub fn new(
        boundaries: Vec<i64>,
        behavior_names: Vec<String>,
        purchase: Option<usize>,
    ) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::Horizon("at least one window boundary required".into()));
        }
        if boundaries[0] <= 0 {
            return Err(Error::Horizon("boundaries must be positive".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Horizon("boundaries must be strictly increasing".into()));
        }
        if behavior_names.is_empty() {
            return Err(Error::Horizon("at least one behavior required".into()));
        }
        if let Some(p) = purchase {
            if p >= behavior_names.len() {
                return Err(Error::Horizon(format!(
                    "purchase index {p} out of range for {} behaviors",
                    behavior_names.len()
                )));
            }
        }
        Ok(Self {
            boundaries,
            behavior_names,
            purchase,
        })
    }

    /// Criteo-style purchase-only horizons: 6min, 15min, 1h, 1d, 7d, 30d.
    pub fn criteo() -> Self {
        Self::new(
            vec![360, 900, 3_600, 86_400, 604_800, 2_592_000],
            vec!["purchase".into()],
            Some(0),
        )
        .expect("static config")
    }

    /// Taobao-style horizons over 3 days with cart, favorite and purchase.
    pub fn taobao() -> Self {
        Self::new(
            vec![120, 600, 7_200, 86_400, 259_200],
            vec!["cart".into(), "favorite".into(), "purchase".into()],
            Some(2),
        )
        .expect("static config")
    }

    pub fn boundaries(&self) -> &[i64] {
        &self.boundaries
    }

    pub fn behavior_names(&self) -> &[String] {
        &self.behavior_names
    }

    pub fn purchase_index(&self) -> Option<usize> {
        self.purchase
    }

    /// Number of windows `H`.
    pub fn horizons(&self) -> usize {
        self.boundaries.len()
    }

    /// Number of behaviors `K`.
    pub fn behaviors(&self) -> usize {
        self.behavior_names.len()
    }

    pub fn d_max(&self) -> i64 {
        *self.boundaries.last().expect("nonempty")
    }

    /// Number of fully elapsed windows after `elapsed` seconds.
    pub fn visible_windows(&self, elapsed: i64) -> usize {
        self.boundaries.partition_point(|&b| b <= elapsed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub numeric: Vec<f64>,
    pub categorical: Vec<u32>,
}

impl FeatureVector {
    pub fn new(numeric: Vec<f64>, categorical: Vec<u32>) -> Self {
        Self {
            numeric,
            categorical,
        }
    }
}

/// One post-click sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub sample_id: u64,
    pub features: FeatureVector,
    pub click_ts: Timestamp,
    /// `None` means the click never converts.
    pub conv_ts: Option<Timestamp>,
    /// First occurrence of each tracked behavior.
    pub behavior_ts: Vec<Option<Timestamp>>,
}

impl ClickEvent {
    pub fn validate(&self, cfg: &HorizonConfig) -> Result<()> {
        let bad = |reason: String| Error::InvalidEvent {
            sample_id: self.sample_id,
            reason,
        };
        if let Some(v) = self.conv_ts {
            if v <= self.click_ts {
                return Err(bad(format!(
                    "conversion at {v} not after click at {}",
                    self.click_ts
                )));
            }
        }
        if self.behavior_ts.len() != cfg.behaviors() {
            return Err(bad(format!(
                "expected {} behavior timestamps, got {}",
                cfg.behaviors(),
                self.behavior_ts.len()
            )));
        }
        for (k, t) in self.behavior_ts.iter().enumerate() {
            if let Some(t) = *t {
                if t <= self.click_ts {
                    return Err(bad(format!("behavior {k} at {t} not after click")));
                }
            }
        }
        if let Some(p) = cfg.purchase_index() {
            if self.behavior_ts[p] != self.conv_ts {
                return Err(bad("purchase behavior differs from conversion time".into()));
            }
        }
        if self.features.numeric.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite numeric feature".into()));
        }
        Ok(())
    }

    /// The event as it can be observed at `tau`: feedback later than `tau` is withheld.
    pub fn censored(&self, tau: Timestamp) -> ClickEvent {
        let visible = |t: Option<Timestamp>| t.filter(|&t| t <= tau);
        ClickEvent {
            sample_id: self.sample_id,
            features: self.features.clone(),
            click_ts: self.click_ts,
            conv_ts: visible(self.conv_ts),
            behavior_ts: self.behavior_ts.iter().map(|&t| visible(t)).collect(),
        }
    }
}

/// `y = 1` iff the conversion lands in `(click, click + d_max]`.
pub fn ground_truth_label(e: &ClickEvent, d_max: i64) -> bool {
    matches!(e.conv_ts, Some(v) if v > e.click_ts && v - e.click_ts <= d_max)
}

/// Conversion status visible at `tau` (inclusive).
pub fn observed_label(e: &ClickEvent, tau: Timestamp) -> Result<bool> {
    check_clicked(e, tau)?;
    Ok(matches!(e.conv_ts, Some(v) if v > e.click_ts && v <= tau))
}

/// A sample is revealed once its conversion is observed or its attribution
/// window has closed (strictly).
pub fn is_revealed(e: &ClickEvent, tau: Timestamp, d_max: i64) -> bool {
    let converted = matches!(e.conv_ts, Some(v) if v > e.click_ts && v <= tau);
    converted || tau > e.click_ts + d_max
}

/// Final label of a revealed sample using only feedback visible at `tau`.
///
/// Returns `None` while the sample is unrevealed.
pub fn revealed_label(e: &ClickEvent, tau: Timestamp, d_max: i64) -> Option<bool> {
    if !is_revealed(e, tau, d_max) {
        return None;
    }
    Some(ground_truth_label(&e.censored(tau), d_max))
}

fn check_clicked(e: &ClickEvent, tau: Timestamp) -> Result<()> {
    if tau < e.click_ts {
        return Err(Error::BeforeClick {
            tau,
            click_ts: e.click_ts,
        });
    }
    Ok(())
}

/// Partial view of a feedback trajectory: masked cumulative states and the
/// visibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryView {
    horizons: usize,
    behaviors: usize,
    states: Vec<bool>,
    mask: Vec<bool>,
    kappa: f64,
}

impl TrajectoryView {
    pub fn empty(horizons: usize, behaviors: usize) -> Self {
        Self {
            horizons,
            behaviors,
            states: vec![false; horizons * behaviors],
            mask: vec![false; horizons],
            kappa: 0.0,
        }
    }

    /// Builds a view from raw parts, checking every structural invariant.
    pub fn from_parts(
        horizons: usize,
        behaviors: usize,
        states: Vec<bool>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if states.len() != horizons * behaviors || mask.len() != horizons {
            return Err(Error::Shape(format!(
                "trajectory expects {horizons}x{behaviors} states and {horizons} mask bits"
            )));
        }
        let visible = mask.iter().take_while(|&&m| m).count();
        if mask[visible..].iter().any(|&m| m) {
            return Err(Error::NonPrefixMask);
        }
        for h in visible..horizons {
            if states[h * behaviors..(h + 1) * behaviors].iter().any(|&s| s) {
                return Err(Error::Shape(format!("state set in masked window {h}")));
            }
        }
        Ok(Self {
            horizons,
            behaviors,
            states,
            mask,
            kappa: visible as f64 / horizons as f64,
        })
    }

    pub fn horizons(&self) -> usize {
        self.horizons
    }

    pub fn behaviors(&self) -> usize {
        self.behaviors
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn states(&self) -> &[bool] {
        &self.states
    }

    /// Cumulative behavior states at window `h`.
    pub fn row(&self, h: usize) -> &[bool] {
        &self.states[h * self.behaviors..(h + 1) * self.behaviors]
    }

    pub fn state(&self, h: usize, k: usize) -> bool {
        self.states[h * self.behaviors + k]
    }

    /// Fraction of observed windows.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Number of visible windows (length of the prefix mask).
    pub fn visible(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    /// The first `k` windows of this view, the rest masked out.
    pub fn truncated(&self, k: usize) -> TrajectoryView {
        let k = k.min(self.visible());
        let mut out = Self::empty(self.horizons, self.behaviors);
        for h in 0..k {
            out.mask[h] = true;
            out.states[h * self.behaviors..(h + 1) * self.behaviors].copy_from_slice(self.row(h));
        }
        out.kappa = k as f64 / self.horizons as f64;
        out
    }
}

/// Trajectory of `e` as observed at `tau`.
///
/// Window `h` is visible once `tau - click_ts >= boundaries[h]`. A behavior
/// counts toward window `h` if it happened within `boundaries[h]` of the
/// click and no later than `tau`.
pub fn build_trajectory(
    e: &ClickEvent,
    tau: Timestamp,
    cfg: &HorizonConfig,
) -> Result<TrajectoryView> {
    check_clicked(e, tau)?;
    let elapsed = tau - e.click_ts;
    let horizons = cfg.horizons();
    let behaviors = cfg.behaviors();
    if e.behavior_ts.len() != behaviors {
        return Err(Error::Shape(format!(
            "event {} has {} behavior slots, config has {behaviors}",
            e.sample_id,
            e.behavior_ts.len()
        )));
    }
    let visible = cfg.visible_windows(elapsed);
    let mut view = TrajectoryView::empty(horizons, behaviors);
    for (h, &bound) in cfg.boundaries().iter().enumerate().take(visible) {
        view.mask[h] = true;
        for (k, t) in e.behavior_ts.iter().enumerate() {
            if let Some(t) = *t {
                view.states[h * behaviors + k] = t - e.click_ts <= bound && t <= tau;
            }
        }
    }
    view.kappa = visible as f64 / horizons as f64;
    Ok(view)
}

/// Full-lifecycle trajectory (all windows visible).
pub fn full_trajectory(e: &ClickEvent, cfg: &HorizonConfig) -> TrajectoryView {
    build_trajectory(e, e.click_ts + cfg.d_max(), cfg).expect("tau after click")
}
