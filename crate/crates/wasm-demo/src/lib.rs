//! Browser bindings: window weights against beta, the reliability gate over
//! (p, kappa), and the fused posterior as feedback arrives.

use wasm_bindgen::prelude::*;

use trace_core::estimators::{fuse, trajectory_score_from_pairs, LikelihoodTable};
use trace_core::event::{build_trajectory, ClickEvent, FeatureVector, HorizonConfig};
use trace_core::losses::{reliability_gate, GateConfig};
use trace_core::pretrain::compute_window_weights;

/// Normalized conditional entropies of the demo horizons.
const DEMO_C_TILDE: [f64; 5] = [1.0, 0.75, 0.27, 0.18, 0.0];

/// `[h][y][k]` Bernoulli probabilities for cart, favorite and purchase.
#[rustfmt::skip]
const DEMO_PROBS: [f64; 30] = [
    0.01, 0.005, 0.0,   0.30, 0.10, 0.02,
    0.02, 0.01,  0.0,   0.55, 0.20, 0.08,
    0.04, 0.03,  0.0,   0.75, 0.35, 0.35,
    0.05, 0.04,  0.0,   0.80, 0.45, 0.70,
    0.05, 0.05,  0.0,   0.80, 0.50, 1.00,
];

/// Window weights for the given normalized entropies.
#[wasm_bindgen]
pub fn window_weights(c_tilde: &[f64], beta: f64) -> Vec<f64> {
    compute_window_weights(c_tilde, beta).eta
}

/// Default normalized entropies used by the page.
#[wasm_bindgen]
pub fn demo_c_tilde() -> Vec<f64> {
    DEMO_C_TILDE.to_vec()
}

/// Gate values on an `n x n` grid, row-major with kappa over rows and p
/// over columns, both at cell centers.
#[wasm_bindgen]
pub fn gate_grid(q: f64, slope: f64, n: usize) -> Vec<f64> {
    let gate = GateConfig {
        slope,
        ..GateConfig::default()
    };
    let mid = |i: usize| (i as f64 + 0.5) / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            out.push(reliability_gate(mid(c), q, mid(r), &gate));
        }
    }
    out
}

/// Posterior `p(y=1 | x, xi)` over elapsed time for one click.
///
/// Behavior times are in minutes after the click; a negative value means the
/// behavior never happens. Returns interleaved `(elapsed_secs, posterior)`
/// pairs on a log-spaced grid from one minute to past the attribution window.
#[wasm_bindgen]
pub fn posterior_curve(
    prior: f64,
    cart_min: f64,
    favorite_min: f64,
    purchase_min: f64,
    beta: f64,
    points: usize,
) -> Vec<f64> {
    let cfg = HorizonConfig::taobao();
    let table = LikelihoodTable::new(cfg.horizons(), cfg.behaviors(), DEMO_PROBS.to_vec())
        .expect("demo table shape");
    let eta = compute_window_weights(&DEMO_C_TILDE, beta).eta;
    let at = |m: f64| (m >= 0.0).then(|| (m * 60.0).round().max(1.0) as i64);
    let purchase = at(purchase_min);
    let e = ClickEvent {
        sample_id: 0,
        features: FeatureVector::new(vec![], vec![]),
        click_ts: 0,
        conv_ts: purchase,
        behavior_ts: vec![at(cart_min), at(favorite_min), purchase],
    };
    let p = prior.clamp(1e-6, 1.0 - 1e-6);
    let logits = [(1.0 - p).ln(), p.ln()];
    let (lo, hi) = (60f64.ln(), (1.2 * cfg.d_max() as f64).ln());
    let mut out = Vec::with_capacity(2 * points);
    for i in 0..points {
        let frac = i as f64 / (points.max(2) - 1) as f64;
        let t = (lo + frac * (hi - lo)).exp().round() as i64;
        let view = build_trajectory(&e, t, &cfg).expect("tau after click");
        let pairs = table.window_pairs(&view);
        let s = [0, 1].map(|y| trajectory_score_from_pairs(view.mask(), &pairs, y, &eta, 1e-8));
        out.push(t as f64);
        out.push(fuse(logits, s)[1]);
    }
    out
}
