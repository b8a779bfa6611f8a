//! Training objectives.
//!
//! The value-level functions ([`alpha_weights`], [`marginal_window_loss`],
//! [`trajectory_loss`], [`supervised_loss`], [`reliability_gate`],
//! [`consistency_loss`]) mirror the definitions one to one. The
//! differentiable assemblies ([`trace_objective`], [`bce_objective`],
//! [`consistency_term`]) return gradients with respect to the two static
//! logits of every sample; only `theta` is trained online, so backpropagating
//! those through the static network yields the full parameter gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_softmax2, sigmoid, softmax2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub slope: f64,
    pub center: f64,
    pub epsilon: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            slope: 4.0,
            center: 0.5,
            epsilon: 1e-8,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("gate slope and epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Terms of one objective evaluation. Terms over empty subsets are 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_trj: f64,
    pub l_sup: f64,
    pub l_con: f64,
    pub total: f64,
    pub n_revealed: usize,
    pub n_unrevealed: usize,
    pub n_visible_pairs: usize,
    pub trj_empty: bool,
    pub sup_empty: bool,
    pub con_empty: bool,
}

/// `alpha_h = m_h eta_h / (sum_t m_t eta_t + eps)`.
pub fn alpha_weights(mask: &[bool], eta: &[f64], epsilon: f64) -> Vec<f64> {
    let norm: f64 = mask
        .iter()
        .zip(eta)
        .filter(|(m, _)| **m)
        .map(|(_, e)| e)
        .sum::<f64>()
        + epsilon;
    mask.iter()
        .zip(eta)
        .map(|(&m, &e)| if m { e / norm } else { 0.0 })
        .collect()
}

/// `-log sum_y p(y|x) lik_y`.
pub fn marginal_window_loss(static_p: [f64; 2], lik0: f64, lik1: f64) -> f64 {
    -(static_p[0] * lik0 + static_p[1] * lik1).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectorySample<'a> {
    pub static_p: [f64; 2],
    pub mask: &'a [bool],
    /// Per-window `[lik(y=0), lik(y=1)]`.
    pub lik: &'a [[f64; 2]],
}

/// Window-weighted mean of marginal losses over all visible `(i, h)`.
/// Returns `(0, true)` when no window is visible.
pub fn trajectory_loss(samples: &[TrajectorySample<'_>], eta: &[f64]) -> (f64, bool) {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in samples {
        for (h, (&m, l)) in s.mask.iter().zip(s.lik).enumerate() {
            if m {
                num += eta[h] * marginal_window_loss(s.static_p, l[0], l[1]);
                den += eta[h];
            }
        }
    }
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

/// Mean cross-entropy of the fused posterior on revealed labels.
///
/// Each item is `(p(y=1 | x, xi), revealed label)`; an unrevealed item
/// (`None`) is an error. An empty batch gives 0.
pub fn supervised_loss(items: &[(f64, Option<bool>)]) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &(p1, label) in items {
        let y = label.ok_or_else(|| Error::Loss("unrevealed sample in supervised batch".into()))?;
        total -= if y { p1.ln() } else { (1.0 - p1).ln() };
    }
    Ok(total / items.len() as f64)
}

/// Binary entropy scaled to `[0, 1]` (base-2).
pub fn normalized_entropy(p: f64) -> f64 {
    let term = |v: f64| if v <= 0.0 { 0.0 } else { v * v.ln() };
    -(term(p) + term(1.0 - p)) / std::f64::consts::LN_2
}

/// Product of sigmoid-mapped indicators: online entropy, completer
/// confidence and trajectory sparsity.
pub fn reliability_gate(p: f64, q: f64, kappa: f64, gate: &GateConfig) -> f64 {
    let indicators = [
        normalized_entropy(p),
        1.0 - normalized_entropy(q),
        1.0 - kappa,
    ];
    indicators
        .iter()
        .map(|u| sigmoid(gate.slope * (u - gate.center)))
        .product()
}

/// Soft-target binary cross-entropy `-[t log p + (1-t) log(1-p)]`.
pub fn bce(p: f64, target: f64) -> f64 {
    let term = |t: f64, v: f64| if t == 0.0 { 0.0 } else { t * v.ln() };
    -(term(target, p) + term(1.0 - target, 1.0 - p))
}

/// Soft-target cross-entropy written on the logit `a` of `p = sigmoid(a)`.
pub fn bce_logit(a: f64, target: f64) -> f64 {
    target * softplus(-a) + (1.0 - target) * softplus(a)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyItem {
    /// Online estimate `p_i`.
    pub p: f64,
    /// Completer target `q_i`, treated as a constant.
    pub q: f64,
    /// Reliability gate `w_i`.
    pub w: f64,
    pub revealed: bool,
}

/// `sum_i w_i BCE(p_i, q_i) / (sum_i w_i + eps)` over unrevealed samples.
pub fn consistency_loss(items: &[ConsistencyItem], epsilon: f64) -> Result<f64> {
    if items.iter().any(|i| i.revealed) {
        return Err(Error::Loss("revealed sample in consistency batch".into()));
    }
    let num: f64 = items.iter().map(|i| i.w * bce(i.p, i.q)).sum();
    let den: f64 = items.iter().map(|i| i.w).sum::<f64>() + epsilon;
    Ok(num / den)
}

/// Backbone loss plus the weighted consistency term.
pub fn plugin_objective(backbone_loss: f64, con_loss: f64, lambda: f64) -> f64 {
    backbone_loss + lambda * con_loss
}

/// Everything the trajectory objective needs about one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTerms {
    pub static_logits: [f64; 2],
    pub mask: Vec<bool>,
    /// Clamped per-window `[lik(y=0), lik(y=1)]`; ignored where masked.
    pub window_lik: Vec<[f64; 2]>,
    pub kappa: f64,
    /// Final label if the sample is revealed.
    pub label: Option<bool>,
    /// Completer output for unrevealed samples when a completer is in use.
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda: f64,
    pub gate: GateConfig,
    /// `false` drops the trajectory loss and uses the static posterior online.
    pub use_trajectory: bool,
    /// `false` fixes every gate to 1.
    pub use_gate: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gate: GateConfig::default(),
            use_trajectory: true,
            use_gate: true,
        }
    }
}

/// Per-term gradients with respect to each sample's static logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGradients {
    pub breakdown: LossBreakdown,
    pub trj: Vec<[f64; 2]>,
    pub sup: Vec<[f64; 2]>,
    pub con: Vec<[f64; 2]>,
    pub total: Vec<[f64; 2]>,
}

/// Logits of the online posterior: static logits plus trajectory scores.
pub fn online_logits(s: &SampleTerms, eta: &[f64], cfg: &ObjectiveConfig) -> [f64; 2] {
    if !cfg.use_trajectory || !s.mask.iter().any(|&m| m) {
        return s.static_logits;
    }
    let ls = log_softmax2(s.static_logits);
    let alpha = alpha_weights(&s.mask, eta, cfg.gate.epsilon);
    let mut out = ls;
    for (a, l) in alpha.iter().zip(&s.window_lik) {
        if *a != 0.0 {
            out[0] += a * l[0].ln();
            out[1] += a * l[1].ln();
        }
    }
    out
}

/// Gates for unrevealed samples with a completer target; 1 elsewhere.
/// Computed from the current online estimate and then held fixed.
pub fn gates(samples: &[SampleTerms], eta: &[f64], cfg: &ObjectiveConfig) -> Vec<f64> {
    samples
        .iter()
        .map(|s| match (s.label, s.q) {
            (None, Some(q)) if cfg.use_gate => {
                let p = softmax2(online_logits(s, eta, cfg))[1];
                reliability_gate(p, q, s.kappa, &cfg.gate)
            }
            _ => 1.0,
        })
        .collect()
}

/// Trajectory loss, supervised loss and gated consistency with their
/// gradients. `gates` comes from [`gates`] and is treated as constant.
pub fn trace_objective(
    samples: &[SampleTerms],
    eta: &[f64],
    gates: &[f64],
    cfg: &ObjectiveConfig,
) -> ObjectiveGradients {
    let n = samples.len();
    let mut trj = vec![[0.0; 2]; n];
    let mut sup = vec![[0.0; 2]; n];
    let mut b = LossBreakdown::default();

    let online: Vec<[f64; 2]> = samples.iter().map(|s| online_logits(s, eta, cfg)).collect();

    // trajectory loss over every visible window
    if cfg.use_trajectory {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let p = softmax2(s.static_logits);
            for (h, (&m, l)) in s.mask.iter().zip(&s.window_lik).enumerate() {
                if !m {
                    continue;
                }
                let w = eta[h];
                let mix = p[0] * l[0] + p[1] * l[1];
                num += w * -mix.ln();
                den += w;
                b.n_visible_pairs += 1;
                // d(-log mix)/dz_y = p_y - p_y l_y / mix
                for y in 0..2 {
                    trj[i][y] += w * (p[y] - p[y] * l[y] / mix);
                }
            }
        }
        if den > 0.0 {
            b.l_trj = num / den;
            trj.iter_mut().flatten().for_each(|g| *g /= den);
        }
    }
    b.trj_empty = b.n_visible_pairs == 0;

    // supervised loss over revealed samples
    let revealed: Vec<usize> = (0..n).filter(|&i| samples[i].label.is_some()).collect();
    b.n_revealed = revealed.len();
    b.n_unrevealed = n - revealed.len();
    if !revealed.is_empty() {
        let r = revealed.len() as f64;
        for &i in &revealed {
            let y = samples[i].label.expect("revealed") as usize;
            let lp = log_softmax2(online[i]);
            b.l_sup -= lp[y] / r;
            let p = softmax2(online[i]);
            for c in 0..2 {
                sup[i][c] = (p[c] - (c == y) as u8 as f64) / r;
            }
        }
    }
    b.sup_empty = revealed.is_empty();

    let targets: Vec<Option<f64>> = samples
        .iter()
        .map(|s| if s.label.is_none() { s.q } else { None })
        .collect();
    let (l_con, con, con_empty) = consistency_term(&online, &targets, gates, cfg.gate.epsilon);
    b.l_con = l_con;
    b.con_empty = con_empty;
    b.total = b.l_trj + b.l_sup + cfg.lambda * b.l_con;

    let total = (0..n)
        .map(|i| {
            [
                trj[i][0] + sup[i][0] + cfg.lambda * con[i][0],
                trj[i][1] + sup[i][1] + cfg.lambda * con[i][1],
            ]
        })
        .collect();
    ObjectiveGradients {
        breakdown: b,
        trj,
        sup,
        con,
        total,
    }
}

/// Gated consistency on online logits. Samples with `target = None` are
/// not part of the unrevealed set. Returns `(value, gradients, empty)`.
pub fn consistency_term(
    online: &[[f64; 2]],
    targets: &[Option<f64>],
    gates: &[f64],
    epsilon: f64,
) -> (f64, Vec<[f64; 2]>, bool) {
    let mut grads = vec![[0.0; 2]; online.len()];
    let den: f64 = targets
        .iter()
        .zip(gates)
        .filter(|(t, _)| t.is_some())
        .map(|(_, w)| w)
        .sum::<f64>()
        + epsilon;
    let mut num = 0.0;
    let mut any = false;
    for (i, (z, t)) in online.iter().zip(targets).enumerate() {
        let Some(q) = *t else { continue };
        any = true;
        let a = z[1] - z[0];
        num += gates[i] * bce_logit(a, q);
        // dBCE/da = sigmoid(a) - q, a = z1 - z0
        let g = gates[i] * (sigmoid(a) - q) / den;
        grads[i] = [-g, g];
    }
    (num / den, grads, !any)
}

/// Mean binary cross-entropy of the 2-logit static head against hard labels.
pub fn bce_objective(logits: &[[f64; 2]], labels: &[bool]) -> (f64, Vec<[f64; 2]>) {
    if logits.is_empty() {
        return (0.0, Vec::new());
    }
    let n = logits.len() as f64;
    let mut value = 0.0;
    let grads = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let y = y as usize;
            value -= log_softmax2(z)[y] / n;
            let p = softmax2(z);
            [
                (p[0] - (y == 0) as u8 as f64) / n,
                (p[1] - (y == 1) as u8 as f64) / n,
            ]
        })
        .collect();
    (value, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn alpha_examples() {
        let eta = [0.5, 0.3, 0.2];
        assert_eq!(alpha_weights(&[false; 3], &eta, 1e-8), vec![0.0; 3]);
        let a = alpha_weights(&[true; 3], &eta, 0.0);
        assert!(a.iter().zip(&eta).all(|(x, y)| close(*x, *y, 1e-15)));
        let a = alpha_weights(&[true, true, false], &eta, 1e-8);
        assert!(close(a[0], 0.625, 1e-7) && close(a[1], 0.375, 1e-7) && a[2] == 0.0);
    }

    #[test]
    fn marginal_examples() {
        assert!(close(marginal_window_loss([0.5, 0.5], 0.5, 0.5), 2f64.ln(), 1e-15));
        assert!(close(marginal_window_loss([0.0, 1.0], 0.3, 0.8), 0.22314355, 1e-8));
        assert!(close(marginal_window_loss([0.3, 0.7], 0.9, 0.2), 0.8915981, 1e-7));
    }

    #[test]
    fn trajectory_loss_examples() {
        let eta = [0.6, 0.4];
        let mask = [true, true];
        let lik = [[0.5, 0.5], [0.5, 0.5]];
        let s = TrajectorySample {
            static_p: [0.5, 0.5],
            mask: &mask,
            lik: &lik,
        };
        let (v, empty) = trajectory_loss(&[s, s], &eta);
        assert!(close(v, 2f64.ln(), 1e-15) && !empty);

        let m1 = [true, false];
        let l1 = [[0.9, 0.2], [1.0, 1.0]];
        let single = TrajectorySample {
            static_p: [0.3, 0.7],
            mask: &m1,
            lik: &l1,
        };
        let (v, _) = trajectory_loss(&[single], &eta);
        assert!(close(v, marginal_window_loss([0.3, 0.7], 0.9, 0.2), 1e-15));

        // 2 samples x 2 windows
        let ma = [true, true];
        let la = [[0.9, 0.2], [0.6, 0.4]];
        let mb = [true, false];
        let lb = [[0.3, 0.7], [1.0, 1.0]];
        let a = TrajectorySample {
            static_p: [0.2, 0.8],
            mask: &ma,
            lik: &la,
        };
        let b = TrajectorySample {
            static_p: [0.6, 0.4],
            mask: &mb,
            lik: &lb,
        };
        let la0 = -(0.2 * 0.9 + 0.8 * 0.2f64).ln();
        let la1 = -(0.2 * 0.6 + 0.8 * 0.4f64).ln();
        let lb0 = -(0.6 * 0.3 + 0.4 * 0.7f64).ln();
        let want = (0.6 * la0 + 0.4 * la1 + 0.6 * lb0) / (0.6 + 0.4 + 0.6);
        assert!(close(trajectory_loss(&[a, b], &eta).0, want, 1e-15));
        assert!(close(trajectory_loss(&[b, a], &eta).0, want, 1e-15));

        let none = [false, false];
        let e = TrajectorySample {
            static_p: [0.5, 0.5],
            mask: &none,
            lik: &lik,
        };
        assert_eq!(trajectory_loss(&[e], &eta), (0.0, true));
    }

    #[test]
    fn supervised_examples() {
        let v = supervised_loss(&[(0.8, Some(true)), (0.3, Some(false))]).unwrap();
        assert!(close(v, (-(0.8f64.ln()) - 0.7f64.ln()) / 2.0, 1e-15));
        assert!(close(v, 0.2899, 1e-4));
        assert!(close(
            supervised_loss(&[(0.5, Some(true)), (0.5, Some(false))]).unwrap(),
            2f64.ln(),
            1e-15
        ));
        assert!(supervised_loss(&[(1.0 - 1e-12, Some(true))]).unwrap() < 1e-10);
        assert!(supervised_loss(&[(0.5, None)]).is_err());
    }

    #[test]
    fn gate_examples() {
        let g = GateConfig::default();
        let w = reliability_gate(0.5, 1e-12, 0.0, &g);
        assert!(close(w, sigmoid(2.0).powi(3), 1e-9));
        assert!(close(w, 0.6833, 1e-4));
        let w = reliability_gate(0.5, 0.5, 0.0, &g);
        assert!(w <= sigmoid(-2.0) + 1e-15);
        assert!(close(sigmoid(-2.0), 0.1192, 1e-4));
        let full = reliability_gate(0.5, 1e-12, 1.0, &g);
        assert!(close(full, sigmoid(2.0).powi(2) * sigmoid(-2.0), 1e-9));
    }

    #[test]
    fn consistency_examples() {
        let q = [0.2, 0.7];
        let items: Vec<ConsistencyItem> = q
            .iter()
            .map(|&q| ConsistencyItem {
                p: q,
                q,
                w: 1.0,
                revealed: false,
            })
            .collect();
        let want = (bce(0.2, 0.2) + bce(0.7, 0.7)) / 2.0;
        assert!(close(consistency_loss(&items, 0.0).unwrap(), want, 1e-15));

        let zero: Vec<ConsistencyItem> = items.iter().map(|i| ConsistencyItem { w: 0.0, ..*i }).collect();
        assert_eq!(consistency_loss(&zero, 1e-8).unwrap(), 0.0);

        let two = [
            ConsistencyItem { p: 0.6, q: 0.9, w: 1.0, revealed: false },
            ConsistencyItem { p: 0.4, q: 0.1, w: 1.0, revealed: false },
        ];
        let v = consistency_loss(&two, 1e-8).unwrap();
        // each term is -(0.9 ln 0.6 + 0.1 ln 0.4)
        assert!(close(v, 0.551372, 1e-6), "{v}");

        let bad = [ConsistencyItem { p: 0.5, q: 0.5, w: 1.0, revealed: true }];
        assert!(consistency_loss(&bad, 1e-8).is_err());
    }

    #[test]
    fn bce_logit_matches_bce() {
        for &(a, t) in &[(0.3, 0.9), (-2.0, 0.1), (5.0, 0.5), (0.0, 0.0)] {
            assert!(close(bce_logit(a, t), bce(sigmoid(a), t), 1e-12));
        }
    }

    fn terms(z: [f64; 2], mask: Vec<bool>, label: Option<bool>, q: Option<f64>) -> SampleTerms {
        let h = mask.len();
        let kappa = mask.iter().filter(|&&m| m).count() as f64 / h as f64;
        SampleTerms {
            static_logits: z,
            window_lik: (0..h).map(|i| [0.2 + 0.1 * i as f64, 0.7 - 0.1 * i as f64]).collect(),
            mask,
            kappa,
            label,
            q,
        }
    }

    #[test]
    fn revealed_only_batch_reduces_to_supervised() {
        let eta = [0.5, 0.5];
        let s = vec![
            terms([0.1, 0.4], vec![false, false], Some(true), None),
            terms([0.3, -0.4], vec![false, false], Some(false), None),
        ];
        let cfg = ObjectiveConfig::default();
        let g = gates(&s, &eta, &cfg);
        let out = trace_objective(&s, &eta, &g, &cfg);
        assert!(out.breakdown.trj_empty && out.breakdown.con_empty);
        assert_eq!(out.breakdown.total, out.breakdown.l_sup);
    }

    #[test]
    fn total_is_sum_of_independent_terms() {
        let eta = [0.5, 0.3, 0.2];
        let eps = 1e-8;
        let s = vec![
            terms([0.2, -0.5], vec![true, true, false], Some(true), None),
            terms([0.0, 0.4], vec![true, false, false], None, Some(0.8)),
            terms([-0.3, 0.1], vec![false, false, false], None, Some(0.3)),
        ];
        let cfg = ObjectiveConfig::default();
        let g = gates(&s, &eta, &cfg);
        let out = trace_objective(&s, &eta, &g, &cfg);

        // trajectory term
        let ts: Vec<TrajectorySample> = s
            .iter()
            .map(|t| TrajectorySample {
                static_p: softmax2(t.static_logits),
                mask: &t.mask,
                lik: &t.window_lik,
            })
            .collect();
        let (l_trj, _) = trajectory_loss(&ts, &eta);
        // supervised term with fused posterior
        let fused = |t: &SampleTerms| {
            let alpha = alpha_weights(&t.mask, &eta, eps);
            let sc = |y: usize| -> f64 {
                alpha.iter().zip(&t.window_lik).map(|(a, l)| if *a > 0.0 { a * l[y].ln() } else { 0.0 }).sum()
            };
            crate::estimators::fuse(t.static_logits, [sc(0), sc(1)])
        };
        let l_sup = supervised_loss(&[(fused(&s[0])[1], Some(true))]).unwrap();
        let items: Vec<ConsistencyItem> = s[1..]
            .iter()
            .map(|t| {
                let p = fused(t)[1];
                let q = t.q.unwrap();
                ConsistencyItem { p, q, w: reliability_gate(p, q, t.kappa, &cfg.gate), revealed: false }
            })
            .collect();
        let l_con = consistency_loss(&items, eps).unwrap();

        let b = out.breakdown;
        assert!(close(b.l_trj, l_trj, 1e-12));
        assert!(close(b.l_sup, l_sup, 1e-12));
        assert!(close(b.l_con, l_con, 1e-12));
        assert!(close(b.total, l_trj + l_sup + 0.1 * l_con, 1e-12));
        assert_eq!((b.n_revealed, b.n_unrevealed, b.n_visible_pairs), (1, 2, 3));
    }

    #[test]
    fn lambda_zero_drops_consistency() {
        let eta = [0.5, 0.5];
        let s = vec![terms([0.2, -0.1], vec![true, false], None, Some(0.9))];
        let cfg = ObjectiveConfig { lambda: 0.0, ..Default::default() };
        let g = gates(&s, &eta, &cfg);
        let out = trace_objective(&s, &eta, &g, &cfg);
        assert!(close(out.breakdown.total, out.breakdown.l_trj + out.breakdown.l_sup, 1e-15));
        assert_eq!(out.total, out.trj);
    }

    #[test]
    fn plugin_lambda_zero_is_backbone() {
        assert_eq!(plugin_objective(0.42, 3.0, 0.0), 0.42);
        assert!(close(plugin_objective(0.42, 3.0, 0.1), 0.72, 1e-15));
    }

    #[test]
    fn bce_objective_hand_computed() {
        let z = [[0.0, 0.8f64.ln() - 0.2f64.ln()], [0.0, 0.3f64.ln() - 0.7f64.ln()]];
        let (v, g) = bce_objective(&z, &[true, false]);
        assert!(close(v, (-(0.8f64.ln()) - 0.7f64.ln()) / 2.0, 1e-12));
        assert!(close(g[0][1], (0.8 - 1.0) / 2.0, 1e-12));
        assert!(close(g[1][1], 0.3 / 2.0, 1e-12));
    }

    #[test]
    fn normalized_entropy_bounds() {
        assert!(close(normalized_entropy(0.5), 1.0, 1e-15));
        assert_eq!(normalized_entropy(0.0), 0.0);
        assert_eq!(normalized_entropy(1.0), 0.0);
    }
}
