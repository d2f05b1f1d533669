//! Contrastive probability heads shared by NTL and ICL, and the dual loss
//! built on top of them.

use crate::autodiff::{Graph, NodeId};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before any log.
pub const PROB_FLOOR: f64 = 1e-12;

/// NTL: for every view `k`,
/// `p_k = h(z_k, z) / (h(z_k, z) + sum_{l != k} h(z_k, z_l))` with
/// `h(a, b) = exp(cos(a, b) / tau)`. Returns the clamped `p_k` nodes.
pub fn ntl_probabilities(g: &mut Graph, views: &[NodeId], original: NodeId, tau: f64) -> Vec<NodeId> {
    let inv_tau = 1.0 / tau;
    (0..views.len())
        .map(|k| {
            let mut logits = Vec::with_capacity(views.len());
            let pos = g.cos_sim(views[k], original);
            logits.push(g.scale(pos, inv_tau));
            for l in (0..views.len()).filter(|&l| l != k) {
                let neg = g.cos_sim(views[k], views[l]);
                logits.push(g.scale(neg, inv_tau));
            }
            let logits = g.stack(&logits);
            let probs = g.softmax(logits);
            let p = g.index(probs, 0);
            g.clamp(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        })
        .collect()
}

/// ICL: `p_k = h(a_k, b_k) / sum_l h(a_l, b_k)` with
/// `h(a, b) = exp(cos(f(a), g(b)) / tau)`; `window_embs[l] = f(a_l)` and
/// `complement_embs[k] = g(b_k)`. Returns the clamped `p_k` nodes.
pub fn icl_probabilities(
    g: &mut Graph,
    window_embs: &[NodeId],
    complement_embs: &[NodeId],
    tau: f64,
) -> Vec<NodeId> {
    assert_eq!(window_embs.len(), complement_embs.len());
    if window_embs.len() == 1 {
        log::warn!("ICL with a single window: p_1 = 1 by normalization, the normal loss is degenerate");
    }
    let inv_tau = 1.0 / tau;
    (0..complement_embs.len())
        .map(|k| {
            let logits: Vec<NodeId> = window_embs
                .iter()
                .map(|&a| {
                    let c = g.cos_sim(a, complement_embs[k]);
                    g.scale(c, inv_tau)
                })
                .collect();
            let logits = g.stack(&logits);
            let probs = g.softmax(logits);
            let p = g.index(probs, k);
            g.clamp(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        })
        .collect()
}

/// `L_n = -sum_k log p_k` and `L_a = -sum_k log(1 - p_k)`.
pub fn contrastive_dual_loss(g: &mut Graph, probs: &[NodeId]) -> (NodeId, NodeId) {
    let mut normal_terms = Vec::with_capacity(probs.len());
    let mut anomaly_terms = Vec::with_capacity(probs.len());
    for &p in probs {
        normal_terms.push((g.log(p, PROB_FLOOR), -1.0));
        let q = g.scale(p, -1.0);
        let q = g.offset(q, 1.0);
        anomaly_terms.push((g.log(q, PROB_FLOOR), -1.0));
    }
    (g.weighted_sum(&normal_terms), g.weighted_sum(&anomaly_terms))
}
