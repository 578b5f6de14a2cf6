//! Empirical-risk oracles over explicit classes.
//!
//! Every objective here is linear in c, so it reduces to a per-point weight vector
//! W and the score Σ_x c(x)W(x). Ties go to the lowest concept index.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ConceptClass, Example, Family, LabeledDataset};
use crate::error::{domain, ensure_len, Error, Result};

/// Class scans above this many concept-point products run on the rayon pool.
const PARALLEL_SCAN_WORK: usize = 1 << 16;

/// A dataset with real weights in [-b, b].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedDataset {
    pairs: Vec<Example>,
    weights: Vec<f64>,
    bound: f64,
}

impl WeightedDataset {
    pub fn new(pairs: Vec<Example>, weights: Vec<f64>, bound: f64) -> Result<Self> {
        ensure_len("weights", weights.len(), pairs.len())?;
        if !(bound > 0.0) {
            return Err(domain(format!("weight bound must be positive, got {bound}")));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || w.abs() > bound) {
            return Err(domain(format!("weight {w} outside [-{bound}, {bound}]")));
        }
        Ok(Self { pairs, weights, bound })
    }

    /// Uses max |w_i| (or 1 when all weights vanish) as the bound.
    pub fn with_tight_bound(pairs: Vec<Example>, weights: Vec<f64>) -> Result<Self> {
        let b = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        Self::new(pairs, weights, if b > 0.0 { b } else { 1.0 })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Example] {
        &self.pairs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Per-point aggregate W(x) = Σ_{i: x_i = x} w_i y_i.
    pub fn point_weights(&self, m: usize) -> Result<Vec<f64>> {
        let mut w = vec![0.0; m];
        for (e, wi) in self.pairs.iter().zip(&self.weights) {
            if e.x >= m {
                return Err(domain(format!("point {} outside domain of size {m}", e.x)));
            }
            w[e.x] += wi * e.y.value();
        }
        Ok(w)
    }
}

/// The selected concept and its score Σ_x c(x)W(x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErmChoice {
    pub index: usize,
    pub score: f64,
}

/// argmax_c Σ_x c(x)W(x) by exhaustive scan; thresholds use a prefix-sum scan.
pub fn exact_weighted_argmax(class: &ConceptClass, point_weights: &[f64]) -> ErmChoice {
    if class.family() == Some(Family::Thresholds) && point_weights.len() + 1 == class.len() {
        return threshold_scan(point_weights);
    }
    match class.family() {
        // concept j labels x by bit x of j: take the sign of each weight, ties negative
        Some(Family::Shatter) if class.len() == 1 << point_weights.len() => {
            let index = point_weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(x, _)| 1usize << x).sum();
            return ErmChoice { index, score: class.get(index).dot(point_weights) };
        }
        // score(i) = 2W(i) - Σ W
        Some(Family::SparseOne) if class.len() == point_weights.len() => {
            let index = point_weights.iter().enumerate().fold(0, |b, (i, w)| if *w > point_weights[b] { i } else { b });
            return ErmChoice { index, score: class.get(index).dot(point_weights) };
        }
        _ => {}
    }
    let first = ErmChoice { index: 0, score: f64::NEG_INFINITY };
    let better = |a: ErmChoice, b: ErmChoice| if b.score > a.score || (b.score == a.score && b.index < a.index) { b } else { a };
    let score = |(i, c): (usize, &crate::domain::Concept)| ErmChoice { index: i, score: c.dot(point_weights) };
    if class.len() * class.domain_size() >= PARALLEL_SCAN_WORK {
        class.concepts().par_iter().enumerate().map(score).reduce(|| first, better)
    } else {
        class.iter().enumerate().map(score).fold(first, better)
    }
}

/// Scores of every concept, in class order.
pub fn all_scores(class: &ConceptClass, point_weights: &[f64]) -> Vec<f64> {
    class.iter().map(|c| c.dot(point_weights)).collect()
}

/// Threshold t labels x >= t positive: score(t) = Σ W - 2 Σ_{x<t} W(x).
fn threshold_scan(w: &[f64]) -> ErmChoice {
    let total: f64 = w.iter().sum();
    let mut prefix = 0.0;
    let mut best = ErmChoice { index: 0, score: total };
    for (t, wx) in w.iter().enumerate() {
        prefix += wx;
        let s = total - 2.0 * prefix;
        if s > best.score {
            best = ErmChoice { index: t + 1, score: s };
        }
    }
    best
}

/// Concept maximizing Σ_i c(x_i)y_i. An empty dataset returns index 0.
pub fn erm_max_agreement(class: &ConceptClass, s: &LabeledDataset) -> Result<ErmChoice> {
    let summary = s.summary(class.domain_size())?;
    Ok(exact_weighted_argmax(class, &summary.signed()))
}

/// The exact weighted scan for Σ_i w_i c(x_i) y_i.
pub fn exact_weighted_erm(class: &ConceptClass, w: &WeightedDataset) -> Result<ErmChoice> {
    Ok(exact_weighted_argmax(class, &w.point_weights(class.domain_size())?))
}

/// (1/n) Σ_i w_i c(x_i) y_i for concept `index`.
pub fn weighted_agreement(class: &ConceptClass, index: usize, w: &WeightedDataset) -> Result<f64> {
    if w.is_empty() {
        return Err(domain("weighted agreement of an empty dataset"));
    }
    let pw = w.point_weights(class.domain_size())?;
    Ok(class.get(index).dot(&pw) / w.len() as f64)
}

/// m_syn i.i.d. draws, index i with probability |w_i|/Σ|w_j|, emitted as (x_i, sign(w_i) y_i).
pub fn weighted_to_unweighted<R: Rng + ?Sized>(w: &WeightedDataset, m_syn: usize, rng: &mut R) -> Result<LabeledDataset> {
    let abs: Vec<f64> = w.weights.iter().map(|v| v.abs()).collect();
    if !(abs.iter().sum::<f64>() > 0.0) {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    let sampler = WeightedIndex::new(&abs).map_err(|e| Error::Degenerate(e.to_string()))?;
    let pairs = (0..m_syn)
        .map(|_| {
            let i = sampler.sample(rng);
            let e = w.pairs[i];
            let y = if w.weights[i] < 0.0 { -e.y } else { e.y };
            Example::new(e.x, y)
        })
        .collect();
    Ok(LabeledDataset::new(pairs))
}

/// m_syn = ceil(8 b² ln(2|C|/δ)/ε²).
pub fn synthetic_sample_size(bound: f64, class_size: usize, eps: f64, delta: f64) -> Result<usize> {
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(domain("need ε > 0 and δ in (0, 1)"));
    }
    let m = 8.0 * bound * bound * (2.0 * class_size as f64 / delta).ln() / (eps * eps);
    Ok(m.ceil() as usize)
}

/// Weighted ERM through one unweighted ERM call on a synthetic sample.
pub fn weighted_erm<R: Rng + ?Sized>(
    class: &ConceptClass,
    w: &WeightedDataset,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<ErmChoice> {
    let m_syn = synthetic_sample_size(w.bound(), class.len(), eps, delta)?;
    let synthetic = weighted_to_unweighted(w, m_syn, rng)?;
    erm_max_agreement(class, &synthetic)
}

/// Flips every label; used to express minimization as maximization.
pub fn negate_labels(s: &LabeledDataset) -> LabeledDataset {
    LabeledDataset::new(s.pairs().iter().map(|e| Example::new(e.x, -e.y)).collect())
}
