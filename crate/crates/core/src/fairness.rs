//! Multiaccuracy and calibration audits, and the bridges from them to robust learning.
//!
//! Multiaccuracy at level 2ε is the same thing as the agnostic guarantee
//! error(Rad(h̄), c) ≤ Pr[y ≠ c(x)] + ε for every c. A predictor that is both calibrated and
//! multiaccurate on a sample, pushed through a bijective feasible link, has small malicious loss.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Concept, ConceptClass, JointDistribution, Label, LabeledDataset, RealPredictor};
use crate::error::{ensure_len, Error, Result};
use crate::loss::{check_g_feasible, summary_loss, unit_grid, CornerLoss, LinkFunction, DEFAULT_GRID};

/// Float slack used when an audit is compared to τ.
pub const AUDIT_TOL: f64 = 1e-12;

/// Post-processing bound factor: loss ≤ C_B·τ.
pub const C_B: f64 = 4.0;

/// What achieves the reported violation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditWitness {
    Concept(usize),
    Level(f64),
    /// Nothing to audit (no level has mass).
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub max_violation: f64,
    pub witness: AuditWitness,
    pub tolerance: Option<f64>,
}

impl AuditReport {
    pub fn with_tolerance(mut self, tau: f64) -> Self {
        self.tolerance = Some(tau);
        self
    }

    /// Violation within τ (plus float slack); true when no tolerance is attached.
    pub fn passes(&self) -> bool {
        self.tolerance.is_none_or(|t| self.max_violation <= t + AUDIT_TOL)
    }
}

/// E_{Dxy}[c(x)(y - h̄(x))].
pub fn correlation(h: &RealPredictor, c: &Concept, dxy: &JointDistribution) -> f64 {
    (0..dxy.domain_size())
        .map(|x| {
            let (p, n) = (dxy.mass(x, Label::POS), dxy.mass(x, Label::NEG));
            c.value(x) * (p - n - (p + n) * h.get(x))
        })
        .sum()
}

/// max_c E[c(x)(y - h̄(x))], lowest index on ties.
pub fn multiaccuracy_violation(h: &RealPredictor, class: &ConceptClass, dxy: &JointDistribution) -> Result<AuditReport> {
    ensure_len("predictor", h.len(), dxy.domain_size())?;
    ensure_len("concept class", class.domain_size(), dxy.domain_size())?;
    let best = class
        .concepts()
        .par_iter()
        .enumerate()
        .map(|(i, c)| (i, correlation(h, c, dxy)))
        .reduce(|| (usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    Ok(AuditReport { max_violation: best.1, witness: AuditWitness::Concept(best.0), tolerance: None })
}

/// Level sets of h̄ with positive mass: value -> (mass, E[y·1{h̄ = v}]).
fn levels(h: &RealPredictor, dxy: &JointDistribution) -> BTreeMap<u64, (f64, f64, f64)> {
    let mut out: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for x in 0..dxy.domain_size() {
        let (p, n) = (dxy.mass(x, Label::POS), dxy.mass(x, Label::NEG));
        if p + n <= 0.0 {
            continue;
        }
        let v = h.get(x);
        // +0.0 and -0.0 are the same level
        let key = if v == 0.0 { 0.0f64.to_bits() } else { v.to_bits() };
        let e = out.entry(key).or_insert((v, 0.0, 0.0));
        e.1 += p + n;
        e.2 += p - n;
    }
    out
}

/// max over realized levels v of |E[y | h̄ = v] - v|.
pub fn calibration_violation(h: &RealPredictor, dxy: &JointDistribution) -> Result<AuditReport> {
    ensure_len("predictor", h.len(), dxy.domain_size())?;
    let mut best = AuditReport { max_violation: 0.0, witness: AuditWitness::None, tolerance: None };
    let mut first = true;
    for (v, mass, signed) in levels(h, dxy).into_values() {
        let gap = (signed / mass - v).abs();
        if first || gap > best.max_violation {
            best.max_violation = gap;
            best.witness = AuditWitness::Level(v);
            first = false;
        }
    }
    Ok(best)
}

/// Both sides of the multiaccuracy / agnostic-learning equivalence, evaluated separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    /// error_D(Rad(h̄), c) ≤ Pr[y ≠ c(x)] + ε for every c.
    pub agnostic: bool,
    /// violation ≤ 2ε.
    pub multiaccurate: bool,
    /// max_c error_D(Rad(h̄), c) - Pr[y ≠ c(x)].
    pub agnostic_slack: f64,
    pub violation: f64,
}

pub fn agnostic_equivalence(h: &RealPredictor, class: &ConceptClass, dxy: &JointDistribution, eps: f64) -> Result<EquivalenceCheck> {
    let report = multiaccuracy_violation(h, class, dxy)?;
    let marginal = dxy.marginal();
    let mut slack = f64::NEG_INFINITY;
    for c in class.iter() {
        let err = h.error_rate(c, &marginal)?;
        slack = slack.max(err - dxy.disagreement(c));
    }
    Ok(EquivalenceCheck {
        agnostic: slack <= eps,
        multiaccurate: report.max_violation <= 2.0 * eps,
        agnostic_slack: slack,
        violation: report.max_violation,
    })
}

/// Unif(S) as a joint law over a domain of size m.
pub fn empirical_law(s: &LabeledDataset, m: usize) -> Result<JointDistribution> {
    let summary = s.summary(m)?;
    if summary.n == 0 {
        return Err(crate::error::domain("empirical law of an empty sample"));
    }
    let n = summary.n as f64;
    let neg: Vec<f64> = summary.neg.iter().map(|c| c / n).collect();
    let pos: Vec<f64> = summary.pos.iter().map(|c| c / n).collect();
    JointDistribution::from_parts(&neg, &pos)
}

/// Strictly increasing on the grid with g(-1) = -1 and g(1) = 1; with continuity this is a bijection of [-1, 1].
pub fn check_bijective(g: &LinkFunction, grid: usize) -> bool {
    let pts = unit_grid(grid);
    (g.eval(-1.0) + 1.0).abs() <= 1e-12
        && (g.eval(1.0) - 1.0).abs() <= 1e-12
        && pts.windows(2).all(|w| g.eval(w[1]) > g.eval(w[0]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalMaOutput {
    pub predictor: RealPredictor,
    /// max_c ℓ_S(c, g∘μ) for the malicious loss, by exhaustive scan.
    pub max_loss: f64,
    pub witness: usize,
    /// C_B·τ.
    pub bound: f64,
    /// max_loss / τ, absent at τ = 0.
    pub ratio: Option<f64>,
    pub multiaccuracy: AuditReport,
    pub calibration: AuditReport,
}

/// h̄ = g∘μ for a μ that is τ-calibrated and τ-multiaccurate on Unif(S).
pub fn postprocess_cal_ma(
    mu: &RealPredictor,
    g: &LinkFunction,
    class: &ConceptClass,
    s: &LabeledDataset,
    tau: f64,
) -> Result<CalMaOutput> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("τ must be nonnegative, got {tau}")));
    }
    let m = class.domain_size();
    ensure_len("predictor", mu.len(), m)?;
    let f = CornerLoss::malicious();
    if !check_bijective(g, DEFAULT_GRID) {
        return Err(Error::Config(format!("link {} is not a bijection of [-1, 1]", g.name())));
    }
    let feas = check_g_feasible(&f, g, DEFAULT_GRID);
    if !feas.passed {
        return Err(Error::Config(format!("link {} is not feasible for the malicious loss (violation {})", g.name(), feas.max_violation)));
    }
    let law = empirical_law(s, m)?;
    let ma = multiaccuracy_violation(mu, class, &law)?.with_tolerance(tau);
    let cal = calibration_violation(mu, &law)?.with_tolerance(tau);
    if !ma.passes() {
        return Err(Error::Config(format!("μ is not {tau}-multiaccurate (violation {})", ma.max_violation)));
    }
    if !cal.passes() {
        return Err(Error::Config(format!("μ is not {tau}-calibrated (violation {})", cal.max_violation)));
    }
    let predictor = mu.map(|t| g.eval(t).clamp(-1.0, 1.0));
    let summary = s.summary(m)?;
    let (witness, max_loss) = class
        .concepts()
        .par_iter()
        .enumerate()
        .map(|(i, c)| (i, summary_loss(&f, c, &predictor, &summary)))
        .reduce(|| (usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let bound = C_B * tau;
    if max_loss > bound + 1e-10 {
        return Err(Error::State(format!("post-processed loss {max_loss} exceeds {bound}")));
    }
    Ok(CalMaOutput {
        predictor,
        max_loss,
        witness,
        bound,
        ratio: (tau > 0.0).then(|| max_loss / tau),
        multiaccuracy: ma,
        calibration: cal,
    })
}
