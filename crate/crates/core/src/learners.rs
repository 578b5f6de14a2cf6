//! Learners built on the Frank–Wolfe engine, the fixed-distribution game, and baselines.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Concept, ConceptClass, DatasetSummary, Label, LabeledDataset, PointDistribution, RealPredictor};
use crate::erm::erm_max_agreement;
use crate::error::{domain, ensure_len, Error, Result};
use crate::loss::{majority_mean, summary_loss, CornerLoss, LinkFunction};
use crate::mixture::{Atom, LawComponent, MajorityLaw, MixtureHypothesis, MAX_ATOMS};
use crate::optimizer::{learn_fw, FwOptions, FwOutput, TraceRow};

/// Materialized atoms are capped so that atoms × arity stays under this many member slots.
const ATOM_MEMBER_BUDGET: usize = 2_000_000;

/// Rounds kept for materializing the fixed-distribution mixture.
const RESERVOIR_ROUNDS: usize = 256;

#[derive(Clone, Debug)]
pub struct LearnerOptions {
    pub fw: FwOptions,
    /// Upper bound on materialized atoms; 0 skips materialization.
    pub atom_cap: usize,
    /// k = ceil(c_k/(α+ε)²) for the agnostic learner.
    pub c_k: f64,
}

impl Default for LearnerOptions {
    fn default() -> Self {
        Self { fw: FwOptions::default(), atom_cap: MAX_ATOMS, c_k: 4.0 }
    }
}

impl LearnerOptions {
    fn atoms_for(&self, arity: usize) -> usize {
        self.atom_cap.min(ATOM_MEMBER_BUDGET / arity.max(1))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub learner: String,
    pub arity: usize,
    pub iterations: usize,
    /// Loss of the concept checked at exit (Frank–Wolfe) or the verified game value (fixed distribution).
    pub final_loss: f64,
    /// max_c of the learner's loss over the whole class.
    pub max_loss: f64,
    /// Final per-concept certificate values, fixed-distribution learner only.
    pub certificates: Option<Vec<f64>>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// A randomized hypothesis with its exact mean.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnerOutput {
    /// Explicit atoms; possibly a sampled approximation of `law`.
    pub hypothesis: MixtureHypothesis,
    /// The exact law when the learner has one.
    pub law: Option<MajorityLaw>,
    pub predictor: RealPredictor,
    pub diagnostics: Diagnostics,
}

impl LearnerOutput {
    /// Pr_{x~D}[Rad(h̄)(x) != c(x)].
    pub fn error_rate(&self, c: &Concept, d: &PointDistribution) -> Result<f64> {
        self.predictor.error_rate(c, d)
    }
}

fn support_law(class: &ConceptClass, weights: &[(usize, f64)], components: Vec<LawComponent>) -> Result<MajorityLaw> {
    let pool = weights.iter().map(|(i, _)| class.get(*i).clone()).collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let w = weights.iter().map(|(_, w)| w / total).collect();
    MajorityLaw::new(pool, w, components)
}

fn output_from_fw<R: Rng + ?Sized>(
    name: &str,
    class: &ConceptClass,
    f: &CornerLoss,
    s: &LabeledDataset,
    fw: FwOutput,
    components: Vec<LawComponent>,
    options: &LearnerOptions,
    rng: &mut R,
) -> Result<LearnerOutput> {
    let law = support_law(class, &fw.state.weights(), components)?;
    let predictor = law.mean_predictor()?;
    let hypothesis = law.materialize(options.atoms_for(law.arity()), rng)?;
    let max_loss = max_class_loss(f, class, &predictor, s)?;
    Ok(LearnerOutput {
        hypothesis,
        predictor,
        diagnostics: Diagnostics {
            learner: name.into(),
            arity: law.arity(),
            iterations: fw.iterations,
            final_loss: fw.exit_loss,
            max_loss,
            certificates: None,
            trace: fw.trace,
        },
        law: Some(law),
    })
}

/// max_{c ∈ C} ℓ_S(c, h̄) by exhaustive scan.
pub fn max_class_loss(f: &CornerLoss, class: &ConceptClass, h: &RealPredictor, s: &LabeledDataset) -> Result<f64> {
    let summary = s.summary(class.domain_size())?;
    ensure_len("predictor", h.len(), class.domain_size())?;
    Ok(class.iter().map(|c| summary_loss(f, c, h.values(), &summary)).fold(f64::NEG_INFINITY, f64::max))
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("ε must lie in (0, 1), got {eps}")))
    }
}

/// Rad(g∘μ) with g = (16/19)M_7 + (3/19)t, as a mixture over Maj_7(C).
/// The same learner serves malicious and nasty noise.
pub fn learn_malicious<R: Rng + ?Sized>(
    s: &LabeledDataset,
    class: &ConceptClass,
    eps: f64,
    options: &LearnerOptions,
    rng: &mut R,
) -> Result<LearnerOutput> {
    check_eps(eps)?;
    let f = CornerLoss::malicious();
    let fw = learn_fw(&f, &LinkFunction::Malicious, class, s, eps, &options.fw, rng)?;
    let components = vec![LawComponent { weight: 16.0 / 19.0, arity: 7 }, LawComponent { weight: 3.0 / 19.0, arity: 1 }];
    output_from_fw("malicious", class, &f, s, fw, components, options, rng)
}

/// Result of checking the clean-subset error bound for one witness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// 1 - |I|/n.
    pub eta: f64,
    /// Pr_{i~Unif(I)}[Rad(h̄)(x_i) != y_i].
    pub empirical: f64,
    /// (η + ε/2)/(2(1 - η)).
    pub bound: f64,
    pub holds: bool,
    /// A concept consistent with S_I.
    pub witness_concept: usize,
}

/// Checks the clean-subset bound for an index set I that some c ∈ C labels perfectly.
pub fn empirical_consistent_error(
    h: &RealPredictor,
    s: &LabeledDataset,
    class: &ConceptClass,
    clean: &[usize],
    eps: f64,
) -> Result<ConsistencyReport> {
    if clean.is_empty() {
        return Err(Error::Witness("empty clean index set".into()));
    }
    if let Some(i) = clean.iter().find(|i| **i >= s.len()) {
        return Err(Error::Witness(format!("index {i} outside dataset of size {}", s.len())));
    }
    let pairs = s.pairs();
    let witness = class
        .iter()
        .position(|c| clean.iter().all(|&i| c.at(pairs[i].x) == pairs[i].y))
        .ok_or_else(|| Error::Witness("no concept is consistent with the clean subset".into()))?;
    let empirical = clean.iter().map(|&i| (1.0 - h.get(pairs[i].x) * pairs[i].y.value()) / 2.0).sum::<f64>() / clean.len() as f64;
    let eta = 1.0 - clean.len() as f64 / s.len() as f64;
    let bound = (eta + eps / 2.0) / (2.0 * (1.0 - eta));
    Ok(ConsistencyReport { eta, empirical, bound, holds: empirical <= bound + 1e-12, witness_concept: witness })
}

/// (3/2)η̂ + ε/2: the bound on error over the full clean sample under nasty noise.
pub fn nasty_clean_sample_bound(eta_hat: f64, eps: f64) -> f64 {
    1.5 * eta_hat + eps / 2.0
}

/// Smallest odd integer at least `x`.
pub fn odd_ceil(x: f64) -> usize {
    let k = x.ceil().max(1.0) as usize;
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k
    }
}

/// k = ceil(c_k/(α+ε)²), forced odd.
pub fn agnostic_arity(c_k: f64, alpha: f64, eps: f64) -> usize {
    odd_ceil(c_k / ((alpha + eps) * (alpha + eps)))
}

/// Rad(M_k∘μ) minimizing the shifted relative-error loss; a mixture over Maj_k(C).
pub fn learn_agnostic<R: Rng + ?Sized>(
    s: &LabeledDataset,
    class: &ConceptClass,
    eps: f64,
    alpha: f64,
    options: &LearnerOptions,
    rng: &mut R,
) -> Result<LearnerOutput> {
    check_eps(eps)?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!("α must lie in [0, 1), got {alpha}")));
    }
    let k = agnostic_arity(options.c_k, alpha, eps);
    let f = CornerLoss::agnostic(alpha, eps);
    let fw = learn_fw(&f, &LinkFunction::majority(k)?, class, s, eps, &options.fw, rng)?;
    let mut out = output_from_fw("agnostic", class, &f, s, fw, vec![LawComponent { weight: 1.0, arity: k }], options, rng)?;
    // report the unshifted loss ℓ = ℓ̃ + ε
    out.diagnostics.final_loss += eps;
    out.diagnostics.max_loss += eps;
    Ok(out)
}

/// max_c [Pr_S[h != c] - (1+α)Pr_S[c != y]] - ε; nonpositive when the relative-error contract holds.
pub fn relative_error_slack(h: &RealPredictor, s: &LabeledDataset, class: &ConceptClass, alpha: f64, eps: f64) -> Result<f64> {
    let summary = s.summary(class.domain_size())?;
    let n = summary.n as f64;
    let counts: Vec<f64> = (0..summary.domain_size()).map(|x| summary.pos[x] + summary.neg[x]).collect();
    let mut worst = f64::NEG_INFINITY;
    for c in class.iter() {
        let h_err: f64 = (0..counts.len()).map(|x| counts[x] * (1.0 - h.get(x) * c.value(x)) / 2.0).sum::<f64>() / n;
        worst = worst.max(h_err - (1.0 + alpha) * summary.disagreement(c) - eps);
    }
    Ok(worst)
}

/// η(c, f, S, D) = (1/4)E_S[1 + f + cy(f - 1)] - (1/2)E_D[f].
pub fn certificate_eta(c: &Concept, fdet: &RealPredictor, s: &LabeledDataset, d: &PointDistribution) -> Result<f64> {
    let m = c.len();
    ensure_len("detection predictor", fdet.len(), m)?;
    ensure_len("distribution", d.len(), m)?;
    if s.is_empty() {
        return Err(domain("certificate over an empty dataset"));
    }
    Ok(certificate_from_summary(c, fdet.values(), &s.summary(m)?, d.weights()))
}

fn certificate_from_summary(c: &Concept, f: &[f64], s: &DatasetSummary, d: &[f64]) -> f64 {
    let mut sample = 0.0;
    let mut dist = 0.0;
    for x in 0..f.len() {
        let (p, q) = (s.pos[x], s.neg[x]);
        sample += (p + q) * (1.0 + f[x]) + c.value(x) * (p - q) * (f[x] - 1.0);
        dist += d[x] * f[x];
    }
    sample / (4.0 * s.n as f64) - dist / 2.0
}

/// The same quantity as Pr_S[c(x) != y or F(x) = 1] - Pr_D[F(x) = 1] with F(x) ~ Rad(f(x)).
pub fn certificate_eta_probabilistic(c: &Concept, fdet: &RealPredictor, s: &LabeledDataset, d: &PointDistribution) -> Result<f64> {
    ensure_len("detection predictor", fdet.len(), c.len())?;
    ensure_len("distribution", d.len(), c.len())?;
    if s.is_empty() {
        return Err(domain("certificate over an empty dataset"));
    }
    let fire = |x: usize| (1.0 + fdet.get(x)) / 2.0;
    let sample: f64 = s.pairs().iter().map(|e| if c.at(e.x) != e.y { 1.0 } else { fire(e.x) }).sum::<f64>() / s.len() as f64;
    let dist: f64 = (0..c.len()).map(|x| d.mass(x) * fire(x)).sum();
    Ok(sample - dist)
}

/// A corruption certificate for concept c.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub concept: Concept,
    pub detection: RealPredictor,
    pub value: f64,
    pub kappa: f64,
}

impl Certificate {
    /// Computes both forms and rejects a disagreement beyond 1e-10.
    pub fn new(concept: Concept, detection: RealPredictor, s: &LabeledDataset, d: &PointDistribution, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(domain(format!("certificate slack must be nonnegative, got {kappa}")));
        }
        let value = certificate_eta(&concept, &detection, s, d)?;
        let alt = certificate_eta_probabilistic(&concept, &detection, s, d)?;
        if (value - alt).abs() > 1e-10 {
            return Err(Error::State(format!("certificate forms disagree: {value} vs {alt}")));
        }
        Ok(Self { concept, detection, value, kappa })
    }
}

/// κ = 3 sqrt(ln(2/δ)/n).
pub fn default_kappa(n: usize, delta: f64) -> f64 {
    3.0 * ((2.0 / delta).ln() / n as f64).sqrt()
}

fn detection_value(cm: f64) -> f64 {
    if cm >= 0.0 {
        (cm - 1.0) / (cm + 1.0)
    } else {
        -1.0
    }
}

/// f(x) = (cμ̄ - 1)/(cμ̄ + 1) where cμ̄ >= 0, else -1.
pub fn detection_f(c: &Concept, mu: &RealPredictor) -> Result<RealPredictor> {
    ensure_len("mean predictor", mu.len(), c.len())?;
    RealPredictor::new((0..c.len()).map(|x| detection_value(c.value(x) * mu.get(x))).collect())
}

/// k = ceil(4/ε²), forced odd.
pub fn fixed_dist_arity(eps: f64) -> usize {
    odd_ceil(4.0 / (eps * eps))
}

/// Multiplicative weights over C against the learner's best response M_k(μ̄_r).
///
/// Concept c's payoff is Pr_D[Rad(h̄) != c] minus its certificate, the largest η(c, f, S, D)
/// over the detection functions f_{c, μ_r} seen so far. Stops once the averaged hypothesis
/// has max_c payoff <= ε/2.
pub fn learn_fixed_dist_nasty<R: Rng + ?Sized>(
    s: &LabeledDataset,
    class: &ConceptClass,
    d: &PointDistribution,
    eps: f64,
    kappa: f64,
    options: &LearnerOptions,
    rng: &mut R,
) -> Result<LearnerOutput> {
    check_eps(eps)?;
    let m = class.domain_size();
    ensure_len("distribution", d.len(), m)?;
    if s.is_empty() {
        return Err(domain("fixed-distribution learner on an empty dataset"));
    }
    if !(kappa >= 0.0) {
        return Err(domain(format!("certificate slack must be nonnegative, got {kappa}")));
    }
    let summary = s.summary(m)?;
    let n_concepts = class.len();
    let k = fixed_dist_arity(eps);
    let ln_c = (n_concepts.max(2) as f64).ln();
    let rounds = (64.0 * ln_c / (eps * eps)).ceil() as usize;
    let lr = (ln_c / rounds as f64).sqrt();
    let values: Vec<Vec<f64>> = class.iter().map(|c| c.labels().iter().map(|l| l.value()).collect()).collect();
    let dw = d.weights();

    // f ≡ -1 gives η = Pr_S[c != y]
    let mut cert: Vec<f64> = class.iter().map(|c| summary.disagreement(c)).collect();
    let mut log_w = vec![0.0; n_concepts];
    let mut h_sum = vec![0.0; m];
    let mut trace = Vec::new();
    let mut reservoir: Vec<Vec<f64>> = Vec::new();
    let mut mu_bar = vec![0.0; m];
    let mut f = vec![0.0; m];

    for r in 1..=rounds {
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);

        mu_bar.iter_mut().for_each(|v| *v = 0.0);
        for (wc, cv) in w.iter().zip(&values) {
            if *wc > 0.0 {
                for (mb, c) in mu_bar.iter_mut().zip(cv) {
                    *mb += wc * c;
                }
            }
        }
        let mut h = Vec::with_capacity(m);
        for v in mu_bar.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
            h.push(majority_mean(k, *v)?);
        }
        for (hs, hx) in h_sum.iter_mut().zip(&h) {
            *hs += hx;
        }
        if options.atom_cap > 0 {
            reservoir_push(&mut reservoir, w.clone(), r, rng);
        }

        let mut violation = f64::NEG_INFINITY;
        let mut worst = 0;
        for (ci, cv) in values.iter().enumerate() {
            for x in 0..m {
                f[x] = detection_value(cv[x] * mu_bar[x]);
            }
            let eta = certificate_from_summary(class.get(ci), &f, &summary, dw);
            if eta > cert[ci] {
                cert[ci] = eta;
            }
            let err_now = disagreement_mass(&h, cv, dw, 1.0);
            log_w[ci] += lr * (err_now - cert[ci]);
            let avg_err = disagreement_mass(&h_sum, cv, dw, r as f64);
            if avg_err - cert[ci] > violation {
                violation = avg_err - cert[ci];
                worst = ci;
            }
        }
        trace.push(TraceRow { t: r, gap: violation, loss: violation, gamma: lr });

        if violation <= eps / 2.0 {
            let predictor = RealPredictor::new(h_sum.iter().map(|v| v / r as f64).collect())?;
            let hypothesis = materialize_rounds(class, &reservoir, k, options.atoms_for(k), rng)?;
            return Ok(LearnerOutput {
                hypothesis,
                law: None,
                predictor,
                diagnostics: Diagnostics {
                    learner: "fixed_dist".into(),
                    arity: k,
                    iterations: r,
                    final_loss: violation,
                    max_loss: violation,
                    certificates: Some(cert),
                    trace,
                },
            });
        }
        if r == rounds {
            return Err(Error::Budget {
                iterations: r,
                detail: format!("game value {violation} above ε/2 = {}; worst concept {worst}", eps / 2.0),
                trace: trace.iter().map(|t| t.loss).collect(),
            });
        }
    }
    unreachable!("the round loop returns")
}

/// Σ_x D(x)(1 - (h(x)/scale)c(x))/2.
fn disagreement_mass(h: &[f64], c: &[f64], d: &[f64], scale: f64) -> f64 {
    let corr: f64 = h.iter().zip(c).zip(d).map(|((hx, cx), dx)| dx * hx * cx).sum();
    (1.0 - corr / scale) / 2.0
}

/// Algorithm R: after `seen` items each is kept with probability RESERVOIR_ROUNDS/seen.
fn reservoir_push<R: Rng + ?Sized>(reservoir: &mut Vec<Vec<f64>>, item: Vec<f64>, seen: usize, rng: &mut R) {
    if reservoir.len() < RESERVOIR_ROUNDS {
        reservoir.push(item);
    } else {
        let j = rng.gen_range(0..seen);
        if j < RESERVOIR_ROUNDS {
            reservoir[j] = item;
        }
    }
}

/// Atoms Maj_k(c_1..c_k) with c_i i.i.d. from a uniformly chosen retained round.
fn materialize_rounds<R: Rng + ?Sized>(
    class: &ConceptClass,
    reservoir: &[Vec<f64>],
    k: usize,
    cap: usize,
    rng: &mut R,
) -> Result<MixtureHypothesis> {
    if cap == 0 || reservoir.is_empty() {
        return MixtureHypothesis::new(class.concepts().to_vec(), k, Vec::new());
    }
    let samplers = reservoir
        .iter()
        .map(|w| WeightedIndex::new(w).map_err(|e| Error::Degenerate(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let atoms = (0..cap)
        .map(|_| {
            let sampler = &samplers[rng.gen_range(0..samplers.len())];
            Atom { weight: 1.0 / cap as f64, members: (0..k).map(|_| sampler.sample(rng) as u32).collect() }
        })
        .collect();
    MixtureHypothesis::new(class.concepts().to_vec(), k, atoms)
}

/// The ERM concept as a deterministic hypothesis.
pub fn erm_baseline(s: &LabeledDataset, class: &ConceptClass) -> Result<LearnerOutput> {
    let choice = erm_max_agreement(class, s)?;
    let c = class.get(choice.index).clone();
    let n = s.len().max(1) as f64;
    Ok(LearnerOutput {
        predictor: c.to_predictor(),
        hypothesis: MixtureHypothesis::single(c),
        law: None,
        diagnostics: Diagnostics {
            learner: "erm".into(),
            arity: 1,
            final_loss: (n - choice.score) / (2.0 * n),
            ..Diagnostics::default()
        },
    })
}

/// The constant-0 predictor: an even mixture of the two constant concepts.
pub fn coin_flip(m: usize) -> Result<LearnerOutput> {
    let pool = vec![Concept::constant(m, Label::POS), Concept::constant(m, Label::NEG)];
    let hypothesis = MixtureHypothesis::from_concepts(pool, &[0.5, 0.5])?;
    Ok(LearnerOutput {
        predictor: RealPredictor::constant(m, 0.0)?,
        hypothesis,
        law: None,
        diagnostics: Diagnostics { learner: "coin_flip".into(), arity: 1, ..Diagnostics::default() },
    })
}
