//! Noise processes, heuristic adversary strategies, and exact lower-bound instances.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::domain::{Concept, ConceptClass, Example, JointDistribution, Label, LabeledDataset, PointDistribution, RealPredictor};
use crate::error::{domain, ensure_len, Error, Result};

/// Which corruption process generates the learner's sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Malicious,
    Nasty,
    NastyClassification,
    Agnostic,
    Tv,
}

impl NoiseModel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Malicious => "malicious",
            Self::Nasty => "nasty",
            Self::NastyClassification => "nasty_classification",
            Self::Agnostic => "agnostic",
            Self::Tv => "tv",
        }
    }
}

impl std::str::FromStr for NoiseModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "malicious" => Self::Malicious,
            "nasty" => Self::Nasty,
            "nasty_classification" | "nasty-classification" => Self::NastyClassification,
            "agnostic" => Self::Agnostic,
            "tv" => Self::Tv,
            other => return Err(Error::Config(format!("unknown noise model `{other}`"))),
        })
    }
}

/// How corrupted entries are chosen and rewritten.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Every corrupted entry becomes the fixed pair (x, y).
    Plant { x: usize, y: Label },
    /// Corrupted entries keep x and take -c*(x); malicious draws x ~ D first.
    Flip,
    /// Corrupted entries become a uniform point with a uniform label.
    Random,
    /// Make a rival concept look as plausible as the target: corrupt where they disagree,
    /// relabeling with the rival. Without an explicit rival, the concept whose disagreement
    /// mass is closest to `region_mass` (default 2η) is used.
    Concentrate { rival: Option<usize>, region_mass: Option<f64> },
    /// Maximal coupling of the clean law to the corrupted law in the context.
    TvMimic,
    /// Labels drawn as Rad(f(x)) from a committed table f.
    LabelTable(Vec<f64>),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Plant { .. } => "plant",
            Self::Flip => "flip",
            Self::Random => "random",
            Self::Concentrate { .. } => "concentrate",
            Self::TvMimic => "tv_mimic",
            Self::LabelTable(_) => "label_table",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub rate: f64,
    pub strategy: Strategy,
}

impl NoiseSpec {
    pub fn new(model: NoiseModel, rate: f64, strategy: Strategy) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("noise rate must lie in [0, 1], got {rate}")));
        }
        use NoiseModel::*;
        use Strategy::*;
        let ok = match model {
            Malicious => matches!(strategy, Plant { .. } | Flip | Random | Concentrate { .. }),
            Nasty => matches!(strategy, Plant { .. } | Flip | Random | Concentrate { .. } | TvMimic),
            NastyClassification => matches!(strategy, Flip | Concentrate { .. }),
            Agnostic => matches!(strategy, Flip | LabelTable(_)),
            Tv => matches!(strategy, TvMimic),
        };
        if !ok {
            return Err(Error::Config(format!("strategy {} is not available for {} noise", strategy.name(), model.name())));
        }
        Ok(Self { model, rate, strategy })
    }

    /// No corruption at all.
    pub fn clean() -> Self {
        Self { model: NoiseModel::Nasty, rate: 0.0, strategy: Strategy::Flip }
    }
}

/// What the adversary knows: target, marginal, class, and the law to imitate for TV noise.
#[derive(Clone, Copy, Debug)]
pub struct AdversaryContext<'a> {
    pub target: &'a Concept,
    pub marginal: &'a PointDistribution,
    pub class: Option<&'a ConceptClass>,
    pub corrupted_law: Option<&'a JointDistribution>,
}

/// n i.i.d. pairs (x, c*(x)) with x ~ D.
pub fn draw_clean<R: Rng + ?Sized>(d: &PointDistribution, target: &Concept, n: usize, rng: &mut R) -> Result<LabeledDataset> {
    ensure_len("target", target.len(), d.len())?;
    let sampler = d.sampler();
    Ok(LabeledDataset::new(
        (0..n)
            .map(|_| {
                let x = sampler.sample(rng);
                Example::new(x, target.at(x))
            })
            .collect(),
    ))
}

/// Corrupts a realized clean sample S° according to `spec`.
///
/// Malicious, agnostic and TV noise act independently per index, which is the same as
/// generating the stream draw by draw; nasty noise draws |J| ~ Bin(n, η) and then lets the
/// strategy pick J after seeing S°.
pub fn corrupt<R: Rng + ?Sized>(
    clean: &LabeledDataset,
    spec: &NoiseSpec,
    ctx: &AdversaryContext<'_>,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let m = ctx.marginal.len();
    ensure_len("target", ctx.target.len(), m)?;
    clean.check_domain(m)?;
    let original = clean.pairs().to_vec();
    let mut pairs = original.clone();
    let mut mask = vec![false; pairs.len()];
    if spec.rate > 0.0 && !pairs.is_empty() {
        match spec.model {
            NoiseModel::Malicious => malicious(&mut pairs, &mut mask, spec, ctx, rng)?,
            NoiseModel::Nasty | NoiseModel::NastyClassification => nasty(&mut pairs, &mut mask, spec, ctx, rng)?,
            NoiseModel::Agnostic => agnostic(&mut pairs, &mut mask, spec, ctx, rng)?,
            NoiseModel::Tv => {
                let coupling = coupling_for(spec, ctx)?;
                for (p, flag) in pairs.iter_mut().zip(mask.iter_mut()) {
                    if let Some(e) = coupling.apply(*p, rng) {
                        *p = e;
                        *flag = true;
                    }
                }
            }
        }
    }
    LabeledDataset::with_corruption(pairs, mask, Some(original))
}

fn rival_index(class: &ConceptClass, ctx: &AdversaryContext<'_>, rival: Option<usize>, region_mass: f64) -> Result<usize> {
    if let Some(r) = rival {
        if r >= class.len() {
            return Err(domain(format!("rival {r} outside class of size {}", class.len())));
        }
        return Ok(r);
    }
    let target = ctx.target;
    let mass = |c: &Concept| (0..c.len()).filter(|x| c.at(*x) != target.at(*x)).map(|x| ctx.marginal.mass(x)).sum::<f64>();
    class
        .iter()
        .enumerate()
        .filter(|(_, c)| mass(c) > 0.0)
        .min_by(|(_, a), (_, b)| (mass(a) - region_mass).abs().total_cmp(&(mass(b) - region_mass).abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Config("no rival concept differs from the target on the support".into()))
}

/// The rival concept and its disagreement region as a sampler over x.
struct Rival {
    concept: Concept,
    region: Vec<bool>,
    sampler: Option<WeightedIndex<f64>>,
}

fn rival_for(spec: &NoiseSpec, ctx: &AdversaryContext<'_>) -> Result<Rival> {
    let Strategy::Concentrate { rival, region_mass } = &spec.strategy else {
        unreachable!("only called for the concentrate strategy")
    };
    let class = ctx.class.ok_or_else(|| Error::Config("concentrate needs the concept class".into()))?;
    let idx = rival_index(class, ctx, *rival, region_mass.unwrap_or(2.0 * spec.rate))?;
    let concept = class.get(idx).clone();
    let region: Vec<bool> = (0..concept.len()).map(|x| concept.at(x) != ctx.target.at(x)).collect();
    let w: Vec<f64> = (0..concept.len()).map(|x| if region[x] { ctx.marginal.mass(x) } else { 0.0 }).collect();
    Ok(Rival { concept, region, sampler: WeightedIndex::new(&w).ok() })
}

fn malicious<R: Rng + ?Sized>(
    pairs: &mut [Example],
    mask: &mut [bool],
    spec: &NoiseSpec,
    ctx: &AdversaryContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let m = ctx.marginal.len();
    let d_sampler = ctx.marginal.sampler();
    let rival = match spec.strategy {
        Strategy::Concentrate { .. } => Some(rival_for(spec, ctx)?),
        _ => None,
    };
    if let Strategy::Plant { x, .. } = spec.strategy {
        if x >= m {
            return Err(domain(format!("planted point {x} outside domain of size {m}")));
        }
    }
    for (p, flag) in pairs.iter_mut().zip(mask.iter_mut()) {
        if rng.gen::<f64>() >= spec.rate {
            continue;
        }
        *flag = true;
        *p = match &spec.strategy {
            Strategy::Plant { x, y } => Example::new(*x, *y),
            Strategy::Flip => {
                let x = d_sampler.sample(rng);
                Example::new(x, -ctx.target.at(x))
            }
            Strategy::Random => Example::new(rng.gen_range(0..m), random_label(rng)),
            Strategy::Concentrate { .. } => {
                let r = rival.as_ref().expect("built above");
                let x = match &r.sampler {
                    Some(s) => s.sample(rng),
                    None => d_sampler.sample(rng),
                };
                Example::new(x, r.concept.at(x))
            }
            _ => unreachable!("validated by NoiseSpec::new"),
        };
    }
    Ok(())
}

fn nasty<R: Rng + ?Sized>(
    pairs: &mut [Example],
    mask: &mut [bool],
    spec: &NoiseSpec,
    ctx: &AdversaryContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let n = pairs.len();
    let m = ctx.marginal.len();
    if let Strategy::TvMimic = spec.strategy {
        // the coupling replaces each index independently with probability TV = η
        let coupling = coupling_for(spec, ctx)?;
        if (coupling.tv - spec.rate).abs() > 1e-9 {
            return Err(Error::Config(format!("corrupted law is at TV {} from the clean law, not η = {}", coupling.tv, spec.rate)));
        }
        for (p, flag) in pairs.iter_mut().zip(mask.iter_mut()) {
            if let Some(e) = coupling.apply(*p, rng) {
                *p = e;
                *flag = true;
            }
        }
        return Ok(());
    }
    let budget = Binomial::new(n as u64, spec.rate).map_err(|e| domain(e.to_string()))?.sample(rng) as usize;
    let classification = spec.model == NoiseModel::NastyClassification;
    match &spec.strategy {
        Strategy::Flip | Strategy::Plant { .. } | Strategy::Random => {
            for i in sample_indices(rng, n, budget) {
                mask[i] = true;
                let old = pairs[i];
                pairs[i] = match &spec.strategy {
                    Strategy::Flip => Example::new(old.x, -old.y),
                    Strategy::Plant { x, y } if *x < m => Example::new(*x, *y),
                    Strategy::Plant { x, .. } => return Err(domain(format!("planted point {x} outside domain of size {m}"))),
                    _ => Example::new(rng.gen_range(0..m), random_label(rng)),
                };
            }
        }
        Strategy::Concentrate { .. } => {
            let r = rival_for(spec, ctx)?;
            let inside: Vec<usize> = (0..n).filter(|&i| r.region[pairs[i].x]).collect();
            if budget <= inside.len() {
                for j in sample_indices(rng, inside.len(), budget) {
                    let i = inside[j];
                    mask[i] = true;
                    pairs[i].y = r.concept.at(pairs[i].x);
                }
            } else {
                for &i in &inside {
                    mask[i] = true;
                    pairs[i].y = r.concept.at(pairs[i].x);
                }
                let outside: Vec<usize> = (0..n).filter(|&i| !r.region[pairs[i].x]).collect();
                for j in sample_indices(rng, outside.len(), budget - inside.len()) {
                    let i = outside[j];
                    mask[i] = true;
                    // labels outside the region cannot help the rival; only move points when allowed
                    if let (false, Some(s)) = (classification, &r.sampler) {
                        let x = s.sample(rng);
                        pairs[i] = Example::new(x, r.concept.at(x));
                    }
                }
            }
        }
        _ => unreachable!("validated by NoiseSpec::new"),
    }
    Ok(())
}

fn agnostic<R: Rng + ?Sized>(
    pairs: &mut [Example],
    mask: &mut [bool],
    spec: &NoiseSpec,
    ctx: &AdversaryContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let table = agnostic_table(spec, ctx)?;
    for (p, flag) in pairs.iter_mut().zip(mask.iter_mut()) {
        let y = if rng.gen::<f64>() < (1.0 + table.get(p.x)) / 2.0 { Label::POS } else { Label::NEG };
        if y != p.y {
            p.y = y;
            *flag = true;
        }
    }
    Ok(())
}

/// The committed label function; rejects tables whose error against c* exceeds η.
pub fn agnostic_table(spec: &NoiseSpec, ctx: &AdversaryContext<'_>) -> Result<RealPredictor> {
    let m = ctx.marginal.len();
    let table = match &spec.strategy {
        // each label flipped with probability η: f = (1 - 2η)c*
        Strategy::Flip => RealPredictor::new((0..m).map(|x| (1.0 - 2.0 * spec.rate) * ctx.target.value(x)).collect())?,
        Strategy::LabelTable(f) => {
            ensure_len("label table", f.len(), m)?;
            RealPredictor::new(f.clone())?
        }
        _ => unreachable!("validated by NoiseSpec::new"),
    };
    let err = table.error_rate(ctx.target, ctx.marginal)?;
    if err > spec.rate + 1e-12 {
        return Err(Error::Config(format!("agnostic label table has error {err} against the target, above η = {}", spec.rate)));
    }
    Ok(table)
}

/// Keeps a clean draw with probability min(1, Q/P), else redraws from (Q - P)+.
pub struct MaximalCoupling {
    keep: Vec<f64>,
    residual: Option<WeightedIndex<f64>>,
    pub tv: f64,
}

impl MaximalCoupling {
    pub fn new(clean: &JointDistribution, target: &JointDistribution) -> Result<Self> {
        let tv = clean.tv_distance(target)?;
        let (p, q) = (clean.weights(), target.weights());
        let keep = p.iter().zip(q).map(|(a, b)| if *a > 0.0 { (b / a).min(1.0) } else { 0.0 }).collect();
        let excess: Vec<f64> = p.iter().zip(q).map(|(a, b)| (b - a).max(0.0)).collect();
        Ok(Self { keep, residual: WeightedIndex::new(&excess).ok(), tv })
    }

    /// The replacement for `e`, or None when it is kept.
    pub fn apply<R: Rng + ?Sized>(&self, e: Example, rng: &mut R) -> Option<Example> {
        let i = 2 * e.x + usize::from(e.y.is_pos());
        if rng.gen::<f64>() < self.keep[i] {
            return None;
        }
        self.residual.as_ref().map(|r| JointDistribution::decode(r.sample(rng)))
    }
}

fn coupling_for(spec: &NoiseSpec, ctx: &AdversaryContext<'_>) -> Result<MaximalCoupling> {
    let target = ctx.corrupted_law.ok_or_else(|| Error::Config(format!("{} noise needs a corrupted law", spec.model.name())))?;
    let clean = JointDistribution::from_concept(ctx.marginal, ctx.target)?;
    MaximalCoupling::new(&clean, target)
}

fn random_label<R: Rng + ?Sized>(rng: &mut R) -> Label {
    if rng.gen() {
        Label::POS
    } else {
        Label::NEG
    }
}

/// The lower-bound instance on a shattered set of d points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvInstance {
    pub d: usize,
    pub eta: f64,
    pub clean: JointDistribution,
    pub corrupted: JointDistribution,
    /// Index of c* in `ConceptClass::shatter(d)`.
    pub target_index: usize,
    pub target: Concept,
    pub x_wrong: usize,
    pub x_random: usize,
}

impl TvInstance {
    pub fn class(&self) -> Result<ConceptClass> {
        ConceptClass::shatter(self.d)
    }

    pub fn marginal(&self) -> PointDistribution {
        self.clean.marginal()
    }
}

/// Point 0 is x_random throughout.
pub const TV_X_RANDOM: usize = 0;

fn tv_check(d: usize, eta: f64) -> Result<()> {
    if d < 4 {
        return Err(domain(format!("TV construction needs d >= 4, got {d}")));
    }
    if d > 20 {
        return Err(domain(format!("TV construction supports d <= 20, got {d}")));
    }
    if !(eta >= 1.0 / (d as f64 - 1.0) && eta <= 0.5) {
        return Err(domain(format!("TV construction needs 1/(d-1) <= η <= 1/2, got η = {eta} at d = {d}")));
    }
    Ok(())
}

/// Both laws for a given target and x_wrong.
pub fn tv_laws(d: usize, eta: f64, target: &Concept, x_wrong: usize) -> Result<(JointDistribution, JointDistribution)> {
    tv_check(d, eta)?;
    ensure_len("target", target.len(), d)?;
    if x_wrong == TV_X_RANDOM || x_wrong >= d {
        return Err(domain(format!("x_wrong must be a point other than x_random, got {x_wrong}")));
    }
    let df = d as f64;
    let each = (1.0 - 2.0 * eta) / (df - 3.0);
    // exactly 0 at η = 1/(d-1), up to rounding
    let rest = ((eta * df - eta - 1.0) / (df - 3.0)).max(0.0);
    let mut clean = vec![0.0; 2 * d];
    let mut corr = vec![0.0; 2 * d];
    let idx = |x: usize, y: Label| 2 * x + usize::from(y.is_pos());
    for x in 0..d {
        let c = target.at(x);
        if x == TV_X_RANDOM {
            clean[idx(x, c)] = rest;
            corr[idx(x, Label::POS)] = rest;
            corr[idx(x, Label::NEG)] = rest;
        } else if x == x_wrong {
            clean[idx(x, c)] = eta;
            corr[idx(x, -c)] = each;
        } else {
            clean[idx(x, c)] = each;
            corr[idx(x, c)] = each;
        }
    }
    Ok((JointDistribution::new(clean)?, JointDistribution::new(corr)?))
}

/// c* uniform over the 2^d labelings, x_wrong uniform over the points other than x_random.
pub fn tv_instance<R: Rng + ?Sized>(d: usize, eta: f64, rng: &mut R) -> Result<TvInstance> {
    tv_check(d, eta)?;
    // same indexing as ConceptClass::shatter, without building 2^d concepts
    let target_index = rng.gen_range(0..1usize << d);
    let target = Concept::from_fn(d, |x| if (target_index >> x) & 1 == 1 { Label::POS } else { Label::NEG });
    let x_wrong = rng.gen_range(1..d);
    let (clean, corrupted) = tv_laws(d, eta, &target, x_wrong)?;
    Ok(TvInstance { d, eta, clean, corrupted, target_index, target, x_wrong, x_random: TV_X_RANDOM })
}

/// Optimal expected error against the construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvBayes {
    pub error: f64,
    /// True when following the observed labels is optimal, i.e. (d-2)(1-2η) >= (d-3)η.
    pub follows_labels: bool,
}

/// ½(1 - |(d-2)/(d-3)·(1-2η) - η|) for η < 1/2; in the usual regime the optimal responder copies y(x).
/// At η = 1/2 the sample says nothing about c* and the error is 1/2.
pub fn tv_bayes_optimal_error(d: usize, eta: f64) -> Result<TvBayes> {
    tv_check(d, eta)?;
    if eta == 0.5 {
        // only x_random and x_wrong carry mass and x_wrong is never observed: no label information
        return Ok(TvBayes { error: 0.5, follows_labels: false });
    }
    let df = d as f64;
    let corr = (df - 2.0) / (df - 3.0) * (1.0 - 2.0 * eta) - eta;
    Ok(TvBayes { error: 0.5 * (1.0 - corr.abs()), follows_labels: corr >= 0.0 })
}

/// Bayes error given the corrupted law, by enumerating every (c*, x_wrong) that produces it.
pub fn tv_posterior_error(instance: &TvInstance) -> Result<f64> {
    let d = instance.d;
    if d > 12 {
        return Err(domain(format!("posterior enumeration is limited to d <= 12, got {d}")));
    }
    let class = ConceptClass::shatter(d)?;
    // agreement weight per point: Σ over plausible pairs of D(x)c*(x)
    let mut score = vec![0.0; d];
    let mut plausible = 0usize;
    let mut candidates = Vec::new();
    for c in class.iter() {
        for xw in 1..d {
            let (clean, corr) = tv_laws(d, instance.eta, c, xw)?;
            if corr == instance.corrupted {
                plausible += 1;
                let marginal = clean.marginal();
                for (x, s) in score.iter_mut().enumerate() {
                    *s += marginal.mass(x) * c.value(x);
                }
                candidates.push((c.clone(), marginal));
            }
        }
    }
    if plausible == 0 {
        return Err(Error::State("the corrupted law matches no candidate".into()));
    }
    let h: Vec<f64> = score.iter().map(|s| if *s > 0.0 { 1.0 } else if *s < 0.0 { -1.0 } else { 0.0 }).collect();
    let total: f64 = candidates
        .iter()
        .map(|(c, marginal)| (0..d).map(|x| marginal.mass(x) * (1.0 - h[x] * c.value(x)) / 2.0).sum::<f64>())
        .sum();
    Ok(total / plausible as f64)
}

/// Which impossibility construction to emit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpossibilityKind {
    ImproperMal { k: usize },
    ImproperAgnostic { k: usize },
    Distinct { p: f64 },
}

/// One runnable reading of the shared data law: the target, marginal and adversary that reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub target: usize,
    pub marginal: PointDistribution,
    pub noise: NoiseSpec,
}

/// q ≥ q_min(ε) and q ≤ q_max(ε) for the probability q that the learner predicts +1 at x = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinctConstraints {
    pub p: f64,
}

impl DistinctConstraints {
    /// 3/4 - ε(1 - p/3)/(2p/3).
    pub fn q_min(&self, eps: f64) -> f64 {
        0.75 - eps * (1.0 - self.p / 3.0) / (2.0 * self.p / 3.0)
    }

    /// 2/3 + ε/p.
    pub fn q_max(&self, eps: f64) -> f64 {
        2.0 / 3.0 + eps / self.p
    }

    pub fn feasible(&self, eps: f64) -> bool {
        self.q_min(eps) <= self.q_max(eps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityInstance {
    pub kind: ImpossibilityKind,
    pub class: ConceptClass,
    /// The law of the data every scenario produces.
    pub data_law: JointDistribution,
    /// Error floor of proper learners (improper_*), absent for distinct.
    pub floor: Option<f64>,
    pub constraints: Option<DistinctConstraints>,
    pub scenarios: Vec<Scenario>,
}

impl ImpossibilityInstance {
    /// The scenario whose target is the least-weighted concept of a proper mixture.
    pub fn scenario_against(&self, weights: &[f64]) -> Result<Scenario> {
        let (k, model) = match self.kind {
            ImpossibilityKind::ImproperMal { k } => (k, NoiseModel::Malicious),
            ImpossibilityKind::ImproperAgnostic { k } => (k, NoiseModel::Agnostic),
            ImpossibilityKind::Distinct { .. } => return Err(Error::Config("distinct has fixed scenarios".into())),
        };
        let (i_star, _) = proper_mixture_worst_error(weights, k)?;
        let rate = 1.0 / k as f64;
        Ok(match model {
            NoiseModel::Malicious => Scenario {
                name: format!("malicious target c_{i_star}"),
                target: i_star,
                marginal: PointDistribution::uniform_except(k, &[i_star])?,
                noise: NoiseSpec::new(model, rate, Strategy::Plant { x: i_star, y: Label::NEG })?,
            },
            _ => Scenario {
                name: format!("agnostic target c_{i_star}"),
                target: i_star,
                marginal: PointDistribution::uniform(k)?,
                noise: NoiseSpec::new(model, rate, Strategy::LabelTable(vec![-1.0; k]))?,
            },
        })
    }
}

/// For h = Σ_j w_j c_j over S_k, the adversary targets i* = argmin w; returns (i*, error on D_x).
/// Malicious reading: (1 - w_{i*})/(k - 1). Agnostic reading uses [`proper_mixture_agnostic_error`].
pub fn proper_mixture_worst_error(weights: &[f64], k: usize) -> Result<(usize, f64)> {
    ensure_len("mixture weights", weights.len(), k)?;
    PointDistribution::new(weights.to_vec())?;
    let (i, w) = weights.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, w)| (i, *w)).expect("k >= 1");
    Ok((i, (1.0 - w) / (k as f64 - 1.0)))
}

/// 2η(1 - w_{i*}) with η = 1/k.
pub fn proper_mixture_agnostic_error(weights: &[f64], k: usize) -> Result<(usize, f64)> {
    let (i, _) = proper_mixture_worst_error(weights, k)?;
    Ok((i, 2.0 / k as f64 * (1.0 - weights[i])))
}

pub fn impossibility_instance(kind: ImpossibilityKind) -> Result<ImpossibilityInstance> {
    match kind {
        ImpossibilityKind::ImproperMal { k } | ImpossibilityKind::ImproperAgnostic { k } => {
            if k < 2 {
                return Err(domain(format!("need k >= 2, got {k}")));
            }
            let class = ConceptClass::sparse_one(k)?;
            let data_law = JointDistribution::from_parts(&vec![1.0 / k as f64; k], &vec![0.0; k])?;
            let eta = 1.0 / k as f64;
            let floor = match kind {
                ImpossibilityKind::ImproperMal { .. } => eta,
                _ => 2.0 * eta * (1.0 - eta),
            };
            let mut inst = ImpossibilityInstance { kind, class, data_law, floor: Some(floor), constraints: None, scenarios: Vec::new() };
            let uniform = vec![eta; k];
            inst.scenarios.push(inst.scenario_against(&uniform)?);
            Ok(inst)
        }
        ImpossibilityKind::Distinct { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(domain(format!("need p in (0, 1], got {p}")));
            }
            let c_neg = Concept::from_signs(&[-1, -1])?;
            let c_pos = Concept::from_signs(&[-1, 1])?;
            let class = ConceptClass::new(vec![c_neg, c_pos])?;
            let data_law = JointDistribution::from_parts(&[1.0 - p, p / 3.0], &[0.0, 2.0 * p / 3.0])?;
            let denom = 1.0 - p / 3.0;
            let scenarios = vec![
                Scenario {
                    name: "malicious target c_1".into(),
                    target: 1,
                    marginal: PointDistribution::from_masses(vec![(1.0 - p) / denom, (2.0 * p / 3.0) / denom])?,
                    noise: NoiseSpec::new(NoiseModel::Malicious, p / 3.0, Strategy::Plant { x: 1, y: Label::NEG })?,
                },
                Scenario {
                    name: "agnostic target c_-1".into(),
                    target: 0,
                    marginal: PointDistribution::from_masses(vec![1.0 - p, p])?,
                    noise: NoiseSpec::new(NoiseModel::Agnostic, 2.0 * p / 3.0, Strategy::LabelTable(vec![-1.0, 1.0 / 3.0]))?,
                },
            ];
            Ok(ImpossibilityInstance {
                kind,
                class,
                data_law,
                floor: None,
                constraints: Some(DistinctConstraints { p }),
                scenarios,
            })
        }
    }
}

/// Induced data law of a scenario: the clean law mixed with the adversary's law.
pub fn scenario_law(class: &ConceptClass, scenario: &Scenario) -> Result<JointDistribution> {
    let target = class.get(scenario.target);
    let clean = JointDistribution::from_concept(&scenario.marginal, target)?;
    let eta = scenario.noise.rate;
    match &scenario.noise.strategy {
        Strategy::Plant { x, y } if scenario.noise.model == NoiseModel::Malicious => {
            let mut w: Vec<f64> = clean.weights().iter().map(|v| (1.0 - eta) * v).collect();
            w[2 * x + usize::from(y.is_pos())] += eta;
            JointDistribution::new(w)
        }
        Strategy::LabelTable(f) => JointDistribution::from_predictor(&scenario.marginal, &RealPredictor::new(f.clone())?),
        _ => Err(Error::Config("scenario law is defined for planted malicious and label-table agnostic noise".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::{any, prop_assert_eq, proptest, ProptestConfig};
    use rand::Rng;

    fn ctx<'a>(target: &'a Concept, d: &'a PointDistribution, class: Option<&'a ConceptClass>) -> AdversaryContext<'a> {
        AdversaryContext { target, marginal: d, class, corrupted_law: None }
    }

    #[test]
    fn zero_rate_is_identity_for_every_model() {
        let mut rng = stream(1);
        let class = ConceptClass::thresholds(10).unwrap();
        let target = class.get(4).clone();
        let d = PointDistribution::uniform(10).unwrap();
        let s = draw_clean(&d, &target, 100, &mut rng).unwrap();
        let (clean_law, _) = (JointDistribution::from_concept(&d, &target).unwrap(), ());
        let specs = [
            NoiseSpec::new(NoiseModel::Malicious, 0.0, Strategy::Random).unwrap(),
            NoiseSpec::new(NoiseModel::Nasty, 0.0, Strategy::Flip).unwrap(),
            NoiseSpec::new(NoiseModel::NastyClassification, 0.0, Strategy::Concentrate { rival: None, region_mass: None }).unwrap(),
            NoiseSpec::new(NoiseModel::Agnostic, 0.0, Strategy::Flip).unwrap(),
            NoiseSpec::new(NoiseModel::Tv, 0.0, Strategy::TvMimic).unwrap(),
        ];
        for spec in specs {
            let mut c = ctx(&target, &d, Some(&class));
            c.corrupted_law = Some(&clean_law);
            let out = corrupt(&s, &spec, &c, &mut rng).unwrap();
            assert_eq!(out.pairs(), s.pairs(), "{:?}", spec.model);
            assert_eq!(out.corruption_fraction(), 0.0);
        }
    }

    #[test]
    fn nasty_budget_concentrates() {
        let mut rng = stream(2);
        let class = ConceptClass::thresholds(50).unwrap();
        let target = class.get(20).clone();
        let d = PointDistribution::uniform(50).unwrap();
        let spec = NoiseSpec::new(NoiseModel::Nasty, 0.2, Strategy::Flip).unwrap();
        let mut inside = 0;
        for _ in 0..200 {
            let s = draw_clean(&d, &target, 10_000, &mut rng).unwrap();
            let out = corrupt(&s, &spec, &ctx(&target, &d, None), &mut rng).unwrap();
            if (out.corruption_fraction() - 0.2).abs() <= 0.012 {
                inside += 1;
            }
        }
        assert!(inside >= 198, "{inside}/200");
    }

    #[test]
    fn nasty_leaves_untouched_entries_and_classification_keeps_points() {
        let mut rng = stream(3);
        let class = ConceptClass::thresholds(30).unwrap();
        let target = class.get(10).clone();
        let d = PointDistribution::uniform(30).unwrap();
        let s = draw_clean(&d, &target, 500, &mut rng).unwrap();
        for (model, strategy) in [
            (NoiseModel::Nasty, Strategy::Concentrate { rival: None, region_mass: None }),
            (NoiseModel::Nasty, Strategy::Random),
            (NoiseModel::NastyClassification, Strategy::Concentrate { rival: None, region_mass: Some(0.1) }),
            (NoiseModel::NastyClassification, Strategy::Flip),
        ] {
            let spec = NoiseSpec::new(model, 0.3, strategy).unwrap();
            let out = corrupt(&s, &spec, &ctx(&target, &d, Some(&class)), &mut rng).unwrap();
            let mask = out.corrupted_mask().unwrap();
            for i in 0..s.len() {
                if !mask[i] {
                    assert_eq!(out.pairs()[i], s.pairs()[i]);
                }
                if model == NoiseModel::NastyClassification {
                    assert_eq!(out.pairs()[i].x, s.pairs()[i].x);
                }
            }
        }
    }

    #[test]
    fn concentrate_relabels_rival_region() {
        let mut rng = stream(4);
        let class = ConceptClass::thresholds(100).unwrap();
        let target = class.get(30).clone();
        let d = PointDistribution::uniform(100).unwrap();
        let s = draw_clean(&d, &target, 5000, &mut rng).unwrap();
        let spec = NoiseSpec::new(NoiseModel::Nasty, 0.2, Strategy::Concentrate { rival: None, region_mass: None }).unwrap();
        let out = corrupt(&s, &spec, &ctx(&target, &d, Some(&class)), &mut rng).unwrap();
        // rival with mass 0.4 is threshold 70 (or -10, unavailable)
        let rival = class.get(70);
        let mask = out.corrupted_mask().unwrap();
        for (i, e) in out.pairs().iter().enumerate() {
            if mask[i] {
                assert!((30..70).contains(&e.x));
                assert_eq!(e.y, rival.at(e.x));
            }
        }
    }

    #[test]
    fn malicious_count_is_binomial() {
        // χ² over 10^4 runs of n = 20 draws, pooled into 5 bins
        let mut rng = stream(5);
        let target = Concept::constant(4, Label::POS);
        let d = PointDistribution::uniform(4).unwrap();
        let spec = NoiseSpec::new(NoiseModel::Malicious, 0.2, Strategy::Random).unwrap();
        let (n, runs) = (20u64, 10_000);
        let mut hist = [0f64; 5];
        let s = draw_clean(&d, &target, n as usize, &mut rng).unwrap();
        for _ in 0..runs {
            let out = corrupt(&s, &spec, &ctx(&target, &d, None), &mut rng).unwrap();
            let k = out.corrupted_mask().unwrap().iter().filter(|b| **b).count();
            hist[bin(k)] += 1.0;
        }
        fn bin(k: usize) -> usize {
            match k {
                0..=2 => 0,
                3 => 1,
                4 => 2,
                5 => 3,
                _ => 4,
            }
        }
        let binom = statrs_pmf(n, 0.2);
        let mut expected = [0f64; 5];
        for (k, p) in binom.iter().enumerate() {
            expected[bin(k)] += p * runs as f64;
        }
        let chi2: f64 = hist.iter().zip(&expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
        // 4 degrees of freedom, 0.999 quantile 18.47
        assert!(chi2 < 18.47, "χ² = {chi2}");
    }

    fn statrs_pmf(n: u64, p: f64) -> Vec<f64> {
        // C(n, k) p^k (1-p)^(n-k) by recurrence
        let mut out = vec![(1.0 - p).powi(n as i32)];
        for k in 1..=n {
            let prev = out[k as usize - 1];
            out.push(prev * (n - k + 1) as f64 / k as f64 * p / (1.0 - p));
        }
        out
    }

    #[test]
    fn plant_always_emits_fixed_pair() {
        let mut rng = stream(6);
        let target = Concept::from_signs(&[-1, 1, -1, -1]).unwrap();
        let d = PointDistribution::uniform_except(4, &[1]).unwrap();
        let spec = NoiseSpec::new(NoiseModel::Malicious, 0.25, Strategy::Plant { x: 1, y: Label::NEG }).unwrap();
        let s = draw_clean(&d, &target, 2000, &mut rng).unwrap();
        let out = corrupt(&s, &spec, &ctx(&target, &d, None), &mut rng).unwrap();
        let mask = out.corrupted_mask().unwrap();
        assert!(out.pairs().iter().zip(mask).filter(|(_, m)| **m).all(|(e, _)| *e == Example::new(1, Label::NEG)));
    }

    #[test]
    fn agnostic_budget_is_enforced() {
        let target = Concept::from_signs(&[1, 1, -1, -1]).unwrap();
        let d = PointDistribution::uniform(4).unwrap();
        let spec = NoiseSpec::new(NoiseModel::Agnostic, 0.2, Strategy::LabelTable(vec![-1.0, 1.0, -1.0, -1.0])).unwrap();
        let s = LabeledDataset::new(vec![Example::new(0, Label::POS)]);
        let err = corrupt(&s, &spec, &ctx(&target, &d, None), &mut stream(7));
        assert!(matches!(err, Err(Error::Config(_))));
        let ok = NoiseSpec::new(NoiseModel::Agnostic, 0.25, Strategy::LabelTable(vec![-1.0, 1.0, -1.0, -1.0])).unwrap();
        assert!(corrupt(&s, &ok, &ctx(&target, &d, None), &mut stream(7)).is_ok());
    }

    #[test]
    fn strategies_are_validated_per_model() {
        assert!(NoiseSpec::new(NoiseModel::NastyClassification, 0.1, Strategy::Random).is_err());
        assert!(NoiseSpec::new(NoiseModel::Tv, 0.1, Strategy::Flip).is_err());
        assert!(NoiseSpec::new(NoiseModel::Malicious, 1.5, Strategy::Flip).is_err());
    }

    #[test]
    fn tv_mass_table_at_d10() {
        let mut rng = stream(8);
        let inst = tv_instance(10, 0.2, &mut rng).unwrap();
        let clean = inst.clean.marginal();
        assert!((clean.mass(inst.x_wrong) - 0.2).abs() < 1e-15);
        assert!((clean.mass(inst.x_random) - 0.8 / 7.0).abs() < 1e-15);
        for x in 1..10 {
            if x != inst.x_wrong {
                assert!((clean.mass(x) - 0.6 / 7.0).abs() < 1e-15);
            }
        }
        let total: f64 = inst.clean.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let c = inst.target.at(inst.x_wrong);
        assert!((inst.corrupted.mass(inst.x_wrong, -c) - 0.6 / 7.0).abs() < 1e-15);
        assert_eq!(inst.corrupted.mass(inst.x_wrong, c), 0.0);
    }

    #[test]
    fn tv_distance_is_eta() {
        let mut rng = stream(9);
        for d in 5..=20 {
            for eta in [0.25f64, 0.3] {
                if eta < 1.0 / (d as f64 - 1.0) {
                    continue;
                }
                let inst = tv_instance(d, eta, &mut rng).unwrap();
                assert!((inst.clean.tv_distance(&inst.corrupted).unwrap() - eta).abs() < 1e-12);
                if d <= 10 {
                    assert_eq!(inst.class().unwrap().get(inst.target_index), &inst.target);
                }
                let total: f64 = inst.corrupted.weights().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
        assert!(tv_instance(3, 0.4, &mut rng).is_err());
        assert!(tv_instance(6, 0.1, &mut rng).is_err());
    }

    #[test]
    fn tv_bayes_values() {
        let b = tv_bayes_optimal_error(20, 0.2).unwrap();
        // ½(1 - (18/17)·0.6 + 0.2) = 0.48/1.7
        assert!((b.error - 0.48 / 1.7).abs() < 1e-15);
        assert!((b.error - 0.2823529411764706).abs() < 1e-12);
        assert!(b.follows_labels);
        // increases in d toward 3η/2
        let eta = 0.2f64;
        let errs: Vec<f64> = (6..=20).map(|d| tv_bayes_optimal_error(d, eta).unwrap().error).collect();
        assert!(errs.windows(2).all(|w| w[0] < w[1]));
        assert!(errs[errs.len() - 1] < 1.5 * eta);
        assert!(1.5 * eta - errs[errs.len() - 1] < 0.02);
    }

    #[test]
    fn posterior_enumeration_matches_closed_form() {
        let mut rng = stream(10);
        for d in 4..=12 {
            // both ends of the admissible range included
            for eta in [1.0 / (d as f64 - 1.0), 0.2f64, 0.3, 0.45, 0.5] {
                if eta < 1.0 / (d as f64 - 1.0) {
                    continue;
                }
                let inst = tv_instance(d, eta, &mut rng).unwrap();
                let closed = tv_bayes_optimal_error(d, eta).unwrap().error;
                let enumerated = tv_posterior_error(&inst).unwrap();
                assert!((closed - enumerated).abs() < 1e-12, "d={d} η={eta}: {closed} vs {enumerated}");
            }
        }
    }

    #[test]
    fn coupling_realizes_the_corrupted_law() {
        let mut rng = stream(11);
        let inst = tv_instance(8, 0.2, &mut rng).unwrap();
        let d = inst.marginal();
        let spec = NoiseSpec::new(NoiseModel::Nasty, 0.2, Strategy::TvMimic).unwrap();
        let c = AdversaryContext { target: &inst.target, marginal: &d, class: None, corrupted_law: Some(&inst.corrupted) };
        let n = 200_000;
        let s = draw_clean(&d, &inst.target, n, &mut rng).unwrap();
        let out = corrupt(&s, &spec, &c, &mut rng).unwrap();
        let mut counts = [0f64; 16];
        for e in out.pairs() {
            counts[2 * e.x + usize::from(e.y.is_pos())] += 1.0;
        }
        for (i, q) in inst.corrupted.weights().iter().enumerate() {
            let sd = (q * (1.0 - q) / n as f64).sqrt();
            assert!((counts[i] / n as f64 - q).abs() <= 5.0 * sd + 1e-12, "cell {i}");
        }
        assert!((out.corruption_fraction() - 0.2).abs() < 0.005);
    }

    #[test]
    fn impossibility_floors() {
        let mal = impossibility_instance(ImpossibilityKind::ImproperMal { k: 4 }).unwrap();
        assert_eq!(mal.floor, Some(0.25));
        let agn = impossibility_instance(ImpossibilityKind::ImproperAgnostic { k: 4 }).unwrap();
        assert_eq!(agn.floor, Some(0.375));
        let dist = impossibility_instance(ImpossibilityKind::Distinct { p: 1.0 }).unwrap();
        let cons = dist.constraints.unwrap();
        assert!(!cons.feasible(0.0));
        assert!(!cons.feasible(1.0 / 24.0 - 1e-9));
        assert!(cons.feasible(1.0 / 24.0 + 1e-9));
    }

    #[test]
    fn scenarios_reproduce_the_data_law() {
        for kind in [ImpossibilityKind::ImproperMal { k: 4 }, ImpossibilityKind::ImproperAgnostic { k: 5 }, ImpossibilityKind::Distinct { p: 1.0 }, ImpossibilityKind::Distinct { p: 0.6 }] {
            let inst = impossibility_instance(kind).unwrap();
            for sc in &inst.scenarios {
                let law = scenario_law(&inst.class, sc).unwrap();
                assert!(law.tv_distance(&inst.data_law).unwrap() < 1e-12, "{kind:?} {}", sc.name);
                // the adversary stays within its budget
                let target = inst.class.get(sc.target);
                let clean = JointDistribution::from_concept(&sc.marginal, target).unwrap();
                assert!(clean.tv_distance(&law).unwrap() <= sc.noise.rate + 1e-12);
            }
        }
    }

    #[test]
    fn proper_mixture_error_is_at_least_one_over_k() {
        let mut rng = stream(12);
        for _ in 0..1000 {
            let k = rng.gen_range(2..8);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let (_, err) = proper_mixture_worst_error(&w, k).unwrap();
            assert!(err >= 1.0 / k as f64 - 1e-12);
            let (_, agn) = proper_mixture_agnostic_error(&w, k).unwrap();
            let eta = 1.0 / k as f64;
            assert!(agn >= 2.0 * eta * (1.0 - eta) - 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nasty_mask_matches_changes(seed in any::<u64>(), rate in 0.0f64..0.6) {
            let mut rng = stream(seed);
            let class = ConceptClass::thresholds(20).unwrap();
            let target = class.get(rng.gen_range(0..=20)).clone();
            let d = PointDistribution::uniform(20).unwrap();
            let s = draw_clean(&d, &target, 200, &mut rng).unwrap();
            let spec = NoiseSpec::new(NoiseModel::Nasty, rate, Strategy::Flip).unwrap();
            let out = corrupt(&s, &spec, &ctx(&target, &d, Some(&class)), &mut rng).unwrap();
            let mask = out.corrupted_mask().unwrap();
            for i in 0..200 {
                prop_assert_eq!(mask[i], out.pairs()[i] != s.pairs()[i]);
            }
        }
    }
}
