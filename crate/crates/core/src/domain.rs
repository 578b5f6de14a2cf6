//! Finite domains, distributions, concepts, datasets and real-valued predictors.
//!
//! Points are ids `0..m`. Every structure that refers to points carries its own
//! length and is validated against the domain size at construction.

use std::ops::{Mul, Neg};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_len, Error, Result};

/// Tolerance for probability vectors summing to one.
pub const MASS_TOL: f64 = 1e-9;
/// Tolerance for predictor values leaving [-1, 1].
pub const RANGE_TOL: f64 = 1e-12;

/// A binary label, exactly -1 or +1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct Label(i8);

impl Label {
    pub const POS: Label = Label(1);
    pub const NEG: Label = Label(-1);

    pub fn new(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Self::POS),
            -1 => Ok(Self::NEG),
            _ => Err(domain(format!("label must be -1 or 1, got {v}"))),
        }
    }

    /// sign with sign(0) = +1.
    pub fn from_sign(v: f64) -> Self {
        if v >= 0.0 {
            Self::POS
        } else {
            Self::NEG
        }
    }

    pub fn get(self) -> i8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0)
    }

    pub fn is_pos(self) -> bool {
        self.0 > 0
    }
}

impl TryFrom<i8> for Label {
    type Error = Error;
    fn try_from(v: i8) -> Result<Self> {
        Label::new(v)
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.0
    }
}

impl Neg for Label {
    type Output = Label;
    fn neg(self) -> Label {
        Label(-self.0)
    }
}

impl Mul for Label {
    type Output = Label;
    fn mul(self, rhs: Label) -> Label {
        Label(self.0 * rhs.0)
    }
}

/// The domain X = {0, ..., m-1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteDomain {
    size: usize,
}

impl FiniteDomain {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(domain("domain must have at least one point"));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, x: usize) -> bool {
        x < self.size
    }
}

fn check_mass(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(domain("distribution over an empty set"));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(domain(format!("negative or non-finite weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(domain(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Probability vector over the points of a finite domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PointDistribution {
    weights: Vec<f64>,
}

impl PointDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_mass(&weights)?;
        Ok(Self { weights })
    }

    /// Normalizes nonnegative masses.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("all masses are zero".into()));
        }
        Self::new(masses.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(m: usize) -> Result<Self> {
        FiniteDomain::new(m)?;
        Ok(Self { weights: vec![1.0 / m as f64; m] })
    }

    /// Uniform over `0..m` except the listed points.
    pub fn uniform_except(m: usize, excluded: &[usize]) -> Result<Self> {
        let masses = (0..m).map(|x| if excluded.contains(&x) { 0.0 } else { 1.0 }).collect();
        Self::from_masses(masses)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self, x: usize) -> f64 {
        self.weights[x]
    }

    pub fn max_mass(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    /// E_D[v(x)].
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.weights).expect("validated distribution")
    }
}

impl TryFrom<Vec<f64>> for PointDistribution {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<PointDistribution> for Vec<f64> {
    fn from(d: PointDistribution) -> Vec<f64> {
        d.weights
    }
}

/// Probability vector over (x, y) pairs, stored as 2m entries: index 2x for y=-1, 2x+1 for y=+1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct JointDistribution {
    weights: Vec<f64>,
}

impl JointDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if !weights.len().is_multiple_of(2) {
            return Err(domain("joint distribution needs an even number of entries"));
        }
        check_mass(&weights)?;
        Ok(Self { weights })
    }

    /// Builds the law from per-point masses of y=-1 and y=+1.
    pub fn from_parts(neg: &[f64], pos: &[f64]) -> Result<Self> {
        ensure_len("positive masses", pos.len(), neg.len())?;
        let weights = neg.iter().zip(pos).flat_map(|(n, p)| [*n, *p]).collect();
        Self::new(weights)
    }

    /// The noiseless law: x ~ D, y = c(x).
    pub fn from_concept(d: &PointDistribution, c: &Concept) -> Result<Self> {
        ensure_len("concept", c.len(), d.len())?;
        let mut weights = vec![0.0; 2 * d.len()];
        for x in 0..d.len() {
            weights[Self::index(x, c.at(x))] = d.mass(x);
        }
        Ok(Self { weights })
    }

    /// x ~ D and y ~ Rad(p(x)).
    pub fn from_predictor(d: &PointDistribution, p: &RealPredictor) -> Result<Self> {
        ensure_len("predictor", p.len(), d.len())?;
        let mut weights = vec![0.0; 2 * d.len()];
        for x in 0..d.len() {
            let q = (1.0 + p.get(x)) / 2.0;
            weights[2 * x + 1] = d.mass(x) * q;
            weights[2 * x] = d.mass(x) * (1.0 - q);
        }
        Ok(Self { weights })
    }

    fn index(x: usize, y: Label) -> usize {
        2 * x + usize::from(y.is_pos())
    }

    /// Number of domain points.
    pub fn domain_size(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self, x: usize, y: Label) -> f64 {
        self.weights[Self::index(x, y)]
    }

    pub fn marginal(&self) -> PointDistribution {
        let w = self.weights.chunks(2).map(|p| p[0] + p[1]).collect();
        PointDistribution { weights: w }
    }

    /// E[y | x], zero where x has no mass.
    pub fn conditional_mean(&self) -> RealPredictor {
        let v = self
            .weights
            .chunks(2)
            .map(|p| {
                let t = p[0] + p[1];
                if t > 0.0 {
                    ((p[1] - p[0]) / t).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        RealPredictor { values: v }
    }

    /// Pr[y != c(x)].
    pub fn disagreement(&self, c: &Concept) -> f64 {
        (0..self.domain_size()).map(|x| self.mass(x, -c.at(x))).sum()
    }

    pub fn tv_distance(&self, other: &JointDistribution) -> Result<f64> {
        ensure_len("joint distribution", other.weights.len(), self.weights.len())?;
        Ok(0.5 * self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.weights).expect("validated distribution")
    }

    pub fn decode(index: usize) -> Example {
        Example { x: index / 2, y: if index % 2 == 1 { Label::POS } else { Label::NEG } }
    }

    pub fn sample<R: Rng + ?Sized>(&self, sampler: &WeightedIndex<f64>, rng: &mut R) -> Example {
        Self::decode(sampler.sample(rng))
    }
}

impl TryFrom<Vec<f64>> for JointDistribution {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<JointDistribution> for Vec<f64> {
    fn from(d: JointDistribution) -> Vec<f64> {
        d.weights
    }
}

/// A ±1 labeling of the domain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Concept {
    labels: Vec<Label>,
}

impl Concept {
    pub fn new(labels: Vec<Label>) -> Self {
        Self { labels }
    }

    pub fn from_signs(values: &[i8]) -> Result<Self> {
        Ok(Self { labels: values.iter().map(|v| Label::new(*v)).collect::<Result<_>>()? })
    }

    pub fn constant(m: usize, label: Label) -> Self {
        Self { labels: vec![label; m] }
    }

    pub fn from_fn(m: usize, f: impl FnMut(usize) -> Label) -> Self {
        Self { labels: (0..m).map(f).collect() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn at(&self, x: usize) -> Label {
        self.labels[x]
    }

    pub fn value(&self, x: usize) -> f64 {
        self.labels[x].value()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Σ_x c(x) w(x).
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.labels.iter().zip(w).map(|(l, w)| if l.is_pos() { *w } else { -*w }).sum()
    }

    pub fn negated(&self) -> Self {
        Self { labels: self.labels.iter().map(|l| -*l).collect() }
    }

    pub fn to_predictor(&self) -> RealPredictor {
        RealPredictor { values: self.labels.iter().map(|l| l.value()).collect() }
    }
}

/// Parametric families that expand to explicit concept lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// c_t(x) = +1 iff x >= t, t = 0..=m.
    Thresholds,
    /// All-negative plus +1 exactly on [a, b) for 0 <= a < b <= m.
    Intervals,
    /// S_k: c_i(x) = +1 iff x = i.
    SparseOne,
    /// Every labeling of d points; concept j labels x by bit x of j.
    Shatter,
}

/// A finite, explicit, duplicate-free concept class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptClass {
    concepts: Vec<Concept>,
    family: Option<Family>,
}

impl ConceptClass {
    /// Deduplicates while keeping first occurrences in order.
    pub fn new(concepts: Vec<Concept>) -> Result<Self> {
        Self::with_family(concepts, None)
    }

    fn with_family(concepts: Vec<Concept>, family: Option<Family>) -> Result<Self> {
        let Some(first) = concepts.first() else {
            return Err(domain("concept class must be nonempty"));
        };
        let m = first.len();
        FiniteDomain::new(m)?;
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(concepts.len());
        for c in concepts {
            ensure_len("concept", c.len(), m)?;
            if seen.insert(c.clone()) {
                out.push(c);
            }
        }
        Ok(Self { concepts: out, family })
    }

    pub fn thresholds(m: usize) -> Result<Self> {
        FiniteDomain::new(m)?;
        let cs = (0..=m).map(|t| Concept::from_fn(m, |x| Label::from_sign(x as f64 - t as f64 + 0.5))).collect();
        Self::with_family(cs, Some(Family::Thresholds))
    }

    pub fn intervals(m: usize) -> Result<Self> {
        FiniteDomain::new(m)?;
        let mut cs = vec![Concept::constant(m, Label::NEG)];
        for a in 0..m {
            for b in a + 1..=m {
                cs.push(Concept::from_fn(m, |x| if (a..b).contains(&x) { Label::POS } else { Label::NEG }));
            }
        }
        Self::with_family(cs, Some(Family::Intervals))
    }

    pub fn sparse_one(k: usize) -> Result<Self> {
        FiniteDomain::new(k)?;
        let cs = (0..k).map(|i| Concept::from_fn(k, |x| if x == i { Label::POS } else { Label::NEG })).collect();
        Self::with_family(cs, Some(Family::SparseOne))
    }

    pub fn shatter(d: usize) -> Result<Self> {
        if d == 0 || d > 20 {
            return Err(domain(format!("shatter class needs 1 <= d <= 20, got {d}")));
        }
        let cs = (0..1usize << d)
            .map(|j| Concept::from_fn(d, |x| if (j >> x) & 1 == 1 { Label::POS } else { Label::NEG }))
            .collect();
        Self::with_family(cs, Some(Family::Shatter))
    }

    /// Index of the shatter-class concept equal to `c`.
    pub fn shatter_index(c: &Concept) -> usize {
        (0..c.len()).filter(|x| c.at(*x).is_pos()).map(|x| 1usize << x).sum()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn domain_size(&self) -> usize {
        self.concepts[0].len()
    }

    pub fn family(&self) -> Option<Family> {
        self.family
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn get(&self, i: usize) -> &Concept {
        &self.concepts[i]
    }

    pub fn position(&self, c: &Concept) -> Option<usize> {
        self.concepts.iter().position(|d| d == c)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Concept> {
        self.concepts.iter()
    }
}

/// h̄: X -> [-1, 1]. Also used for mixture means μ̄ and detection functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealPredictor {
    values: Vec<f64>,
}

impl RealPredictor {
    /// Values within RANGE_TOL of [-1, 1] are clamped; anything further is rejected.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let mut values = values;
        for v in values.iter_mut() {
            *v = check_unit(*v)?;
        }
        Ok(Self { values })
    }

    pub fn constant(m: usize, v: f64) -> Result<Self> {
        Self::new(vec![v; m])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn negated(&self) -> Self {
        Self { values: self.values.iter().map(|v| -v).collect() }
    }

    /// Pointwise map, result clamped into [-1, 1].
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|v| f(*v).clamp(-1.0, 1.0)).collect() }
    }

    pub fn error_rate(&self, c: &Concept, d: &PointDistribution) -> Result<f64> {
        error_rate(self, c, d)
    }

    /// Pr_{i ~ Unif(S)}[Rad(h̄)(x_i) != y_i].
    pub fn empirical_error(&self, s: &LabeledDataset) -> Result<f64> {
        if s.is_empty() {
            return Err(domain("empirical error of an empty dataset"));
        }
        let total: f64 = s.pairs().iter().map(|e| (1.0 - self.values[e.x] * e.y.value()) / 2.0).sum();
        Ok(total / s.len() as f64)
    }

    /// Pr_{x ~ D}[Rad(h̄)(x) != y] for a joint law.
    pub fn joint_error(&self, dxy: &JointDistribution) -> Result<f64> {
        ensure_len("predictor", self.len(), dxy.domain_size())?;
        Ok((0..self.len())
            .map(|x| {
                dxy.mass(x, Label::POS) * (1.0 - self.values[x]) / 2.0
                    + dxy.mass(x, Label::NEG) * (1.0 + self.values[x]) / 2.0
            })
            .sum())
    }
}

impl TryFrom<Vec<f64>> for RealPredictor {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RealPredictor> for Vec<f64> {
    fn from(p: RealPredictor) -> Vec<f64> {
        p.values
    }
}

pub(crate) fn check_unit(v: f64) -> Result<f64> {
    if !v.is_finite() || v.abs() > 1.0 + RANGE_TOL {
        return Err(domain(format!("value {v} outside [-1, 1]")));
    }
    Ok(v.clamp(-1.0, 1.0))
}

/// Exact randomized error Σ_x D(x)(1 - h̄(x)c(x))/2.
pub fn error_rate(h: &RealPredictor, c: &Concept, d: &PointDistribution) -> Result<f64> {
    ensure_len("predictor", h.len(), d.len())?;
    ensure_len("concept", c.len(), d.len())?;
    Ok((0..d.len()).map(|x| d.mass(x) * (1.0 - h.get(x) * c.value(x)) / 2.0).sum())
}

/// Draws Rad(value): +1 with probability (1 + value)/2.
pub fn rad_sample<R: Rng + ?Sized>(value: f64, rng: &mut R) -> Result<Label> {
    let v = check_unit(value)?;
    let u: f64 = rng.gen();
    Ok(if u < (1.0 + v) / 2.0 { Label::POS } else { Label::NEG })
}

/// One labeled example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub x: usize,
    pub y: Label,
}

impl Example {
    pub fn new(x: usize, y: Label) -> Self {
        Self { x, y }
    }
}

/// A multiset of labeled examples with optional corruption bookkeeping.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pairs: Vec<Example>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    corrupted: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clean: Option<Vec<Example>>,
}

impl LabeledDataset {
    pub fn new(pairs: Vec<Example>) -> Self {
        Self { pairs, corrupted: None, clean: None }
    }

    /// Attaches a corruption mask and optionally the pre-corruption sample S°.
    pub fn with_corruption(pairs: Vec<Example>, mask: Vec<bool>, clean: Option<Vec<Example>>) -> Result<Self> {
        ensure_len("corruption mask", mask.len(), pairs.len())?;
        if let Some(c) = &clean {
            ensure_len("clean pairs", c.len(), pairs.len())?;
            if let Some(i) = (0..pairs.len()).find(|&i| !mask[i] && pairs[i] != c[i]) {
                return Err(domain(format!("uncorrupted index {i} differs from the clean sample")));
            }
        }
        Ok(Self { pairs, corrupted: Some(mask), clean })
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

    pub fn corrupted_mask(&self) -> Option<&[bool]> {
        self.corrupted.as_deref()
    }

    pub fn clean_pairs(&self) -> Option<&[Example]> {
        self.clean.as_deref()
    }

    /// Fraction of corrupted indices; zero when no mask is attached.
    pub fn corruption_fraction(&self) -> f64 {
        match &self.corrupted {
            Some(m) if !m.is_empty() => m.iter().filter(|b| **b).count() as f64 / m.len() as f64,
            _ => 0.0,
        }
    }

    /// Indices not marked as corrupted.
    pub fn clean_indices(&self) -> Vec<usize> {
        match &self.corrupted {
            Some(m) => (0..m.len()).filter(|i| !m[*i]).collect(),
            None => (0..self.len()).collect(),
        }
    }

    pub fn check_domain(&self, m: usize) -> Result<()> {
        match self.pairs.iter().find(|e| e.x >= m) {
            Some(e) => Err(domain(format!("point {} outside domain of size {m}", e.x))),
            None => Ok(()),
        }
    }

    pub fn summary(&self, m: usize) -> Result<DatasetSummary> {
        DatasetSummary::new(self, m)
    }
}

/// Per-point label counts of a dataset; every loss over S is a function of these.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub n: usize,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl DatasetSummary {
    pub fn new(s: &LabeledDataset, m: usize) -> Result<Self> {
        s.check_domain(m)?;
        let mut pos = vec![0.0; m];
        let mut neg = vec![0.0; m];
        for e in s.pairs() {
            if e.y.is_pos() {
                pos[e.x] += 1.0;
            } else {
                neg[e.x] += 1.0;
            }
        }
        Ok(Self { n: s.len(), pos, neg })
    }

    pub fn domain_size(&self) -> usize {
        self.pos.len()
    }

    /// Count of (x, y) in S.
    pub fn count(&self, x: usize, y: Label) -> f64 {
        if y.is_pos() {
            self.pos[x]
        } else {
            self.neg[x]
        }
    }

    /// Σ_{i: x_i = x} y_i.
    pub fn signed(&self) -> Vec<f64> {
        self.pos.iter().zip(&self.neg).map(|(p, q)| p - q).collect()
    }

    /// Pr_S[c != y].
    pub fn disagreement(&self, c: &Concept) -> f64 {
        let bad: f64 = (0..self.domain_size()).map(|x| self.count(x, -c.at(x))).sum();
        bad / self.n as f64
    }
}
