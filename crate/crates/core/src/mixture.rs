//! Mixtures over majorities of concepts.
//!
//! [`MixtureHypothesis`] lists explicit atoms, each a majority vote of `arity`
//! concepts drawn from a shared pool. [`MajorityLaw`] is the compact form the
//! learners produce: with probability w_j, take the majority of a_j concepts drawn
//! i.i.d. from a distribution over the pool. Its mean is available in closed form,
//! and it materializes into explicit atoms.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Concept, Label, PointDistribution, RealPredictor, MASS_TOL};
use crate::error::{domain, Error, Result};
use crate::loss::majority_mean;

/// Default cap on materialized atoms.
pub const MAX_ATOMS: usize = 10_000;

/// One majority vote, weighted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    /// Indices into the mixture's concept pool.
    pub members: Vec<u32>,
}

/// A finite mixture over Maj_k(pool).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct MixtureHypothesis {
    pool: Vec<Concept>,
    arity: usize,
    atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct MixtureRepr {
    pool: Vec<Concept>,
    arity: usize,
    atoms: Vec<Atom>,
}

impl TryFrom<MixtureRepr> for MixtureHypothesis {
    type Error = Error;
    fn try_from(r: MixtureRepr) -> Result<Self> {
        Self::new(r.pool, r.arity, r.atoms)
    }
}

impl From<MixtureHypothesis> for MixtureRepr {
    fn from(h: MixtureHypothesis) -> Self {
        Self { pool: h.pool, arity: h.arity, atoms: h.atoms }
    }
}

impl MixtureHypothesis {
    /// An empty atom list is accepted here and rejected at evaluation time.
    pub fn new(pool: Vec<Concept>, arity: usize, atoms: Vec<Atom>) -> Result<Self> {
        if arity.is_multiple_of(2) {
            return Err(domain(format!("majority arity must be odd, got {arity}")));
        }
        if let Some(m) = pool.first().map(Concept::len) {
            if pool.iter().any(|c| c.len() != m) {
                return Err(domain("pool concepts disagree on domain size"));
            }
        }
        for a in &atoms {
            if a.members.len() != arity {
                return Err(domain(format!("atom of arity {} in a mixture of arity {arity}", a.members.len())));
            }
            if a.members.iter().any(|i| *i as usize >= pool.len()) {
                return Err(domain("atom refers outside the concept pool"));
            }
            if !(a.weight >= 0.0) {
                return Err(domain(format!("negative atom weight {}", a.weight)));
            }
        }
        if !atoms.is_empty() {
            let total: f64 = atoms.iter().map(|a| a.weight).sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(domain(format!("atom weights sum to {total}")));
            }
        }
        Ok(Self { pool, arity, atoms })
    }

    /// The point mass on a single concept.
    pub fn single(c: Concept) -> Self {
        Self { pool: vec![c], arity: 1, atoms: vec![Atom { weight: 1.0, members: vec![0] }] }
    }

    /// A mixture of single concepts.
    pub fn from_concepts(concepts: Vec<Concept>, weights: &[f64]) -> Result<Self> {
        let atoms = weights.iter().enumerate().map(|(i, w)| Atom { weight: *w, members: vec![i as u32] }).collect();
        Self::new(concepts, 1, atoms)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pool(&self) -> &[Concept] {
        &self.pool
    }

    pub fn domain_size(&self) -> usize {
        self.pool.first().map_or(0, Concept::len)
    }

    /// Majority of the atom's members at x.
    pub fn vote(&self, atom: &Atom, x: usize) -> Label {
        let s: i32 = atom.members.iter().map(|i| i32::from(self.pool[*i as usize].at(x).get())).sum();
        Label::from_sign(f64::from(s))
    }

    fn nonempty(&self) -> Result<()> {
        if self.atoms.is_empty() {
            Err(Error::State("mixture has no atoms".into()))
        } else {
            Ok(())
        }
    }

    /// Atom whose cumulative-weight interval contains u in [0, 1).
    pub fn atom_at(&self, u: f64) -> Result<&Atom> {
        self.nonempty()?;
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.weight;
            if u < acc {
                return Ok(a);
            }
        }
        Ok(self.atoms.iter().rev().find(|a| a.weight > 0.0).unwrap_or(&self.atoms[self.atoms.len() - 1]))
    }

    /// Σ_atoms w · Maj(atom)(x).
    pub fn mean_predictor(&self) -> Result<RealPredictor> {
        self.nonempty()?;
        let m = self.domain_size();
        let mut v = vec![0.0; m];
        for a in &self.atoms {
            for (x, vx) in v.iter_mut().enumerate() {
                *vx += a.weight * self.vote(a, x).value();
            }
        }
        RealPredictor::new(v)
    }

    pub fn error_rate(&self, c: &Concept, d: &PointDistribution) -> Result<f64> {
        self.mean_predictor()?.error_rate(c, d)
    }
}

/// Samples an atom by weight and returns its majority vote at x.
pub fn mixture_eval<R: Rng + ?Sized>(h: &MixtureHypothesis, x: usize, rng: &mut R) -> Result<Label> {
    if x >= h.domain_size() {
        return Err(domain(format!("point {x} outside domain of size {}", h.domain_size())));
    }
    let atom = h.atom_at(rng.gen::<f64>())?;
    Ok(h.vote(atom, x))
}

/// A component of a [`MajorityLaw`]: majority of `arity` i.i.d. draws, taken with probability `weight`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawComponent {
    pub weight: f64,
    pub arity: usize,
}

/// Mixture of i.i.d. majority votes over a weighted concept pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorityLaw {
    pool: Vec<Concept>,
    weights: Vec<f64>,
    components: Vec<LawComponent>,
}

impl MajorityLaw {
    /// Every arity must be odd and divide the largest one, so each atom expands to a common arity.
    pub fn new(pool: Vec<Concept>, weights: Vec<f64>, components: Vec<LawComponent>) -> Result<Self> {
        if pool.is_empty() || pool.len() != weights.len() {
            return Err(domain("pool and weights must be nonempty and equally long"));
        }
        PointDistribution::new(weights.clone())?;
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.is_empty() || (total - 1.0).abs() > MASS_TOL || components.iter().any(|c| c.weight < 0.0) {
            return Err(domain("component weights must be nonnegative and sum to 1"));
        }
        let top = components.iter().map(|c| c.arity).max().unwrap_or(1);
        if components.iter().any(|c| c.arity % 2 == 0 || top % c.arity != 0) {
            return Err(domain("component arities must be odd divisors of the largest arity"));
        }
        Ok(Self { pool, weights, components })
    }

    pub fn pool(&self) -> &[Concept] {
        &self.pool
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[LawComponent] {
        &self.components
    }

    pub fn arity(&self) -> usize {
        self.components.iter().map(|c| c.arity).max().unwrap_or(1)
    }

    /// μ̄(x) = Σ_c μ(c) c(x).
    pub fn concept_mean(&self) -> Vec<f64> {
        let m = self.pool[0].len();
        let mut v = vec![0.0; m];
        for (c, w) in self.pool.iter().zip(&self.weights) {
            for (x, vx) in v.iter_mut().enumerate() {
                *vx += w * c.value(x);
            }
        }
        v
    }

    /// Exact mean Σ_j w_j M_{a_j}(μ̄(x)).
    pub fn mean_predictor(&self) -> Result<RealPredictor> {
        let mu = self.concept_mean();
        let mut out = Vec::with_capacity(mu.len());
        for v in mu {
            let v = v.clamp(-1.0, 1.0);
            let mut acc = 0.0;
            for c in &self.components {
                acc += c.weight * majority_mean(c.arity, v)?;
            }
            out.push(acc);
        }
        RealPredictor::new(out)
    }

    /// One atom at the common arity.
    pub fn sample_atom<R: Rng + ?Sized>(&self, sampler: &WeightedIndex<f64>, rng: &mut R) -> Vec<u32> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut comp = self.components[self.components.len() - 1];
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                comp = *c;
                break;
            }
        }
        let rep = self.arity() / comp.arity;
        let mut members = Vec::with_capacity(self.arity());
        for _ in 0..comp.arity {
            let i = sampler.sample(rng) as u32;
            members.extend(std::iter::repeat_n(i, rep));
        }
        members
    }

    /// Number of distinct atoms an exact expansion would produce.
    fn exact_atom_count(&self) -> f64 {
        let s = self.weights.iter().filter(|w| **w > 0.0).count() as f64;
        self.components.iter().map(|c| multiset_count(s, c.arity as f64)).sum()
    }

    /// Explicit atoms: the exact multinomial expansion when it fits in `cap`, else `cap` i.i.d. atoms
    /// merged by multiset.
    pub fn materialize<R: Rng + ?Sized>(&self, cap: usize, rng: &mut R) -> Result<MixtureHypothesis> {
        let top = self.arity();
        if self.exact_atom_count() <= cap as f64 {
            let support: Vec<usize> = (0..self.pool.len()).filter(|i| self.weights[*i] > 0.0).collect();
            let mut atoms = Vec::new();
            for c in &self.components {
                let mut counts = vec![0usize; support.len()];
                expand_multisets(&support, &self.weights, c, top, 0, c.arity, &mut counts, &mut atoms);
            }
            let total: f64 = atoms.iter().map(|a: &Atom| a.weight).sum();
            for a in atoms.iter_mut() {
                a.weight /= total;
            }
            return MixtureHypothesis::new(self.pool.clone(), top, atoms);
        }
        let sampler = WeightedIndex::new(&self.weights).map_err(|e| Error::Degenerate(e.to_string()))?;
        let mut merged: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut order = Vec::new();
        for _ in 0..cap {
            let mut a = self.sample_atom(&sampler, rng);
            a.sort_unstable();
            let e = merged.entry(a.clone()).or_insert(0);
            if *e == 0 {
                order.push(a);
            }
            *e += 1;
        }
        let atoms = order
            .into_iter()
            .map(|a| {
                let w = merged[&a] as f64 / cap as f64;
                Atom { weight: w, members: a }
            })
            .collect();
        MixtureHypothesis::new(self.pool.clone(), top, atoms)
    }
}

fn multiset_count(s: f64, k: f64) -> f64 {
    // C(s + k - 1, k)
    (0..k as usize).fold(1.0, |acc, i| acc * (s + i as f64) / (i as f64 + 1.0))
}

#[allow(clippy::too_many_arguments)]
fn expand_multisets(
    support: &[usize],
    weights: &[f64],
    comp: &LawComponent,
    top: usize,
    start: usize,
    left: usize,
    counts: &mut Vec<usize>,
    out: &mut Vec<Atom>,
) {
    if left == 0 {
        // multinomial probability a!/Π n_i! Π μ_i^{n_i}
        let mut p = comp.weight;
        let mut seen = 0usize;
        for (j, n) in counts.iter().enumerate() {
            for t in 0..*n {
                seen += 1;
                p *= weights[support[j]] * seen as f64 / (t + 1) as f64;
            }
        }
        let rep = top / comp.arity;
        let members = counts
            .iter()
            .enumerate()
            .flat_map(|(j, n)| std::iter::repeat_n(support[j] as u32, n * rep))
            .collect();
        out.push(Atom { weight: p, members });
        return;
    }
    for j in start..support.len() {
        counts[j] += 1;
        expand_multisets(support, weights, comp, top, j, left - 1, counts, out);
        counts[j] -= 1;
    }
}
