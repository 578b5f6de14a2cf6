//! Randomized-to-deterministic conversion with k-wise independent seeds.
//!
//! A randomized hypothesis is an evaluator C(x, r) over r_bits of randomness. Drawing one
//! seed s of a k-wise independent family F_s and fixing r = F_s(x) at every x gives a
//! deterministic labeling whose error concentrates around the randomized error once no
//! point is heavy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Concept, Label, PointDistribution, RealPredictor};
use crate::error::{domain, ensure_len, Result};
use crate::mixture::MixtureHypothesis;

/// Irreducible modulus for GF(2^b), indexed by b (bit b set). Low-weight choices from the
/// standard tables; entry 0 is unused.
pub const IRREDUCIBLE: [u32; 17] = [
    0, 0b11, 0x7, 0xB, 0x13, 0x25, 0x43, 0x83, 0x11B, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443, 0x8003, 0x1100B,
];

pub const MAX_FIELD_BITS: u32 = 16;

/// Default constant in k = ceil(c_r ln(1/δ)).
pub const DEFAULT_C_R: f64 = 8.0;

/// GF(2^b) for 1 <= b <= 16.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gf2 {
    bits: u32,
}

impl Gf2 {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_FIELD_BITS {
            return Err(domain(format!("field width must lie in 1..=16, got {bits}")));
        }
        Ok(Self { bits })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn order(self) -> u32 {
        1 << self.bits
    }

    pub fn modulus(self) -> u32 {
        IRREDUCIBLE[self.bits as usize]
    }

    /// Shift-and-add multiply with reduction by the modulus.
    pub fn mul(self, a: u32, b: u32) -> u32 {
        let top = 1u32 << self.bits;
        let (mut a, mut b, mut acc) = (a, b, 0u32);
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.modulus();
            }
        }
        acc
    }
}

/// Polynomials of degree < k over GF(2^b), inputs embedded from d_bits, outputs truncated to r_bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KWiseFamily {
    pub d_bits: u32,
    pub r_bits: u32,
    pub k: usize,
    field: Gf2,
}

/// k field elements; coefficient j multiplies x^j.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed(pub Vec<u32>);

impl KWiseFamily {
    pub fn new(d_bits: u32, r_bits: u32, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(domain("independence k must be at least 1"));
        }
        if d_bits == 0 || r_bits == 0 {
            return Err(domain("input and output widths must be at least one bit"));
        }
        let field = Gf2::new(d_bits.max(r_bits))?;
        Ok(Self { d_bits, r_bits, k, field })
    }

    pub fn field(&self) -> Gf2 {
        self.field
    }

    /// k·max(d_bits, r_bits).
    pub fn seed_bits(&self) -> usize {
        self.k * self.field.bits() as usize
    }

    pub fn random_seed<R: Rng + ?Sized>(&self, rng: &mut R) -> Seed {
        Seed((0..self.k).map(|_| rng.gen_range(0..self.field.order())).collect())
    }

    /// Seed number `i` in 0..2^seed_bits, coefficient 0 in the low bits.
    pub fn seed_from_index(&self, mut i: u64) -> Seed {
        let b = self.field.bits();
        Seed(
            (0..self.k)
                .map(|_| {
                    let s = (i & ((1u64 << b) - 1)) as u32;
                    i >>= b;
                    s
                })
                .collect(),
        )
    }

    pub fn check_seed(&self, seed: &Seed) -> Result<()> {
        ensure_len("seed", seed.0.len(), self.k)?;
        if seed.0.iter().any(|s| *s >= self.field.order()) {
            return Err(domain("seed coefficient outside the field"));
        }
        Ok(())
    }
}

/// F_s(x) = Σ_{j<k} s_j x^j over GF(2^b), low r_bits kept.
pub fn kwise_eval(fam: &KWiseFamily, seed: &Seed, x: u32) -> Result<u32> {
    fam.check_seed(seed)?;
    if x >= 1 << fam.d_bits {
        return Err(domain(format!("input {x} does not fit in {} bits", fam.d_bits)));
    }
    Ok(eval_unchecked(fam, seed, x))
}

fn eval_unchecked(fam: &KWiseFamily, seed: &Seed, x: u32) -> u32 {
    // Horner from the top coefficient
    let f = fam.field;
    let v = seed.0.iter().rev().fold(0u32, |acc, s| f.mul(acc, x) ^ s);
    v & ((1u32 << fam.r_bits) - 1)
}

/// A randomized hypothesis in circuit form: a label from (x, r) with r uniform on r_bits.
pub trait SeededEvaluator {
    fn domain_size(&self) -> usize;
    fn r_bits(&self) -> u32;
    fn eval(&self, x: usize, r: u32) -> Label;
    /// Pr_r[eval(x, r) = +1] scaled to [-1, 1], exact for the discretized randomness.
    fn seeded_mean(&self, x: usize) -> f64;
}

/// Bits needed to index `m` points.
pub fn index_bits(m: usize) -> u32 {
    (usize::BITS - (m.max(2) - 1).leading_zeros()).max(1)
}

fn unit(r: u32, bits: u32) -> f64 {
    (f64::from(r) + 0.5) / f64::from(1u32 << bits)
}

/// Number of r in 0..2^bits with (r + 0.5)/2^bits < q.
fn count_below(q: f64, bits: u32) -> f64 {
    let n = f64::from(1u32 << bits);
    (q * n - 0.5).ceil().clamp(0.0, n)
}

/// Rad(h̄): +1 when the unit value of r falls below (1 + h̄(x))/2.
#[derive(Clone, Debug)]
pub struct RadEvaluator {
    pub predictor: RealPredictor,
    pub bits: u32,
}

impl SeededEvaluator for RadEvaluator {
    fn domain_size(&self) -> usize {
        self.predictor.len()
    }
    fn r_bits(&self) -> u32 {
        self.bits
    }
    fn eval(&self, x: usize, r: u32) -> Label {
        if unit(r, self.bits) < (1.0 + self.predictor.get(x)) / 2.0 {
            Label::POS
        } else {
            Label::NEG
        }
    }
    fn seeded_mean(&self, x: usize) -> f64 {
        let p = count_below((1.0 + self.predictor.get(x)) / 2.0, self.bits) / f64::from(1u32 << self.bits);
        2.0 * p - 1.0
    }
}

/// Seed bits pick an atom by cumulative weight and nothing else.
#[derive(Clone, Debug)]
pub struct MixtureEvaluator<'a> {
    h: &'a MixtureHypothesis,
    cumulative: Vec<f64>,
    pub bits: u32,
}

impl<'a> MixtureEvaluator<'a> {
    pub fn new(h: &'a MixtureHypothesis, bits: u32) -> Result<Self> {
        Gf2::new(bits)?;
        if h.atoms().is_empty() {
            return Err(crate::Error::State("mixture has no atoms".into()));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = h
            .atoms()
            .iter()
            .map(|a| {
                acc += a.weight;
                acc
            })
            .collect();
        // absorb rounding so every u < 1 lands on an atom
        *cumulative.last_mut().expect("nonempty") = f64::INFINITY;
        Ok(Self { h, cumulative, bits })
    }

    fn atom_index(&self, u: f64) -> usize {
        self.cumulative.partition_point(|c| *c <= u)
    }
}

impl SeededEvaluator for MixtureEvaluator<'_> {
    fn domain_size(&self) -> usize {
        self.h.domain_size()
    }
    fn r_bits(&self) -> u32 {
        self.bits
    }
    fn eval(&self, x: usize, r: u32) -> Label {
        let atom = &self.h.atoms()[self.atom_index(unit(r, self.bits))];
        self.h.vote(atom, x)
    }
    fn seeded_mean(&self, x: usize) -> f64 {
        let n = f64::from(1u32 << self.bits);
        let mut lo = 0.0;
        let mut total = 0.0;
        for (atom, hi) in self.h.atoms().iter().zip(&self.cumulative) {
            let upto = count_below(hi.min(2.0), self.bits);
            total += (upto - lo) * self.h.vote(atom, x).value();
            lo = upto;
        }
        total / n
    }
}

/// A deterministic hypothesis ignores its randomness.
impl SeededEvaluator for Concept {
    fn domain_size(&self) -> usize {
        self.len()
    }
    fn r_bits(&self) -> u32 {
        1
    }
    fn eval(&self, x: usize, _r: u32) -> Label {
        self.at(x)
    }
    fn seeded_mean(&self, x: usize) -> f64 {
        self.value(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingOptions {
    pub c_r: f64,
}

impl Default for RoundingOptions {
    fn default() -> Self {
        Self { c_r: DEFAULT_C_R }
    }
}

/// The rounded labeling plus what it is compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rounded {
    pub hypothesis: Concept,
    pub family: KWiseFamily,
    pub seed: Seed,
    /// error_D(ĥ, c*).
    pub error: f64,
    /// error_D of the randomized hypothesis.
    pub randomized_error: f64,
    /// √(p_max ln(1/δ)).
    pub deviation_scale: f64,
}

/// k = ceil(c_r ln(1/δ)).
pub fn independence_for(delta: f64, c_r: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !(c_r > 0.0) {
        return Err(domain(format!("c_r must be positive, got {c_r}")));
    }
    Ok(((c_r * (1.0 / delta).ln()).ceil() as usize).max(1))
}

/// Fixes one k-wise seed and returns ĥ(x) = C(x, F_s(x)).
pub fn derandomize<E: SeededEvaluator + ?Sized, R: Rng + ?Sized>(
    h: &E,
    target: &Concept,
    d: &PointDistribution,
    delta: f64,
    opts: &RoundingOptions,
    rng: &mut R,
) -> Result<Rounded> {
    let m = h.domain_size();
    ensure_len("target", target.len(), m)?;
    ensure_len("distribution", d.len(), m)?;
    let k = independence_for(delta, opts.c_r)?;
    let family = KWiseFamily::new(index_bits(m), h.r_bits(), k)?;
    let seed = family.random_seed(rng);
    let hypothesis = Concept::from_fn(m, |x| h.eval(x, eval_unchecked(&family, &seed, x as u32)));
    let error = (0..m).filter(|&x| hypothesis.at(x) != target.at(x)).map(|x| d.mass(x)).sum();
    let randomized_error = (0..m).map(|x| d.mass(x) * (1.0 - h.seeded_mean(x) * target.value(x)) / 2.0).sum();
    let deviation_scale = (d.max_mass() * (1.0 / delta).ln()).sqrt();
    Ok(Rounded { hypothesis, family, seed, error, randomized_error, deviation_scale })
}

/// Deterministic labeling as `x,label` lines.
pub fn write_labeling<W: std::io::Write>(c: &Concept, mut w: W) -> Result<()> {
    writeln!(w, "x,label")?;
    for x in 0..c.len() {
        writeln!(w, "{x},{}", c.at(x).get())?;
    }
    Ok(())
}
