//! Corner losses f: {±1}³ -> R, their multilinear extension, link functions and
//! the progress measure P whose gradient drives the Frank–Wolfe learner.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::domain::{check_unit, Concept, DatasetSummary, Label, LabeledDataset, RealPredictor};
use crate::error::{domain, ensure_len, Error, Result};

/// Default number of grid points for feasibility and Lipschitz checks (10^4 intervals).
pub const DEFAULT_GRID: usize = 10_001;
/// A grid check passes when the worst value is at most this.
pub const FEASIBILITY_TOL: f64 = 1e-9;

fn corner_index(c: Label, h: Label, y: Label) -> usize {
    (usize::from(c.is_pos()) << 2) | (usize::from(h.is_pos()) << 1) | usize::from(y.is_pos())
}

const SIGNS: [Label; 2] = [Label::NEG, Label::POS];

/// A loss given by its 8 corner values f(c, h, y).
///
/// Also kept in monomial form f = Σ_S k_S Π_{v∈S} v over S ⊆ {c, h, y}, so that losses built
/// from a closed form get a_y, b_y and Q_y without corner rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerLoss {
    corners: [f64; 8],
    /// Indexed by bits (c, h, y), with bit set meaning the variable appears.
    coefficients: [f64; 8],
}

const C_BIT: usize = 4;
const H_BIT: usize = 2;
const Y_BIT: usize = 1;

fn monomials_of(corners: &[f64; 8]) -> [f64; 8] {
    let mut k = [0.0; 8];
    for (mono, out) in k.iter_mut().enumerate() {
        let mut total = 0.0;
        for (corner, v) in corners.iter().enumerate() {
            // a variable in the monomial contributes its sign, ±1 by the corner bit
            let sign = if (mono & !corner).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            total += sign * v;
        }
        *out = total / 8.0;
    }
    k
}

impl CornerLoss {
    /// `corners` is indexed by bits (c, h, y), with bit set meaning +1.
    pub fn new(corners: [f64; 8]) -> Result<Self> {
        if corners.iter().any(|v| !v.is_finite()) {
            return Err(domain("corner values must be finite"));
        }
        Ok(Self { corners, coefficients: monomials_of(&corners) })
    }

    pub fn from_fn(f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut corners = [0.0; 8];
        for c in SIGNS {
            for h in SIGNS {
                for y in SIGNS {
                    corners[corner_index(c, h, y)] = f(c.value(), h.value(), y.value());
                }
            }
        }
        Self { corners, coefficients: monomials_of(&corners) }
    }

    /// From monomial coefficients indexed like the corners (bit set: the variable appears).
    pub fn from_monomials(coefficients: [f64; 8]) -> Result<Self> {
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(domain("coefficients must be finite"));
        }
        let mut corners = [0.0; 8];
        for (corner, out) in corners.iter_mut().enumerate() {
            *out = coefficients
                .iter()
                .enumerate()
                .map(|(mono, k)| if (mono & !corner).count_ones() % 2 == 1 { -k } else { *k })
                .sum();
        }
        Ok(Self { corners, coefficients })
    }

    /// f(c,h,y) = cy(2 - hy) - hy = 2cy - ch - hy.
    pub fn malicious() -> Self {
        let mut k = [0.0; 8];
        k[C_BIT | Y_BIT] = 2.0;
        k[C_BIT | H_BIT] = -1.0;
        k[H_BIT | Y_BIT] = -1.0;
        Self::from_monomials(k).expect("finite")
    }

    /// f(c,h,y) = c((1+α)y - h) - α - shift. The learner uses shift = ε.
    pub fn agnostic(alpha: f64, shift: f64) -> Self {
        let mut k = [0.0; 8];
        k[C_BIT | Y_BIT] = 1.0 + alpha;
        k[C_BIT | H_BIT] = -1.0;
        k[0] = -alpha - shift;
        Self::from_monomials(k).expect("finite")
    }

    pub fn monomials(&self) -> &[f64; 8] {
        &self.coefficients
    }

    pub fn corners(&self) -> &[f64; 8] {
        &self.corners
    }

    pub fn corner(&self, c: Label, h: Label, y: Label) -> f64 {
        self.corners[corner_index(c, h, y)]
    }

    /// Agreement coefficient a_y = f(1,1,y) + f(-1,-1,y) - f(1,-1,y) - f(-1,1,y) = 4(k_ch + k_chy y).
    pub fn a(&self, y: Label) -> f64 {
        let k = &self.coefficients;
        4.0 * (k[C_BIT | H_BIT] + k[C_BIT | H_BIT | Y_BIT] * y.value())
    }

    /// b_y = f(1,1,y) + f(1,-1,y) - f(-1,1,y) - f(-1,-1,y) = 4(k_c + k_cy y).
    pub fn b(&self, y: Label) -> f64 {
        let k = &self.coefficients;
        4.0 * (k[C_BIT] + k[C_BIT | Y_BIT] * y.value())
    }

    /// Q_y(t) = (1+t)(f(1,1,y) + f(-1,1,y)) + (1-t)(f(1,-1,y) + f(-1,-1,y)).
    pub fn q(&self, y: Label, t: f64) -> f64 {
        let k = &self.coefficients;
        let yv = y.value();
        4.0 * ((k[0] + k[Y_BIT] * yv) + t * (k[H_BIT] + k[H_BIT | Y_BIT] * yv))
    }

    pub fn sup_norm(&self) -> f64 {
        self.corners.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multilinear extension, inputs assumed in [-1, 1].
    pub fn eval_unchecked(&self, c: f64, h: f64, y: Label) -> f64 {
        let mut total = 0.0;
        for cs in SIGNS {
            for hs in SIGNS {
                let w = (1.0 + c * cs.value()) * (1.0 + h * hs.value()) / 4.0;
                total += w * self.corner(cs, hs, y);
            }
        }
        total
    }

    /// Multilinear extension f̃(c, h, y) with range checks.
    pub fn eval(&self, c: f64, h: f64, y: Label) -> Result<f64> {
        Ok(self.eval_unchecked(check_unit(c)?, check_unit(h)?, y))
    }

    /// The decomposed form ¼(c(a_y h + b_y) + Q_y(h)).
    pub fn eval_decomposed(&self, c: f64, h: f64, y: Label) -> f64 {
        0.25 * (c * (self.a(y) * h + self.b(y)) + self.q(y, h))
    }
}

/// f̃ evaluated on a point: concepts and predictors both qualify.
pub trait PointValues {
    fn point_value(&self, x: usize) -> f64;
    fn point_count(&self) -> usize;
}

impl PointValues for Concept {
    fn point_value(&self, x: usize) -> f64 {
        self.value(x)
    }
    fn point_count(&self) -> usize {
        self.len()
    }
}

impl PointValues for RealPredictor {
    fn point_value(&self, x: usize) -> f64 {
        self.get(x)
    }
    fn point_count(&self) -> usize {
        self.len()
    }
}

impl PointValues for [f64] {
    fn point_value(&self, x: usize) -> f64 {
        self[x]
    }
    fn point_count(&self) -> usize {
        self.len()
    }
}

/// ℓ_S(c, h̄) = mean over S of f̃(c(x), h̄(x), y).
pub fn dataset_loss<C, H>(f: &CornerLoss, c: &C, h: &H, s: &LabeledDataset) -> Result<f64>
where
    C: PointValues + ?Sized,
    H: PointValues + ?Sized,
{
    if s.is_empty() {
        return Err(domain("loss over an empty dataset"));
    }
    ensure_len("hypothesis", h.point_count(), c.point_count())?;
    s.check_domain(c.point_count())?;
    let total: f64 = s.pairs().iter().map(|e| f.eval_unchecked(c.point_value(e.x), h.point_value(e.x), e.y)).sum();
    Ok(total / s.len() as f64)
}

/// ℓ_S from per-point counts; same value as `dataset_loss` up to summation order.
pub fn summary_loss<C, H>(f: &CornerLoss, c: &C, h: &H, s: &DatasetSummary) -> f64
where
    C: PointValues + ?Sized,
    H: PointValues + ?Sized,
{
    let mut total = 0.0;
    for x in 0..s.domain_size() {
        for y in SIGNS {
            let n = s.count(x, y);
            if n > 0.0 {
                total += n * f.eval_unchecked(c.point_value(x), h.point_value(x), y);
            }
        }
    }
    total / s.n as f64
}

/// Per-point weights W(x) = Σ_y n_{x,y}(a_y h(x) + b_y), so that
/// ℓ_S(c, h) = (Σ_x c(x)W(x) + const)/(4n).
pub fn linear_weights(f: &CornerLoss, h: &[f64], s: &DatasetSummary) -> Vec<f64> {
    let (ap, an, bp, bn) = (f.a(Label::POS), f.a(Label::NEG), f.b(Label::POS), f.b(Label::NEG));
    (0..s.domain_size()).map(|x| s.pos[x] * (ap * h[x] + bp) + s.neg[x] * (an * h[x] + bn)).collect()
}

/// A nondecreasing link g: [-1, 1] -> [-1, 1] with a declared Lipschitz constant.
#[derive(Clone)]
pub enum LinkFunction {
    /// (16/19)M_7(t) + (3/19)t.
    Malicious,
    /// M_k for odd k.
    Majority(usize),
    Identity,
    Custom {
        name: String,
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lipschitz: f64,
        monotone: bool,
    },
}

impl fmt::Debug for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl LinkFunction {
    pub fn majority(k: usize) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(domain(format!("majority arity must be odd, got {k}")));
        }
        Ok(Self::Majority(k))
    }

    pub fn custom(name: &str, lipschitz: f64, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom { name: name.into(), eval: Arc::new(eval), lipschitz, monotone: true }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Malicious => "malicious".into(),
            Self::Majority(k) => format!("majority_{k}"),
            Self::Identity => "identity".into(),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Malicious => g_malicious(t),
            Self::Majority(k) => majority_mean_unchecked(*k, t),
            Self::Identity => t,
            Self::Custom { eval, .. } => eval(t),
        }
    }

    /// Declared Lipschitz constant L.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Malicious => 2.0,
            Self::Majority(k) => majority_max_slope(*k),
            Self::Identity => 1.0,
            Self::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn declared_monotone(&self) -> bool {
        match self {
            Self::Custom { monotone, .. } => *monotone,
            _ => true,
        }
    }

    /// G(s) = ∫_0^s g(t) dt.
    pub fn antiderivative(&self, s: f64) -> f64 {
        match self {
            Self::Malicious => {
                let s2 = s * s;
                s2 * (19.0 - s2 * (35.0 / 4.0 - s2 * (21.0 / 6.0 - s2 * 5.0 / 8.0))) / 19.0
            }
            Self::Majority(k) => majority_antiderivative(*k, s),
            Self::Identity => s * s / 2.0,
            Self::Custom { eval, .. } => adaptive_simpson(&**eval, 0.0, s, 1e-10),
        }
    }

    /// Max over adjacent grid pairs of |g(t') - g(t)|/|t' - t|.
    pub fn grid_lipschitz(&self, grid: usize) -> f64 {
        let pts = unit_grid(grid);
        pts.windows(2).map(|w| (self.eval(w[1]) - self.eval(w[0])).abs() / (w[1] - w[0])).fold(0.0, f64::max)
    }

    pub fn grid_nondecreasing(&self, grid: usize) -> bool {
        let pts = unit_grid(grid);
        pts.windows(2).all(|w| self.eval(w[1]) >= self.eval(w[0]) - 1e-15)
    }
}

/// `n` evenly spaced points from -1 to 1 inclusive.
pub fn unit_grid(n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|j| -1.0 + 2.0 * j as f64 / (n - 1) as f64).collect()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = (a + b) / 2.0;
        let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f((a + b) / 2.0), f(b));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}

/// g(t) = (38t - 35t³ + 21t⁵ - 5t⁷)/19.
pub fn g_malicious(t: f64) -> f64 {
    let t2 = t * t;
    t * (38.0 - t2 * (35.0 - t2 * (21.0 - 5.0 * t2))) / 19.0
}

/// g'(t) = (3 + 35(1 - t²)³)/19.
pub fn g_malicious_derivative(t: f64) -> f64 {
    let u = 1.0 - t * t;
    (3.0 + 35.0 * u * u * u) / 19.0
}

/// Largest k for which M_k is summed term by term.
const DIRECT_SUM_MAX_K: usize = 63;

/// M_k(t) = E[sign(z_1 + ... + z_k)] with z_i ~ Rad(t) i.i.d.
pub fn majority_mean(k: usize, t: f64) -> Result<f64> {
    if k.is_multiple_of(2) {
        return Err(domain(format!("majority arity must be odd, got {k}")));
    }
    Ok(majority_mean_unchecked(k, check_unit(t)?))
}

fn majority_mean_unchecked(k: usize, t: f64) -> f64 {
    if t < 0.0 {
        return -majority_mean_unchecked(k, -t);
    }
    if t == 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let p = (1.0 + t) / 2.0;
    let half = k.div_ceil(2);
    if k <= DIRECT_SUM_MAX_K {
        // Σ over j >= half minus Σ over j < half, with the lower tail summed directly for accuracy.
        let lower: f64 = (0..half).map(|j| binom(k, j) * p.powi(j as i32) * (1.0 - p).powi((k - j) as i32)).sum();
        1.0 - 2.0 * lower
    } else {
        // Pr[Bin(k, p) <= half - 1] = I_{1-p}(k - half + 1, half)
        let lower = beta_reg((k - half + 1) as f64, half as f64, 1.0 - p);
        1.0 - 2.0 * lower
    }
}

fn binom(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn ln_binom(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial(n, p) probability mass at i, computed in log space.
fn binom_pmf(n: usize, i: usize, p: f64) -> f64 {
    if p <= 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if i == n { 1.0 } else { 0.0 };
    }
    (ln_binom(n, i) + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp()
}

/// M_k'(0) = k·C(k-1, (k-1)/2)/2^{k-1}, the maximal slope of M_k.
pub fn majority_max_slope(k: usize) -> f64 {
    let r = (k - 1) / 2;
    if k <= DIRECT_SUM_MAX_K {
        k as f64 * binom(k - 1, r) / 2f64.powi((k - 1) as i32)
    } else {
        (( k as f64).ln() + ln_binom(k - 1, r) - (k - 1) as f64 * std::f64::consts::LN_2).exp()
    }
}

/// M_k'(t) = k·Pr[Bin(k-1, (1+t)/2) = (k-1)/2].
pub fn majority_derivative(k: usize, t: f64) -> f64 {
    k as f64 * binom_pmf(k - 1, (k - 1) / 2, (1.0 + t) / 2.0)
}

/// ∫_0^s M_k(t) dt = 4(E_{p_s}[(X-h)^+] - E_{1/2}[(X-h)^+])/(k+1) - s
/// with X ~ Bin(k+1, ·), h = (k+1)/2, p_s = (1+s)/2.
fn majority_antiderivative(k: usize, s: f64) -> f64 {
    let n = k + 1;
    let h = n / 2;
    let excess = |p: f64| -> f64 { (h + 1..=n).map(|i| (i - h) as f64 * binom_pmf(n, i, p)).sum() };
    4.0 * (excess((1.0 + s) / 2.0) - excess(0.5)) / n as f64 - s
}

/// Outcome of a grid feasibility check of f̃(μ, g(μ), y) <= 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub max_violation: f64,
    pub argmax_mu: f64,
    pub argmax_y: i8,
    pub passed: bool,
}

/// max over grid μ and y of f̃(μ, g(μ), y); passes iff at most 1e-9.
pub fn check_g_feasible(f: &CornerLoss, g: &LinkFunction, grid: usize) -> FeasibilityReport {
    let mut best = FeasibilityReport { max_violation: f64::NEG_INFINITY, argmax_mu: 0.0, argmax_y: 1, passed: false };
    for mu in unit_grid(grid) {
        let h = g.eval(mu).clamp(-1.0, 1.0);
        for y in SIGNS {
            let v = f.eval_unchecked(mu, h, y);
            if v > best.max_violation {
                best = FeasibilityReport { max_violation: v, argmax_mu: mu, argmax_y: y.get(), passed: false };
            }
        }
    }
    best.passed = best.max_violation <= FEASIBILITY_TOL;
    best
}

/// P(ν) = -(1/4n) Σ_i (a_{y_i} G(ν_i) + b_{y_i} ν_i) and its gradient.
pub fn progress_measure(g: &LinkFunction, s: &LabeledDataset, f: &CornerLoss, nu: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure_len("ν", nu.len(), s.len())?;
    if s.is_empty() {
        return Err(Error::Domain("progress measure of an empty dataset".into()));
    }
    let scale = -1.0 / (4.0 * s.len() as f64);
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(nu.len());
    for (e, &v) in s.pairs().iter().zip(nu) {
        let v = check_unit(v)?;
        let (a, b) = (f.a(e.y), f.b(e.y));
        value += a * g.antiderivative(v) + b * v;
        grad.push(scale * (a * g.eval(v) + b));
    }
    Ok((scale * value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Example;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    const P: Label = Label::POS;
    const N: Label = Label::NEG;

    fn random_dataset(rng: &mut impl Rng, m: usize, n: usize) -> LabeledDataset {
        LabeledDataset::new(
            (0..n).map(|_| Example::new(rng.gen_range(0..m), if rng.gen() { P } else { N })).collect(),
        )
    }

    #[test]
    fn monomials_round_trip_and_agreement_is_exact() {
        let f = CornerLoss::agnostic(0.3, 0.05);
        let back = CornerLoss::new(*f.corners()).unwrap();
        for (a, b) in f.monomials().iter().zip(back.monomials()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(f.a(P), -4.0);
        assert_eq!(f.a(N), -4.0);
        // from the corners directly, the same value up to rounding
        let direct = f.corner(P, P, P) + f.corner(N, N, P) - f.corner(P, N, P) - f.corner(N, P, P);
        assert!((direct + 4.0).abs() < 1e-14);
        let mal = CornerLoss::malicious();
        assert_eq!(CornerLoss::new(*mal.corners()).unwrap(), mal);
    }

    #[test]
    fn malicious_corners() {
        let f = CornerLoss::malicious();
        assert_eq!(f.corner(P, N, P), 4.0);
        assert_eq!(f.corner(P, P, P), 0.0);
        // hand-evaluated: f(1,1,-1) = -1·3 + 1 = -2, f(-1,-1,-1) = 1·1 - 1 = 0
        assert_eq!(f.corner(P, P, N), -2.0);
        assert_eq!(f.corner(N, N, N), 0.0);
        assert_eq!(f.a(P), -4.0);
        assert_eq!(f.a(N), -4.0);
        assert_eq!(f.b(P), 8.0);
        assert_eq!(f.b(N), -8.0);
        assert_eq!(f.sup_norm(), 4.0);
    }

    #[test]
    fn agnostic_agreement_coefficients() {
        // exact when α is dyadic; otherwise corner rounding leaves an ulp
        for alpha in [0.0, 0.25, 0.5] {
            for shift in [0.0, 0.0625, 0.125] {
                let f = CornerLoss::agnostic(alpha, shift);
                assert_eq!(f.a(P), -4.0, "α={alpha} shift={shift}");
                assert_eq!(f.a(N), -4.0, "α={alpha} shift={shift}");
            }
        }
        for alpha in [0.0, 0.3, 0.9] {
            for shift in [0.0, 0.05] {
                let f = CornerLoss::agnostic(alpha, shift);
                assert_relative_eq!(f.a(P), -4.0, epsilon = 1e-12);
                assert_relative_eq!(f.a(N), -4.0, epsilon = 1e-12);
                assert_relative_eq!(f.sup_norm(), 2.0 + 2.0 * alpha + shift, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn center_is_corner_average() {
        let f = CornerLoss::malicious();
        for y in SIGNS {
            let avg = (f.corner(P, P, y) + f.corner(P, N, y) + f.corner(N, P, y) + f.corner(N, N, y)) / 4.0;
            assert_relative_eq!(f.eval(0.0, 0.0, y).unwrap(), avg, epsilon = 1e-15);
        }
        assert!(f.eval(1.1, 0.0, P).is_err());
    }

    #[test]
    fn dataset_loss_examples() {
        let f = CornerLoss::malicious();
        let c = Concept::from_signs(&[1, -1, 1, -1]).unwrap();
        let s = LabeledDataset::new((0..4).map(|x| Example::new(x, c.at(x))).collect());
        assert_eq!(dataset_loss(&f, &c, &c.to_predictor(), &s).unwrap(), 0.0);
        let zero = RealPredictor::constant(4, 0.0).unwrap();
        assert_eq!(dataset_loss(&f, &c, &zero, &s).unwrap(), 2.0);
        assert!(dataset_loss(&f, &c, &zero, &LabeledDataset::default()).is_err());
    }

    #[test]
    fn decomposition_matches_interpolation() {
        let mut rng = stream(11);
        for _ in 0..200 {
            let corners: [f64; 8] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let f = CornerLoss::new(corners).unwrap();
            let (c, h): (f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            for y in SIGNS {
                assert_relative_eq!(f.eval_unchecked(c, h, y), f.eval_decomposed(c, h, y), epsilon = 1e-12);
            }
            assert!(f.sup_norm() >= f.a(P).abs() / 4.0 && f.sup_norm() >= f.a(N).abs() / 4.0);
        }
    }

    #[test]
    fn feasibility_examples() {
        let mal = CornerLoss::malicious();
        let r = check_g_feasible(&mal, &LinkFunction::Malicious, DEFAULT_GRID);
        assert!(r.passed, "{r:?}");
        let r = check_g_feasible(&mal, &LinkFunction::Identity, DEFAULT_GRID);
        assert!(!r.passed);
        // 2μy - g(μ)(μ+y) with g = id, maximized on the grid; at μ=0.5, y=1 the value is 0.25
        assert_relative_eq!(mal.eval_unchecked(0.5, 0.5, P), 0.25, epsilon = 1e-15);
        assert!(r.max_violation >= 0.25);
        // agnostic (α=0, ε=0) with M_1: f̃ = μ(y - μ), maximized at μ = y/2 with value 1/4
        let ag = CornerLoss::agnostic(0.0, 0.0);
        let r = check_g_feasible(&ag, &LinkFunction::majority(1).unwrap(), DEFAULT_GRID);
        assert_relative_eq!(r.max_violation, 0.25, epsilon = 1e-12);
        assert_relative_eq!(r.argmax_mu.abs(), 0.5, epsilon = 1e-12);
        assert!(!r.passed);
    }

    #[test]
    fn malicious_feasibility_closed_form() {
        // 2μy - g(μ)(μ + y) <= 0 is the form the feasibility check must reproduce
        let f = CornerLoss::malicious();
        for mu in unit_grid(1001) {
            for y in SIGNS {
                let direct = 2.0 * mu * y.value() - g_malicious(mu) * (mu + y.value());
                assert_relative_eq!(f.eval_unchecked(mu, g_malicious(mu), y), direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn g_malicious_examples() {
        assert_eq!(g_malicious(0.0), 0.0);
        assert_relative_eq!(g_malicious(1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(g_malicious(-1.0), -1.0, epsilon = 1e-15);
        // 15.2421875/19
        assert_relative_eq!(g_malicious(0.5), 0.802_220_394_736_842, epsilon = 1e-15);
        assert_relative_eq!(g_malicious_derivative(0.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn g_malicious_is_mixture_of_m7_and_identity() {
        for t in unit_grid(201) {
            let mix = 16.0 / 19.0 * majority_mean(7, t).unwrap() + 3.0 / 19.0 * t;
            assert_relative_eq!(g_malicious(t), mix, epsilon = 1e-14);
        }
    }

    #[test]
    fn majority_mean_examples() {
        for t in unit_grid(41) {
            assert_relative_eq!(majority_mean(1, t).unwrap(), t, epsilon = 1e-15);
            let poly = (35.0 * t - 35.0 * t.powi(3) + 21.0 * t.powi(5) - 5.0 * t.powi(7)) / 16.0;
            assert_relative_eq!(majority_mean(7, t).unwrap(), poly, epsilon = 1e-14);
        }
        assert_relative_eq!(majority_mean(7, 0.5).unwrap(), 0.858_886_718_75, epsilon = 1e-15);
        for k in [1, 3, 7, 63, 65, 401, 1601] {
            assert_eq!(majority_mean(k, 1.0).unwrap(), 1.0);
            assert_eq!(majority_mean(k, -1.0).unwrap(), -1.0);
            assert_eq!(majority_mean(k, 0.0).unwrap(), 0.0);
        }
        assert!(majority_mean(4, 0.1).is_err());
    }

    /// Term-by-term sum in log space, independent of the incomplete-beta path.
    fn majority_oracle(k: usize, t: f64) -> f64 {
        let p = (1.0 + t) / 2.0;
        (0..=k).map(|j| if 2 * j > k { 1.0 } else { -1.0 } * binom_pmf(k, j, p)).sum()
    }

    #[test]
    fn large_k_majority_matches_direct_sum() {
        for k in [65, 101, 401, 1601] {
            for t in unit_grid(81) {
                assert!((majority_mean(k, t).unwrap() - majority_oracle(k, t)).abs() < 1e-11, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn majority_slope_matches_russo_margulis() {
        assert_relative_eq!(majority_max_slope(7), 35.0 / 16.0, epsilon = 1e-15);
        assert_relative_eq!(majority_max_slope(1), 1.0, epsilon = 1e-15);
        for k in [3, 7, 31, 101, 1601] {
            let l = majority_max_slope(k);
            assert!(l <= (k as f64).sqrt(), "k={k}");
            assert_relative_eq!(majority_derivative(k, 0.0), l, max_relative = 1e-10);
            let grid = LinkFunction::majority(k).unwrap().grid_lipschitz(DEFAULT_GRID);
            assert!(grid <= l + 1e-9, "k={k}: grid {grid} vs {l}");
        }
    }

    #[test]
    fn antiderivatives_match_quadrature() {
        let links = [LinkFunction::Malicious, LinkFunction::Identity, LinkFunction::Majority(7), LinkFunction::Majority(101)];
        for g in &links {
            let g2 = g.clone();
            let numeric = LinkFunction::custom("numeric", g.lipschitz(), move |t| g2.eval(t));
            for s in [-1.0, -0.7, -0.2, 0.0, 0.3, 0.95, 1.0] {
                assert!((g.antiderivative(s) - numeric.antiderivative(s)).abs() < 1e-9, "{} at {s}", g.name());
            }
        }
        assert_eq!(LinkFunction::Malicious.antiderivative(0.0), 0.0);
    }

    #[test]
    fn malicious_link_constraints_on_grid() {
        for t in unit_grid(DEFAULT_GRID) {
            let g = g_malicious(t);
            if t > -1.0 {
                assert!(g >= 2.0 * t / (1.0 + t) - 1e-9);
            }
            if t < 1.0 {
                assert!(g <= 2.0 * t / (1.0 - t) + 1e-9);
            }
        }
        assert!(LinkFunction::Malicious.grid_nondecreasing(DEFAULT_GRID));
        assert!(LinkFunction::Malicious.grid_lipschitz(DEFAULT_GRID) <= 2.0 + 1e-9);
    }

    #[test]
    fn progress_measure_at_zero() {
        let mut rng = stream(5);
        let s = random_dataset(&mut rng, 6, 20);
        let (v, _) = progress_measure(&LinkFunction::Malicious, &s, &CornerLoss::malicious(), &[0.0; 20]).unwrap();
        assert_eq!(v, 0.0);
        assert!(progress_measure(&LinkFunction::Malicious, &s, &CornerLoss::malicious(), &[0.0; 3]).is_err());
    }

    #[test]
    fn progress_gradient_matches_finite_differences() {
        let mut rng = stream(6);
        let f = CornerLoss::malicious();
        for g in [LinkFunction::Malicious, LinkFunction::Majority(15)] {
            let s = random_dataset(&mut rng, 5, 12);
            let nu: Vec<f64> = (0..12).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let (_, grad) = progress_measure(&g, &s, &f, &nu).unwrap();
            let h = 1e-5;
            for i in 0..nu.len() {
                let (mut up, mut dn) = (nu.clone(), nu.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (progress_measure(&g, &s, &f, &up).unwrap().0 - progress_measure(&g, &s, &f, &dn).unwrap().0) / (2.0 * h);
                assert_relative_eq!(fd, grad[i], max_relative = 1e-6, epsilon = 1e-12);
            }
        }
    }

    /// Q(ν) = (1/4n) Σ Q_{y_i}(g(ν_i)), needed only for this identity.
    fn q_term(f: &CornerLoss, g: &LinkFunction, s: &LabeledDataset, nu: &[f64]) -> f64 {
        s.pairs().iter().zip(nu).map(|(e, v)| f.q(e.y, g.eval(*v))).sum::<f64>() / (4.0 * s.len() as f64)
    }

    #[test]
    fn gradient_to_loss_identity() {
        let mut rng = stream(7);
        let f = CornerLoss::malicious();
        let g = LinkFunction::Malicious;
        for _ in 0..50 {
            let m = 6;
            let s = random_dataset(&mut rng, m, 15);
            let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let nu: Vec<f64> = s.pairs().iter().map(|e| mu[e.x]).collect();
            let c = Concept::from_fn(m, |_| if rng.gen() { P } else { N });
            let (_, grad) = progress_measure(&g, &s, &f, &nu).unwrap();
            let lhs: f64 = s.pairs().iter().zip(&grad).map(|(e, gr)| gr * c.value(e.x)).sum();
            let h: Vec<f64> = mu.iter().map(|v| g.eval(*v)).collect();
            let rhs = -dataset_loss(&f, &c, h.as_slice(), &s).unwrap() + q_term(&f, &g, &s, &nu);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eval_is_affine_in_each_argument(
            corners in proptest::array::uniform8(-5.0f64..5.0),
            c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, h in -1.0f64..1.0, lam in 0.0f64..1.0, ypos in any::<bool>()
        ) {
            let f = CornerLoss::new(corners).unwrap();
            let y = if ypos { P } else { N };
            let cm = lam * c0 + (1.0 - lam) * c1;
            let mid = f.eval_unchecked(cm, h, y);
            let interp = lam * f.eval_unchecked(c0, h, y) + (1.0 - lam) * f.eval_unchecked(c1, h, y);
            prop_assert!((mid - interp).abs() < 1e-12);
            let mid = f.eval_unchecked(h, cm, y);
            let interp = lam * f.eval_unchecked(h, c0, y) + (1.0 - lam) * f.eval_unchecked(h, c1, y);
            prop_assert!((mid - interp).abs() < 1e-12);
        }

        #[test]
        fn progress_measure_is_convex_on_segments(seed in any::<u64>(), lam in 0.0f64..1.0) {
            let mut rng = stream(seed);
            let s = random_dataset(&mut rng, 5, 10);
            let f = CornerLoss::malicious();
            let g = LinkFunction::Malicious;
            let a: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
            let pa = progress_measure(&g, &s, &f, &a).unwrap().0;
            let pb = progress_measure(&g, &s, &f, &b).unwrap().0;
            let pm = progress_measure(&g, &s, &f, &mid).unwrap().0;
            prop_assert!(pm <= lam * pa + (1.0 - lam) * pb + 1e-12);
        }

        #[test]
        fn progress_gradient_is_lipschitz(seed in any::<u64>()) {
            let mut rng = stream(seed);
            let n = 10;
            let s = random_dataset(&mut rng, 5, n);
            let f = CornerLoss::malicious();
            let g = LinkFunction::Malicious;
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let ga = progress_measure(&g, &s, &f, &a).unwrap().1;
            let gb = progress_measure(&g, &s, &f, &b).unwrap().1;
            let dg = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let dn = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(dg <= f.sup_norm() * g.lipschitz() * dn / n as f64 + 1e-12);
        }
    }
}
