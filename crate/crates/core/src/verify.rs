//! Quick self-checks behind `robust-pac verify`: each suite recomputes an identity the
//! learners rely on and reports the worst deviation it saw.

use rand::Rng;
use serde::Serialize;

use crate::adversaries::{tv_bayes_optimal_error, tv_instance, tv_posterior_error};
use crate::domain::{Concept, ConceptClass, Example, JointDistribution, Label, LabeledDataset, PointDistribution, RealPredictor};
use crate::error::Result;
use crate::fairness::agnostic_equivalence;
use crate::learners::{agnostic_arity, max_class_loss};
use crate::loss::{check_g_feasible, CornerLoss, LinkFunction, DEFAULT_GRID};
use crate::optimizer::{learn_fw, FwOptions};
use crate::rng::stream;
use crate::rounding::{kwise_eval, KWiseFamily};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

const SIGNS: [Label; 2] = [Label::NEG, Label::POS];

fn random_dataset<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> LabeledDataset {
    LabeledDataset::new(
        (0..n).map(|_| Example::new(rng.gen_range(0..m), if rng.gen_bool(0.5) { Label::POS } else { Label::NEG })).collect(),
    )
}

fn links() -> Result<Check> {
    let mal = check_g_feasible(&CornerLoss::malicious(), &LinkFunction::Malicious, DEFAULT_GRID);
    let mut worst = mal.max_violation;
    let mut passed = mal.passed;
    for eps in [0.05, 0.1] {
        for alpha in [0.0, 0.3] {
            let k = agnostic_arity(4.0, alpha, eps);
            let r = check_g_feasible(&CornerLoss::agnostic(alpha, eps), &LinkFunction::majority(k)?, DEFAULT_GRID);
            worst = worst.max(r.max_violation);
            passed &= r.passed;
        }
    }
    let slope = LinkFunction::Malicious.grid_lipschitz(DEFAULT_GRID);
    passed &= slope <= 2.0 + 1e-9 && LinkFunction::Malicious.grid_nondecreasing(DEFAULT_GRID);
    Ok(Check::new("link feasibility", passed, format!("max violation {worst:.2e}, g_mal slope {slope:.6}")))
}

fn loss_algebra<R: Rng + ?Sized>(rng: &mut R) -> Check {
    let mut worst: f64 = 0.0;
    let losses = [CornerLoss::malicious(), CornerLoss::agnostic(0.3, 0.05), CornerLoss::from_fn(|c, h, y| c * h - 0.5 * y * c + 0.25)];
    for f in &losses {
        for _ in 0..200 {
            let (c, h) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            for y in SIGNS {
                worst = worst.max((f.eval_unchecked(c, h, y) - f.eval_decomposed(c, h, y)).abs());
            }
        }
    }
    let a_ok = SIGNS.iter().all(|&y| CornerLoss::malicious().a(y) == -4.0 && CornerLoss::agnostic(0.3, 0.05).a(y) == -4.0);
    Check::new("loss decomposition", worst <= 1e-12 && a_ok, format!("max deviation {worst:.2e}, a_y = -4: {a_ok}"))
}

fn optimizer<R: Rng + ?Sized>(rng: &mut R) -> Result<Check> {
    let f = CornerLoss::malicious();
    let mut worst = f64::NEG_INFINITY;
    let eps = 0.1;
    for m in [8, 16, 32] {
        let class = ConceptClass::thresholds(m)?;
        for _ in 0..5 {
            let s = random_dataset(m, 200, rng);
            let out = learn_fw(&f, &LinkFunction::Malicious, &class, &s, eps, &FwOptions::default(), rng)?;
            worst = worst.max(max_class_loss(&f, &class, &out.predictor, &s)?);
        }
    }
    Ok(Check::new("optimizer exit", worst <= eps, format!("max class loss {worst:.4} at ε = {eps}")))
}

/// Over all seeds, the values at k distinct points hit every tuple exactly once.
fn kwise() -> Result<Check> {
    let mut families = 0;
    let mut passed = true;
    for b in 1..=4u32 {
        for k in 1..=(12 / b as usize).min(1 << b) {
            let fam = KWiseFamily::new(b, b, k)?;
            let points: Vec<u32> = (0..k as u32).collect();
            let seeds = 1u64 << (b as usize * k);
            let mut hits = vec![0u32; seeds as usize];
            for i in 0..seeds {
                let seed = fam.seed_from_index(i);
                let mut code = 0usize;
                for &x in &points {
                    code = (code << b) | kwise_eval(&fam, &seed, x)? as usize;
                }
                hits[code] += 1;
            }
            passed &= hits.iter().all(|&h| h == 1);
            families += 1;
        }
    }
    Ok(Check::new("k-wise uniformity", passed, format!("{families} families")))
}

fn tv_floor<R: Rng + ?Sized>(rng: &mut R) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for d in 4..=9 {
        for eta in [1.0 / (d as f64 - 1.0), 0.35, 0.45] {
            let exact = tv_bayes_optimal_error(d, eta)?.error;
            let inst = tv_instance(d, eta, rng)?;
            worst = worst.max((tv_posterior_error(&inst)? - exact).abs());
        }
    }
    let at20 = tv_bayes_optimal_error(20, 0.2)?.error;
    let passed = worst <= 1e-9 && (at20 - 24.0 / 85.0).abs() <= 1e-12;
    Ok(Check::new("tv floor", passed, format!("enumeration gap {worst:.2e}, floor(20, 0.2) = {at20:.7}")))
}

fn equivalence<R: Rng + ?Sized>(rng: &mut R) -> Result<Check> {
    let m = 6;
    let class = ConceptClass::intervals(m)?;
    let eps = 0.05;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let raw: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let dxy = JointDistribution::new(raw.into_iter().map(|w| w / total).collect())?;
        let h = RealPredictor::new((0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect())?;
        let e = agnostic_equivalence(&h, &class, &dxy, eps)?;
        // error_D(Rad(h̄), c) - Pr[y ≠ c] = (E[c y] - E[c h̄])/2, so the sides differ by a factor 2
        worst = worst.max((2.0 * e.agnostic_slack - e.violation).abs());
    }
    Ok(Check::new("multiaccuracy equivalence", worst <= 1e-12, format!("max |2·slack - violation| {worst:.2e}")))
}

fn error_rates<R: Rng + ?Sized>(rng: &mut R) -> Result<Check> {
    let m = 10;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = PointDistribution::from_masses((0..m).map(|_| rng.gen_range(0.0..1.0)).collect())?;
        let c = Concept::from_fn(m, |_| if rng.gen_bool(0.5) { Label::POS } else { Label::NEG });
        let h = c.to_predictor();
        worst = worst.max(h.error_rate(&c, &d)?.abs());
        worst = worst.max((h.negated().error_rate(&c, &d)? - 1.0).abs());
    }
    Ok(Check::new("error rate endpoints", worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

/// Runs every suite; the seed drives the random instances.
pub fn run_suites(seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream(seed);
    Ok(vec![
        links()?,
        loss_algebra(&mut rng),
        optimizer(&mut rng)?,
        kwise()?,
        tv_floor(&mut rng)?,
        equivalence(&mut rng)?,
        error_rates(&mut rng)?,
    ])
}
