//! Experiment configuration, the Monte Carlo runner, sample sizes and reports.
//!
//! A run draws, per trial, a target and a clean sample, corrupts it, trains every configured
//! learner on the same corrupted sample, and scores each hypothesis by its exact error under
//! the true marginal. Each trial owns a seeded stream, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::{
    corrupt, draw_clean, tv_bayes_optimal_error, tv_instance, AdversaryContext, NoiseModel, NoiseSpec, Strategy,
};
use crate::domain::{Concept, ConceptClass, Family, JointDistribution, Label, LabeledDataset, PointDistribution};
use crate::error::{Error, Result};
use crate::io;
use crate::learners::{
    coin_flip, default_kappa, erm_baseline, learn_agnostic, learn_fixed_dist_nasty, learn_malicious, relative_error_slack,
    LearnerOptions, LearnerOutput,
};
use crate::loss::{check_g_feasible, CornerLoss, LinkFunction, DEFAULT_GRID};
use crate::optimizer::{FwOptions, InnerOracle};
use crate::rng::{stream, substream, trial_seed};

/// Hidden constant of the sample-size formula.
pub const DEFAULT_C_N: f64 = 6.0;

/// Monte Carlo slack, in standard errors of the mean.
pub const SIGMA_SLACK: f64 = 3.0;

const MAX_INCLUDE_DEPTH: usize = 16;

/// n = ceil(c_n (d ln(2 + α/ε) + ln(1/δ)) / (ε(α + ε))).
pub fn sample_size(eps: f64, alpha: f64, delta: f64, d_proxy: f64, c_n: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("ε must lie in (0, 1), got {eps}")));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!("α must lie in [0, 1), got {alpha}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !(d_proxy >= 0.0 && c_n > 0.0) {
        return Err(Error::Config("d_proxy must be nonnegative and c_n positive".into()));
    }
    let n = c_n * (d_proxy * (2.0 + alpha / eps).ln() + (1.0 / delta).ln()) / (eps * (alpha + eps));
    Ok(n.ceil() as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSpec {
    Thresholds(usize),
    Intervals(usize),
    SparseOne(usize),
    Shatter(usize),
    File(PathBuf),
}

impl ClassSpec {
    pub fn build(&self) -> Result<ConceptClass> {
        match self {
            Self::Thresholds(m) => ConceptClass::thresholds(*m),
            Self::Intervals(m) => ConceptClass::intervals(*m),
            Self::SparseOne(k) => ConceptClass::sparse_one(*k),
            Self::Shatter(d) => ConceptClass::shatter(*d),
            Self::File(p) => io::load(p, io::read_class),
        }
    }
}

/// VC dimension for the built-in families, log2|C| otherwise.
pub fn vc_proxy(class: &ConceptClass) -> f64 {
    match class.family() {
        Some(Family::Thresholds) => 1.0,
        Some(Family::Intervals) => 2.0,
        Some(Family::SparseOne) => 1.0,
        Some(Family::Shatter) => class.domain_size() as f64,
        None => (class.len() as f64).log2().max(1.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform,
    /// One heavy point with the given mass, the rest uniform. Without `at`, the heavy
    /// point is the target's first label change (point 0 if it has none).
    Planted { mass: f64, at: Option<usize> },
    /// The lower-bound construction on shatter(d); rate and d come from noise and class.
    Tv,
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    Random,
    Index(usize),
}

/// Strategy as written in a config; `plant` without a pair means the heavy point with the wrong label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    Plant(Option<(usize, i8)>),
    Flip,
    Random,
    Concentrate { rival: Option<usize>, region_mass: Option<f64> },
    TvMimic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub model: NoiseModel,
    pub rate: f64,
    pub strategy: StrategySpec,
}

impl NoiseConfig {
    fn resolve(&self, heavy: usize, target: &Concept) -> Result<NoiseSpec> {
        let strategy = match &self.strategy {
            StrategySpec::Plant(Some((x, y))) => Strategy::Plant { x: *x, y: Label::new(*y)? },
            StrategySpec::Plant(None) => Strategy::Plant { x: heavy, y: -target.at(heavy) },
            StrategySpec::Flip => Strategy::Flip,
            StrategySpec::Random => Strategy::Random,
            StrategySpec::Concentrate { rival, region_mass } => Strategy::Concentrate { rival: *rival, region_mass: *region_mass },
            StrategySpec::TvMimic => Strategy::TvMimic,
        };
        NoiseSpec::new(self.model, self.rate, strategy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerId {
    Malicious,
    Agnostic,
    FixedDist,
    Erm,
    CoinFlip,
}

impl LearnerId {
    pub fn name(self) -> &'static str {
        match self {
            Self::Malicious => "malicious",
            Self::Agnostic => "agnostic",
            Self::FixedDist => "fixed_dist",
            Self::Erm => "erm",
            Self::CoinFlip => "coin_flip",
        }
    }
}

impl FromStr for LearnerId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "malicious" => Self::Malicious,
            "agnostic" => Self::Agnostic,
            "fixed_dist" | "fixed-dist" => Self::FixedDist,
            "erm" => Self::Erm,
            "coin_flip" | "coin-flip" => Self::CoinFlip,
            other => return Err(Error::Config(format!("unknown learner `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSizeSpec {
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub class: ClassSpec,
    pub distribution: DistributionSpec,
    pub target: TargetRule,
    pub noise: NoiseConfig,
    /// Every learner sees the same corrupted sample in each trial.
    pub learners: Vec<LearnerId>,
    pub eps: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Certificate slack; defaults to 3 sqrt(ln(2/δ)/n).
    pub kappa: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub n: SampleSizeSpec,
    pub c_n: f64,
    pub c_k: f64,
    pub sampled_oracle: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            class: ClassSpec::Thresholds(100),
            distribution: DistributionSpec::Uniform,
            target: TargetRule::Random,
            noise: NoiseConfig { model: NoiseModel::Malicious, rate: 0.0, strategy: StrategySpec::Flip },
            learners: vec![LearnerId::Malicious],
            eps: 0.05,
            alpha: 0.0,
            delta: 0.05,
            kappa: None,
            trials: 10,
            seed: 0,
            n: SampleSizeSpec::Auto,
            c_n: DEFAULT_C_N,
            c_k: 4.0,
            sampled_oracle: false,
        }
    }
}

fn cfg_err(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value}: {what}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| cfg_err(key, value, "not a number"))
}

fn parse_class(v: &str) -> Result<ClassSpec> {
    let (kind, arg) = v.split_once(':').ok_or_else(|| cfg_err("class", v, "expected kind:size"))?;
    Ok(match kind {
        "thresholds" => ClassSpec::Thresholds(num("class", arg)?),
        "intervals" => ClassSpec::Intervals(num("class", arg)?),
        "sparse_one" => ClassSpec::SparseOne(num("class", arg)?),
        "shatter" => ClassSpec::Shatter(num("class", arg)?),
        "file" => ClassSpec::File(arg.into()),
        _ => return Err(cfg_err("class", v, "unknown class kind")),
    })
}

fn parse_distribution(v: &str) -> Result<DistributionSpec> {
    let parts: Vec<&str> = v.split(':').collect();
    Ok(match parts.as_slice() {
        ["uniform"] => DistributionSpec::Uniform,
        ["tv"] => DistributionSpec::Tv,
        ["planted", mass] => DistributionSpec::Planted { mass: num("distribution", mass)?, at: None },
        ["planted", mass, at] => DistributionSpec::Planted { mass: num("distribution", mass)?, at: Some(num("distribution", at)?) },
        ["file", path] => DistributionSpec::File(path.into()),
        _ => return Err(cfg_err("distribution", v, "expected uniform, tv, planted:mass[:x] or file:path")),
    })
}

fn parse_target(v: &str) -> Result<TargetRule> {
    match v.split_once(':') {
        None if v == "random" => Ok(TargetRule::Random),
        Some(("index", i)) => Ok(TargetRule::Index(num("target", i)?)),
        _ => Err(cfg_err("target", v, "expected random or index:i")),
    }
}

/// model:rate:strategy[:args], e.g. `malicious:0.2:plant`, `nasty:0.2:concentrate:mass=0.4`.
fn parse_noise(v: &str) -> Result<NoiseConfig> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() < 3 {
        return Err(cfg_err("noise", v, "expected model:rate:strategy"));
    }
    let model: NoiseModel = parts[0].parse()?;
    let rate: f64 = num("noise", parts[1])?;
    let args = &parts[3..];
    let strategy = match parts[2] {
        "plant" => match args {
            [] => StrategySpec::Plant(None),
            [x, y] => StrategySpec::Plant(Some((num("noise", x)?, num("noise", y)?))),
            _ => return Err(cfg_err("noise", v, "plant takes no arguments or x:y")),
        },
        "flip" => StrategySpec::Flip,
        "random" => StrategySpec::Random,
        "tv_mimic" | "tv-mimic" => StrategySpec::TvMimic,
        "concentrate" => {
            let (mut rival, mut region_mass) = (None, None);
            for a in args {
                match a.split_once('=') {
                    Some(("rival", r)) => rival = Some(num("noise", r)?),
                    Some(("mass", m)) => region_mass = Some(num("noise", m)?),
                    _ => return Err(cfg_err("noise", v, "concentrate takes rival=i and mass=p")),
                }
            }
            StrategySpec::Concentrate { rival, region_mass }
        }
        other => return Err(cfg_err("noise", v, &format!("unknown strategy `{other}`"))),
    };
    Ok(NoiseConfig { model, rate, strategy })
}

impl FromStr for ClassSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_class(s)
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_distribution(s)
    }
}

impl FromStr for NoiseConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_noise(s)
    }
}

/// Collects key = value pairs, expanding `include = path` in place.
fn collect_pairs(text: &str, base: &Path, depth: usize, out: &mut Vec<(String, String)>) -> Result<()> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(Error::Config("include nesting too deep (cycle?)".into()));
    }
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { location: format!("line {}", i + 1), message: format!("expected key = value, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "include" {
            let path = base.join(v);
            let nested = std::fs::read_to_string(&path)?;
            collect_pairs(&nested, path.parent().unwrap_or(base), depth + 1, out)?;
        } else {
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Flat key = value text; later keys override earlier ones. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        collect_pairs(text, base, 0, &mut pairs)?;
        let map: BTreeMap<String, String> = pairs.into_iter().collect();
        let mut cfg = Self::default();
        for (k, v) in &map {
            match k.as_str() {
                "class" => cfg.class = parse_class(v)?,
                "distribution" => cfg.distribution = parse_distribution(v)?,
                "target" => cfg.target = parse_target(v)?,
                "noise" => cfg.noise = parse_noise(v)?,
                "learner" | "learners" => {
                    cfg.learners = v.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<_>>>()?;
                }
                "eps" => cfg.eps = num(k, v)?,
                "alpha" => cfg.alpha = num(k, v)?,
                "delta" => cfg.delta = num(k, v)?,
                "kappa" => cfg.kappa = if v == "auto" { None } else { Some(num(k, v)?) },
                "trials" => cfg.trials = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                "n" => cfg.n = if v == "auto" { SampleSizeSpec::Auto } else { SampleSizeSpec::Fixed(num(k, v)?) },
                "c_n" => cfg.c_n = num(k, v)?,
                "c_k" => cfg.c_k = num(k, v)?,
                "oracle" => {
                    cfg.sampled_oracle = match v.as_str() {
                        "exact" => false,
                        "sampled" => true,
                        _ => return Err(cfg_err(k, v, "expected exact or sampled")),
                    }
                }
                _ => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        // file paths are relative to the config
        if let ClassSpec::File(p) = &mut cfg.class {
            *p = base.join(&*p);
        }
        if let DistributionSpec::File(p) = &mut cfg.distribution {
            *p = base.join(&*p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.learners.is_empty() {
            return Err(Error::Config("no learner configured".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("ε must lie in (0, 1), got {}", self.eps)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("α must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("δ must lie in (0, 1), got {}", self.delta)));
        }
        if self.distribution == DistributionSpec::Tv {
            if !matches!(self.class, ClassSpec::Shatter(_)) {
                return Err(Error::Config("distribution tv needs class shatter:d".into()));
            }
            if self.noise.strategy != StrategySpec::TvMimic {
                return Err(Error::Config("distribution tv needs the tv_mimic strategy".into()));
            }
        } else if self.noise.strategy == StrategySpec::TvMimic && self.noise.rate > 0.0 {
            return Err(Error::Config("tv_mimic needs distribution tv".into()));
        }
        if let DistributionSpec::Planted { mass, .. } = self.distribution {
            if !(mass > 0.0 && mass < 1.0) {
                return Err(Error::Config(format!("planted mass must lie in (0, 1), got {mass}")));
            }
        }
        // strategy/model compatibility, with placeholder arguments
        let probe = Concept::constant(1, Label::POS);
        self.noise.resolve(0, &probe)?;
        Ok(())
    }

    fn learner_options(&self) -> LearnerOptions {
        let oracle = if self.sampled_oracle { InnerOracle::Sampled { delta_inner: None } } else { InnerOracle::Exact };
        // feasibility is checked once per run; hypotheses are scored by their exact mean
        LearnerOptions { fw: FwOptions { oracle, feasibility_grid: 0 }, atom_cap: 0, c_k: self.c_k }
    }
}

/// The bound a learner is held to under the configured noise, computed from the config.
pub fn learner_bound(learner: LearnerId, model: NoiseModel, eta: f64, eps: f64, alpha: f64, kappa: f64) -> Option<f64> {
    match (learner, model) {
        (LearnerId::Malicious, NoiseModel::Malicious) => Some(eta / (2.0 * (1.0 - eta)) + eps),
        (LearnerId::Malicious, _) => Some(1.5 * eta + eps),
        (LearnerId::Agnostic, NoiseModel::Agnostic | NoiseModel::NastyClassification) => Some((1.0 + alpha) * eta + eps),
        (LearnerId::FixedDist, _) => Some(eta + eps + kappa),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub learner: LearnerId,
    pub eta_hat: f64,
    pub true_error: f64,
    pub empirical_error: f64,
    pub bound: Option<f64>,
    pub pass: bool,
    /// Agnostic learner only: max_c [Pr_S[h != c] - (1+α)Pr_S[c != y]] - ε over all of C.
    pub contract_slack: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub learner: LearnerId,
    pub trials: usize,
    pub failed_trials: usize,
    pub mean: f64,
    pub sd: f64,
    pub stderr: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// Upper bound the mean is checked against, with SIGMA_SLACK standard errors.
    pub bound: Option<f64>,
    /// Lower floor the mean is checked against (TV construction), same slack. Absent for the
    /// fixed-distribution learner: it is handed D, and D locates the flipped point.
    pub floor: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub kappa: f64,
    pub floor: Option<f64>,
    pub learners: Vec<LearnerSummary>,
    pub trials: Vec<TrialRow>,
    /// Machine-readable list of every failed check.
    pub failures: Vec<String>,
    /// Wall time; kept out of the JSON so reports are byte-identical across runs.
    #[serde(skip)]
    pub runtime: Duration,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self, learner: LearnerId) -> Option<&LearnerSummary> {
        self.learners.iter().find(|s| s.learner == learner)
    }

    /// Per-trial rows for one learner, in trial order.
    pub fn rows(&self, learner: LearnerId) -> impl Iterator<Item = &TrialRow> {
        self.trials.iter().filter(move |r| r.learner == learner)
    }

    pub fn write_csv<W: Write>(&self, learner: LearnerId, mut w: W) -> Result<()> {
        writeln!(w, "trial,seed,eta_hat,true_error,empirical_error,bound,pass")?;
        for r in self.rows(learner) {
            let bound = r.bound.map_or(String::new(), |b| b.to_string());
            writeln!(w, "{},{},{},{},{},{},{}", r.trial, r.seed, r.eta_hat, r.true_error, r.empirical_error, bound, r.pass)?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// report.json plus trials_<learner>.csv per learner.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let json = dir.join("report.json");
        io::save(&json, |w| self.write_json(w))?;
        written.push(json);
        for s in &self.learners {
            let p = dir.join(format!("trials_{}.csv", s.learner.name()));
            io::save(&p, |w| self.write_csv(s.learner, w))?;
            written.push(p);
        }
        Ok(written)
    }

    /// One line per learner for terminal output.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}, trials = {}, κ = {:.4}", self.n, self.config.trials, self.kappa);
        if let Some(f) = self.floor {
            let _ = writeln!(out, "floor = {f:.7}");
        }
        for s in &self.learners {
            let bound = s.bound.map_or("-".to_string(), |b| format!("{b:.4}"));
            let _ = writeln!(
                out,
                "{:<11} mean {:.4} ± {:.4} (q05 {:.4}, q95 {:.4}) bound {} {}",
                s.learner.name(),
                s.mean,
                s.stderr,
                s.q05,
                s.q95,
                bound,
                if s.pass { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

/// What every trial shares.
struct Setup {
    class: Arc<ConceptClass>,
    marginal: Option<PointDistribution>,
    n: usize,
    kappa: f64,
    options: LearnerOptions,
}

/// The heavy point used by `planted` and the default plant strategy.
fn boundary_point(target: &Concept) -> usize {
    (1..target.len()).find(|&x| target.at(x) != target.at(x - 1)).unwrap_or(0)
}

fn heaviest(d: &PointDistribution) -> usize {
    d.weights().iter().enumerate().fold(0, |b, (i, w)| if *w > d.weights()[b] { i } else { b })
}

fn planted(m: usize, mass: f64, at: usize) -> Result<PointDistribution> {
    let rest = (1.0 - mass) / (m as f64 - 1.0);
    PointDistribution::new((0..m).map(|x| if x == at { mass } else { rest }).collect())
}

struct TrialData {
    target: Concept,
    marginal: PointDistribution,
    sample: LabeledDataset,
}

fn draw_trial<R: Rng + ?Sized>(cfg: &ExperimentConfig, setup: &Setup, rng: &mut R) -> Result<TrialData> {
    let class = &setup.class;
    let m = class.domain_size();
    let (target, marginal, corrupted_law): (Concept, PointDistribution, Option<JointDistribution>) = match &cfg.distribution {
        DistributionSpec::Tv => {
            let inst = tv_instance(m, cfg.noise.rate, rng)?;
            let marginal = inst.marginal();
            (inst.target, marginal, Some(inst.corrupted))
        }
        spec => {
            let target = match cfg.target {
                TargetRule::Random => class.get(rng.gen_range(0..class.len())).clone(),
                TargetRule::Index(i) if i < class.len() => class.get(i).clone(),
                TargetRule::Index(i) => return Err(Error::Config(format!("target index {i} outside class of size {}", class.len()))),
            };
            let marginal = match spec {
                DistributionSpec::Planted { mass, at } => planted(m, *mass, at.unwrap_or_else(|| boundary_point(&target)))?,
                _ => setup.marginal.clone().expect("fixed marginal"),
            };
            (target, marginal, None)
        }
    };
    let noise = cfg.noise.resolve(heaviest(&marginal), &target)?;
    let clean = draw_clean(&marginal, &target, setup.n, rng)?;
    let ctx = AdversaryContext { target: &target, marginal: &marginal, class: Some(class), corrupted_law: corrupted_law.as_ref() };
    let sample = corrupt(&clean, &noise, &ctx, rng)?;
    Ok(TrialData { target, marginal, sample })
}

fn train<R: Rng + ?Sized>(
    learner: LearnerId,
    cfg: &ExperimentConfig,
    setup: &Setup,
    data: &TrialData,
    rng: &mut R,
) -> Result<LearnerOutput> {
    let (s, class) = (&data.sample, &*setup.class);
    match learner {
        LearnerId::Malicious => learn_malicious(s, class, cfg.eps, &setup.options, rng),
        LearnerId::Agnostic => learn_agnostic(s, class, cfg.eps, cfg.alpha, &setup.options, rng),
        LearnerId::FixedDist => learn_fixed_dist_nasty(s, class, &data.marginal, cfg.eps, setup.kappa, &setup.options, rng),
        LearnerId::Erm => erm_baseline(s, class),
        LearnerId::CoinFlip => coin_flip(class.domain_size()),
    }
}

fn run_trial(cfg: &ExperimentConfig, setup: &Setup, bounds: &[Option<f64>], trial: usize) -> Vec<TrialRow> {
    let seed = trial_seed(cfg.seed, trial as u64);
    let mut rng = stream(seed);
    let failed = |learner: LearnerId, bound: Option<f64>, e: &Error| TrialRow {
        trial,
        seed,
        learner,
        eta_hat: f64::NAN,
        true_error: f64::NAN,
        empirical_error: f64::NAN,
        bound,
        pass: false,
        contract_slack: None,
        error: Some(e.to_string()),
    };
    let data = match draw_trial(cfg, setup, &mut rng) {
        Ok(d) => d,
        Err(e) => return cfg.learners.iter().zip(bounds).map(|(l, b)| failed(*l, *b, &e)).collect(),
    };
    let eta_hat = data.sample.corruption_fraction();
    cfg.learners
        .iter()
        .zip(bounds)
        .enumerate()
        .map(|(i, (&learner, &bound))| {
            // each learner has its own stream, so adding one leaves the others unchanged
            let mut lrng = substream(seed, i as u64 + 1);
            let scored = train(learner, cfg, setup, &data, &mut lrng).and_then(|out| {
                let slack = match learner {
                    LearnerId::Agnostic => Some(relative_error_slack(&out.predictor, &data.sample, &setup.class, cfg.alpha, cfg.eps)?),
                    _ => None,
                };
                Ok((out.error_rate(&data.target, &data.marginal)?, out.predictor.empirical_error(&data.sample)?, slack))
            });
            match scored {
                Ok((true_error, empirical_error, contract_slack)) => TrialRow {
                    trial,
                    seed,
                    learner,
                    eta_hat,
                    true_error,
                    empirical_error,
                    bound,
                    pass: bound.is_none_or(|b| true_error <= b) && contract_slack.is_none_or(|v| v <= 0.0),
                    contract_slack,
                    error: None,
                },
                Err(e) => failed(learner, bound, &e),
            }
        })
        .collect()
}

/// Nearest-rank quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Mean, sample standard deviation and standard error.
pub fn mean_sd(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd, sd / n.sqrt())
}

fn summarize(learner: LearnerId, rows: &[&TrialRow], bound: Option<f64>, floor: Option<f64>, failures: &mut Vec<String>) -> LearnerSummary {
    let mut errs: Vec<f64> = rows.iter().filter(|r| r.error.is_none()).map(|r| r.true_error).collect();
    let failed_trials = rows.len() - errs.len();
    let (mean, sd, stderr) = mean_sd(&errs);
    errs.sort_by(f64::total_cmp);
    let mut pass = failed_trials == 0;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        failures.push(format!("{}: trial {} failed: {}", learner.name(), r.trial, r.error.as_deref().unwrap_or("")));
    }
    for r in rows.iter().filter(|r| r.contract_slack.is_some_and(|v| v > 0.0)) {
        pass = false;
        failures.push(format!("{}: trial {} breaks the relative-error contract by {}", learner.name(), r.trial, r.contract_slack.unwrap_or(0.0)));
    }
    if let Some(b) = bound {
        if !(mean <= b + SIGMA_SLACK * stderr) {
            pass = false;
            failures.push(format!("{}: mean error {mean} above bound {b} + {SIGMA_SLACK}σ ({stderr})", learner.name()));
        }
    }
    if let Some(f) = floor {
        if !(mean >= f - SIGMA_SLACK * stderr) {
            pass = false;
            failures.push(format!("{}: mean error {mean} below floor {f} - {SIGMA_SLACK}σ ({stderr})", learner.name()));
        }
    }
    LearnerSummary {
        learner,
        trials: rows.len(),
        failed_trials,
        mean,
        sd,
        stderr,
        q05: quantile(&errs, 0.05),
        q50: quantile(&errs, 0.5),
        q95: quantile(&errs, 0.95),
        bound,
        floor,
        pass,
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<(Setup, Option<f64>)> {
    cfg.validate()?;
    let class = Arc::new(cfg.class.build()?);
    let m = class.domain_size();
    let marginal = match &cfg.distribution {
        DistributionSpec::Uniform => Some(PointDistribution::uniform(m)?),
        DistributionSpec::File(p) => {
            let d = io::load(p, io::read_distribution)?;
            crate::error::ensure_len("distribution", d.len(), m)?;
            Some(d)
        }
        DistributionSpec::Planted { at: Some(x), .. } if *x >= m => {
            return Err(Error::Config(format!("planted point {x} outside domain of size {m}")));
        }
        _ => None,
    };
    let floor = match cfg.distribution {
        DistributionSpec::Tv => Some(tv_bayes_optimal_error(m, cfg.noise.rate)?.error),
        _ => None,
    };
    let n = match cfg.n {
        SampleSizeSpec::Fixed(n) => n,
        SampleSizeSpec::Auto => sample_size(cfg.eps, cfg.alpha, cfg.delta, vc_proxy(&class), cfg.c_n)?,
    };
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let kappa = cfg.kappa.unwrap_or_else(|| default_kappa(n, cfg.delta));
    // link feasibility once, instead of per trial
    for l in &cfg.learners {
        let (f, g) = match l {
            LearnerId::Malicious => (CornerLoss::malicious(), LinkFunction::Malicious),
            LearnerId::Agnostic => {
                let k = crate::learners::agnostic_arity(cfg.c_k, cfg.alpha, cfg.eps);
                (CornerLoss::agnostic(cfg.alpha, cfg.eps), LinkFunction::majority(k)?)
            }
            _ => continue,
        };
        let report = check_g_feasible(&f, &g, DEFAULT_GRID);
        if !report.passed {
            return Err(Error::Config(format!("link {} infeasible for {} (violation {})", g.name(), l.name(), report.max_violation)));
        }
    }
    Ok((Setup { class, marginal, n, kappa, options: cfg.learner_options() }, floor))
}

/// Runs every trial, on `threads` workers when given (the global pool otherwise).
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentReport> {
    let start = Instant::now();
    let (setup, floor) = prepare(cfg)?;
    let eta = cfg.noise.rate;
    let bounds: Vec<Option<f64>> =
        cfg.learners.iter().map(|l| learner_bound(*l, cfg.noise.model, eta, cfg.eps, cfg.alpha, setup.kappa)).collect();
    let work = || -> Vec<TrialRow> {
        (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &setup, &bounds, t)).collect::<Vec<_>>().into_iter().flatten().collect()
    };
    let trials = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut failures = Vec::new();
    let learners = cfg
        .learners
        .iter()
        .zip(&bounds)
        .map(|(&l, &b)| {
            let rows: Vec<&TrialRow> = trials.iter().filter(|r| r.learner == l).collect();
            let floor = floor.filter(|_| l != LearnerId::FixedDist);
            summarize(l, &rows, b, floor, &mut failures)
        })
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        n: setup.n,
        kappa: setup.kappa,
        floor,
        learners,
        trials,
        failures,
        runtime: start.elapsed(),
    })
}

/// The lower-bound game on shatter(d) at rate η: exact floor plus each learner's measured error.
pub fn game_config(d: usize, eta: f64, learners: Vec<LearnerId>, trials: usize, seed: u64, eps: f64) -> ExperimentConfig {
    ExperimentConfig {
        class: ClassSpec::Shatter(d),
        distribution: DistributionSpec::Tv,
        target: TargetRule::Random,
        noise: NoiseConfig { model: NoiseModel::Tv, rate: eta, strategy: StrategySpec::TvMimic },
        learners,
        eps,
        trials,
        seed,
        ..ExperimentConfig::default()
    }
}
