//! Frank–Wolfe over Conv(C) on the progress measure P.
//!
//! All work happens on per-point aggregates of S: with W_h(x) = Σ_y n_{x,y}(a_y h(x) + b_y)
//! the loss is linear in c, ℓ_S(c, h) = (Σ_x c(x)W_h(x) + K_h)/(4n), and ∇P(μ) = -W_{g∘μ}/(4n).

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ConceptClass, DatasetSummary, Example, LabeledDataset, RealPredictor};
use crate::erm::{exact_weighted_argmax, weighted_erm, WeightedDataset};
use crate::error::{domain, Error, Result};
use crate::loss::{check_g_feasible, linear_weights, summary_loss, CornerLoss, LinkFunction, DEFAULT_GRID};

/// Tolerance on the a_y <= 0 precondition; one ulp of corner rounding is expected.
const AGREEMENT_TOL: f64 = 1e-12;

/// How step (i) picks c_t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InnerOracle {
    /// Exhaustive scan of C: a true argmax.
    Exact,
    /// Weighted ERM through a synthetic unweighted sample, slack ε/20.
    /// `delta_inner` defaults to 1e-4/T_max per step.
    Sampled { delta_inner: Option<f64> },
}

#[derive(Clone, Debug)]
pub struct FwOptions {
    pub oracle: InnerOracle,
    /// Points in the feasibility grid checked at entry; 0 skips the check.
    pub feasibility_grid: usize,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self { oracle: InnerOracle::Exact, feasibility_grid: DEFAULT_GRID }
    }
}

/// One row of the optional trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub gap: f64,
    pub loss: f64,
    pub gamma: f64,
}

/// μ_t on every domain point plus its convex-combination record over C.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    mu: Vec<f64>,
    t: usize,
    t_max: usize,
    /// Unnormalized weights; the true weight of concept i is `scale * raw[i]`.
    raw: BTreeMap<usize, f64>,
    scale: f64,
    history: Vec<(usize, f64)>,
}

impl OptimizerState {
    /// μ_1 = the point mass on concept `start`.
    pub fn new(class: &ConceptClass, start: usize, t_max: usize) -> Result<Self> {
        if start >= class.len() {
            return Err(domain(format!("start concept {start} outside class of size {}", class.len())));
        }
        let mut raw = BTreeMap::new();
        raw.insert(start, 1.0);
        Ok(Self {
            mu: class.get(start).labels().iter().map(|l| l.value()).collect(),
            t: 1,
            t_max,
            raw,
            scale: 1.0,
            history: Vec::new(),
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn gamma(&self) -> f64 {
        step_size(self.t)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// (c_t, ℓ_S(c_t, g∘μ_t)) for every completed step.
    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }

    /// Weights over visited concepts, in index order.
    pub fn weights(&self) -> Vec<(usize, f64)> {
        self.raw.iter().map(|(&i, &w)| (i, w * self.scale)).filter(|(_, w)| *w > 0.0).collect()
    }

    /// Σ_c w_c c, recomputed from the record.
    pub fn reconstruct(&self, class: &ConceptClass) -> Vec<f64> {
        let mut mu = vec![0.0; class.domain_size()];
        for (i, w) in self.weights() {
            for (m, l) in mu.iter_mut().zip(class.get(i).labels()) {
                *m += w * l.value();
            }
        }
        mu
    }

    /// μ_{t+1} = (1 - γ_t)μ_t + γ_t c.
    fn step(&mut self, class: &ConceptClass, c: usize, loss: f64) {
        let gamma = self.gamma();
        for (m, l) in self.mu.iter_mut().zip(class.get(c).labels()) {
            *m = ((1.0 - gamma) * *m + gamma * l.value()).clamp(-1.0, 1.0);
        }
        self.scale *= 1.0 - gamma;
        *self.raw.entry(c).or_insert(0.0) += gamma / self.scale;
        self.history.push((c, loss));
        self.t += 1;
    }

    fn link(&self, g: &LinkFunction) -> Vec<f64> {
        self.mu.iter().map(|&v| g.eval(v).clamp(-1.0, 1.0)).collect()
    }
}

/// γ_t = 2/(t + 2).
pub fn step_size(t: usize) -> f64 {
    2.0 / (t as f64 + 2.0)
}

/// The iteration budget and whether the floor loses more than 1% of 80L‖f‖∞/ε - 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationBudget {
    pub t_max: usize,
    pub unfloored: f64,
    pub floor_tightens: bool,
}

/// T_max = floor(80 L ‖f‖∞/ε - 2); a configuration error when below 1.
pub fn iteration_budget(lipschitz: f64, sup_norm: f64, eps: f64) -> Result<IterationBudget> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("ε must be positive, got {eps}")));
    }
    let unfloored = 80.0 * lipschitz * sup_norm / eps - 2.0;
    if !(unfloored >= 1.0) {
        return Err(Error::Config(format!("ε = {eps} too large: T_max = floor({unfloored}) < 1")));
    }
    let t_max = unfloored.floor();
    Ok(IterationBudget { t_max: t_max as usize, unfloored, floor_tightens: unfloored - t_max > 0.01 * unfloored })
}

/// Result of a Frank–Wolfe run.
#[derive(Clone, Debug)]
pub struct FwOutput {
    /// h̄ = g∘μ on every domain point.
    pub predictor: RealPredictor,
    pub state: OptimizerState,
    pub iterations: usize,
    /// ℓ_S(c_t, h̄) for the concept checked at exit.
    pub exit_loss: f64,
    pub budget: IterationBudget,
    pub trace: Vec<TraceRow>,
}

impl FwOutput {
    pub fn mu(&self) -> Result<RealPredictor> {
        RealPredictor::new(self.state.mu.clone())
    }
}

fn check_preconditions(f: &CornerLoss, g: &LinkFunction, grid: usize) -> Result<()> {
    for y in [crate::domain::Label::POS, crate::domain::Label::NEG] {
        if f.a(y) > AGREEMENT_TOL {
            return Err(Error::Config(format!("agreement coefficient a_{} = {} is positive", y.get(), f.a(y))));
        }
    }
    if !g.declared_monotone() {
        return Err(Error::Config(format!("link {} is not declared nondecreasing", g.name())));
    }
    if grid > 0 {
        let report = check_g_feasible(f, g, grid);
        if !report.passed {
            return Err(Error::Config(format!(
                "link {} is not feasible for the loss: f̃(μ, g(μ), y) = {} at μ = {}, y = {}",
                g.name(),
                report.max_violation,
                report.argmax_mu,
                report.argmax_y
            )));
        }
    }
    Ok(())
}

/// Weights w_i = y_i(a_{y_i} h(x_i) + b_{y_i}) so that Σ_i w_i c(x_i) y_i is the c-part of 4n ℓ_S.
fn inner_weighted_dataset(f: &CornerLoss, h: &[f64], s: &LabeledDataset) -> Result<WeightedDataset> {
    let pairs: Vec<Example> = s.pairs().to_vec();
    let weights = pairs.iter().map(|e| e.y.value() * (f.a(e.y) * h[e.x] + f.b(e.y))).collect();
    WeightedDataset::with_tight_bound(pairs, weights)
}

/// max_c ⟨∇P(μ), μ - c⟩, scanning C exactly.
pub fn duality_gap(
    state: &OptimizerState,
    f: &CornerLoss,
    g: &LinkFunction,
    s: &LabeledDataset,
    class: &ConceptClass,
) -> Result<f64> {
    let summary = summary_of(s, class)?;
    let w = linear_weights(f, &state.link(g), &summary);
    Ok(gap_from_weights(&w, &state.mu, class, summary.n))
}

fn gap_from_weights(w: &[f64], mu: &[f64], class: &ConceptClass, n: usize) -> f64 {
    let best = exact_weighted_argmax(class, w).score;
    let at_mu: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum();
    (best - at_mu) / (4.0 * n as f64)
}

fn summary_of(s: &LabeledDataset, class: &ConceptClass) -> Result<DatasetSummary> {
    if s.is_empty() {
        return Err(domain("Frank–Wolfe on an empty dataset"));
    }
    s.summary(class.domain_size())
}

/// Runs the loop until ℓ_S(c_t, g∘μ_t) <= 19ε/20, which gives max_c ℓ_S(c, g∘μ) <= ε.
pub fn learn_fw<R: Rng + ?Sized>(
    f: &CornerLoss,
    g: &LinkFunction,
    class: &ConceptClass,
    s: &LabeledDataset,
    eps: f64,
    options: &FwOptions,
    rng: &mut R,
) -> Result<FwOutput> {
    check_preconditions(f, g, options.feasibility_grid)?;
    let budget = iteration_budget(g.lipschitz(), f.sup_norm(), eps)?;
    let summary = summary_of(s, class)?;
    let mut state = OptimizerState::new(class, 0, budget.t_max)?;
    let mut trace = Vec::new();
    let exit_at = 19.0 * eps / 20.0;

    loop {
        let h = state.link(g);
        let w = linear_weights(f, &h, &summary);
        let exact = exact_weighted_argmax(class, &w);
        let chosen = match options.oracle {
            InnerOracle::Exact => exact.index,
            InnerOracle::Sampled { delta_inner } => {
                let delta = delta_inner.unwrap_or(1e-4 / budget.t_max as f64);
                // ε/20 in loss is ε/5 in (1/n)-normalized agreement, since ℓ carries a 1/4
                weighted_erm(class, &inner_weighted_dataset(f, &h, s)?, eps / 5.0, delta, rng)?.index
            }
        };
        let loss = summary_loss(f, class.get(chosen), h.as_slice(), &summary);
        let at_mu: f64 = w.iter().zip(&state.mu).map(|(a, b)| a * b).sum();
        let gap = (exact.score - at_mu) / (4.0 * summary.n as f64);
        trace.push(TraceRow { t: state.t, gap, loss, gamma: state.gamma() });

        if loss <= exit_at {
            let iterations = state.t;
            return Ok(FwOutput { predictor: RealPredictor::new(h)?, state, iterations, exit_loss: loss, budget, trace });
        }
        if state.t >= budget.t_max {
            return Err(Error::Budget {
                iterations: state.t,
                detail: format!("loss {loss} still above 19ε/20 = {exit_at}"),
                trace: trace.iter().map(|r| r.gap).collect(),
            });
        }
        state.step(class, chosen, loss);
    }
}

/// CSV with header `t,gap,loss,gamma`.
pub fn write_trace_csv(rows: &[TraceRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "t,gap,loss,gamma")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.t, r.gap, r.loss, r.gamma)?;
    }
    Ok(())
}
