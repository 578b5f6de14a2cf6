use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use robust_pac::adversaries::{impossibility_instance, ImpossibilityKind};
use robust_pac::harness::{game_config, run_experiment, ClassSpec, ExperimentConfig, ExperimentReport, LearnerId};
use robust_pac::io;
use robust_pac::learners::{
    coin_flip, default_kappa, erm_baseline, learn_agnostic, learn_fixed_dist_nasty, learn_malicious, LearnerOptions,
};
use robust_pac::mixture::MixtureHypothesis;
use robust_pac::rng::stream;
use robust_pac::rounding::{derandomize, write_labeling, MixtureEvaluator, RadEvaluator, RoundingOptions, DEFAULT_C_R};
use robust_pac::verify::run_suites;
use robust_pac::PointDistribution;

#[derive(Parser)]
#[command(name = "robust-pac", version, about = "Randomized-hypothesis learners under malicious, nasty and agnostic noise")]
struct Cli {
    /// Master seed; for `simulate` it overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to rayon's choice).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Where output files go.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Experiment config, required by `simulate`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the built-in property suites.
    Verify,
    /// Train one learner on one dataset and write the hypothesis.
    Learn(LearnArgs),
    /// Monte Carlo run of a config; exits nonzero if any bound check fails.
    Simulate,
    /// Exact lower-bound game, or dump an impossibility instance.
    Game(GameArgs),
    /// Derandomize a hypothesis with a k-wise independent seed.
    Round(RoundArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Malicious,
    Agnostic,
    FixedDist,
    Erm,
    CoinFlip,
}

#[derive(clap::Args)]
struct LearnArgs {
    /// Dataset CSV (`x,y` rows).
    #[arg(long)]
    data: PathBuf,
    /// thresholds:m, intervals:m, sparse_one:k, shatter:d or file:path.
    #[arg(long)]
    class: String,
    #[arg(long, value_enum, default_value = "malicious")]
    learner: LearnerArg,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Certificate slack for fixed_dist; defaults to 3 sqrt(ln(2/δ)/n).
    #[arg(long)]
    kappa: Option<f64>,
    /// Marginal for fixed_dist (`x,weight` rows); uniform when absent.
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    c_k: f64,
}

#[derive(clap::Args)]
struct GameArgs {
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 0.2)]
    eta: f64,
    /// Comma-separated learners.
    #[arg(long, default_value = "malicious,agnostic,erm,coin_flip")]
    learners: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// improper_mal:k, improper_agnostic:k or distinct:p; writes the instance instead of playing.
    #[arg(long)]
    construction: Option<String>,
}

#[derive(clap::Args)]
struct RoundArgs {
    /// Mean predictor CSV (`x,value`) or a mixture hypothesis JSON written by `learn`.
    #[arg(long)]
    hypothesis: PathBuf,
    /// Target labeling CSV (`x,label`) the error is measured against.
    #[arg(long)]
    target: PathBuf,
    /// Marginal CSV (`x,weight`); uniform when absent.
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Random bits per point.
    #[arg(long, default_value_t = 10)]
    bits: u32,
    #[arg(long, default_value_t = DEFAULT_C_R)]
    c_r: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global().context("building thread pool")?;
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Verify => verify(seed),
        Command::Learn(args) => learn(&args, seed, &cli.out_dir),
        Command::Simulate => {
            let path = cli.config.as_deref().context("simulate needs --config")?;
            let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let report = run_experiment(&cfg, None)?;
            println!("{}", report.render());
            finish(&report, &cli.out_dir)
        }
        Command::Game(args) => game(&args, seed, &cli.out_dir),
        Command::Round(args) => round(&args, seed, &cli.out_dir),
    }
}

fn verify(seed: u64) -> Result<ExitCode> {
    let checks = run_suites(seed)?;
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn marginal(path: Option<&Path>, m: usize) -> Result<PointDistribution> {
    Ok(match path {
        Some(p) => io::load(p, io::read_distribution)?,
        None => PointDistribution::uniform(m)?,
    })
}

fn learn(args: &LearnArgs, seed: u64, out: &Path) -> Result<ExitCode> {
    let class = args.class.parse::<ClassSpec>()?.build()?;
    let s = io::load(&args.data, io::read_dataset).with_context(|| format!("reading {}", args.data.display()))?;
    let options = LearnerOptions { c_k: args.c_k, ..LearnerOptions::default() };
    let mut rng = stream(seed);
    let output = match args.learner {
        LearnerArg::Malicious => learn_malicious(&s, &class, args.eps, &options, &mut rng)?,
        LearnerArg::Agnostic => learn_agnostic(&s, &class, args.eps, args.alpha, &options, &mut rng)?,
        LearnerArg::FixedDist => {
            let d = marginal(args.distribution.as_deref(), class.domain_size())?;
            let kappa = args.kappa.unwrap_or_else(|| default_kappa(s.len(), args.delta));
            learn_fixed_dist_nasty(&s, &class, &d, args.eps, kappa, &options, &mut rng)?
        }
        LearnerArg::Erm => erm_baseline(&s, &class)?,
        LearnerArg::CoinFlip => coin_flip(class.domain_size())?,
    };
    io::save(&out.join("predictor.csv"), |w| io::write_predictor(&output.predictor, w))?;
    save_json(&out.join("hypothesis.json"), &output.hypothesis)?;
    save_json(&out.join("diagnostics.json"), &output.diagnostics)?;
    let d = &output.diagnostics;
    println!(
        "{}: arity {}, iterations {}, final loss {:.4}, max class loss {:.4}, {} atoms",
        d.learner,
        d.arity,
        d.iterations,
        d.final_loss,
        d.max_loss,
        output.hypothesis.atoms().len()
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    io::save(path, |w| serde_json::to_writer_pretty(w, value).map_err(|e| robust_pac::Error::State(e.to_string())))?;
    Ok(())
}

/// Writes the report and turns its checks into the exit code; failures go to stderr as JSON.
fn finish(report: &ExperimentReport, out: &Path) -> Result<ExitCode> {
    report.write_all(out)?;
    println!("runtime {:.1} s, wrote {}", report.runtime.as_secs_f64(), out.display());
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{}", serde_json::json!({ "failures": report.failures }));
        Ok(ExitCode::FAILURE)
    }
}

fn parse_construction(s: &str) -> Result<ImpossibilityKind> {
    let (kind, arg) = s.split_once(':').context("expected kind:arg")?;
    Ok(match kind {
        "improper_mal" => ImpossibilityKind::ImproperMal { k: arg.parse()? },
        "improper_agnostic" => ImpossibilityKind::ImproperAgnostic { k: arg.parse()? },
        "distinct" => ImpossibilityKind::Distinct { p: arg.parse()? },
        _ => bail!("unknown construction `{kind}`"),
    })
}

fn game(args: &GameArgs, seed: u64, out: &Path) -> Result<ExitCode> {
    if let Some(c) = &args.construction {
        let inst = impossibility_instance(parse_construction(c)?)?;
        let path = out.join("instance.json");
        save_json(&path, &inst)?;
        if let Some(f) = inst.floor {
            println!("proper-learner floor {f:.7}");
        }
        if let Some(c) = inst.constraints {
            println!(
                "q >= {:.4} and q <= {:.4} at ε = {}: {}",
                c.q_min(args.eps),
                c.q_max(args.eps),
                args.eps,
                if c.feasible(args.eps) { "feasible" } else { "infeasible" }
            );
        }
        println!("{} scenarios, wrote {}", inst.scenarios.len(), path.display());
        return Ok(ExitCode::SUCCESS);
    }
    let learners = args.learners.split(',').map(|l| l.trim().parse::<LearnerId>()).collect::<robust_pac::Result<Vec<_>>>()?;
    let cfg = game_config(args.d, args.eta, learners, args.trials, seed, args.eps);
    let report = run_experiment(&cfg, None)?;
    let floor = report.floor.context("game run has no floor")?;
    println!("exact floor {floor:.7}");
    for s in &report.learners {
        let ok = s.mean >= floor - 3.0 * s.stderr;
        println!("{:<10} mean {:.4} ± {:.4}  {}", s.learner.name(), s.mean, s.stderr, if ok { ">= floor - 3σ" } else { "BELOW floor - 3σ" });
    }
    finish(&report, out)
}

fn round(args: &RoundArgs, seed: u64, out: &Path) -> Result<ExitCode> {
    let target = io::load(&args.target, io::read_labeling)?;
    let d = marginal(args.distribution.as_deref(), target.len())?;
    let opts = RoundingOptions { c_r: args.c_r };
    let mut rng = stream(seed);
    let is_json = args.hypothesis.extension().is_some_and(|e| e == "json");
    let rounded = if is_json {
        let text = std::fs::read_to_string(&args.hypothesis)?;
        let h: MixtureHypothesis = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.hypothesis.display()))?;
        derandomize(&MixtureEvaluator::new(&h, args.bits)?, &target, &d, args.delta, &opts, &mut rng)?
    } else {
        let predictor = io::load(&args.hypothesis, io::read_predictor)?;
        derandomize(&RadEvaluator { predictor, bits: args.bits }, &target, &d, args.delta, &opts, &mut rng)?
    };
    let path = out.join("labeling.csv");
    io::save(&path, |w| write_labeling(&rounded.hypothesis, w))?;
    println!(
        "k = {}, error {:.4}, randomized error {:.4}, deviation scale {:.4}",
        rounded.family.k,
        rounded.error,
        rounded.randomized_error,
        rounded.deviation_scale
    );
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}
