//! `ibsi`: batch driver for the bottleneck solver and its experiments.
//!
//! Exit status: 0 when every solve converged, 2 when some did not, 1 on bad
//! input or any other error.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ibsi::region::{self, slope_grid, uniform_grid};
use ibsi::regularizer::{self, CurveConfig};
use ibsi::solver::InitScheme;
use ibsi::textcat::{self, SynthConfig, TextcatParams};
use ibsi::{io, JointXYZ, SolverConfig};

use manifest::Manifest;

#[derive(Parser, Serialize)]
#[command(name = "ibsi", version, about = "Information bottleneck with decoder side information")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Solve one λ on a joint pmf and write the result as JSON.
    Solve(SolveArgs),
    /// Sweep λ and write the achieved region and its hull.
    Region(RegionArgs),
    /// Excess-risk curves on sampled data from a random RBM task.
    Regularize(RegularizeArgs),
    /// Hierarchical text categorization.
    #[command(subcommand)]
    Textcat(TextcatCommand),
}

#[derive(Args, Serialize, Clone)]
struct SourceArgs {
    /// Joint pmf CSV with header `x,y,z,p`.
    #[arg(long, conflicts_with = "binary")]
    joint: Option<PathBuf>,
    /// Binary benchmark: Z = X through BSC(p), Y = X through BSC(q).
    #[arg(long, num_args = 2, value_names = ["P", "Q"])]
    binary: Option<Vec<f64>>,
}

#[derive(Args, Serialize, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Size of the U alphabet (default |X| + 1).
    #[arg(long)]
    card_u: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// dirichlet, perturbed_deterministic or warm_identity.
    #[arg(long, default_value = "dirichlet")]
    init: String,
    /// Keep per-iteration F/I traces in the JSON output.
    #[arg(long)]
    trace: bool,
}

impl SolverArgs {
    fn config(&self, lambda: f64) -> Result<SolverConfig> {
        Ok(SolverConfig {
            lambda,
            epsilon: self.epsilon,
            max_iterations: self.max_iter,
            restarts: self.restarts,
            cardinality_u: self.card_u,
            seed: self.seed,
            init_scheme: self.init.parse::<InitScheme>()?,
            record_trace: self.trace,
        })
    }
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum Spacing {
    /// Evenly spaced λ.
    Uniform,
    /// Evenly spaced in the slope (1-λ)/λ, denser near λ = 1.
    Slope,
}

#[derive(Args, Serialize)]
struct RegionArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// λ grid as `start:end:steps`.
    #[arg(long, default_value = "0.51:1:26")]
    lambda_grid: String,
    #[arg(long, value_enum, default_value_t = Spacing::Uniform)]
    spacing: Spacing,
    /// Only the analytic BSC-family curve of the binary benchmark.
    #[arg(long, requires = "binary")]
    oracle: bool,
    /// Points in the oracle's crossover grid on [0, 1/2].
    #[arg(long, default_value_t = 2001)]
    oracle_points: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RegularizeArgs {
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "500,5000,50000")]
    n_list: Vec<u64>,
    #[arg(long, default_value = "0.51:1:16")]
    lambda_grid: String,
    #[arg(long, value_enum, default_value_t = Spacing::Slope)]
    spacing: Spacing,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Seed of the RBM parameters (default: --seed).
    #[arg(long)]
    source_seed: Option<u64>,
    /// Excess within this many bits of its last value counts as plateau.
    #[arg(long, default_value_t = 1e-3)]
    plateau_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 2)]
    restarts: usize,
    #[arg(long)]
    card_u: Option<usize>,
    /// Trial t samples with seed + t.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "warm_identity")]
    init: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Serialize)]
enum TextcatCommand {
    /// Write a seeded synthetic corpus as `train/` and `test/`.
    Synth(SynthArgs),
    /// Train the two-stage model and save it as JSON.
    Train(TrainArgs),
    /// Classify a corpus with a saved model.
    Classify(ClassifyArgs),
    /// Accuracy of both pipelines against |U2|.
    Sweep(SweepArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    train_docs: usize,
    #[arg(long, default_value_t = 20)]
    test_docs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct TrainParams {
    #[arg(long, default_value_t = 0.99)]
    lambda: f64,
    #[arg(long, default_value_t = 20)]
    u1: usize,
    #[arg(long, default_value_t = 5)]
    u2: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainParams {
    fn params(&self) -> TextcatParams {
        TextcatParams {
            lambda: self.lambda,
            card_u1: self.u1,
            card_u2: self.u2,
            restarts: self.restarts,
            epsilon: self.epsilon,
            max_iterations: self.max_iter,
            seed: self.seed,
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Training corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    params: TrainParams,
    /// Train the one-stage baseline instead.
    #[arg(long)]
    single_task: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated |U2| values.
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20")]
    u2_list: Vec<usize>,
    #[command(flatten)]
    params: TrainParams,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Whether every solve behind an output converged.
#[derive(PartialEq, Eq, Debug)]
enum Outcome {
    Converged,
    NotConverged,
}

impl Outcome {
    fn from_flag(all: bool) -> Self {
        if all {
            Outcome::Converged
        } else {
            Outcome::NotConverged
        }
    }
}

/// Parses `start:end:steps`.
fn parse_grid(spec: &str, spacing: Spacing) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!("λ grid {spec:?} is not start:end:steps");
    };
    let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
    let n: usize = n.trim().parse()?;
    if n == 0 || !(a.is_finite() && b.is_finite()) || a > b || a < 0.0 || b > 1.0 {
        bail!("λ grid {spec:?} needs 0 ≤ start ≤ end ≤ 1 and steps ≥ 1");
    }
    Ok(match spacing {
        Spacing::Uniform => uniform_grid(a, b, n),
        Spacing::Slope => slope_grid(a, b, n),
    })
}

fn load_source(src: &SourceArgs, manifest: &mut Manifest) -> Result<JointXYZ> {
    match (&src.joint, &src.binary) {
        (Some(path), None) => {
            manifest.input(path)?;
            let (joint, mass) = io::load_joint(path).with_context(|| format!("reading {}", path.display()))?;
            if (mass - 1.0).abs() > 1e-9 {
                eprintln!("note: joint mass {mass} renormalized to 1");
            }
            Ok(joint)
        }
        (None, Some(pq)) => Ok(region::binary_source(pq[0], pq[1])?),
        _ => bail!("give exactly one of --joint FILE or --binary P Q"),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_solve(args: &SolveArgs, m: &mut Manifest) -> Result<Outcome> {
    let joint = load_source(&args.source, m)?;
    let config = args.solver.config(args.lambda)?;
    m.seed = args.solver.seed;
    let result = ibsi::solve(&joint, &config)?;
    prepare_out(&args.out)?;
    let path = args.out.join("result.json");
    io::save_json(&path, &result)?;
    m.output(&path);
    println!(
        "lambda={} f={} rate={} relevance={} iterations={} converged={}",
        result.lambda, result.f_value, result.rate, result.relevance, result.iterations, result.converged
    );
    Ok(Outcome::from_flag(result.converged))
}

#[derive(Serialize)]
struct OracleRow {
    r: f64,
    rate: f64,
    relevance: f64,
}

fn cmd_region(args: &RegionArgs, m: &mut Manifest) -> Result<Outcome> {
    prepare_out(&args.out)?;
    m.seed = args.solver.seed;
    if args.oracle {
        let pq = args.source.binary.as_ref().context("--oracle needs --binary P Q")?;
        if args.oracle_points < 2 {
            bail!("--oracle-points must be at least 2");
        }
        let grid = uniform_grid(0.0, 0.5, args.oracle_points);
        let oracle = region::binary_oracle(pq[0], pq[1], &grid)?;
        let path = args.out.join("oracle.csv");
        let mut wtr = csv::Writer::from_path(&path)?;
        for p in &oracle.points {
            wtr.serialize(OracleRow {
                r: p.r,
                rate: p.rate,
                relevance: p.relevance,
            })?;
        }
        wtr.flush()?;
        m.output(&path);
        let hull = args.out.join("hull.csv");
        io::write_hull(std::fs::File::create(&hull)?, &oracle.hull)?;
        m.output(&hull);
        println!("oracle: {} points, {} hull vertices", oracle.points.len(), oracle.hull.len());
        return Ok(Outcome::Converged);
    }
    let joint = load_source(&args.source, m)?;
    let lambdas = parse_grid(&args.lambda_grid, args.spacing)?;
    let config = args.solver.config(lambdas[0])?;
    let (curve, results) = region::sweep_detailed(&joint, &lambdas, &config)?;
    io::save_region_curve(&args.out, &curve)?;
    m.output(&args.out.join("region.csv"));
    m.output(&args.out.join("hull.csv"));
    if args.solver.trace {
        let path = args.out.join("traces.json");
        io::save_json(&path, &results)?;
        m.output(&path);
    }
    let unconverged = curve.points.iter().filter(|p| !p.converged).count();
    println!(
        "{} points, {} hull vertices, {unconverged} not converged",
        curve.points.len(),
        curve.hull.len()
    );
    Ok(Outcome::from_flag(unconverged == 0))
}

fn cmd_regularize(args: &RegularizeArgs, m: &mut Manifest) -> Result<Outcome> {
    if args.n_list.is_empty() || args.n_list.contains(&0) {
        bail!("--n-list needs positive sample sizes");
    }
    m.seed = args.seed;
    let source = regularizer::generate_source(args.source_seed.unwrap_or(args.seed));
    let config = CurveConfig {
        n_list: args.n_list.clone(),
        lambdas: parse_grid(&args.lambda_grid, args.spacing)?,
        trials: args.trials,
        seed: args.seed,
        plateau_tol: args.plateau_tol,
        solver: SolverConfig {
            lambda: 1.0,
            epsilon: args.epsilon,
            max_iterations: args.max_iter,
            restarts: args.restarts,
            cardinality_u: args.card_u,
            seed: args.seed,
            init_scheme: args.init.parse()?,
            record_trace: false,
        },
    };
    let curve = regularizer::excess_risk_curve(&source, &config)?;
    prepare_out(&args.out)?;
    let excess = args.out.join("excess.csv");
    io::write_excess(std::fs::File::create(&excess)?, &curve.rows)?;
    m.output(&excess);
    let summary = args.out.join("summary.csv");
    io::write_summary(std::fs::File::create(&summary)?, &curve.summary)?;
    m.output(&summary);
    for (s, (_, h)) in curve.summary.iter().zip(&curve.h_x_given_z) {
        println!(
            "n={} R_opt={:.4} R_lim={:.4} min_excess={:.4} H(X|Z)={:.4}",
            s.n, s.r_opt, s.r_lim, s.min_excess, h
        );
    }
    Ok(Outcome::Converged)
}

fn load_corpus(dir: &Path, vocab: Option<usize>, m: &mut Manifest) -> Result<textcat::Corpus> {
    for f in ["labels.csv", "counts.csv", "hierarchy.csv"] {
        m.input(&dir.join(f))?;
    }
    io::load_corpus(dir, vocab).with_context(|| format!("reading corpus {}", dir.display()))
}

fn stages_converged(stages: &[ibsi::SolverResult]) -> bool {
    stages.iter().all(|s| s.converged)
}

fn cmd_textcat(cmd: &TextcatCommand, m: &mut Manifest) -> Result<Outcome> {
    match cmd {
        TextcatCommand::Synth(a) => {
            m.seed = a.seed;
            let cfg = SynthConfig {
                seed: a.seed,
                train_docs_per_class: a.train_docs,
                test_docs_per_class: a.test_docs,
                ..SynthConfig::default()
            };
            let (train, test) = textcat::generate_corpus(&cfg)?;
            for (name, corpus) in [("train", &train), ("test", &test)] {
                let dir = a.out.join(name);
                io::save_corpus(&dir, corpus)?;
                for f in ["labels.csv", "counts.csv", "hierarchy.csv"] {
                    m.output(&dir.join(f));
                }
            }
            println!(
                "{} train / {} test documents, vocabulary {}",
                train.documents.len(),
                test.documents.len(),
                train.vocab_size
            );
            Ok(Outcome::Converged)
        }
        TextcatCommand::Train(a) => {
            m.seed = a.params.seed;
            let corpus = load_corpus(&a.corpus, None, m)?;
            let params = a.params.params();
            let trained = if a.single_task {
                textcat::train_single_task(&corpus, &params)?
            } else {
                textcat::train_hierarchical(&corpus, &params)?
            };
            prepare_out(&a.out)?;
            let path = a.out.join("model.json");
            io::save_model(&path, &trained.model)?;
            m.output(&path);
            for (i, s) in trained.stages.iter().enumerate() {
                println!(
                    "stage {}: f={} iterations={} gap={} converged={}",
                    i + 1,
                    s.f_value,
                    s.iterations,
                    s.final_gap,
                    s.converged
                );
            }
            Ok(Outcome::from_flag(stages_converged(&trained.stages)))
        }
        TextcatCommand::Classify(a) => {
            m.input(&a.model)?;
            let model = io::load_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
            let corpus = load_corpus(&a.corpus, Some(model.vocab_size()), m)?;
            prepare_out(&a.out)?;
            let path = a.out.join("predictions.csv");
            let mut wtr = csv::Writer::from_path(&path)?;
            wtr.write_record(["doc_id", "class", "predicted"])?;
            let mut correct = 0usize;
            for d in &corpus.documents {
                let yhat = model.classify(&d.words);
                correct += usize::from(yhat == d.class);
                wtr.write_record([d.id.to_string(), d.class.to_string(), yhat.to_string()])?;
            }
            wtr.flush()?;
            m.output(&path);
            let n = corpus.documents.len().max(1);
            println!("accuracy={}", correct as f64 / n as f64);
            Ok(Outcome::Converged)
        }
        TextcatCommand::Sweep(a) => {
            m.seed = a.params.seed;
            let train = load_corpus(&a.train, None, m)?;
            let test = load_corpus(&a.test, Some(train.vocab_size), m)?;
            prepare_out(&a.out)?;
            let path = a.out.join("sweep.csv");
            let mut wtr = csv::Writer::from_path(&path)?;
            wtr.write_record(["card_u2", "hierarchical", "single_task"])?;
            let mut all = true;
            for &u2 in &a.u2_list {
                let params = TextcatParams {
                    card_u2: u2,
                    ..a.params.params()
                };
                let h = textcat::train_hierarchical(&train, &params)?;
                let s = textcat::train_single_task(&train, &params)?;
                all &= stages_converged(&h.stages) && stages_converged(&s.stages);
                let (ah, as_) = (
                    textcat::evaluate_accuracy(&h.model, &test),
                    textcat::evaluate_accuracy(&s.model, &test),
                );
                println!("|U2|={u2}: hierarchical={ah:.4} single_task={as_:.4}");
                wtr.write_record([u2.to_string(), ah.to_string(), as_.to_string()])?;
            }
            wtr.flush()?;
            m.output(&path);
            Ok(Outcome::from_flag(all))
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let start = Instant::now();
    let (name, out): (&str, &Path) = match &cli.command {
        Command::Solve(a) => ("solve", &a.out),
        Command::Region(a) => ("region", &a.out),
        Command::Regularize(a) => ("regularize", &a.out),
        Command::Textcat(TextcatCommand::Synth(a)) => ("textcat synth", &a.out),
        Command::Textcat(TextcatCommand::Train(a)) => ("textcat train", &a.out),
        Command::Textcat(TextcatCommand::Classify(a)) => ("textcat classify", &a.out),
        Command::Textcat(TextcatCommand::Sweep(a)) => ("textcat sweep", &a.out),
    };
    let mut m = Manifest::new(name, serde_json::to_value(cli)?);
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a, &mut m)?,
        Command::Region(a) => cmd_region(a, &mut m)?,
        Command::Regularize(a) => cmd_regularize(a, &mut m)?,
        Command::Textcat(c) => cmd_textcat(c, &mut m)?,
    };
    m.duration_secs = start.elapsed().as_secs_f64();
    prepare_out(out)?;
    m.save(&out.join("manifest.json"))?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: not every solve converged");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.5:1:3", Spacing::Uniform).unwrap(), vec![0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0.8:0.8:1", Spacing::Uniform).unwrap(), vec![0.8]);
        for bad in ["0.5:1", "a:1:3", "0.9:0.5:3", "0:1:0", "0:2:3"] {
            assert!(parse_grid(bad, Spacing::Uniform).is_err(), "{bad}");
        }
    }
}
