use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tsfd_cli::{plot_csv, run_sweep, run_table, Axis, CliError, ExperimentConfig, PlotKind, SweepMetric};
use tsfd_core::bench::{apply_bias, fixture, generate_universe, sample_problem};
use tsfd_core::policies::{run_method, PipelineConfig};
use tsfd_core::{
    ConcaveFn, ItemConstraint, MatcherStrategy, MeritRule, Method, MetricReport, PolicyFile, RankingPolicy,
    RankingProblem,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_UNCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "tsfd", version, about = "Fair and diverse ranking for two-sided markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark universe (or one sample of it) as a problem file.
    GenerateDataset(GenerateArgs),
    /// Write a built-in example problem plus a sidecar of its predicted outcomes.
    Fixture(FixtureArgs),
    /// Compute a ranking policy for a problem file.
    Rank(RankArgs),
    /// Report the metrics of a policy on a problem.
    Evaluate(EvaluateArgs),
    /// Benchmark table: mean metrics of each method over random samples.
    Table(TableArgs),
    /// Sweep one benchmark parameter and report a ratio metric per method.
    Sweep(SweepArgs),
    /// Render a table or sweep CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Intent similarity between the user groups.
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    /// Proportion of male users.
    #[arg(long, default_value_t = 0.6)]
    rho: f64,
    /// Exposure steepness.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 5)]
    n_intents: usize,
    /// Relevance bias applied to black-lead movies.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    bias: f64,
    /// Write sample `I` of the experiment instead of the whole universe.
    #[arg(long, value_name = "I")]
    sample: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    name: String,
    /// Problem file; predictions go to `<stem>.expected.json` beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    None,
    OneSided,
    TwoSided,
}

impl From<ConstraintArg> for ItemConstraint {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::None => ItemConstraint::None,
            ConstraintArg::OneSided => ItemConstraint::OneSided,
            ConstraintArg::TwoSided => ItemConstraint::TwoSided,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MeritArg {
    Relevance,
    Equal,
}

impl From<MeritArg> for MeritRule {
    fn from(m: MeritArg) -> Self {
        match m {
            MeritArg::Relevance => MeritRule::AverageRelevance,
            MeritArg::Equal => MeritRule::Equal,
        }
    }
}

#[derive(Args)]
struct FunctionArgs {
    /// User-fairness function, `log:SHIFT` or `pwl:K1,K2,..@T1,T2,..`.
    #[arg(long, default_value = "log:-0.6", allow_hyphen_values = true)]
    f: ConcaveFn,
    /// Diversity function, same syntax as `--f`.
    #[arg(long, default_value = "log:0.0001", allow_hyphen_values = true)]
    g: ConcaveFn,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long, default_value = "tsfd")]
    method: Method,
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Decomposition matcher: lsi, lsni, es0..es3 or utility.
    #[arg(long, default_value = "lsi")]
    matcher: MatcherStrategy,
    #[command(flatten)]
    functions: FunctionArgs,
    #[arg(long, value_enum, default_value = "one-sided")]
    constraint: ConstraintArg,
    #[arg(long, value_enum, default_value = "relevance")]
    merit: MeritArg,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[command(flatten)]
    functions: FunctionArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated methods (tsfd, utility, userfair, itemfair, diversity).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    matcher: Option<MatcherStrategy>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.samples {
            c.samples = n;
        }
        if let Some(s) = self.seed {
            c.bench.seed = s;
        }
        if let Some(m) = &self.methods {
            c.methods = m.clone();
        }
        if let Some(m) = self.matcher {
            c.pipeline.strategy = m;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// s, rho_male, bias_b, eta or n_intents.
    #[arg(long)]
    axis: Axis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    values: Vec<f64>,
    /// user_ratio, exposure_ratio, diversity_ratio or fairness_ratio.
    #[arg(long, default_value = "user_ratio")]
    metric: SweepMetric,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, value_enum, default_value = "lines")]
    kind: KindArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Lines,
    Bars,
}

enum Failure {
    Invalid(String),
    Unconverged(String),
    Other(String),
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Core(tsfd_core::Error::InvalidProblem(_))
            | CliError::Core(tsfd_core::Error::InvalidPolicy(_))
            | CliError::Core(tsfd_core::Error::InvalidFunction(_))
            | CliError::Core(tsfd_core::Error::UnknownFixture(_))
            | CliError::Json(_)
            | CliError::Config(_) => Failure::Invalid(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<tsfd_core::Error> for Failure {
    fn from(e: tsfd_core::Error) -> Self {
        CliError::from(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        CliError::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        CliError::from(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_problem(path: &Path) -> Result<RankingProblem, Failure> {
    let problem = RankingProblem::from_json(&fs::read_to_string(path)?)?;
    let violations = problem.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Failure::Invalid(format!("degenerate problem: {}", list.join("; "))));
    }
    Ok(problem)
}

fn generate(a: GenerateArgs) -> Outcome {
    let mut config = ExperimentConfig::default();
    config.bench.seed = a.seed;
    config.bench.similarity = a.s;
    config.bench.rho_male = a.rho;
    config.bench.eta = a.eta;
    config.bench.n_intents = a.n_intents;
    config.bias = a.bias;
    config.validate()?;
    let universe = generate_universe(&config.bench)?;
    let problem = match a.sample {
        Some(i) => {
            let seed = tsfd_cli::sample_seed(a.seed, i);
            sample_problem(&universe, config.bench.sample_size, seed)?
        }
        None => universe,
    };
    let problem = if a.bias == 0.0 { problem } else { apply_bias(&problem, a.bias)? };
    fs::write(&a.out, problem.to_json())?;
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "fixture".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.expected.json"))
}

fn export_fixture(a: FixtureArgs) -> Outcome {
    let fx = fixture(&a.name)?;
    fs::write(&a.out, fx.problem.to_json())?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        name: &'a str,
        description: &'a str,
        expected: &'a [tsfd_core::bench::Expectation],
    }
    write_json(
        &sidecar(&a.out),
        &Sidecar {
            name: &fx.name,
            description: &fx.description,
            expected: &fx.expected,
        },
    )
}

fn rank(a: RankArgs) -> Outcome {
    let problem = load_problem(&a.problem)?;
    let config = PipelineConfig {
        f: a.functions.f,
        g: a.functions.g,
        item_constraint: a.constraint.into(),
        merit_rule: a.merit.into(),
        strategy: a.matcher,
        max_iterations: a.max_iter,
        duality_gap_tol: a.gap_tol,
        ..PipelineConfig::default()
    };
    let out = run_method(&problem, a.method, &config)?;
    write_json(&a.out, &out.policy.to_file(&problem))?;
    match &out.solve {
        Some(s) if !s.converged => Err(Failure::Unconverged(format!(
            "solver stopped after {} iterations with duality gap {:e} and constraint violation {:e}",
            s.iterations, s.duality_gap, s.constraint_violation
        ))),
        _ => Ok(()),
    }
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let problem = load_problem(&a.problem)?;
    let file: PolicyFile = serde_json::from_str(&fs::read_to_string(&a.policy)?)?;
    let policy = RankingPolicy::from_file(&file, &problem)?;
    let report = MetricReport::evaluate(&problem, &policy, &a.functions.f, &a.functions.g)?;
    match a.out {
        Some(p) => write_json(&p, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn table(a: TableArgs) -> Outcome {
    let config = a.experiment.resolve()?;
    let report = run_table(&config)?;
    emit(&a.experiment.out, &report.to_csv_string()?)?;
    for (i, m, msg) in &report.failures {
        eprintln!("sample {i}, {m}: {msg}");
    }
    match report.unconverged() {
        0 => Ok(()),
        n => Err(Failure::Unconverged(format!("{n} solves missed their tolerances"))),
    }
}

fn sweep(a: SweepArgs) -> Outcome {
    let config = a.experiment.resolve()?;
    let report = run_sweep(&config, a.axis, &a.values, a.metric)?;
    emit(&a.experiment.out, &report.to_csv_string()?)?;
    match report.unconverged() {
        0 => Ok(()),
        n => Err(Failure::Unconverged(format!("{n} solves missed their tolerances"))),
    }
}

fn plot(a: PlotArgs) -> Outcome {
    let kind = match a.kind {
        KindArg::Lines => PlotKind::Lines,
        KindArg::Bars => PlotKind::Bars,
    };
    let svg = plot_csv(&fs::read_to_string(&a.csv)?, kind).map_err(|e| Failure::Invalid(e.to_string()))?;
    fs::write(&a.out, svg)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenerateDataset(a) => generate(a),
        Command::Fixture(a) => export_fixture(a),
        Command::Rank(a) => rank(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Table(a) => table(a),
        Command::Sweep(a) => sweep(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Unconverged(m)) => {
            eprintln!("warning: {m}");
            ExitCode::from(EXIT_UNCONVERGED)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
