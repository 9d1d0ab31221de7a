//! Benchmark table: every configured method on independent samples.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use tsfd_core::bench::{apply_bias, generate_universe, sample_problem};
use tsfd_core::metrics::{diversity_upper_bound, policy_diversity};
use tsfd_core::policies::run_method;
use tsfd_core::{decompose, ConcaveFn, MatcherStrategy, Method, MetricReport, RankingProblem};

use crate::config::ExperimentConfig;
use crate::stats::Summary;
use crate::Result;

/// Tolerance for the per-sample bound inequalities.
pub const BOUND_TOL: f64 = 1e-9;

/// Seed of sample `index`, derived from the master seed by counter.
pub fn sample_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample `index` of an experiment, with the configured bias applied.
pub fn sample(config: &ExperimentConfig, universe: &RankingProblem, index: usize) -> Result<RankingProblem> {
    let p = sample_problem(
        universe,
        config.bench.sample_size,
        sample_seed(config.bench.seed, index as u64),
    )?;
    Ok(if config.bias == 0.0 { p } else { apply_bias(&p, config.bias)? })
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub report: MetricReport,
    pub converged: bool,
}

/// Per sample, per method (in `methods` order): the run or its error message.
pub type SampleRuns = Vec<std::result::Result<MethodRun, String>>;

fn run_one(config: &ExperimentConfig, problem: &RankingProblem, method: Method) -> std::result::Result<MethodRun, String> {
    let p = &config.pipeline;
    let out = run_method(problem, method, p).map_err(|e| e.to_string())?;
    let report = MetricReport::evaluate(problem, &out.policy, &p.f, &p.g).map_err(|e| e.to_string())?;
    Ok(MethodRun {
        report,
        converged: out.converged(),
    })
}

/// Runs `methods` on `config.samples` samples in parallel; results are in
/// sample order regardless of the worker count.
pub fn run_samples(
    config: &ExperimentConfig,
    universe: &RankingProblem,
    methods: &[Method],
) -> Result<Vec<SampleRuns>> {
    let problems = (0..config.samples)
        .map(|i| sample(config, universe, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(problems
        .par_iter()
        .map(|p| methods.iter().map(|&m| run_one(config, p, m)).collect())
        .collect())
}

#[derive(Debug, Clone)]
pub struct MethodRow {
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    pub unconverged: usize,
    /// Samples with at least one violated bound inequality.
    pub bound_violations: usize,
    /// Summary per column of [`TableReport::columns`].
    pub columns: Vec<Summary>,
}

#[derive(Debug, Clone)]
pub struct TableReport {
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<MethodRow>,
    /// `(sample, method, message)` for every failed run.
    pub failures: Vec<(usize, Method, String)>,
}

impl TableReport {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Mean of `column` for `method`.
    pub fn mean(&self, method: Method, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|k| k == column)?;
        Some(self.row(method)?.columns[c].mean)
    }

    pub fn unconverged(&self) -> usize {
        self.rows.iter().map(|r| r.unconverged).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.config.comment_header().as_bytes())?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "method".to_string(),
            "samples".into(),
            "failed".into(),
            "unconverged".into(),
            "bound_violations".into(),
        ];
        for c in &self.columns {
            header.push(c.clone());
            header.push(format!("{c}_se"));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.method.to_string(),
                r.succeeded.to_string(),
                r.failed.to_string(),
                r.unconverged.to_string(),
                r.bound_violations.to_string(),
            ];
            for s in &r.columns {
                rec.push(s.mean.to_string());
                rec.push(s.std_err.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Per-method means and standard errors of every report column.
pub fn run_table(config: &ExperimentConfig) -> Result<TableReport> {
    config.validate()?;
    let universe = generate_universe(&config.bench)?;
    let runs = run_samples(config, &universe, &config.methods)?;
    Ok(aggregate(config, &runs))
}

#[derive(Clone, Default)]
struct Tally {
    values: BTreeMap<String, Vec<f64>>,
    succeeded: usize,
    unconverged: usize,
    bound_violations: usize,
}

fn aggregate(config: &ExperimentConfig, runs: &[SampleRuns]) -> TableReport {
    let mut columns: Vec<String> = Vec::new();
    let mut failures = Vec::new();
    let mut per_method = vec![Tally::default(); config.methods.len()];
    for (i, sample) in runs.iter().enumerate() {
        for (j, run) in sample.iter().enumerate() {
            let slot = &mut per_method[j];
            match run {
                Ok(run) => {
                    slot.succeeded += 1;
                    if !run.converged {
                        slot.unconverged += 1;
                    }
                    if !run.report.bound_violations(BOUND_TOL).is_empty() {
                        slot.bound_violations += 1;
                    }
                    for (k, v) in run.report.csv_columns().into_iter().zip(run.report.csv_values()) {
                        if !columns.contains(&k) {
                            columns.push(k.clone());
                        }
                        slot.values.entry(k).or_default().push(v);
                    }
                }
                Err(msg) => failures.push((i, config.methods[j], msg.clone())),
            }
        }
    }
    let rows = config
        .methods
        .iter()
        .zip(per_method)
        .map(|(&method, t)| MethodRow {
            method,
            succeeded: t.succeeded,
            failed: runs.len() - t.succeeded,
            unconverged: t.unconverged,
            bound_violations: t.bound_violations,
            columns: columns
                .iter()
                .map(|c| Summary::of(t.values.get(c).map_or(&[][..], |v| v)))
                .collect(),
        })
        .collect();
    TableReport {
        config: config.clone(),
        columns,
        rows,
        failures,
    }
}

/// Diversity of each matcher strategy decomposing the same fair-ranking
/// solution, per sample.
#[derive(Debug, Clone)]
pub struct StrategyReport {
    pub strategies: Vec<MatcherStrategy>,
    /// `[sample][strategy]` policy diversity.
    pub diversity: Vec<Vec<f64>>,
    /// Per-sample diversity upper bound of the shared marginal matrix.
    pub diversity_ub: Vec<f64>,
    /// `(sample, message)` for samples that failed.
    pub failures: Vec<(usize, String)>,
}

impl StrategyReport {
    /// Mean of `g⁻¹(diversity)` per strategy.
    pub fn scaled_means(&self, g: &ConcaveFn) -> Vec<f64> {
        (0..self.strategies.len())
            .map(|k| {
                let v: Vec<f64> = self.diversity.iter().map(|d| g.inverse(d[k])).collect();
                Summary::of(&v).mean
            })
            .collect()
    }

    /// Mean of `g⁻¹(diversity_ub)`.
    pub fn scaled_ub_mean(&self, g: &ConcaveFn) -> f64 {
        let v: Vec<f64> = self.diversity_ub.iter().map(|d| g.inverse(*d)).collect();
        Summary::of(&v).mean
    }
}

/// Solves the fair-ranking step once per sample and decomposes the result
/// with every strategy.
pub fn compare_strategies(config: &ExperimentConfig, strategies: &[MatcherStrategy]) -> Result<StrategyReport> {
    config.validate()?;
    let universe = generate_universe(&config.bench)?;
    let problems = (0..config.samples)
        .map(|i| sample(config, &universe, i))
        .collect::<Result<Vec<_>>>()?;
    let g = &config.pipeline.g;
    let runs: Vec<std::result::Result<(Vec<f64>, f64), String>> = problems
        .par_iter()
        .map(|p| {
            let out = run_method(p, Method::Tsfd, &config.pipeline).map_err(|e| e.to_string())?;
            let sigma = out.solve.expect("the pipeline solves step one").sigma;
            let ub = diversity_upper_bound(p, &sigma, g).map_err(|e| e.to_string())?;
            let d = strategies
                .iter()
                .map(|&s| {
                    let pi = decompose(p, &sigma, g, s).map_err(|e| e.to_string())?;
                    policy_diversity(p, &pi, g).map_err(|e| e.to_string())
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok((d, ub))
        })
        .collect();
    let mut report = StrategyReport {
        strategies: strategies.to_vec(),
        diversity: Vec::new(),
        diversity_ub: Vec::new(),
        failures: Vec::new(),
    };
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok((d, ub)) => {
                report.diversity.push(d);
                report.diversity_ub.push(ub);
            }
            Err(m) => report.failures.push((i, m)),
        }
    }
    Ok(report)
}
