//! One-parameter sweeps of the benchmark configuration.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use tsfd_core::bench::{generate_universe, BLACK_LEAD, FEMALE, MALE, WHITE_LEAD};
use tsfd_core::{Method, MetricReport};

use crate::config::ExperimentConfig;
use crate::harness::run_samples;
use crate::stats::Summary;
use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Similarity,
    RhoMale,
    Bias,
    Eta,
    NIntents,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::Similarity, Axis::RhoMale, Axis::Bias, Axis::Eta, Axis::NIntents];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Similarity => "s",
            Axis::RhoMale => "rho_male",
            Axis::Bias => "bias_b",
            Axis::Eta => "eta",
            Axis::NIntents => "n_intents",
        }
    }

    /// Sets this parameter of `config` to `value`.
    pub fn apply(self, config: &mut ExperimentConfig, value: f64) -> Result<()> {
        match self {
            Axis::Similarity => config.bench.similarity = value,
            Axis::RhoMale => config.bench.rho_male = value,
            Axis::Bias => config.bias = value,
            Axis::Eta => config.bench.eta = value,
            Axis::NIntents => {
                if value.fract() != 0.0 || !(2.0..=5.0).contains(&value) {
                    return Err(CliError::Config(format!("n_intents value {value} is not an integer in 2..=5")));
                }
                config.bench.n_intents = value as usize;
            }
        }
        config.validate()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown axis `{s}`; expected s, rho_male, bias_b, eta or n_intents")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMetric {
    /// `U(female) / U(male)`.
    UserRatio,
    /// Average exposure of black-lead over white-lead movies.
    ExposureRatio,
    /// `g⁻¹(D) / g⁻¹(D*)` against the diversity method on the same sample.
    DiversityRatio,
    /// `f⁻¹(UF) / f⁻¹(UF*)` against the user-fairness method on the same sample.
    FairnessRatio,
}

impl SweepMetric {
    pub const ALL: [SweepMetric; 4] = [
        SweepMetric::UserRatio,
        SweepMetric::ExposureRatio,
        SweepMetric::DiversityRatio,
        SweepMetric::FairnessRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMetric::UserRatio => "user_ratio",
            SweepMetric::ExposureRatio => "exposure_ratio",
            SweepMetric::DiversityRatio => "diversity_ratio",
            SweepMetric::FairnessRatio => "fairness_ratio",
        }
    }

    /// The method whose per-sample value normalizes this metric.
    pub fn reference(self) -> Option<Method> {
        match self {
            SweepMetric::DiversityRatio => Some(Method::Diversity),
            SweepMetric::FairnessRatio => Some(Method::UserFairness),
            _ => None,
        }
    }

    /// Value on one sample; `None` when undefined there.
    pub fn value(self, report: &MetricReport, reference: Option<&MetricReport>) -> Option<f64> {
        let ratio = |a: Option<&f64>, b: Option<&f64>| match (a, b) {
            (Some(a), Some(b)) if *b != 0.0 => Some(a / b),
            _ => None,
        };
        let v = match self {
            SweepMetric::UserRatio => ratio(
                report.per_user_group_utility.get(FEMALE),
                report.per_user_group_utility.get(MALE),
            ),
            SweepMetric::ExposureRatio => ratio(
                report.per_item_group_exposure.get(BLACK_LEAD),
                report.per_item_group_exposure.get(WHITE_LEAD),
            ),
            SweepMetric::DiversityRatio => {
                ratio(Some(&report.diversity_scaled), reference.map(|r| &r.diversity_scaled))
            }
            SweepMetric::FairnessRatio => ratio(
                Some(&report.user_fairness_scaled),
                reference.map(|r| &r.user_fairness_scaled),
            ),
        }?;
        v.is_finite().then_some(v)
    }
}

impl fmt::Display for SweepMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepMetric {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        SweepMetric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            CliError::Config(format!(
                "unknown metric `{s}`; expected user_ratio, exposure_ratio, diversity_ratio or fairness_ratio"
            ))
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub method: Method,
    /// Mean of the per-sample metric over the samples where it is defined.
    pub summary: Summary,
    /// Samples where the metric is undefined (missing group, zero denominator).
    pub excluded: usize,
    pub failed: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub axis: Axis,
    pub metric: SweepMetric,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// `(axis value, mean)` points of one method, in sweep order.
    pub fn series(&self, method: Method) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.value, r.summary.mean))
            .collect()
    }

    pub fn unconverged(&self) -> usize {
        self.rows.iter().map(|r| r.unconverged).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.config.comment_header().as_bytes())?;
        out.write_all(format!("# axis: {}\n# metric: {}\n", self.axis, self.metric).as_bytes())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([self.axis.name(), "method", self.metric.name(), "se", "samples", "excluded", "failed", "unconverged"])?;
        for r in &self.rows {
            w.write_record([
                r.value.to_string(),
                r.method.to_string(),
                r.summary.mean.to_string(),
                r.summary.std_err.to_string(),
                r.summary.count.to_string(),
                r.excluded.to_string(),
                r.failed.to_string(),
                r.unconverged.to_string(),
            ])?;
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

/// One row per (axis value, method): the mean per-sample `metric`.
pub fn run_sweep(config: &ExperimentConfig, axis: Axis, values: &[f64], metric: SweepMetric) -> Result<SweepReport> {
    config.validate()?;
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &value in values {
        let mut cfg = config.clone();
        axis.apply(&mut cfg, value)?;
        let universe = generate_universe(&cfg.bench)?;
        let mut methods = cfg.methods.clone();
        let reference = metric.reference();
        let ref_slot = reference.map(|m| match methods.iter().position(|&x| x == m) {
            Some(j) => j,
            None => {
                methods.push(m);
                methods.len() - 1
            }
        });
        let runs = run_samples(&cfg, &universe, &methods)?;
        for (j, &method) in cfg.methods.iter().enumerate() {
            let (mut vals, mut excluded, mut failed, mut unconverged) = (Vec::new(), 0, 0, 0);
            for sample in &runs {
                let run = match &sample[j] {
                    Ok(r) => r,
                    Err(_) => {
                        failed += 1;
                        continue;
                    }
                };
                if !run.converged {
                    unconverged += 1;
                }
                let reference = ref_slot.and_then(|k| sample[k].as_ref().ok()).map(|r| &r.report);
                if ref_slot.is_some() && reference.is_none() {
                    excluded += 1;
                    continue;
                }
                match metric.value(&run.report, reference) {
                    Some(v) => vals.push(v),
                    None => excluded += 1,
                }
            }
            rows.push(SweepRow {
                value,
                method,
                summary: Summary::of(&vals),
                excluded,
                failed,
                unconverged,
            });
        }
    }
    Ok(SweepReport {
        config: config.clone(),
        axis,
        metric,
        rows,
    })
}
