//! Increasing concave scalar functions used for user-fairness welfare and
//! for intent diversity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An increasing concave function with an evaluable inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConcaveFn {
    /// `x ↦ ln(x + shift)` on `x > -shift`.
    ShiftedLog { shift: f64 },
    /// Continuous piecewise-linear function with `f(breakpoints[0]) = 0`.
    PiecewiseLinear(PiecewiseLinear),
}

/// Slopes `k[0] > k[1] > … > 0` separated by breakpoints `t[0] < t[1] < …`.
///
/// `slopes.len() == breakpoints.len() + 1`; slope `k[j]` applies on the
/// segment left of `t[j]` (and `k.last()` to the right of the last breakpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise", into = "RawPiecewise")]
pub struct PiecewiseLinear {
    slopes: Vec<f64>,
    breakpoints: Vec<f64>,
    /// f at each breakpoint.
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPiecewise {
    slopes: Vec<f64>,
    breakpoints: Vec<f64>,
}

impl TryFrom<RawPiecewise> for PiecewiseLinear {
    type Error = Error;
    fn try_from(raw: RawPiecewise) -> Result<Self> {
        PiecewiseLinear::new(raw.slopes, raw.breakpoints)
    }
}

impl From<PiecewiseLinear> for RawPiecewise {
    fn from(p: PiecewiseLinear) -> Self {
        RawPiecewise {
            slopes: p.slopes,
            breakpoints: p.breakpoints,
        }
    }
}

impl PiecewiseLinear {
    pub fn new(slopes: Vec<f64>, breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidFunction(
                "piecewise-linear function needs at least one breakpoint".into(),
            ));
        }
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidFunction(format!(
                "{} slopes for {} breakpoints; expected {}",
                slopes.len(),
                breakpoints.len(),
                breakpoints.len() + 1
            )));
        }
        if slopes.iter().chain(&breakpoints).any(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction("non-finite parameter".into()));
        }
        if slopes.iter().any(|&k| k <= 0.0) {
            return Err(Error::InvalidFunction("slopes must be positive".into()));
        }
        if slopes.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidFunction(
                "slopes must be strictly decreasing".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidFunction(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let mut values = Vec::with_capacity(breakpoints.len());
        values.push(0.0);
        for j in 1..breakpoints.len() {
            let prev = values[j - 1];
            values.push(prev + slopes[j] * (breakpoints[j] - breakpoints[j - 1]));
        }
        Ok(Self {
            slopes,
            breakpoints,
            values,
        })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Linear pieces `(slope, intercept)`; the function is their minimum.
    pub(crate) fn pieces(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(self.slopes[0], -self.slopes[0] * self.breakpoints[0])];
        for j in 1..self.slopes.len() {
            let (t, v) = (self.breakpoints[j - 1], self.values[j - 1]);
            out.push((self.slopes[j], v - self.slopes[j] * t));
        }
        out
    }

    // Index of the segment containing x; segment j lies left of breakpoint j.
    fn segment(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&t| t < x)
    }

    fn eval(&self, x: f64) -> f64 {
        let j = self.segment(x);
        if j == 0 {
            self.slopes[0] * (x - self.breakpoints[0])
        } else {
            self.values[j - 1] + self.slopes[j] * (x - self.breakpoints[j - 1])
        }
    }

    // Right derivative.
    fn derivative(&self, x: f64) -> f64 {
        let j = self.breakpoints.partition_point(|&t| t <= x);
        self.slopes[j]
    }

    fn inverse(&self, y: f64) -> f64 {
        let j = self.values.partition_point(|&v| v < y);
        if j == 0 {
            self.breakpoints[0] + y / self.slopes[0]
        } else {
            self.breakpoints[j - 1] + (y - self.values[j - 1]) / self.slopes[j]
        }
    }
}

impl ConcaveFn {
    pub fn log() -> Self {
        ConcaveFn::ShiftedLog { shift: 0.0 }
    }

    pub fn shifted_log(shift: f64) -> Self {
        ConcaveFn::ShiftedLog { shift }
    }

    /// Whether `x` lies in the (open) domain.
    pub fn in_domain(&self, x: f64) -> bool {
        match self {
            ConcaveFn::ShiftedLog { shift } => x + shift > 0.0 && x.is_finite(),
            ConcaveFn::PiecewiseLinear(_) => x.is_finite(),
        }
    }

    /// Infimum of the domain (`-inf` for piecewise-linear functions).
    pub fn domain_lower_bound(&self) -> f64 {
        match self {
            ConcaveFn::ShiftedLog { shift } => -shift,
            ConcaveFn::PiecewiseLinear(_) => f64::NEG_INFINITY,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(self.domain_error(x));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        match self {
            ConcaveFn::ShiftedLog { shift } => (x + shift).ln(),
            ConcaveFn::PiecewiseLinear(p) => p.eval(x),
        }
    }

    /// Derivative (right derivative at the kinks of a piecewise-linear function).
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(self.domain_error(x));
        }
        Ok(match self {
            ConcaveFn::ShiftedLog { shift } => 1.0 / (x + shift),
            ConcaveFn::PiecewiseLinear(p) => p.derivative(x),
        })
    }

    /// `-f''(x)`; zero for piecewise-linear functions.
    pub(crate) fn curvature(&self, x: f64) -> f64 {
        match self {
            ConcaveFn::ShiftedLog { shift } => 1.0 / ((x + shift) * (x + shift)),
            ConcaveFn::PiecewiseLinear(_) => 0.0,
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            ConcaveFn::ShiftedLog { shift } => y.exp() - shift,
            ConcaveFn::PiecewiseLinear(p) => p.inverse(y),
        }
    }

    pub(crate) fn domain_error(&self, x: f64) -> Error {
        Error::Domain {
            function: self.to_string(),
            input: x,
        }
    }
}

impl fmt::Display for ConcaveFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcaveFn::ShiftedLog { shift } => write!(f, "log:{shift}"),
            ConcaveFn::PiecewiseLinear(p) => {
                let join = |v: &[f64]| {
                    v.iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                };
                write!(f, "pwl:{}@{}", join(&p.slopes), join(&p.breakpoints))
            }
        }
    }
}

/// Parses `log:<shift>` or `pwl:<k1>,<k2>,…@<t1>,…`.
impl FromStr for ConcaveFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidFunction(format!("cannot parse `{s}`"));
        let parse_list = |text: &str| -> Result<Vec<f64>> {
            text.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                .collect()
        };
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "log" => Ok(ConcaveFn::ShiftedLog {
                shift: rest.trim().parse().map_err(|_| bad())?,
            }),
            "pwl" => {
                let (slopes, breaks) = rest.split_once('@').ok_or_else(bad)?;
                Ok(ConcaveFn::PiecewiseLinear(PiecewiseLinear::new(
                    parse_list(slopes)?,
                    parse_list(breaks)?,
                )?))
            }
            _ => Err(bad()),
        }
    }
}
