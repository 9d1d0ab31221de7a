use serde::{Deserialize, Serialize};

use crate::concave::{ConcaveFn, PiecewiseLinear};
use crate::error::{Error, Result};
use crate::metrics::group_utilities_from_exposure;
use crate::problem::{Item, RankingProblem, UserGroup};

pub const FIXTURE_NAMES: [&str; 4] = ["fig1", "ex2", "ex3", "ex4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Eq,
    Le,
    Lt,
    Gt,
}

impl Relation {
    pub fn holds(self, actual: f64, value: f64, tolerance: f64) -> bool {
        match self {
            Relation::Eq => (actual - value).abs() <= tolerance,
            Relation::Le => actual <= value + tolerance,
            Relation::Lt => actual < value - tolerance,
            Relation::Gt => actual > value + tolerance,
        }
    }
}

/// A predicted outcome: `quantity` of the policy `policy` relates to `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub policy: String,
    pub quantity: String,
    pub relation: Relation,
    pub value: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub setting: String,
}

fn expect(policy: &str, quantity: &str, relation: Relation, value: f64, tolerance: f64) -> Expectation {
    Expectation {
        policy: policy.into(),
        quantity: quantity.into(),
        relation,
        value,
        tolerance,
        setting: String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub problem: RankingProblem,
    pub expected: Vec<Expectation>,
}

fn item(id: &str, group: &str) -> Item {
    Item {
        id: id.into(),
        group: group.into(),
    }
}

fn group(id: &str, proportion: f64, intent_dist: Vec<f64>) -> UserGroup {
    UserGroup {
        id: id.into(),
        proportion,
        intent_dist,
    }
}

fn intents(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("i{i}")).collect()
}

/// Built-in example problem by name (see [`FIXTURE_NAMES`]).
pub fn fixture(name: &str) -> Result<Fixture> {
    match name {
        "fig1" => Ok(fig1()),
        "ex2" => Ok(ex2()),
        "ex3" => Ok(ex3()),
        "ex4" => Ok(ex4()),
        other => Err(Error::UnknownFixture(other.into())),
    }
}

fn fig1() -> Fixture {
    // Six triples d1*..d6*; d(j)* and d(j+3)* serve intent j with relevance 1 and 0.9.
    let mut items = Vec::new();
    let mut relevance = Vec::new();
    for t in 0..6 {
        for c in 0..3 {
            let g = if t < 3 { "DG1" } else { "DG2" };
            items.push(item(&format!("d{}-{}", t + 1, c + 1), g));
            let mut row = vec![0.0; 3];
            row[t % 3] = if t < 3 { 1.0 } else { 0.9 };
            relevance.push(row);
        }
    }
    let mut exposure = vec![0.0; 18];
    exposure[..3].fill(1.0);
    let problem = RankingProblem::new(
        items,
        intents(3),
        relevance,
        vec![
            group("UG1", 0.5, vec![0.6, 0.4, 0.0]),
            group("UG2", 0.5, vec![0.0, 0.0, 1.0]),
        ],
        exposure,
    )
    .expect("fixture is valid");
    let mut diversity_ug1 = expect("diversity", "utility[UG1]", Relation::Eq, 0.0, 1e-9);
    diversity_ug1.setting = "exposure [1, 0, ...]".into();
    let mut diversity_dg2 = expect("diversity", "item_utility[DG2]", Relation::Eq, 0.0, 1e-9);
    diversity_dg2.setting = diversity_ug1.setting.clone();
    let tsfd_setting = "piecewise-linear f from nonzero_utility_welfare_fn, equal merit, two-sided";
    let mut expected = vec![
        expect("any", "max_coverage", Relation::Eq, 1.0, 1e-12),
        expect("utility", "utility[UG1]", Relation::Eq, 0.0, 1e-9),
        expect("utility", "item_utility[DG2]", Relation::Eq, 0.0, 1e-9),
        expect("utility", "coverage", Relation::Eq, 0.5, 1e-9),
        expect("item_fairness", "utility[UG1]", Relation::Eq, 0.0, 1e-9),
        expect("item_fairness", "coverage", Relation::Eq, 0.5, 1e-9),
        expect("user_fairness", "item_utility[DG2]", Relation::Eq, 0.0, 1e-9),
        expect("user_fairness", "coverage", Relation::Lt, 1.0, 1e-9),
        diversity_ug1,
        diversity_dg2,
    ];
    for q in ["utility[UG1]", "utility[UG2]", "item_utility[DG1]", "item_utility[DG2]"] {
        let mut e = expect("tsfd", q, Relation::Gt, 0.0, 1e-9);
        e.setting = tsfd_setting.into();
        expected.push(e);
    }
    Fixture {
        name: "fig1".into(),
        description: "18 items in six triples; three exposed positions; two user groups".into(),
        problem,
        expected,
    }
}

fn ex2() -> Fixture {
    let problem = RankingProblem::new(
        vec![item("d1", "DG1"), item("d2", "DG1")],
        intents(2),
        vec![vec![1.0, 0.0], vec![0.0, 0.9]],
        vec![
            group("UG1", 0.5, vec![1.0, 0.0]),
            group("UG2", 0.5, vec![0.0, 1.0]),
        ],
        vec![1.0, 0.5],
    )
    .expect("fixture is valid");
    let mut e = expect("user_fairness", "sigma[0][0]", Relation::Eq, 0.5, 1e-4);
    e.setting = "f = log".into();
    Fixture {
        name: "ex2".into(),
        description: "two items serving disjoint intents of two user groups".into(),
        problem,
        expected: vec![e],
    }
}

fn ex3() -> Fixture {
    let problem = RankingProblem::new(
        vec![item("d1", "DG1"), item("d2", "DG2")],
        intents(1),
        vec![vec![1.0], vec![0.9]],
        vec![group("UG1", 1.0, vec![1.0])],
        vec![1.0, 0.5],
    )
    .expect("fixture is valid");
    let mut e = expect("item_fairness", "sigma[0][0]", Relation::Eq, 11.0 / 19.0, 1e-4);
    e.setting = "two-sided constraint".into();
    Fixture {
        name: "ex3".into(),
        description: "two singleton item groups on one intent".into(),
        problem,
        expected: vec![
            e,
            expect("utility", "utility[UG1]", Relation::Eq, 1.45, 1e-12),
        ],
    }
}

fn ex4() -> Fixture {
    let problem = RankingProblem::new(
        vec![item("d1", "DG1"), item("d2", "DG1"), item("d3", "DG1")],
        intents(2),
        vec![vec![1.0, 0.0], vec![0.9, 0.0], vec![0.0, 1.0]],
        vec![group("UG1", 1.0, vec![0.9, 0.1])],
        vec![1.0, 1.0, 0.0],
    )
    .expect("fixture is valid");
    Fixture {
        name: "ex4".into(),
        description: "two items on a heavy intent, one on a light intent, two exposed positions"
            .into(),
        problem,
        expected: vec![
            expect("any", "max_coverage", Relation::Eq, 1.0, 1e-12),
            expect("tsfd", "coverage", Relation::Eq, 0.9, 1e-9),
            expect("diversity", "coverage", Relation::Eq, 1.0, 1e-9),
        ],
    }
}

/// Piecewise-linear welfare function `k1·(x − t1)` below `t1`, `k2·(x − t1)`
/// above, with `t1` the smallest user-group utility under the uniform
/// policy and `k1` large enough that any policy leaving some user group
/// at zero utility has lower welfare than the uniform policy.
pub fn nonzero_utility_welfare_fn(problem: &RankingProblem, k2: f64) -> Result<ConcaveFn> {
    if !(k2 > 0.0) {
        return Err(Error::InvalidFunction(format!("k2 = {k2} must be positive")));
    }
    let n = problem.n_items();
    let mean_e = problem.exposure().iter().sum::<f64>() / n as f64;
    let uniform = group_utilities_from_exposure(problem, &vec![mean_e; n]);
    let t1 = uniform.iter().copied().fold(f64::INFINITY, f64::min);
    if !(t1 > 0.0) {
        return Err(Error::Infeasible(
            "some user group has zero utility under the uniform policy".into(),
        ));
    }
    let mut sorted_e = problem.exposure().to_vec();
    sorted_e.sort_by(|a, b| b.total_cmp(a));
    let u_max = (0..problem.user_groups().len())
        .map(|g| {
            let mut r = problem.group_relevance(g).to_vec();
            r.sort_by(|a, b| b.total_cmp(a));
            r.iter().zip(&sorted_e).map(|(a, b)| a * b).sum::<f64>()
        })
        .fold(0.0, f64::max);
    let rho = problem
        .user_groups()
        .iter()
        .map(|g| g.proportion)
        .filter(|&p| p > 0.0)
        .fold(1.0, f64::min);
    let bound = (1.0 - rho) * (u_max - t1) / (rho * t1) * k2;
    let k1 = 2.0 * k2.max(bound);
    Ok(ConcaveFn::PiecewiseLinear(PiecewiseLinear::new(
        vec![k1, k2],
        vec![t1],
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_non_degenerate() {
        for name in FIXTURE_NAMES {
            let fx = fixture(name).unwrap();
            assert!(fx.problem.validate().is_empty(), "{name}");
            let json = serde_json::to_string(&fx).unwrap();
            let back: Fixture = serde_json::from_str(&json).unwrap();
            assert_eq!(back, fx);
        }
        assert!(matches!(fixture("fig9"), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn fig1_population_quantities() {
        let p = fixture("fig1").unwrap().problem;
        let want = [0.3, 0.2, 0.5];
        for (a, b) in p.population_intent().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let per_triple = [0.3, 0.2, 0.5, 0.27, 0.18, 0.45];
        for (m, r) in p.population_relevance().iter().enumerate() {
            assert!((r - per_triple[m / 3]).abs() < 1e-12);
        }
    }

    #[test]
    fn welfare_fn_on_fig1() {
        let p = fixture("fig1").unwrap().problem;
        let f = nonzero_utility_welfare_fn(&p, 1.0).unwrap();
        let ConcaveFn::PiecewiseLinear(pl) = &f else { panic!() };
        // uniform: each item gets exposure 1/6; both groups total 5.7/6
        assert!((pl.breakpoints()[0] - 0.95).abs() < 1e-12);
        // k1 > 0.5·(3 − 0.95)/(0.5·0.95)
        assert!(pl.slopes()[0] > 2.05 / 0.95);
        // welfare of the uniform policy beats any zero-utility split
        let uniform = 0.0;
        let zero_split = 0.5 * f.eval(0.0).unwrap() + 0.5 * f.eval(3.0).unwrap();
        assert!(zero_split < uniform);
        assert!(nonzero_utility_welfare_fn(&p, 0.0).is_err());
    }
}
