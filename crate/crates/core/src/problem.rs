//! The ranking problem: items, item groups, intents, relevance, user groups
//! and the position-based exposure vector.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability vectors and proportions summing to one.
pub const PROBABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGroup {
    pub id: String,
    pub proportion: f64,
    pub intent_dist: Vec<f64>,
}

/// Which relevance expectation to take in [`RankingProblem::expected_relevance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope<'a> {
    Population,
    UserGroup(&'a str),
    Intent(&'a str),
}

/// On-disk layout of a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub items: Vec<Item>,
    pub intents: Vec<String>,
    pub relevance: Vec<Vec<f64>>,
    pub user_groups: Vec<UserGroup>,
    pub exposure: Vec<f64>,
}

/// A structurally valid ranking problem. Immutable once built; derived
/// vectors (population intent, expected relevance) are computed up front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemFile", into = "ProblemFile")]
pub struct RankingProblem {
    items: Vec<Item>,
    intents: Vec<String>,
    relevance: Vec<Vec<f64>>,
    user_groups: Vec<UserGroup>,
    exposure: Vec<f64>,

    item_groups: Vec<String>,
    item_group_index: Vec<usize>,
    population_intent: Vec<f64>,
    population_relevance: Vec<f64>,
    group_relevance: Vec<Vec<f64>>,
}

/// One failed non-degeneracy condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// Condition (1): a user group with zero proportion.
    ZeroProportion { user_group: String },
    /// Condition (2): an intent with no mass in the population distribution.
    IntentWithoutMass { intent: String },
    /// Condition (3): an intent that no item is relevant to.
    IntentWithoutRelevantItem { intent: String },
    /// Condition (4): an item group whose items all have zero expected relevance.
    ItemGroupWithoutRelevance { item_group: String },
}

impl Violation {
    /// The non-degeneracy condition number (1-4) this violation breaks.
    pub fn condition(&self) -> u8 {
        match self {
            Violation::ZeroProportion { .. } => 1,
            Violation::IntentWithoutMass { .. } => 2,
            Violation::IntentWithoutRelevantItem { .. } => 3,
            Violation::ItemGroupWithoutRelevance { .. } => 4,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroProportion { user_group } => {
                write!(f, "user group `{user_group}` has zero proportion")
            }
            Violation::IntentWithoutMass { intent } => {
                write!(f, "intent `{intent}` has no mass in the population")
            }
            Violation::IntentWithoutRelevantItem { intent } => {
                write!(f, "no item is relevant to intent `{intent}`")
            }
            Violation::ItemGroupWithoutRelevance { item_group } => {
                write!(f, "item group `{item_group}` has no expected relevance")
            }
        }
    }
}

impl TryFrom<ProblemFile> for RankingProblem {
    type Error = Error;
    fn try_from(file: ProblemFile) -> Result<Self> {
        RankingProblem::new(
            file.items,
            file.intents,
            file.relevance,
            file.user_groups,
            file.exposure,
        )
    }
}

impl From<RankingProblem> for ProblemFile {
    fn from(p: RankingProblem) -> Self {
        ProblemFile {
            items: p.items,
            intents: p.intents,
            relevance: p.relevance,
            user_groups: p.user_groups,
            exposure: p.exposure,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidProblem(msg.into())
}

fn check_probability_vector(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(invalid(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl RankingProblem {
    pub fn new(
        items: Vec<Item>,
        intents: Vec<String>,
        relevance: Vec<Vec<f64>>,
        user_groups: Vec<UserGroup>,
        exposure: Vec<f64>,
    ) -> Result<Self> {
        let n = items.len();
        if n == 0 {
            return Err(invalid("no items"));
        }
        if intents.is_empty() {
            return Err(invalid("no intents"));
        }
        if user_groups.is_empty() {
            return Err(invalid("no user groups"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = items.iter().find(|it| !seen.insert(it.id.as_str())) {
            return Err(invalid(format!("duplicate item id `{}`", dup.id)));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = intents.iter().find(|i| !seen.insert(i.as_str())) {
            return Err(invalid(format!("duplicate intent id `{dup}`")));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = user_groups.iter().find(|g| !seen.insert(g.id.as_str())) {
            return Err(invalid(format!("duplicate user group id `{}`", dup.id)));
        }

        if relevance.len() != n {
            return Err(invalid(format!(
                "relevance has {} rows for {n} items",
                relevance.len()
            )));
        }
        for (row, item) in relevance.iter().zip(&items) {
            if row.len() != intents.len() {
                return Err(invalid(format!(
                    "relevance row of `{}` has {} entries for {} intents",
                    item.id,
                    row.len(),
                    intents.len()
                )));
            }
            if row.iter().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(invalid(format!(
                    "relevance of `{}` has a negative or non-finite entry",
                    item.id
                )));
            }
        }

        if exposure.len() != n {
            return Err(invalid(format!(
                "exposure has {} entries for {n} positions",
                exposure.len()
            )));
        }
        if exposure.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(invalid("exposure has a negative or non-finite entry"));
        }
        let total_exposure: f64 = exposure.iter().sum();
        if total_exposure <= 0.0 {
            return Err(invalid("total exposure must be positive"));
        }
        if exposure.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("exposure must be non-increasing in rank"));
        }

        let mut proportions = Vec::with_capacity(user_groups.len());
        for g in &user_groups {
            if !(0.0..=1.0).contains(&g.proportion) || !g.proportion.is_finite() {
                return Err(invalid(format!(
                    "user group `{}` has proportion {} outside [0, 1]",
                    g.id, g.proportion
                )));
            }
            if g.intent_dist.len() != intents.len() {
                return Err(invalid(format!(
                    "intent distribution of `{}` has {} entries for {} intents",
                    g.id,
                    g.intent_dist.len(),
                    intents.len()
                )));
            }
            check_probability_vector(
                &format!("intent distribution of `{}`", g.id),
                &g.intent_dist,
            )?;
            proportions.push(g.proportion);
        }
        check_probability_vector("user group proportions", &proportions)?;

        let mut groups: Vec<String> = items.iter().map(|it| it.group.clone()).collect();
        groups.sort();
        groups.dedup();
        let item_group_index = items
            .iter()
            .map(|it| groups.binary_search(&it.group).expect("group listed"))
            .collect();

        let mut population_intent = vec![0.0; intents.len()];
        for g in &user_groups {
            for (p, q) in population_intent.iter_mut().zip(&g.intent_dist) {
                *p += g.proportion * q;
            }
        }
        let expect = |dist: &[f64]| -> Vec<f64> {
            relevance
                .iter()
                .map(|row| row.iter().zip(dist).map(|(r, p)| r * p).sum())
                .collect()
        };
        let population_relevance = expect(&population_intent);
        let group_relevance = user_groups.iter().map(|g| expect(&g.intent_dist)).collect();

        Ok(Self {
            items,
            intents,
            relevance,
            user_groups,
            exposure,
            item_groups: groups,
            item_group_index,
            population_intent,
            population_relevance,
            group_relevance,
        })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn intents(&self) -> &[String] {
        &self.intents
    }

    pub fn user_groups(&self) -> &[UserGroup] {
        &self.user_groups
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    /// `r(d_m, i)` by index.
    pub fn relevance(&self, item: usize, intent: usize) -> f64 {
        self.relevance[item][intent]
    }

    pub fn relevance_rows(&self) -> &[Vec<f64>] {
        &self.relevance
    }

    /// Distinct item-group ids, sorted.
    pub fn item_groups(&self) -> &[String] {
        &self.item_groups
    }

    /// Index into [`Self::item_groups`] of each item.
    pub fn item_group_index(&self) -> &[usize] {
        &self.item_group_index
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    pub fn intent_index(&self, id: &str) -> Result<usize> {
        self.intents
            .iter()
            .position(|i| i == id)
            .ok_or_else(|| Error::UnknownIntent(id.to_string()))
    }

    pub fn user_group_index(&self, id: &str) -> Result<usize> {
        self.user_groups
            .iter()
            .position(|g| g.id == id)
            .ok_or_else(|| Error::UnknownUserGroup(id.to_string()))
    }

    pub fn item_group_position(&self, id: &str) -> Result<usize> {
        self.item_groups
            .binary_search_by(|g| g.as_str().cmp(id))
            .map_err(|_| Error::UnknownItemGroup(id.to_string()))
    }

    /// Members (item indices) of the item group at `group` in [`Self::item_groups`].
    pub fn item_group_members(&self, group: usize) -> Vec<usize> {
        (0..self.n_items())
            .filter(|&m| self.item_group_index[m] == group)
            .collect()
    }

    /// Population intent distribution `Σ_UG ρ_UG · I_UG`.
    pub fn population_intent(&self) -> &[f64] {
        &self.population_intent
    }

    /// Population-expected relevance `r^U`.
    pub fn population_relevance(&self) -> &[f64] {
        &self.population_relevance
    }

    /// Expected relevance `r^UG` for the user group at index `group`.
    pub fn group_relevance(&self, group: usize) -> &[f64] {
        &self.group_relevance[group]
    }

    /// Relevance column `r^i` for the intent at index `intent`.
    pub fn intent_relevance(&self, intent: usize) -> Vec<f64> {
        self.relevance.iter().map(|row| row[intent]).collect()
    }

    pub fn expected_relevance(&self, scope: Scope<'_>) -> Result<Vec<f64>> {
        match scope {
            Scope::Population => Ok(self.population_relevance.clone()),
            Scope::UserGroup(id) => Ok(self.group_relevance[self.user_group_index(id)?].clone()),
            Scope::Intent(id) => Ok(self.intent_relevance(self.intent_index(id)?)),
        }
    }

    /// Checks the four non-degeneracy conditions. An empty report means the
    /// problem is non-degenerate.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        for g in &self.user_groups {
            if g.proportion <= 0.0 {
                report.push(Violation::ZeroProportion {
                    user_group: g.id.clone(),
                });
            }
        }
        for (i, id) in self.intents.iter().enumerate() {
            if self.population_intent[i] <= 0.0 {
                report.push(Violation::IntentWithoutMass { intent: id.clone() });
            }
        }
        for (i, id) in self.intents.iter().enumerate() {
            if !self.relevance.iter().any(|row| row[i] > 0.0) {
                report.push(Violation::IntentWithoutRelevantItem { intent: id.clone() });
            }
        }
        for (gi, id) in self.item_groups.iter().enumerate() {
            let any = (0..self.n_items())
                .any(|m| self.item_group_index[m] == gi && self.population_relevance[m] > 0.0);
            if !any {
                report.push(Violation::ItemGroupWithoutRelevance {
                    item_group: id.clone(),
                });
            }
        }
        report
    }

    /// Returns a copy with a different exposure vector.
    pub fn with_exposure(&self, exposure: Vec<f64>) -> Result<Self> {
        Self::new(
            self.items.clone(),
            self.intents.clone(),
            self.relevance.clone(),
            self.user_groups.clone(),
            exposure,
        )
    }

    /// Returns a copy with a different relevance matrix.
    pub fn with_relevance(&self, relevance: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            self.items.clone(),
            self.intents.clone(),
            relevance,
            self.user_groups.clone(),
            self.exposure.clone(),
        )
    }

    /// Number of items per item group, keyed by group id.
    pub fn item_group_sizes(&self) -> BTreeMap<String, usize> {
        let mut sizes = BTreeMap::new();
        for it in &self.items {
            *sizes.entry(it.group.clone()).or_insert(0) += 1;
        }
        sizes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::fixture;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn tiny(dists: Vec<(f64, Vec<f64>)>, relevance: Vec<Vec<f64>>, groups: &[&str]) -> Result<RankingProblem> {
        let n = relevance.len();
        let n_int = relevance[0].len();
        RankingProblem::new(
            (0..n)
                .map(|m| Item {
                    id: format!("d{m}"),
                    group: groups[m].to_string(),
                })
                .collect(),
            (0..n_int).map(|i| format!("i{i}")).collect(),
            relevance,
            dists
                .into_iter()
                .enumerate()
                .map(|(g, (p, d))| UserGroup {
                    id: format!("ug{g}"),
                    proportion: p,
                    intent_dist: d,
                })
                .collect(),
            vec![1.0; n],
        )
    }

    #[test]
    fn fig1_is_non_degenerate() {
        let fx = fixture("fig1").unwrap();
        assert!(fx.problem.validate().is_empty());
    }

    #[test]
    fn fig1_population_intent() {
        let fx = fixture("fig1").unwrap();
        assert!(close(fx.problem.population_intent(), &[0.3, 0.2, 0.5], 1e-12));
    }

    #[test]
    fn fig1_population_relevance() {
        let p = fixture("fig1").unwrap().problem;
        let r = p.expected_relevance(Scope::Population).unwrap();
        let expected_per_triple = [0.3, 0.2, 0.5, 0.27, 0.18, 0.45];
        for (m, v) in r.iter().enumerate() {
            assert!((v - expected_per_triple[m / 3]).abs() < 1e-12, "item {m}: {v}");
        }
    }

    #[test]
    fn fig1_intent_scope() {
        let p = fixture("fig1").unwrap().problem;
        let r = p.expected_relevance(Scope::Intent("i3")).unwrap();
        for (m, v) in r.iter().enumerate() {
            let want = match m / 3 {
                2 => 1.0,
                5 => 0.9,
                _ => 0.0,
            };
            assert_eq!(*v, want);
        }
        assert!(matches!(
            p.expected_relevance(Scope::Intent("nope")),
            Err(Error::UnknownIntent(_))
        ));
        assert!(matches!(
            p.expected_relevance(Scope::UserGroup("nope")),
            Err(Error::UnknownUserGroup(_))
        ));
    }

    #[test]
    fn single_group_population_is_its_distribution() {
        let p = tiny(
            vec![(1.0, vec![0.2, 0.8])],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &["a", "a"],
        )
        .unwrap();
        assert!(close(p.population_intent(), &[0.2, 0.8], 0.0));
        let p = tiny(
            vec![(0.3, vec![0.2, 0.8]), (0.7, vec![0.2, 0.8])],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &["a", "a"],
        )
        .unwrap();
        assert!(close(p.population_intent(), &[0.2, 0.8], 1e-15));
    }

    #[test]
    fn zero_relevance_gives_zero_vector() {
        let p = tiny(
            vec![(1.0, vec![0.5, 0.5])],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            &["a", "a"],
        )
        .unwrap();
        assert_eq!(p.population_relevance(), &[0.0, 0.0]);
    }

    #[test]
    fn intent_without_mass_is_flagged() {
        let p = tiny(
            vec![(0.5, vec![1.0, 0.0]), (0.5, vec![1.0, 0.0])],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &["a", "b"],
        )
        .unwrap();
        let report = p.validate();
        assert!(report.iter().any(|v| v.condition() == 2));
    }

    #[test]
    fn zero_relevance_item_group_is_flagged() {
        let p = tiny(
            vec![(1.0, vec![0.5, 0.5])],
            vec![vec![1.0, 1.0], vec![0.0, 0.0]],
            &["a", "b"],
        )
        .unwrap();
        let report = p.validate();
        assert_eq!(
            report,
            vec![Violation::ItemGroupWithoutRelevance {
                item_group: "b".into()
            }]
        );
    }

    #[test]
    fn zero_proportion_is_flagged() {
        let p = tiny(
            vec![(1.0, vec![0.5, 0.5]), (0.0, vec![1.0, 0.0])],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &["a", "a"],
        )
        .unwrap();
        assert_eq!(p.validate()[0].condition(), 1);
    }

    #[test]
    fn structural_errors() {
        assert!(tiny(
            vec![(0.9, vec![0.5, 0.5])],
            vec![vec![1.0, 0.0]],
            &["a"]
        )
        .is_err());
        assert!(tiny(
            vec![(1.0, vec![0.5, 0.6])],
            vec![vec![1.0, 0.0]],
            &["a"]
        )
        .is_err());
        assert!(tiny(
            vec![(1.0, vec![0.5, 0.5])],
            vec![vec![-1.0, 0.0]],
            &["a"]
        )
        .is_err());
        let p = fixture("ex3").unwrap().problem;
        assert!(p.with_exposure(vec![0.5, 1.0]).is_err());
        assert!(p.with_exposure(vec![0.0, 0.0]).is_err());
        assert!(p.with_exposure(vec![1.0]).is_err());
    }

    #[test]
    fn json_layout() {
        let p = fixture("ex3").unwrap().problem;
        let value: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["items", "intents", "relevance", "user_groups", "exposure"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(value["items"][0]["group"], "DG1");
        assert_eq!(RankingProblem::from_json(&p.to_json()).unwrap(), p);
    }
}
