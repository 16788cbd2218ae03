//! Rules as canonical selector conjunctions plus their quality measures.
//!
//! A selector asserts `feature = 1` for one column of the cohort; a rule
//! is a strictly increasing set of selectors. Quality is weighted
//! relative accuracy: `wracc = support * (confidence - p0)`.

use serde::{Deserialize, Serialize};

use crate::bits::{count_and, BitVec64};
use crate::cohort::CohortTable;
use crate::error::{Error, Result};

/// Index of a feature column; selectors always assert the column is 1.
/// Negations are expressed upstream through sibling one-hot categories.
pub type Selector = u32;

/// How the expected confidence `p0` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P0Mode {
    /// `p0 = P / N`: the dataset's base positive rate. The universal rule
    /// scores exactly zero under this mode.
    #[default]
    DatasetRate,
    /// `p0 = p / N`: the subgroup's positives over the dataset size.
    /// Off by default; kept so the two readings can be compared.
    SubgroupShare,
}

/// Canonical conjunction of selectors: strictly increasing, duplicate
/// free. Two rules with equal selector sets compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    selectors: Vec<Selector>,
}

impl Rule {
    /// The empty conjunction; covers every patient.
    pub fn empty() -> Self {
        Rule { selectors: Vec::new() }
    }

    /// Builds a canonical rule from selectors in any order.
    pub fn new(mut selectors: Vec<Selector>) -> Self {
        selectors.sort_unstable();
        selectors.dedup();
        Rule { selectors }
    }

    pub fn selectors(&self) -> &[Selector] {
        &self.selectors
    }

    pub fn len(&self) -> usize {
        self.selectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selectors.is_empty()
    }

    pub fn contains(&self, feature: Selector) -> bool {
        self.selectors.binary_search(&feature).is_ok()
    }

    /// Child rule extending `self` with `feature`; callers must pass a
    /// feature greater than every current selector.
    pub fn specialize(&self, feature: Selector) -> Rule {
        debug_assert!(self.selectors.last().is_none_or(|&last| feature > last));
        let mut selectors = Vec::with_capacity(self.selectors.len() + 1);
        selectors.extend_from_slice(&self.selectors);
        selectors.push(feature);
        Rule { selectors }
    }
}

/// Coverage and quality measures of one rule on one table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleStats {
    /// Subgroup size: patients covered by the rule.
    pub n: u64,
    /// Positives inside the subgroup.
    pub p: u64,
    /// n / N.
    pub support: f64,
    /// p / n, defined as 0 when n = 0.
    pub confidence: f64,
    /// Expected confidence p0 (see [`P0Mode`]).
    pub expected_confidence: f64,
    /// support * (confidence - expected_confidence).
    pub wracc: f64,
}

/// A rule together with the stats it was scored with.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRule {
    pub rule: Rule,
    pub stats: RuleStats,
}

/// Total order used everywhere rules are ranked or truncated:
/// wracc descending, then fewer selectors, then lexicographic selector
/// indices. Total over distinct selector sets, so every sort and top-k
/// is deterministic.
pub fn rule_order(a: &ScoredRule, b: &ScoredRule) -> std::cmp::Ordering {
    b.stats
        .wracc
        .total_cmp(&a.stats.wracc)
        .then_with(|| a.rule.len().cmp(&b.rule.len()))
        .then_with(|| a.rule.selectors().cmp(b.rule.selectors()))
}

/// Bitwise AND of the selector columns; the empty rule covers everyone.
pub fn coverage(rule: &Rule, table: &CohortTable) -> Result<BitVec64> {
    let mut cover = BitVec64::ones(table.patients());
    for &s in rule.selectors() {
        let col = table
            .column(s as usize)
            .ok_or_else(|| Error::Data(format!("selector index {s} out of range")))?;
        cover.and_assign(col);
    }
    Ok(cover)
}

pub(crate) fn stats_from_counts(n: u64, p: u64, table: &CohortTable, mode: P0Mode) -> RuleStats {
    let total = table.patients() as f64;
    let support = n as f64 / total;
    let confidence = if n == 0 { 0.0 } else { p as f64 / n as f64 };
    let expected_confidence = match mode {
        P0Mode::DatasetRate => table.positives() as f64 / total,
        P0Mode::SubgroupShare => p as f64 / total,
    };
    // n = 0 pins wracc to +0.0 rather than the -0.0 the product yields.
    let wracc = if n == 0 { 0.0 } else { support * (confidence - expected_confidence) };
    RuleStats { n, p, support, confidence, expected_confidence, wracc }
}

/// Scores one rule against the table.
pub fn evaluate(rule: &Rule, table: &CohortTable, mode: P0Mode) -> Result<RuleStats> {
    let cover = coverage(rule, table)?;
    let n = cover.count_ones();
    let p = count_and(&cover, table.label());
    Ok(stats_from_counts(n, p, table, mode))
}

/// Ordered specialization: one child per usable feature index greater
/// than the rule's largest selector. Columns constant within the table
/// are skipped, so every selector set is generated exactly once across
/// the whole search tree and no child repeats a constant column.
pub fn refine(rule: &Rule, table: &CohortTable, max_len: usize) -> Vec<Rule> {
    if rule.len() >= max_len {
        return Vec::new();
    }
    let start = rule.selectors().last().map_or(0, |&last| last + 1);
    (start..table.features() as Selector)
        .filter(|&f| !table.is_constant(f as usize))
        .map(|f| rule.specialize(f))
        .collect()
}

/// Wire form of a scored rule; feature names, not indices, cross
/// process boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub selectors: Vec<String>,
    pub n: u64,
    pub p: u64,
    pub support: f64,
    pub confidence: f64,
    pub expected_confidence: f64,
    pub wracc: f64,
}

impl RuleRecord {
    pub fn from_scored(scored: &ScoredRule, table: &CohortTable) -> Self {
        RuleRecord {
            selectors: scored
                .rule
                .selectors()
                .iter()
                .map(|&s| table.feature_name(s as usize).to_string())
                .collect(),
            n: scored.stats.n,
            p: scored.stats.p,
            support: scored.stats.support,
            confidence: scored.stats.confidence,
            expected_confidence: scored.stats.expected_confidence,
            wracc: scored.stats.wracc,
        }
    }
}
