//! Feature importance from a rule pool: each feature scores the
//! average WRAcc of the surviving rules it appears in, so a feature is
//! ranked by the quality of the subgroups it helps describe rather than
//! by its frequency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule::RuleRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    /// Average WRAcc over the pooled rules containing the feature.
    pub a_w: f64,
    /// Number of pooled rules containing the feature.
    pub rule_count: u64,
}

/// Feature scores sorted by `a_w` descending, feature name ascending on
/// ties. Features absent from every pooled rule are absent here.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub scores: Vec<FeatureScore>,
}

impl ImportanceReport {
    pub fn score_of(&self, feature: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.feature == feature).map(|s| s.a_w)
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Which pooled rules feed the average: everything that survived the
/// threshold, or only the best `n` under the miner's total order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSelection {
    #[default]
    All,
    TopN(usize),
}

/// Computes per-feature average WRAcc over the given rules. The records
/// must already be sorted by the miner's total order when `TopN` is
/// used.
pub fn score_features(records: &[RuleRecord], selection: RuleSelection) -> ImportanceReport {
    let slice = match selection {
        RuleSelection::All => records,
        RuleSelection::TopN(n) => &records[..n.min(records.len())],
    };
    // Summation order is pinned to a canonical record order so the
    // scores are bit-identical however the pool was enumerated.
    let mut ordered: Vec<&RuleRecord> = slice.iter().collect();
    ordered.sort_by(|a, b| {
        a.selectors
            .cmp(&b.selectors)
            .then_with(|| a.wracc.total_cmp(&b.wracc))
            .then_with(|| (a.n, a.p).cmp(&(b.n, b.p)))
    });
    let mut sums: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    for record in ordered {
        for feature in &record.selectors {
            let entry = sums.entry(feature).or_insert((0.0, 0));
            entry.0 += record.wracc;
            entry.1 += 1;
        }
    }
    let mut scores: Vec<FeatureScore> = sums
        .into_iter()
        .map(|(feature, (sum, count))| FeatureScore {
            feature: feature.to_string(),
            a_w: sum / count as f64,
            rule_count: count,
        })
        .collect();
    scores.sort_by(a_w_order);
    ImportanceReport { scores }
}

fn a_w_order(a: &FeatureScore, b: &FeatureScore) -> std::cmp::Ordering {
    b.a_w.total_cmp(&a.a_w).then_with(|| a.feature.cmp(&b.feature))
}

/// First `k` scores of the report.
pub fn top_features(report: &ImportanceReport, k: usize) -> Vec<FeatureScore> {
    report.scores.iter().take(k).cloned().collect()
}

/// Rectangular comparison of a reference report's top features across
/// strata: one row per reference feature, one column per stratum, with
/// 0 where the feature is absent from that stratum's pool (e.g. dropped
/// because it is constant there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub features: Vec<String>,
    /// Column headers; the first is the reference itself.
    pub columns: Vec<String>,
    /// `cells[row][col]` follows `features` x `columns`.
    pub cells: Vec<Vec<f64>>,
}

pub fn fixed_feature_comparison(
    reference_name: &str,
    reference: &ImportanceReport,
    strata: &[(String, ImportanceReport)],
    k: usize,
) -> Result<ComparisonTable> {
    let mut seen = std::collections::HashSet::new();
    for (name, _) in strata {
        if name == reference_name || !seen.insert(name.as_str()) {
            return Err(Error::DuplicateStratum(name.clone()));
        }
    }
    let picked = top_features(reference, k);
    let features: Vec<String> = picked.iter().map(|s| s.feature.clone()).collect();
    let mut columns = vec![reference_name.to_string()];
    columns.extend(strata.iter().map(|(name, _)| name.clone()));
    let cells = features
        .iter()
        .map(|feature| {
            let mut row = Vec::with_capacity(columns.len());
            row.push(reference.score_of(feature).unwrap_or(0.0));
            for (_, report) in strata {
                row.push(report.score_of(feature).unwrap_or(0.0));
            }
            row
        })
        .collect();
    Ok(ComparisonTable { features, columns, cells })
}
