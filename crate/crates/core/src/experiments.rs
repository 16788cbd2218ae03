//! The experimental protocol: a grid of (beam width, max rule length)
//! settings mined over one cohort, per-feature scores aggregated into
//! mean and 95% CI across the settings, and the same grid re-run inside
//! every stratum of the registered demographic variables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitVec64;
use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::importance::{score_features, ComparisonTable, ImportanceReport, RuleSelection};
use crate::miner::{mine_beam, Level1Sample, LevelStats, MinerConfig};
use crate::rule::{P0Mode, RuleRecord};
use crate::stats::mean_ci95;

/// How features missing from a setting's pool enter the aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentPolicy {
    /// Count them as 0 there: the feature genuinely scored below the
    /// threshold in that setting.
    #[default]
    Zero,
    /// Average only over the settings where the feature survived.
    PresentOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub widths: Vec<usize>,
    pub lengths: Vec<usize>,
    pub threshold: f64,
    pub min_coverage: u64,
    pub p0_mode: P0Mode,
    #[serde(default)]
    pub level1_sample: Option<Level1Sample>,
    #[serde(default)]
    pub absent_policy: AbsentPolicy,
    pub top_k: usize,
    /// Stratum variables for `run_stratified`; empty means every
    /// variable registered on the table.
    #[serde(default)]
    pub strata_variables: Vec<String>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            widths: vec![2_000, 5_000, 10_000],
            lengths: vec![3, 4, 5],
            threshold: 5.0e-4,
            min_coverage: 0,
            p0_mode: P0Mode::DatasetRate,
            level1_sample: None,
            absent_policy: AbsentPolicy::Zero,
            top_k: 10,
            strata_variables: Vec::new(),
        }
    }
}

pub fn setting_id(width: usize, max_len: usize) -> String {
    format!("w{width}_l{max_len}")
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.lengths.is_empty() {
            return Err(Error::Config("grid needs at least one width and one length".into()));
        }
        if self.widths.contains(&0) || self.lengths.contains(&0) {
            return Err(Error::Config("grid widths and lengths must be >= 1".into()));
        }
        // Setting ids double as output directory names.
        for (list, what) in [(&self.widths, "width"), (&self.lengths, "length")] {
            let mut seen = std::collections::HashSet::new();
            for v in list {
                if !seen.insert(v) {
                    return Err(Error::Config(format!("duplicate grid {what} {v}")));
                }
            }
        }
        Ok(())
    }

    /// (width, length) pairs in width-major order.
    pub fn settings(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.widths.len() * self.lengths.len());
        for &w in &self.widths {
            for &l in &self.lengths {
                out.push((w, l));
            }
        }
        out
    }

    pub fn miner_config(&self, width: usize, max_len: usize) -> MinerConfig {
        MinerConfig {
            beam_width: width,
            max_len,
            threshold: self.threshold,
            min_coverage: self.min_coverage,
            p0_mode: self.p0_mode,
            level1_sample: self.level1_sample,
            ..MinerConfig::default()
        }
    }
}

/// One mined setting: its pool (as named records), the importance
/// report derived from it, and the per-level mining stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub id: String,
    pub beam_width: usize,
    pub max_len: usize,
    pub rule_count: u64,
    pub records: Vec<RuleRecord>,
    pub importance: ImportanceReport,
    pub levels: Vec<LevelStats>,
}

/// Per-feature aggregation across settings. `values` holds the
/// per-setting scores in grid order, with 0 substituted where the
/// feature was absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedScore {
    pub feature: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_defined: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub settings: Vec<SettingResult>,
    pub aggregated: Vec<AggregatedScore>,
}

impl GridResult {
    pub fn aggregated_score(&self, feature: &str) -> Option<&AggregatedScore> {
        self.aggregated.iter().find(|a| a.feature == feature)
    }
}

/// Mines every (width, length) setting and aggregates feature scores
/// across them. Settings run in parallel over the shared table; the
/// result is independent of worker count.
pub fn run_grid(table: &CohortTable, spec: &GridSpec) -> Result<GridResult> {
    spec.validate()?;
    let settings: Vec<SettingResult> = spec
        .settings()
        .par_iter()
        .map(|&(width, max_len)| {
            let id = setting_id(width, max_len);
            let pool = mine_beam(table, &spec.miner_config(width, max_len))
                .map_err(|e| Error::Setting { setting: id.clone(), source: Box::new(e) })?;
            let records = pool.records(table);
            let importance = score_features(&records, RuleSelection::All);
            Ok(SettingResult {
                id,
                beam_width: width,
                max_len,
                rule_count: records.len() as u64,
                records,
                importance,
                levels: pool.levels,
            })
        })
        .collect::<Result<_>>()?;

    let aggregated = aggregate(&settings, spec.absent_policy);
    Ok(GridResult { settings, aggregated })
}

fn aggregate(settings: &[SettingResult], policy: AbsentPolicy) -> Vec<AggregatedScore> {
    let mut features: Vec<&str> = settings
        .iter()
        .flat_map(|s| s.importance.scores.iter().map(|f| f.feature.as_str()))
        .collect();
    features.sort_unstable();
    features.dedup();

    let mut out: Vec<AggregatedScore> = features
        .into_iter()
        .map(|feature| {
            let per_setting: Vec<Option<f64>> =
                settings.iter().map(|s| s.importance.score_of(feature)).collect();
            let values: Vec<f64> = per_setting.iter().map(|v| v.unwrap_or(0.0)).collect();
            let ci = match policy {
                AbsentPolicy::Zero => mean_ci95(&values),
                AbsentPolicy::PresentOnly => {
                    let present: Vec<f64> = per_setting.iter().flatten().copied().collect();
                    mean_ci95(&present)
                }
            };
            AggregatedScore {
                feature: feature.to_string(),
                mean: ci.mean,
                ci_low: ci.low,
                ci_high: ci.high,
                ci_defined: ci.defined,
                values,
            }
        })
        .collect();
    out.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.feature.cmp(&b.feature)));
    out
}

/// One cohort slice defined by a stratum variable's category.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub variable: String,
    pub category: String,
    pub mask: BitVec64,
    pub positives: u64,
    pub negatives: u64,
}

/// Splits the cohort along one registered stratum variable; masks of the
/// observed categories partition the patients.
pub fn stratify(table: &CohortTable, variable: &str) -> Result<Vec<Stratum>> {
    let tags = table
        .stratum(variable)
        .ok_or_else(|| Error::UnknownStratumVariable(variable.to_string()))?;
    let mut out = Vec::new();
    for (cat_idx, category) in tags.categories.iter().enumerate() {
        let mask =
            BitVec64::from_bools(tags.assignment.iter().map(|&a| a as usize == cat_idx));
        let members = mask.count_ones();
        if members == 0 {
            continue;
        }
        let positives = crate::bits::count_and(&mask, table.label());
        out.push(Stratum {
            variable: variable.to_string(),
            category: category.clone(),
            mask,
            positives,
            negatives: members - positives,
        });
    }
    Ok(out)
}

/// Table-1-style counts for one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub variable: String,
    pub category: String,
    pub positives: u64,
    pub negatives: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStratum {
    pub variable: String,
    pub category: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumGridResult {
    pub variable: String,
    pub category: String,
    pub positives: u64,
    pub negatives: u64,
    pub grid: GridResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedResult {
    /// The reference grid over the whole cohort.
    pub cohort: GridResult,
    pub strata: Vec<StratumGridResult>,
    pub skipped: Vec<SkippedStratum>,
    pub counts: Vec<StratumCounts>,
    /// Whole-cohort top features compared across every mined stratum;
    /// cells are aggregated means, 0 where a feature never survived.
    pub comparison: ComparisonTable,
}

/// Runs the grid on the whole cohort and inside every stratum of the
/// requested variables. Strata without positives (or without a single
/// usable column) are skipped with a warning: WRAcc is degenerate there.
pub fn run_stratified(table: &CohortTable, spec: &GridSpec) -> Result<StratifiedResult> {
    spec.validate()?;
    let variables: Vec<String> = if spec.strata_variables.is_empty() {
        table.strata().iter().map(|s| s.variable.clone()).collect()
    } else {
        spec.strata_variables.clone()
    };

    let mut counts = Vec::new();
    let mut jobs: Vec<Stratum> = Vec::new();
    let mut skipped = Vec::new();
    for variable in &variables {
        for stratum in stratify(table, variable)? {
            counts.push(StratumCounts {
                variable: stratum.variable.clone(),
                category: stratum.category.clone(),
                positives: stratum.positives,
                negatives: stratum.negatives,
            });
            if stratum.positives == 0 {
                log::warn!(
                    "skipping stratum {}={}: no positive patients",
                    stratum.variable,
                    stratum.category
                );
                skipped.push(SkippedStratum {
                    variable: stratum.variable.clone(),
                    category: stratum.category.clone(),
                    reason: "no positives".into(),
                });
                continue;
            }
            jobs.push(stratum);
        }
    }

    let cohort = run_grid(table, spec)?;

    enum JobOutcome {
        Done(Box<StratumGridResult>),
        Skipped(SkippedStratum),
    }
    let outcomes: Vec<JobOutcome> = jobs
        .par_iter()
        .map(|stratum| {
            let sub = table.restrict(&stratum.mask)?.drop_constant_columns()?;
            if sub.features() == 0 {
                log::warn!(
                    "skipping stratum {}={}: every column is constant",
                    stratum.variable,
                    stratum.category
                );
                return Ok(JobOutcome::Skipped(SkippedStratum {
                    variable: stratum.variable.clone(),
                    category: stratum.category.clone(),
                    reason: "no usable features".into(),
                }));
            }
            let grid = run_grid(&sub, spec).map_err(|e| Error::Setting {
                setting: format!("{}={}", stratum.variable, stratum.category),
                source: Box::new(e),
            })?;
            Ok(JobOutcome::Done(Box::new(StratumGridResult {
                variable: stratum.variable.clone(),
                category: stratum.category.clone(),
                positives: stratum.positives,
                negatives: stratum.negatives,
                grid,
            })))
        })
        .collect::<Result<_>>()?;

    let mut strata = Vec::new();
    for outcome in outcomes {
        match outcome {
            JobOutcome::Done(result) => strata.push(*result),
            JobOutcome::Skipped(s) => skipped.push(s),
        }
    }

    let comparison = aggregated_comparison(&cohort, &strata, spec.top_k);
    Ok(StratifiedResult { cohort, strata, skipped, counts, comparison })
}

/// Fig-3-style table from aggregated means: whole-cohort top features as
/// rows, the cohort plus every stratum as columns.
fn aggregated_comparison(
    cohort: &GridResult,
    strata: &[StratumGridResult],
    k: usize,
) -> ComparisonTable {
    let features: Vec<String> =
        cohort.aggregated.iter().take(k).map(|a| a.feature.clone()).collect();
    let mut columns = vec!["cohort".to_string()];
    columns.extend(strata.iter().map(|s| format!("{}={}", s.variable, s.category)));
    let cells = features
        .iter()
        .map(|feature| {
            let mut row = Vec::with_capacity(columns.len());
            row.push(cohort.aggregated_score(feature).map_or(0.0, |a| a.mean));
            for s in strata {
                row.push(s.grid.aggregated_score(feature).map_or(0.0, |a| a.mean));
            }
            row
        })
        .collect();
    ComparisonTable { features, columns, cells }
}
