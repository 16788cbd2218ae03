//! Report files and run manifests.
//!
//! Every command writes plain JSON/CSV reports plus one `manifest.json`
//! at the output root. Reports carry no timing, so reruns with the same
//! inputs are byte-identical; wall-clock and digests live in the
//! manifest only.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{CohortTable, ExclusionRecord};
use crate::error::{Error, Result};
use crate::experiments::{
    AbsentPolicy, AggregatedScore, GridResult, GridSpec, SettingResult, StratifiedResult,
    StratumCounts,
};
use crate::importance::{ComparisonTable, FeatureScore, ImportanceReport};
use crate::miner::LevelStats;
use crate::rule::RuleRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub fingerprint: String,
    pub patients: usize,
    pub positives: u64,
    pub features: usize,
}

impl DatasetInfo {
    pub fn of(table: &CohortTable) -> Self {
        DatasetInfo {
            fingerprint: table.fingerprint().to_string(),
            patients: table.patients(),
            positives: table.positives(),
            features: table.features(),
        }
    }
}

/// Candidate counts per level, without the timing (timing is manifest
/// material).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub level: usize,
    pub candidates: u64,
    pub admitted: u64,
}

impl From<&LevelStats> for LevelCounts {
    fn from(stats: &LevelStats) -> Self {
        LevelCounts { level: stats.level, candidates: stats.candidates, admitted: stats.admitted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingMeta {
    pub id: String,
    pub beam_width: usize,
    pub max_len: usize,
    pub rule_count: u64,
    pub levels: Vec<LevelCounts>,
}

impl From<&SettingResult> for SettingMeta {
    fn from(s: &SettingResult) -> Self {
        SettingMeta {
            id: s.id.clone(),
            beam_width: s.beam_width,
            max_len: s.max_len,
            rule_count: s.rule_count,
            levels: s.levels.iter().map(LevelCounts::from).collect(),
        }
    }
}

/// The grid report: per-setting manifests plus aggregated scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub dataset: DatasetInfo,
    pub threshold: f64,
    pub absent_policy: AbsentPolicy,
    pub ci_method: String,
    pub settings: Vec<SettingMeta>,
    pub aggregated: Vec<AggregatedScore>,
}

pub fn grid_report(table: &CohortTable, spec: &GridSpec, result: &GridResult) -> GridReport {
    GridReport {
        dataset: DatasetInfo::of(table),
        threshold: spec.threshold,
        absent_policy: spec.absent_policy,
        ci_method: "student-t 95%, n-1 dof".to_string(),
        settings: result.settings.iter().map(SettingMeta::from).collect(),
        aggregated: result.aggregated.clone(),
    }
}

/// One auditable manifest per output directory: resolved config, input
/// and output digests, wall clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
    #[serde(default)]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn digest_of(path: &Path, base: &Path) -> Result<FileDigest> {
    let rel = path.strip_prefix(base).unwrap_or(path);
    Ok(FileDigest { path: rel.to_string_lossy().into_owned(), sha256: sha256_file(path)? })
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    Ok(())
}

/// Writes pretty JSON with a trailing newline; returns the path for
/// digesting.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    create_parent(path)?;
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn write_rules_json(path: &Path, records: &[RuleRecord]) -> Result<PathBuf> {
    write_json(path, &records)
}

pub fn read_rules_json(path: &Path) -> Result<Vec<RuleRecord>> {
    read_json(path)
}

pub fn write_importance_json(path: &Path, report: &ImportanceReport) -> Result<PathBuf> {
    write_json(path, &report.scores)
}

pub fn read_importance_json(path: &Path) -> Result<Vec<FeatureScore>> {
    read_json(path)
}

pub fn write_comparison_csv(path: &Path, table: &ComparisonTable) -> Result<PathBuf> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let mut header = vec!["feature".to_string()];
    header.extend(table.columns.iter().cloned());
    wtr.write_record(&header)?;
    for (feature, row) in table.features.iter().zip(&table.cells) {
        let mut record = vec![feature.clone()];
        record.extend(row.iter().map(|v| format_float(*v)));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

pub fn write_counts_csv(path: &Path, counts: &[StratumCounts]) -> Result<PathBuf> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(["variable", "category", "positives", "negatives"])?;
    for c in counts {
        wtr.write_record([
            c.variable.as_str(),
            c.category.as_str(),
            &c.positives.to_string(),
            &c.negatives.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

pub fn write_exclusions_csv(path: &Path, exclusions: &[ExclusionRecord]) -> Result<PathBuf> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(["patient_id", "reason"])?;
    for e in exclusions {
        wtr.write_record([e.patient_id.as_str(), &e.reason.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

pub fn write_cohort_csv(path: &Path, table: &CohortTable) -> Result<PathBuf> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    table.write_csv(std::io::BufWriter::new(file))?;
    Ok(path.to_path_buf())
}

pub fn read_cohort_csv(path: &Path) -> Result<CohortTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    CohortTable::read_csv(std::io::BufReader::new(file))
}

/// Grid output tree: `settings/<id>/{rules.json,importance.json}` plus
/// `aggregated.json` at the root. Returns every written path.
pub fn write_grid_tree(
    dir: &Path,
    table: &CohortTable,
    spec: &GridSpec,
    result: &GridResult,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for setting in &result.settings {
        let base = dir.join("settings").join(sanitize(&setting.id));
        written.push(write_rules_json(&base.join("rules.json"), &setting.records)?);
        written.push(write_importance_json(&base.join("importance.json"), &setting.importance)?);
    }
    written.push(write_json(&dir.join("aggregated.json"), &grid_report(table, spec, result))?);
    Ok(written)
}

/// Per-stratum rules keyed by setting id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRules {
    pub settings: std::collections::BTreeMap<String, Vec<RuleRecord>>,
}

/// Stratified output tree:
/// `counts.csv`, `comparison.csv`, the cohort grid under `cohort/`, and
/// `strata/<variable>/<category>/{rules.json,importance.json}`.
pub fn write_stratified_tree(
    dir: &Path,
    table: &CohortTable,
    spec: &GridSpec,
    result: &StratifiedResult,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    written.push(write_counts_csv(&dir.join("counts.csv"), &result.counts)?);
    written.push(write_comparison_csv(&dir.join("comparison.csv"), &result.comparison)?);
    written.extend(write_grid_tree(&dir.join("cohort"), table, spec, &result.cohort)?);
    for stratum in &result.strata {
        let base =
            dir.join("strata").join(sanitize(&stratum.variable)).join(sanitize(&stratum.category));
        let rules = StratumRules {
            settings: stratum
                .grid
                .settings
                .iter()
                .map(|s| (s.id.clone(), s.records.clone()))
                .collect(),
        };
        written.push(write_json(&base.join("rules.json"), &rules)?);
        written.push(write_json(&base.join("importance.json"), &stratum.grid.aggregated)?);
    }
    written.push(write_json(&dir.join("skipped.json"), &result.skipped)?);
    Ok(written)
}

/// Long-format plot CSV from a grid report: a `mean` series with CI
/// bounds plus one series per setting.
pub fn export_grid_plot(report: &GridReport, out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["series", "feature", "value", "ci_low", "ci_high"])?;
    for agg in &report.aggregated {
        wtr.write_record([
            "mean",
            agg.feature.as_str(),
            &format_float(agg.mean),
            &format_float(agg.ci_low),
            &format_float(agg.ci_high),
        ])?;
        for (setting, value) in report.settings.iter().zip(&agg.values) {
            wtr.write_record([setting.id.as_str(), agg.feature.as_str(), &format_float(*value), "", ""])?;
        }
    }
    wtr.flush().map_err(|e| Error::Data(format!("write: {e}")))?;
    Ok(())
}

/// Long-format plot CSV from an importance report.
pub fn export_importance_plot(scores: &[FeatureScore], out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["feature", "a_w", "rule_count"])?;
    for s in scores {
        wtr.write_record([s.feature.as_str(), &format_float(s.a_w), &s.rule_count.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::Data(format!("write: {e}")))?;
    Ok(())
}

/// Long-format plot CSV from a comparison table: one row per
/// (column, feature) pair.
pub fn export_comparison_plot(table: &ComparisonTable, out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["column", "feature", "value"])?;
    for (ci, column) in table.columns.iter().enumerate() {
        for (fi, feature) in table.features.iter().enumerate() {
            wtr.write_record([
                column.as_str(),
                feature.as_str(),
                &format_float(table.cells[fi][ci]),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::Data(format!("write: {e}")))?;
    Ok(())
}

/// Reads a comparison CSV back into its table form.
pub fn read_comparison_csv(path: &Path) -> Result<ComparisonTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_comparison_csv(std::io::BufReader::new(file))
}

/// Parses comparison CSV from any reader.
pub fn parse_comparison_csv(reader: impl std::io::Read) -> Result<ComparisonTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.get(0) != Some("feature") {
        return Err(Error::Data("comparison CSV must start with a 'feature' column".into()));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut features = Vec::new();
    let mut cells = Vec::new();
    for row in rdr.records() {
        let record = row?;
        let line = record.position().map_or(0, |p| p.line());
        let feature = record
            .get(0)
            .ok_or(Error::MalformedRow { line, msg: "empty row".into() })?
            .to_string();
        let mut row_cells = Vec::with_capacity(columns.len());
        for i in 0..columns.len() {
            let cell = record
                .get(i + 1)
                .ok_or(Error::MalformedRow { line, msg: "short row".into() })?;
            let value: f64 = cell.parse().map_err(|_| Error::MalformedRow {
                line,
                msg: format!("invalid number '{cell}'"),
            })?;
            row_cells.push(value);
        }
        features.push(feature);
        cells.push(row_cells);
    }
    Ok(ComparisonTable { features, columns, cells })
}

fn format_float(v: f64) -> String {
    // serde_json prints the shortest representation that round-trips,
    // which keeps reports diffable.
    let mut buf = serde_json::to_string(&v).unwrap_or_else(|_| v.to_string());
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

/// Path component safe across filesystems.
pub fn sanitize(component: &str) -> String {
    let cleaned: String = component
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        "_".to_string()
    } else {
        cleaned
    }
}
