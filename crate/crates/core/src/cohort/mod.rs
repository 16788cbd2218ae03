//! Cohort construction: visit-level records in, immutable binary
//! feature table out.
//!
//! The pipeline is: ingest and group visits per patient, label each
//! patient from their BMI sequence, aggregate the remaining variables
//! over the observation window (mode for measurements and categoricals,
//! ever-recorded for flags), one-hot encode, and pack the result into a
//! [`CohortTable`]. Patients failing the inclusion rule are reported
//! with a reason instead of a row.

pub mod ingest;
pub mod label;
pub mod schema;
pub mod table;

use std::io::Read;

use rayon::prelude::*;

use crate::bits::BitVec64;
use crate::error::{Error, Result};
pub use ingest::{ingest_visits, RawValue, VisitRecord};
pub use label::{label_patient, BmiObservation, Exclusion, LabelDecision, MIN_SPAN_DAYS};
pub use schema::{discretize, Boundary, BoundarySide, ColumnGroup, SchemaConfig, Variable, VariableKind};
pub use table::{CohortTable, StratumTags};

/// One aggregated patient: the chosen category index per schema
/// variable (ever-flags use 0/1, one-hot kinds end with the
/// `unavailable` slot) plus the outcome label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRow {
    pub patient_id: String,
    pub label: bool,
    pub categories: Vec<u32>,
}

/// A patient excluded by the inclusion rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionRecord {
    pub patient_id: String,
    pub reason: Exclusion,
}

#[derive(Debug)]
pub struct PrepareOutcome {
    pub table: CohortTable,
    pub exclusions: Vec<ExclusionRecord>,
}

/// Aggregates one patient's visits into per-variable categories.
///
/// Numeric and categorical variables take the mode of the observed
/// values (ties break toward the smaller value / earlier category);
/// ever-flags become 1 if recorded true at any visit; variables never
/// observed land in their `unavailable` category.
pub fn aggregate_patient(visits: &[&VisitRecord], schema: &SchemaConfig) -> Vec<u32> {
    schema
        .variables
        .iter()
        .map(|var| match &var.kind {
            VariableKind::Numeric { labels, boundaries } => {
                let values: Vec<f64> = visits
                    .iter()
                    .filter_map(|v| match v.values.get(&var.name) {
                        Some(RawValue::Number(x)) => Some(*x),
                        _ => None,
                    })
                    .collect();
                match numeric_mode(values) {
                    Some(value) => discretize(value, boundaries)
                        .map_or(labels.len() as u32, |bin| bin as u32),
                    None => labels.len() as u32,
                }
            }
            VariableKind::Categorical { categories } => {
                let mut counts = vec![0u32; categories.len()];
                for v in visits {
                    if let Some(RawValue::Category(cat)) = v.values.get(&var.name) {
                        if let Some(idx) = categories.iter().position(|c| c == cat) {
                            counts[idx] += 1;
                        }
                    }
                }
                match counts.iter().max() {
                    Some(&max) if max > 0 => {
                        counts.iter().position(|&c| c == max).unwrap() as u32
                    }
                    _ => categories.len() as u32,
                }
            }
            VariableKind::EverFlag => {
                let ever = visits
                    .iter()
                    .any(|v| matches!(v.values.get(&var.name), Some(RawValue::Flag(true))));
                ever as u32
            }
        })
        .collect()
}

/// Mode of a multiset of finite values; ties break toward the smaller
/// value.
fn numeric_mode(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mut best = values[0];
    let mut best_count = 0usize;
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] == values[i] {
            j += 1;
        }
        if j - i > best_count {
            best_count = j - i;
            best = values[i];
        }
        i = j;
    }
    Some(best)
}

/// Packs patient rows into a [`CohortTable`], expanding one-hot groups
/// into their columns in schema order.
pub fn build_table(rows: &[PatientRow], schema: &SchemaConfig) -> Result<CohortTable> {
    if rows.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let var_count = schema.variables.len();
    if rows.iter().any(|r| r.categories.len() != var_count) {
        return Err(Error::InconsistentRows);
    }
    let feature_names = schema.feature_columns();
    let mut columns: Vec<BitVec64> = Vec::with_capacity(feature_names.len());
    for (var_idx, var) in schema.variables.iter().enumerate() {
        match &var.kind {
            VariableKind::Numeric { .. } | VariableKind::Categorical { .. } => {
                let cats = schema.categories_of(var).len();
                for cat in 0..cats {
                    columns.push(BitVec64::from_bools(
                        rows.iter().map(|r| r.categories[var_idx] as usize == cat),
                    ));
                }
            }
            VariableKind::EverFlag => {
                columns.push(BitVec64::from_bools(
                    rows.iter().map(|r| r.categories[var_idx] == 1),
                ));
            }
        }
    }
    debug_assert_eq!(columns.len(), feature_names.len());
    let label = BitVec64::from_bools(rows.iter().map(|r| r.label));
    let patient_ids = rows.iter().map(|r| r.patient_id.clone()).collect();
    let strata = schema
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.stratum)
        .map(|(var_idx, var)| StratumTags {
            variable: var.name.clone(),
            categories: schema.categories_of(var),
            assignment: rows.iter().map(|r| r.categories[var_idx]).collect(),
        })
        .collect();
    CohortTable::from_parts(feature_names, columns, label, patient_ids, strata)
}

/// Runs the whole preparation pipeline on a visits CSV. Patients are
/// processed in parallel; the output row order is patient-id order, so
/// the result is deterministic.
pub fn build_cohort(visits: impl Read, schema: &SchemaConfig) -> Result<PrepareOutcome> {
    let grouped = ingest_visits(visits, schema)?;
    let processed: Vec<(Option<PatientRow>, Option<ExclusionRecord>)> = grouped
        .par_iter()
        .map(|(patient_id, visits)| {
            let bmis: Vec<BmiObservation> = visits
                .iter()
                .filter_map(|v| match v.values.get(&schema.bmi_column) {
                    Some(RawValue::Number(x)) => {
                        Some(BmiObservation { date: v.date, bmi: *x })
                    }
                    _ => None,
                })
                .collect();
            match label_patient(&bmis) {
                LabelDecision::Excluded(reason) => (
                    None,
                    Some(ExclusionRecord { patient_id: patient_id.clone(), reason }),
                ),
                LabelDecision::Included { class, window_start, window_end } => {
                    // Positives only contribute visits inside the
                    // observation window; negatives use everything.
                    let window: Vec<&VisitRecord> = if class {
                        visits
                            .iter()
                            .filter(|v| v.date >= window_start && v.date <= window_end)
                            .collect()
                    } else {
                        visits.iter().collect()
                    };
                    let categories = aggregate_patient(&window, schema);
                    (
                        Some(PatientRow {
                            patient_id: patient_id.clone(),
                            label: class,
                            categories,
                        }),
                        None,
                    )
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut exclusions = Vec::new();
    for (row, excl) in processed {
        if let Some(row) = row {
            rows.push(row);
        }
        if let Some(excl) = excl {
            exclusions.push(excl);
        }
    }
    let table = build_table(&rows, schema)?;
    Ok(PrepareOutcome { table, exclusions })
}
