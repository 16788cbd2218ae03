//! Visit-level CSV ingestion: `patient_id,visit_date,<variable columns>`
//! with empty cells meaning missing. Rows are grouped per patient and
//! sorted deterministically, so the result is independent of input
//! order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;

use crate::cohort::schema::{SchemaConfig, Variable, VariableKind};
use crate::error::{Error, Result};

/// One parsed visit row; `values` holds only non-missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitRecord {
    pub patient_id: String,
    pub date: NaiveDate,
    pub values: BTreeMap<String, RawValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Number(f64),
    Category(String),
    Flag(bool),
}

impl RawValue {
    fn rank(&self) -> u8 {
        match self {
            RawValue::Number(_) => 0,
            RawValue::Category(_) => 1,
            RawValue::Flag(_) => 2,
        }
    }

    fn total_cmp(&self, other: &RawValue) -> Ordering {
        match (self, other) {
            (RawValue::Number(a), RawValue::Number(b)) => a.total_cmp(b),
            (RawValue::Category(a), RawValue::Category(b)) => a.cmp(b),
            (RawValue::Flag(a), RawValue::Flag(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

enum ColumnRole<'a> {
    PatientId,
    VisitDate,
    Bmi,
    Variable(&'a Variable),
}

/// Parses and groups visit rows per patient, each patient's visits
/// sorted by date (ties broken on the full value map, so shuffled input
/// yields identical output).
pub fn ingest_visits(
    reader: impl Read,
    schema: &SchemaConfig,
) -> Result<Vec<(String, Vec<VisitRecord>)>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let lookup = schema.lookup();

    let mut roles = Vec::with_capacity(headers.len());
    let mut seen = std::collections::HashSet::new();
    let mut have_id = false;
    let mut have_date = false;
    for name in headers.iter() {
        if !seen.insert(name.to_string()) {
            return Err(Error::Data(format!("duplicate column '{name}' in header")));
        }
        let role = match name {
            "patient_id" => {
                have_id = true;
                ColumnRole::PatientId
            }
            "visit_date" => {
                have_date = true;
                ColumnRole::VisitDate
            }
            b if b == schema.bmi_column => ColumnRole::Bmi,
            other => match lookup.get(other) {
                Some(var) => ColumnRole::Variable(var),
                None => return Err(Error::UnknownVariable(other.to_string())),
            },
        };
        roles.push(role);
    }
    if !have_id || !have_date {
        return Err(Error::Data(
            "visits CSV must have 'patient_id' and 'visit_date' columns".into(),
        ));
    }

    let mut by_patient: BTreeMap<String, Vec<VisitRecord>> = BTreeMap::new();
    for row in rdr.records() {
        let record = row?;
        let line = record.position().map_or(0, |p| p.line());
        let mut patient_id = String::new();
        let mut date = None;
        let mut values = BTreeMap::new();
        for (idx, cell) in record.iter().enumerate() {
            let Some(role) = roles.get(idx) else {
                return Err(Error::MalformedRow {
                    line,
                    msg: "more cells than header columns".into(),
                });
            };
            match role {
                ColumnRole::PatientId => {
                    if cell.is_empty() {
                        return Err(Error::MalformedRow { line, msg: "empty patient_id".into() });
                    }
                    patient_id = cell.to_string();
                }
                ColumnRole::VisitDate => {
                    date = Some(parse_date(cell, line)?);
                }
                ColumnRole::Bmi => {
                    if !cell.is_empty() {
                        let v = parse_number(cell, &schema.bmi_column, line)?;
                        if v.is_finite() {
                            values.insert(schema.bmi_column.clone(), RawValue::Number(v));
                        }
                    }
                }
                ColumnRole::Variable(var) => {
                    if cell.is_empty() {
                        continue;
                    }
                    if let Some(value) = parse_cell(cell, var, schema, line)? {
                        values.insert(var.name.clone(), value);
                    }
                }
            }
        }
        let Some(date) = date else {
            return Err(Error::MalformedRow { line, msg: "missing visit_date".into() });
        };
        by_patient
            .entry(patient_id.clone())
            .or_default()
            .push(VisitRecord { patient_id, date, values });
    }

    let mut out: Vec<(String, Vec<VisitRecord>)> = by_patient.into_iter().collect();
    for (_, visits) in &mut out {
        visits.sort_by(visit_order);
    }
    Ok(out)
}

fn visit_order(a: &VisitRecord, b: &VisitRecord) -> Ordering {
    a.date.cmp(&b.date).then_with(|| {
        let mut ai = a.values.iter();
        let mut bi = b.values.iter();
        loop {
            match (ai.next(), bi.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some((ka, va)), Some((kb, vb))) => {
                    let ord = ka.cmp(kb).then_with(|| va.total_cmp(vb));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
            }
        }
    })
}

fn parse_date(cell: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| Error::MalformedRow {
        line,
        msg: format!("invalid visit_date '{cell}' (want YYYY-MM-DD)"),
    })
}

fn parse_number(cell: &str, var: &str, line: u64) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::MalformedRow {
        line,
        msg: format!("variable '{var}': invalid number '{cell}'"),
    })
}

fn parse_cell(
    cell: &str,
    var: &Variable,
    schema: &SchemaConfig,
    line: u64,
) -> Result<Option<RawValue>> {
    match &var.kind {
        VariableKind::Numeric { .. } => {
            let v = parse_number(cell, &var.name, line)?;
            // Non-finite measurements are treated as missing.
            Ok(v.is_finite().then_some(RawValue::Number(v)))
        }
        VariableKind::Categorical { .. } => {
            if schema.category_index(var, cell).is_none() {
                return Err(Error::MalformedRow {
                    line,
                    msg: format!("variable '{}': unknown category '{cell}'", var.name),
                });
            }
            Ok(Some(RawValue::Category(cell.to_string())))
        }
        VariableKind::EverFlag => match cell.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => Ok(Some(RawValue::Flag(true))),
            "0" | "false" | "no" => Ok(Some(RawValue::Flag(false))),
            _ => Err(Error::MalformedRow {
                line,
                msg: format!("variable '{}': invalid flag '{cell}'", var.name),
            }),
        },
    }
}
