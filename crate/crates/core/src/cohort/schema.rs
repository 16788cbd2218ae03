//! Declarative schema for the visit-level input: which variables exist,
//! how numeric measurements are binned, which categories each
//! categorical takes, and how columns may be grouped later.
//!
//! The schema is explicit rather than inferred so a cohort can be
//! rebuilt bit-exactly from the same config.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the one-hot category that receives patients with no
/// observation for a variable. Reserved; schemas cannot declare it.
pub const UNAVAILABLE: &str = "unavailable";

/// Which bin owns a boundary value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySide {
    /// `x <= value` falls in the lower bin (e.g. systolic "low as <=98").
    Lower,
    /// `x < value` falls in the lower bin, the boundary itself goes up
    /// (e.g. "high as >=166", BMI classes with strict upper bounds).
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub value: f64,
    pub inclusive: BoundarySide,
}

impl Boundary {
    pub fn lower(value: f64) -> Self {
        Boundary { value, inclusive: BoundarySide::Lower }
    }

    pub fn upper(value: f64) -> Self {
        Boundary { value, inclusive: BoundarySide::Upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableKind {
    /// Numeric measurement discretized into `labels` by `boundaries`
    /// (`labels.len() == boundaries.len() + 1`).
    Numeric { labels: Vec<String>, boundaries: Vec<Boundary> },
    /// Categorical code with a fixed category list.
    Categorical { categories: Vec<String> },
    /// 0/1 flag that aggregates to 1 if recorded at any visit.
    EverFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(flatten)]
    pub kind: VariableKind,
    /// Stratum variables also tag each patient with their aggregated
    /// category so the cohort can be sliced along them later.
    #[serde(default)]
    pub stratum: bool,
}

/// A named OR-combination of binary feature columns (e.g. collapsing
/// individual medications into one drug-class column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    /// Visit column holding the raw BMI measurement. Used solely for
    /// labeling; it never becomes a feature.
    pub bmi_column: String,
    pub variables: Vec<Variable>,
    #[serde(default)]
    pub groups: Vec<ColumnGroup>,
}

impl SchemaConfig {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let schema: SchemaConfig = serde_json::from_reader(reader)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let schema: SchemaConfig = serde_json::from_str(json)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bmi_column.is_empty() {
            return Err(Error::Schema("bmi_column must not be empty".into()));
        }
        let mut names = HashSet::new();
        for var in &self.variables {
            if var.name.is_empty() {
                return Err(Error::Schema("variable with empty name".into()));
            }
            if var.name == "patient_id" || var.name == "visit_date" || var.name == "label" {
                return Err(Error::Schema(format!("variable name '{}' is reserved", var.name)));
            }
            // Features relating to BMI are banned outright: the label is
            // derived from BMI and such columns would leak it.
            if var.name.to_ascii_lowercase().contains("bmi") || var.name == self.bmi_column {
                return Err(Error::Schema(format!(
                    "variable '{}' relates to BMI and cannot be a feature",
                    var.name
                )));
            }
            if !names.insert(var.name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable '{}'", var.name)));
            }
            match &var.kind {
                VariableKind::Numeric { labels, boundaries } => {
                    if boundaries.is_empty() {
                        return Err(Error::Schema(format!(
                            "numeric variable '{}' needs at least one boundary",
                            var.name
                        )));
                    }
                    if labels.len() != boundaries.len() + 1 {
                        return Err(Error::Schema(format!(
                            "numeric variable '{}' has {} labels for {} boundaries (want {})",
                            var.name,
                            labels.len(),
                            boundaries.len(),
                            boundaries.len() + 1
                        )));
                    }
                    if boundaries.iter().any(|b| !b.value.is_finite()) {
                        return Err(Error::Schema(format!(
                            "numeric variable '{}' has a non-finite boundary",
                            var.name
                        )));
                    }
                    if boundaries.windows(2).any(|w| w[0].value >= w[1].value) {
                        return Err(Error::Schema(format!(
                            "numeric variable '{}' boundaries must be strictly increasing",
                            var.name
                        )));
                    }
                    check_categories(&var.name, labels)?;
                }
                VariableKind::Categorical { categories } => {
                    check_categories(&var.name, categories)?;
                }
                VariableKind::EverFlag => {
                    if var.stratum {
                        return Err(Error::Schema(format!(
                            "ever-flag variable '{}' cannot be a stratum variable",
                            var.name
                        )));
                    }
                }
            }
        }
        self.validate_groups()?;
        Ok(())
    }

    fn validate_groups(&self) -> Result<()> {
        let columns: HashSet<String> = self.feature_columns().into_iter().collect();
        let mut group_names = HashSet::new();
        let mut claimed = HashSet::new();
        for group in &self.groups {
            if group.name.is_empty() {
                return Err(Error::Schema("group with empty name".into()));
            }
            if columns.contains(&group.name) || !group_names.insert(group.name.as_str()) {
                return Err(Error::Schema(format!(
                    "group name '{}' collides with an existing column or group",
                    group.name
                )));
            }
            if group.members.is_empty() {
                return Err(Error::Schema(format!("group '{}' has no members", group.name)));
            }
            for member in &group.members {
                if !columns.contains(member) {
                    return Err(Error::Schema(format!(
                        "group '{}' member '{}' is not a feature column",
                        group.name, member
                    )));
                }
                if !claimed.insert(member.as_str()) {
                    return Err(Error::Schema(format!(
                        "column '{member}' appears in more than one group"
                    )));
                }
            }
        }
        Ok(())
    }

    /// All feature column names in schema order: one-hot variables
    /// expand to their categories plus `unavailable`, ever-flags stay
    /// single columns.
    pub fn feature_columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        for var in &self.variables {
            match &var.kind {
                VariableKind::Numeric { labels, .. } => {
                    for label in labels {
                        out.push(format!("{}={}", var.name, label));
                    }
                    out.push(format!("{}={}", var.name, UNAVAILABLE));
                }
                VariableKind::Categorical { categories } => {
                    for cat in categories {
                        out.push(format!("{}={}", var.name, cat));
                    }
                    out.push(format!("{}={}", var.name, UNAVAILABLE));
                }
                VariableKind::EverFlag => out.push(var.name.clone()),
            }
        }
        out
    }

    /// Categories of one variable, including the trailing `unavailable`
    /// slot for one-hot kinds. Ever-flags report `["0", "1"]`.
    pub fn categories_of(&self, var: &Variable) -> Vec<String> {
        match &var.kind {
            VariableKind::Numeric { labels, .. } => {
                let mut cats = labels.clone();
                cats.push(UNAVAILABLE.to_string());
                cats
            }
            VariableKind::Categorical { categories } => {
                let mut cats = categories.clone();
                cats.push(UNAVAILABLE.to_string());
                cats
            }
            VariableKind::EverFlag => vec!["0".to_string(), "1".to_string()],
        }
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn category_index(&self, var: &Variable, category: &str) -> Option<usize> {
        match &var.kind {
            VariableKind::Categorical { categories } => {
                categories.iter().position(|c| c == category)
            }
            _ => None,
        }
    }

    pub(crate) fn lookup(&self) -> HashMap<&str, &Variable> {
        self.variables.iter().map(|v| (v.name.as_str(), v)).collect()
    }
}

/// Bin index for a finite value, or `None` for non-finite values, which
/// are treated as missing.
pub fn discretize(value: f64, boundaries: &[Boundary]) -> Option<usize> {
    if !value.is_finite() {
        return None;
    }
    for (i, b) in boundaries.iter().enumerate() {
        let below = match b.inclusive {
            BoundarySide::Lower => value <= b.value,
            BoundarySide::Upper => value < b.value,
        };
        if below {
            return Some(i);
        }
    }
    Some(boundaries.len())
}

fn check_categories(var: &str, cats: &[String]) -> Result<()> {
    if cats.is_empty() {
        return Err(Error::Schema(format!("variable '{var}' has no categories")));
    }
    let mut seen = HashSet::new();
    for cat in cats {
        if cat.is_empty() {
            return Err(Error::Schema(format!("variable '{var}' has an empty category")));
        }
        if cat == UNAVAILABLE {
            return Err(Error::Schema(format!(
                "variable '{var}' declares reserved category '{UNAVAILABLE}'"
            )));
        }
        if !seen.insert(cat.as_str()) {
            return Err(Error::Schema(format!("variable '{var}' repeats category '{cat}'")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn systolic_boundaries() -> Vec<Boundary> {
        vec![Boundary::lower(98.0), Boundary::upper(166.0)]
    }

    /// CDC adult BMI classes; strict upper bounds throughout.
    fn bmi_boundaries() -> Vec<Boundary> {
        [18.5, 25.0, 30.0, 35.0, 40.0].iter().map(|&v| Boundary::upper(v)).collect()
    }

    #[test]
    fn systolic_thresholds() {
        let b = systolic_boundaries();
        assert_eq!(discretize(98.0, &b), Some(0)); // low
        assert_eq!(discretize(99.0, &b), Some(1)); // normal
        assert_eq!(discretize(166.0, &b), Some(2)); // high
        assert_eq!(discretize(165.9, &b), Some(1));
    }

    #[test]
    fn ldl_thresholds() {
        let b = vec![Boundary::lower(44.0), Boundary::upper(189.0)];
        assert_eq!(discretize(44.0, &b), Some(0)); // low
        assert_eq!(discretize(189.0, &b), Some(2)); // high
    }

    #[test]
    fn bmi_classes() {
        let b = bmi_boundaries();
        assert_eq!(discretize(17.0, &b), Some(0)); // underweight
        assert_eq!(discretize(27.0, &b), Some(2)); // overweight
        assert_eq!(discretize(42.0, &b), Some(5)); // obese class 3
        assert_eq!(discretize(18.5, &b), Some(1));
        assert_eq!(discretize(40.0, &b), Some(5));
    }

    #[test]
    fn boundary_exactness_at_ulp_steps() {
        let sys = systolic_boundaries();
        for b in &sys {
            let (at, below, above) = (b.value, b.value.next_down(), b.value.next_up());
            match b.inclusive {
                BoundarySide::Lower => {
                    assert_eq!(discretize(at, &sys), discretize(below, &sys));
                    assert_ne!(discretize(at, &sys), discretize(above, &sys));
                }
                BoundarySide::Upper => {
                    assert_eq!(discretize(at, &sys), discretize(above, &sys));
                    assert_ne!(discretize(at, &sys), discretize(below, &sys));
                }
            }
        }
    }

    #[test]
    fn non_finite_is_missing() {
        let b = systolic_boundaries();
        assert_eq!(discretize(f64::NAN, &b), None);
        assert_eq!(discretize(f64::INFINITY, &b), None);
        assert_eq!(discretize(f64::NEG_INFINITY, &b), None);
    }

    fn minimal_schema(json_vars: &str) -> Result<SchemaConfig> {
        SchemaConfig::from_json(&format!(
            r#"{{"bmi_column": "bmi", "variables": [{json_vars}]}}"#
        ))
    }

    #[test]
    fn parses_numeric_variable() {
        let schema = minimal_schema(
            r#"{"name": "systolic", "kind": "numeric",
                "labels": ["low", "normal", "high"],
                "boundaries": [{"value": 98.0, "inclusive": "lower"},
                               {"value": 166.0, "inclusive": "upper"}]}"#,
        )
        .unwrap();
        assert_eq!(
            schema.feature_columns(),
            vec!["systolic=low", "systolic=normal", "systolic=high", "systolic=unavailable"]
        );
    }

    #[test]
    fn rejects_bmi_features() {
        assert!(minimal_schema(r#"{"name": "bmi_class", "kind": "ever_flag"}"#).is_err());
        assert!(minimal_schema(r#"{"name": "Prior_BMI", "kind": "ever_flag"}"#).is_err());
    }

    #[test]
    fn rejects_bad_boundaries() {
        let err = minimal_schema(
            r#"{"name": "x", "kind": "numeric", "labels": ["a", "b", "c"],
                "boundaries": [{"value": 5.0, "inclusive": "lower"},
                               {"value": 5.0, "inclusive": "upper"}]}"#,
        );
        assert!(err.is_err());
        let err = minimal_schema(
            r#"{"name": "x", "kind": "numeric", "labels": ["a", "b"],
                "boundaries": [{"value": 1.0, "inclusive": "lower"},
                               {"value": 2.0, "inclusive": "upper"}]}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_unknown_group_member() {
        let err = SchemaConfig::from_json(
            r#"{"bmi_column": "bmi",
                "variables": [{"name": "dx_a", "kind": "ever_flag"}],
                "groups": [{"name": "g", "members": ["nope"]}]}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_ever_flag_stratum() {
        assert!(
            minimal_schema(r#"{"name": "dx_a", "kind": "ever_flag", "stratum": true}"#).is_err()
        );
    }
}
