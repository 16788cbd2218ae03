//! The immutable cohort matrix: named binary feature columns, a label
//! column, and per-patient stratum tags, all packed into bit vectors.

use std::collections::HashMap;
use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::bits::BitVec64;
use crate::cohort::schema::ColumnGroup;
use crate::error::{Error, Result};

/// Per-patient categorical tags for one stratum variable.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumTags {
    pub variable: String,
    pub categories: Vec<String>,
    /// Index into `categories`, one entry per patient.
    pub assignment: Vec<u32>,
}

/// Immutable table of binary features over one cohort. All columns have
/// identical length; the positive count is cached at construction and
/// the whole table is safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    feature_names: Vec<String>,
    name_index: HashMap<String, usize>,
    columns: Vec<BitVec64>,
    label: BitVec64,
    patient_ids: Vec<String>,
    strata: Vec<StratumTags>,
    positives: u64,
    constant: Vec<bool>,
    fingerprint: String,
}

impl CohortTable {
    pub fn from_parts(
        feature_names: Vec<String>,
        columns: Vec<BitVec64>,
        label: BitVec64,
        patient_ids: Vec<String>,
        strata: Vec<StratumTags>,
    ) -> Result<Self> {
        let n = patient_ids.len();
        if n == 0 {
            return Err(Error::EmptyCohort);
        }
        if feature_names.len() != columns.len() {
            return Err(Error::Data("feature name / column count mismatch".into()));
        }
        if label.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Data("column length mismatch".into()));
        }
        let mut name_index = HashMap::with_capacity(feature_names.len());
        for (i, name) in feature_names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Data("empty feature name".into()));
            }
            if name_index.insert(name.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate feature column '{name}'")));
            }
        }
        for tags in &strata {
            if tags.assignment.len() != n {
                return Err(Error::Data(format!(
                    "stratum '{}' assignment length mismatch",
                    tags.variable
                )));
            }
            if tags.assignment.iter().any(|&c| c as usize >= tags.categories.len()) {
                return Err(Error::Data(format!(
                    "stratum '{}' has out-of-range category index",
                    tags.variable
                )));
            }
        }
        let positives = label.count_ones();
        let constant = columns
            .iter()
            .map(|c| {
                let ones = c.count_ones();
                ones == 0 || ones == n as u64
            })
            .collect();
        let fingerprint =
            compute_fingerprint(&feature_names, &columns, &label, &patient_ids, &strata);
        Ok(CohortTable {
            feature_names,
            name_index,
            columns,
            label,
            patient_ids,
            strata,
            positives,
            constant,
            fingerprint,
        })
    }

    pub fn patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn positives(&self) -> u64 {
        self.positives
    }

    pub fn features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_name(&self, index: usize) -> &str {
        &self.feature_names[index]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn column(&self, index: usize) -> Option<&BitVec64> {
        self.columns.get(index)
    }

    pub fn label(&self) -> &BitVec64 {
        &self.label
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn strata(&self) -> &[StratumTags] {
        &self.strata
    }

    pub fn stratum(&self, variable: &str) -> Option<&StratumTags> {
        self.strata.iter().find(|s| s.variable == variable)
    }

    /// True when the column is all-zero or all-one; such columns never
    /// appear as selectors.
    pub fn is_constant(&self, index: usize) -> bool {
        self.constant[index]
    }

    pub fn usable_features(&self) -> usize {
        self.constant.iter().filter(|&&c| !c).count()
    }

    /// Content hash identifying this exact table in manifests and pools.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// New table with each group's columns OR-ed into one column; member
    /// columns are removed and the grouped columns appended, in group
    /// declaration order. Everything else is untouched.
    pub fn group_columns(&self, groups: &[ColumnGroup]) -> Result<CohortTable> {
        let mut claimed = vec![false; self.columns.len()];
        let mut grouped: Vec<(String, BitVec64)> = Vec::with_capacity(groups.len());
        for group in groups {
            if group.members.is_empty() {
                return Err(Error::Config(format!("group '{}' has no members", group.name)));
            }
            let mut union = BitVec64::zeros(self.patients());
            for member in &group.members {
                let idx = self
                    .feature_index(member)
                    .ok_or_else(|| Error::UnknownColumn(member.clone()))?;
                if claimed[idx] {
                    return Err(Error::Config(format!(
                        "column '{member}' appears in more than one group"
                    )));
                }
                claimed[idx] = true;
                union.or_assign(&self.columns[idx]);
            }
            grouped.push((group.name.clone(), union));
        }
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for (i, name) in self.feature_names.iter().enumerate() {
            if !claimed[i] {
                names.push(name.clone());
                columns.push(self.columns[i].clone());
            }
        }
        for (name, col) in grouped {
            names.push(name);
            columns.push(col);
        }
        CohortTable::from_parts(
            names,
            columns,
            self.label.clone(),
            self.patient_ids.clone(),
            self.strata.clone(),
        )
    }

    /// New table containing only the patients whose mask bit is set.
    pub fn restrict(&self, mask: &BitVec64) -> Result<CohortTable> {
        if mask.len() != self.patients() {
            return Err(Error::Data("mask length mismatch".into()));
        }
        let kept: Vec<usize> = mask.iter_ones().collect();
        if kept.is_empty() {
            return Err(Error::EmptyCohort);
        }
        let pick = |col: &BitVec64| BitVec64::from_bools(kept.iter().map(|&i| col.get(i)));
        let columns = self.columns.iter().map(pick).collect();
        let label = pick(&self.label);
        let patient_ids = kept.iter().map(|&i| self.patient_ids[i].clone()).collect();
        let strata = self
            .strata
            .iter()
            .map(|s| StratumTags {
                variable: s.variable.clone(),
                categories: s.categories.clone(),
                assignment: kept.iter().map(|&i| s.assignment[i]).collect(),
            })
            .collect();
        CohortTable::from_parts(self.feature_names.clone(), columns, label, patient_ids, strata)
    }

    /// New table without the columns that are constant here.
    pub fn drop_constant_columns(&self) -> Result<CohortTable> {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for (i, name) in self.feature_names.iter().enumerate() {
            if !self.constant[i] {
                names.push(name.clone());
                columns.push(self.columns[i].clone());
            }
        }
        CohortTable::from_parts(
            names,
            columns,
            self.label.clone(),
            self.patient_ids.clone(),
            self.strata.clone(),
        )
    }

    /// Writes the cohort CSV: `patient_id,label,stratum:<var>...,<features>`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["patient_id".to_string(), "label".to_string()];
        header.extend(self.strata.iter().map(|s| format!("stratum:{}", s.variable)));
        header.extend(self.feature_names.iter().cloned());
        wtr.write_record(&header)?;
        for row in 0..self.patients() {
            let mut record = Vec::with_capacity(header.len());
            record.push(self.patient_ids[row].clone());
            record.push(if self.label.get(row) { "1" } else { "0" }.to_string());
            for s in &self.strata {
                record.push(s.categories[s.assignment[row] as usize].clone());
            }
            for col in &self.columns {
                record.push(if col.get(row) { "1" } else { "0" }.to_string());
            }
            wtr.write_record(&record)?;
        }
        wtr.flush().map_err(|e| Error::Data(format!("write: {e}")))?;
        Ok(())
    }

    /// Reads a cohort CSV produced by [`CohortTable::write_csv`] (or the
    /// synthesizer). Stratum categories are registered in first-seen
    /// order.
    pub fn read_csv(reader: impl Read) -> Result<CohortTable> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut id_col = None;
        let mut label_col = None;
        let mut strata_cols: Vec<(usize, String)> = Vec::new();
        let mut feature_cols: Vec<(usize, String)> = Vec::new();
        for (i, name) in headers.iter().enumerate() {
            match name {
                "patient_id" => id_col = Some(i),
                "label" => label_col = Some(i),
                other => {
                    if let Some(var) = other.strip_prefix("stratum:") {
                        if var.is_empty() {
                            return Err(Error::Data("empty stratum variable name".into()));
                        }
                        strata_cols.push((i, var.to_string()));
                    } else {
                        feature_cols.push((i, other.to_string()));
                    }
                }
            }
        }
        let (Some(id_col), Some(label_col)) = (id_col, label_col) else {
            return Err(Error::Data(
                "cohort CSV must have 'patient_id' and 'label' columns".into(),
            ));
        };

        let mut patient_ids = Vec::new();
        let mut label_bits = Vec::new();
        let mut feature_bits: Vec<Vec<bool>> = vec![Vec::new(); feature_cols.len()];
        let mut tag_cats: Vec<Vec<String>> = vec![Vec::new(); strata_cols.len()];
        let mut tag_assign: Vec<Vec<u32>> = vec![Vec::new(); strata_cols.len()];

        for row in rdr.records() {
            let record = row?;
            let line = record.position().map_or(0, |p| p.line());
            let get = |i: usize| -> Result<&str> {
                record.get(i).ok_or(Error::MalformedRow { line, msg: "short row".into() })
            };
            patient_ids.push(get(id_col)?.to_string());
            label_bits.push(parse_bit(get(label_col)?, "label", line)?);
            for (slot, (col, var)) in strata_cols.iter().enumerate() {
                let cell = get(*col)?;
                if cell.is_empty() {
                    return Err(Error::MalformedRow {
                        line,
                        msg: format!("empty stratum tag for '{var}'"),
                    });
                }
                let cat = match tag_cats[slot].iter().position(|c| c == cell) {
                    Some(idx) => idx,
                    None => {
                        tag_cats[slot].push(cell.to_string());
                        tag_cats[slot].len() - 1
                    }
                };
                tag_assign[slot].push(cat as u32);
            }
            for (slot, (col, name)) in feature_cols.iter().enumerate() {
                feature_bits[slot].push(parse_bit(get(*col)?, name, line)?);
            }
        }

        let columns = feature_bits.into_iter().map(BitVec64::from_bools).collect();
        let label = BitVec64::from_bools(label_bits);
        let strata = strata_cols
            .into_iter()
            .zip(tag_cats)
            .zip(tag_assign)
            .map(|(((_, variable), categories), assignment)| StratumTags {
                variable,
                categories,
                assignment,
            })
            .collect();
        CohortTable::from_parts(
            feature_cols.into_iter().map(|(_, n)| n).collect(),
            columns,
            label,
            patient_ids,
            strata,
        )
    }
}

fn parse_bit(cell: &str, what: &str, line: u64) -> Result<bool> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        other => {
            Err(Error::MalformedRow { line, msg: format!("{what}: expected 0/1, got '{other}'") })
        }
    }
}

fn compute_fingerprint(
    names: &[String],
    columns: &[BitVec64],
    label: &BitVec64,
    ids: &[String],
    strata: &[StratumTags],
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"strata-miner cohort v1\0");
    hasher.update((ids.len() as u64).to_le_bytes());
    for id in ids {
        hasher.update((id.len() as u64).to_le_bytes());
        hasher.update(id.as_bytes());
    }
    for (name, col) in names.iter().zip(columns) {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        for w in col.words() {
            hasher.update(w.to_le_bytes());
        }
    }
    hasher.update(b"label\0");
    for w in label.words() {
        hasher.update(w.to_le_bytes());
    }
    for tags in strata {
        hasher.update(tags.variable.as_bytes());
        hasher.update([0]);
        for cat in &tags.categories {
            hasher.update(cat.as_bytes());
            hasher.update([0]);
        }
        for &a in &tags.assignment {
            hasher.update(a.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> CohortTable {
        CohortTable::from_parts(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                BitVec64::from_indices(4, &[0, 1]),
                BitVec64::from_indices(4, &[1, 2]),
                BitVec64::from_indices(4, &[3]),
            ],
            BitVec64::from_indices(4, &[0, 3]),
            (0..4).map(|i| format!("p{i}")).collect(),
            vec![StratumTags {
                variable: "gender".into(),
                categories: vec!["women".into(), "men".into()],
                assignment: vec![0, 0, 1, 1],
            }],
        )
        .unwrap()
    }

    #[test]
    fn counts_are_cached() {
        let t = small_table();
        assert_eq!(t.patients(), 4);
        assert_eq!(t.positives(), 2);
        assert_eq!(t.features(), 3);
        assert!(!t.is_constant(0));
    }

    #[test]
    fn empty_cohort_errors() {
        let err = CohortTable::from_parts(
            vec![],
            vec![],
            BitVec64::zeros(0),
            vec![],
            vec![],
        );
        assert!(matches!(err, Err(Error::EmptyCohort)));
    }

    #[test]
    fn group_columns_is_union() {
        let t = small_table();
        let grouped = t
            .group_columns(&[ColumnGroup { name: "ab".into(), members: vec!["a".into(), "b".into()] }])
            .unwrap();
        assert_eq!(grouped.feature_names(), &["c".to_string(), "ab".to_string()]);
        let ab = grouped.column(grouped.feature_index("ab").unwrap()).unwrap();
        assert_eq!(ab.iter_ones().collect::<Vec<_>>(), vec![0, 1, 2]);
        // untouched column and the label are bit-identical
        assert_eq!(grouped.column(0).unwrap(), t.column(2).unwrap());
        assert_eq!(grouped.positives(), t.positives());
    }

    #[test]
    fn singleton_group_renames() {
        let t = small_table();
        let grouped = t
            .group_columns(&[ColumnGroup { name: "c2".into(), members: vec!["c".into()] }])
            .unwrap();
        assert_eq!(
            grouped.column(grouped.feature_index("c2").unwrap()).unwrap(),
            t.column(2).unwrap()
        );
    }

    #[test]
    fn grouping_leaves_other_rules_wracc_unchanged() {
        use crate::rule::{evaluate, P0Mode, Rule};
        let t = small_table();
        let grouped = t
            .group_columns(&[ColumnGroup { name: "ab".into(), members: vec!["a".into(), "b".into()] }])
            .unwrap();
        // same rule over the untouched column, located by name
        let before = evaluate(
            &Rule::new(vec![t.feature_index("c").unwrap() as u32]),
            &t,
            P0Mode::DatasetRate,
        )
        .unwrap();
        let after = evaluate(
            &Rule::new(vec![grouped.feature_index("c").unwrap() as u32]),
            &grouped,
            P0Mode::DatasetRate,
        )
        .unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn unknown_group_member_is_named() {
        let t = small_table();
        let err = t
            .group_columns(&[ColumnGroup { name: "g".into(), members: vec!["zzz".into()] }])
            .unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(name) if name == "zzz"));
    }

    #[test]
    fn restrict_keeps_masked_rows() {
        let t = small_table();
        let sub = t.restrict(&BitVec64::from_indices(4, &[1, 2, 3])).unwrap();
        assert_eq!(sub.patients(), 3);
        assert_eq!(sub.positives(), 1);
        assert_eq!(sub.patient_ids(), &["p1", "p2", "p3"]);
        assert_eq!(sub.stratum("gender").unwrap().assignment, vec![0, 1, 1]);
    }

    #[test]
    fn csv_round_trip() {
        let t = small_table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = CohortTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.fingerprint(), t.fingerprint());
    }

    #[test]
    fn csv_rejects_non_binary_cells() {
        let csv = "patient_id,label,a\np0,1,2\n";
        assert!(matches!(
            CohortTable::read_csv(csv.as_bytes()),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }
}
