//! Longitudinal dataset CSV: one row per visit,
//! `subject_id,age,node_0,...,node_{N-1}`, grouped by subject with strictly
//! increasing ages.

use std::path::Path;

use netprog_core::model::{LongitudinalDataset, Subject, Visit};

use crate::{CliError, CliResult};

pub fn load_dataset(path: &Path) -> CliResult<LongitudinalDataset<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "subject_id" || cols[1] != "age" {
        return Err(CliError::Validation(format!(
            "{} line 1: expected header subject_id,age,node_0,...; found {:?}",
            path.display(),
            cols.join(",")
        )));
    }
    let num_nodes = cols.len() - 2;
    for (k, col) in cols[2..].iter().enumerate() {
        let expected = format!("node_{k}");
        if *col != expected {
            return Err(CliError::Validation(format!(
                "{} line 1: column {} should be {expected}, found {col}",
                path.display(),
                k + 3
            )));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut subjects: std::collections::HashMap<String, Vec<Visit<f64>>> =
        std::collections::HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record
            .map_err(|e| CliError::Validation(format!("{} line {line}: {e}", path.display())))?;
        if record.len() != num_nodes + 2 {
            return Err(CliError::Validation(format!(
                "{} line {line}: expected {} fields, found {}",
                path.display(),
                num_nodes + 2,
                record.len()
            )));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(CliError::Validation(format!(
                "{} line {line}: empty subject id",
                path.display()
            )));
        }
        let age: f64 = record[1].parse().map_err(|_| {
            CliError::Validation(format!(
                "{} line {line}: cannot parse age from {:?}",
                path.display(),
                &record[1]
            ))
        })?;
        let mut values = Vec::with_capacity(num_nodes);
        for k in 0..num_nodes {
            let raw = &record[k + 2];
            let v: f64 = raw.parse().map_err(|_| {
                CliError::Validation(format!(
                    "{} line {line}: cannot parse node_{k} from {raw:?}",
                    path.display()
                ))
            })?;
            if !v.is_finite() || v <= 0.0 {
                return Err(CliError::Validation(format!(
                    "{} line {line}: node_{k} value {v} must be finite and positive",
                    path.display()
                )));
            }
            values.push(v);
        }
        let visits = subjects.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        if let Some(last) = visits.last() {
            if age <= last.age {
                return Err(CliError::Validation(format!(
                    "{} line {line}: ages of subject {id} must be strictly increasing ({} then {age})",
                    path.display(),
                    last.age
                )));
            }
        }
        visits.push(Visit { age, values });
    }
    if order.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: dataset has no rows",
            path.display()
        )));
    }
    let subjects: Vec<Subject<f64>> = order
        .into_iter()
        .map(|id| {
            let visits = subjects.remove(&id).expect("collected above");
            Subject { id, visits }
        })
        .collect();
    Ok(LongitudinalDataset::new(subjects, num_nodes)?)
}

pub fn dataset_header(num_nodes: usize) -> String {
    let mut header = String::from("subject_id,age");
    for k in 0..num_nodes {
        header.push_str(&format!(",node_{k}"));
    }
    header
}

pub fn write_dataset(path: &Path, data: &LongitudinalDataset<f64>) -> CliResult<()> {
    let mut out = dataset_header(data.num_nodes());
    out.push('\n');
    for subject in data.subjects() {
        for visit in &subject.visits {
            out.push_str(&subject.id);
            out.push(',');
            out.push_str(&super::fmt_full(visit.age));
            for &v in &visit.values {
                out.push(',');
                out.push_str(&super::fmt_full(v));
            }
            out.push('\n');
        }
    }
    super::write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_and_round_trips() {
        let f = temp_csv("subject_id,age,node_0,node_1\ns0,70.0,2.0,1.5\ns0,71.0,1.9,1.4\ns1,69.5,2.1,1.6\n");
        let data = load_dataset(f.path()).unwrap();
        assert_eq!(data.num_subjects(), 2);
        assert_eq!(data.num_nodes(), 2);
        assert_eq!(data.subjects()[0].visits.len(), 2);

        let out = tempfile::tempdir().unwrap();
        let path = out.path().join("data.csv");
        write_dataset(&path, &data).unwrap();
        let reloaded = load_dataset(&path).unwrap();
        assert_eq!(reloaded, data);
    }

    #[test]
    fn rejects_non_increasing_ages_with_row() {
        let f = temp_csv("subject_id,age,node_0\ns0,70.0,2.0\ns0,70.0,1.9\n");
        let err = load_dataset(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(err.to_string().contains("strictly increasing"), "{err}");
    }

    #[test]
    fn rejects_nonpositive_values_with_row() {
        let f = temp_csv("subject_id,age,node_0,node_1\ns0,70.0,2.0,-0.5\n");
        let err = load_dataset(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("node_1"), "{err}");
    }

    #[test]
    fn rejects_wrong_width_rows() {
        let f = temp_csv("subject_id,age,node_0,node_1\ns0,70.0,2.0\n");
        let err = load_dataset(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("fields"), "{err}");
    }

    #[test]
    fn subjects_keep_first_seen_order() {
        let f = temp_csv("subject_id,age,node_0\nb,70.0,2.0\na,70.0,2.0\n");
        let data = load_dataset(f.path()).unwrap();
        assert_eq!(data.subjects()[0].id, "b");
        assert_eq!(data.subjects()[1].id, "a");
    }
}
