//! CSV ingestion. A first row with any non-numeric data field is a header.

use std::path::Path;

use hdlrt::{Error, GroupedSample, Matrix, Result};

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    Ok(rows)
}

fn is_header(rec: &csv::StringRecord, skip: usize) -> bool {
    rec.iter().skip(skip).any(|f| f.parse::<f64>().is_err())
}

fn parse_row(rec: &csv::StringRecord, skip: usize, line: usize, path: &Path) -> Result<Vec<f64>> {
    rec.iter()
        .skip(skip)
        .enumerate()
        .map(|(j, f)| {
            f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Config(format!(
                    "{}: row {line}, column {}: {f:?} is not a finite number",
                    path.display(),
                    j + skip + 1
                ))
            })
        })
        .collect()
}

/// A rectangular numeric matrix, one observation per row.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let records = read_records(path)?;
    let start = usize::from(records.first().is_some_and(|r| is_header(r, 0)));
    let rows = records[start..]
        .iter()
        .enumerate()
        .map(|(i, r)| parse_row(r, 0, start + i + 1, path))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no data rows", path.display())));
    }
    Matrix::from_rows(&rows)
}

/// Grouped layout: a label column followed by the p observation columns.
/// Groups are ordered by first appearance of their label.
pub fn read_grouped(path: &Path) -> Result<GroupedSample> {
    let records = read_records(path)?;
    let start = usize::from(records.first().is_some_and(|r| is_header(r, 1)));
    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, r) in records[start..].iter().enumerate() {
        if r.len() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} needs a group label and at least one value",
                path.display(),
                start + i + 1
            )));
        }
        let label = r.get(0).unwrap_or_default().to_string();
        let values = parse_row(r, 1, start + i + 1, path)?;
        let g = match labels.iter().position(|l| *l == label) {
            Some(g) => g,
            None => {
                labels.push(label);
                rows.push(Vec::new());
                rows.len() - 1
            }
        };
        rows[g].push(values);
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no data rows", path.display())));
    }
    let groups = rows
        .iter()
        .map(|g| Matrix::from_rows(g))
        .collect::<Result<Vec<_>>>()?;
    GroupedSample::new(groups, Some(labels))
}
