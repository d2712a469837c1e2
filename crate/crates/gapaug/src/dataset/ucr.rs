//! UCR archive TSV loader.
//!
//! UCR files are tab-separated with the class label in the first column and
//! the univariate series in the remaining columns. Labels are remapped to
//! contiguous `[0, C)` consistently across the train/test pair.

use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::{LabeledDataset, Provenance, TimeWindow};
use crate::error::{Error, Result};

fn read_ucr_file(path: &Path) -> Result<Vec<(i64, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(b'\t')
        .flexible(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    let mut series_len: Option<usize> = None;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::parse(line, e.to_string()))?;
        if record.len() < 2 {
            return Err(Error::parse(line, "row has no series values"));
        }
        let raw_label: f64 = record
            .get(0)
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, "non-numeric class label"))?;
        if (raw_label - raw_label.round()).abs() > 1e-9 {
            return Err(Error::parse(line, format!("non-integer label {raw_label}")));
        }
        let label = raw_label.round() as i64;
        let mut series = Vec::with_capacity(record.len() - 1);
        for j in 1..record.len() {
            let cell = record.get(j).unwrap().trim();
            if cell.is_empty() {
                continue; // trailing tab
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(line, format!("non-numeric value '{cell}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, "non-finite value in series"));
            }
            series.push(v);
        }
        match series_len {
            None => series_len = Some(series.len()),
            Some(expected) if expected != series.len() => {
                return Err(Error::parse(
                    line,
                    format!(
                        "series length {} differs from {} seen earlier",
                        series.len(),
                        expected
                    ),
                ));
            }
            _ => {}
        }
        rows.push((label, series));
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("no records in {}", path.display())));
    }
    Ok(rows)
}

/// Load a UCR train/test file pair as two univariate datasets sharing a
/// label remapping. Each row becomes its own split group.
pub fn ingest_ucr_tsv(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let train_rows = read_ucr_file(train_path.as_ref())?;
    let test_rows = read_ucr_file(test_path.as_ref())?;

    let steps = train_rows[0].1.len();
    if test_rows[0].1.len() != steps {
        return Err(Error::invalid(format!(
            "train series length {} differs from test series length {}",
            steps,
            test_rows[0].1.len()
        )));
    }

    let mut distinct: Vec<i64> = train_rows
        .iter()
        .chain(test_rows.iter())
        .map(|(l, _)| *l)
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    let index: BTreeMap<i64, usize> = distinct
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i))
        .collect();
    let num_classes = distinct.len();

    let build = |rows: Vec<(i64, Vec<f64>)>, tag: &str| -> Result<LabeledDataset> {
        let windows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (label, series))| {
                TimeWindow::new(
                    series,
                    steps,
                    1,
                    index[&label],
                    format!("{tag}-row{i}"),
                    Provenance::Real,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(windows, steps, 1, num_classes)
    };

    Ok((build(train_rows, "train")?, build(test_rows, "test")?))
}
