//! Windows CSV ingestion and serialization.
//!
//! Two layouts are accepted, auto-detected from the header:
//!
//! * long: `group,label,t,f0,...,f{F-1}` — one row per time step, rows of a
//!   window consecutive; the group column carries `date#idx` where `idx`
//!   disambiguates windows within a date and the part before the last `#`
//!   is the split group key.
//! * flat: `group,label,v_0_0,...,v_{T-1}_{F-1}` — one row per window, the
//!   group column is the group key verbatim.
//!
//! The writer emits the flat layout plus provenance columns
//! (`provenance,generator_id,round,source_index`); the reader tolerates
//! their presence, so ingest -> serialize -> ingest is the identity on
//! (values, label, group_key).

use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::{LabeledDataset, Provenance, TimeWindow};
use crate::error::{Error, Result};

fn parse_f64(raw: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {what} '{raw}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what} '{raw}'")));
    }
    Ok(v)
}

fn parse_label(raw: &str, line: usize) -> Result<i64> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("non-integer label '{raw}'")))
}

/// Remap arbitrary integer labels to contiguous `[0, C)` in sorted order.
fn remap_labels(raw_labels: &[i64]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<i64> = raw_labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let index: BTreeMap<i64, usize> = distinct
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i))
        .collect();
    let mapped = raw_labels.iter().map(|l| index[l]).collect();
    (mapped, distinct.len())
}

struct RawWindow {
    values: Vec<f64>,
    label: i64,
    group_key: String,
    provenance: Provenance,
}

/// Read a windows CSV file into a dataset of real-provenance windows.
///
/// `steps`/`features` give the expected window shape; every record is
/// validated against it and parse failures report the 1-based line number.
pub fn ingest_windows_csv(
    path: impl AsRef<Path>,
    steps: usize,
    features: usize,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 3 || headers[0] != "group" || headers[1] != "label" {
        return Err(Error::parse(
            1,
            "expected header starting with 'group,label,...'",
        ));
    }

    let raw = if headers[2] == "t" {
        ingest_long(&mut reader, &headers, steps, features)?
    } else if headers[2].starts_with('v') {
        ingest_flat(&mut reader, &headers, steps, features)?
    } else {
        return Err(Error::parse(
            1,
            format!("unrecognized third column '{}'", headers[2]),
        ));
    };

    if raw.is_empty() {
        return Err(Error::invalid(format!("no records in {}", path.display())));
    }

    let labels: Vec<i64> = raw.iter().map(|w| w.label).collect();
    let (mapped, num_classes) = remap_labels(&labels);
    let windows = raw
        .into_iter()
        .zip(mapped)
        .map(|(w, label)| {
            TimeWindow::new(w.values, steps, features, label, w.group_key, w.provenance)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(windows, steps, features, num_classes)
}

fn provenance_columns(headers: &[String]) -> Option<usize> {
    headers.iter().position(|h| h == "provenance")
}

fn parse_provenance(
    record: &csv::StringRecord,
    prov_col: usize,
    line: usize,
) -> Result<Provenance> {
    let kind = record.get(prov_col).unwrap_or("real").trim();
    match kind {
        "" | "real" => Ok(Provenance::Real),
        "generated" => {
            let generator_id = record
                .get(prov_col + 1)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::parse(line, "generated row missing generator_id"))?
                .to_string();
            let round = record
                .get(prov_col + 2)
                .unwrap_or("0")
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, "bad round in provenance"))?;
            let source_index = match record.get(prov_col + 3).map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(
                    s.parse()
                        .map_err(|_| Error::parse(line, "bad source_index in provenance"))?,
                ),
            };
            Ok(Provenance::Generated {
                generator_id,
                round,
                source_index,
            })
        }
        other => Err(Error::parse(line, format!("unknown provenance '{other}'"))),
    }
}

fn ingest_flat(
    reader: &mut csv::Reader<std::fs::File>,
    headers: &[String],
    steps: usize,
    features: usize,
) -> Result<Vec<RawWindow>> {
    let d = steps * features;
    let prov_col = provenance_columns(headers);
    let expected = 2 + d;
    if headers.len() < expected {
        return Err(Error::parse(
            1,
            format!(
                "flat header has {} columns, expected at least {expected} for a {steps}x{features} window",
                headers.len()
            ),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after header
        let record = record.map_err(|e| Error::parse(line, e.to_string()))?;
        let min_cols = prov_col.map_or(expected, |p| p.max(expected));
        if record.len() < min_cols {
            return Err(Error::parse(
                line,
                format!("row has {} fields, expected at least {min_cols}", record.len()),
            ));
        }
        let group_key = record.get(0).unwrap().to_string();
        let label = parse_label(record.get(1).unwrap(), line)?;
        let mut values = Vec::with_capacity(d);
        for j in 0..d {
            values.push(parse_f64(record.get(2 + j).unwrap(), line, "value")?);
        }
        let provenance = match prov_col {
            Some(p) => parse_provenance(&record, p, line)?,
            None => Provenance::Real,
        };
        out.push(RawWindow {
            values,
            label,
            group_key,
            provenance,
        });
    }
    Ok(out)
}

fn ingest_long(
    reader: &mut csv::Reader<std::fs::File>,
    headers: &[String],
    steps: usize,
    features: usize,
) -> Result<Vec<RawWindow>> {
    let expected = 3 + features;
    if headers.len() != expected {
        return Err(Error::parse(
            1,
            format!(
                "long header has {} columns, expected {expected} for F={features}",
                headers.len()
            ),
        ));
    }
    let mut out: Vec<RawWindow> = Vec::new();
    let mut current: Option<(String, i64, Vec<f64>, usize)> = None; // full key, label, values, start line

    let mut flush = |cur: Option<(String, i64, Vec<f64>, usize)>,
                     out: &mut Vec<RawWindow>|
     -> Result<()> {
        if let Some((full_key, label, values, start_line)) = cur {
            if values.len() != steps * features {
                return Err(Error::parse(
                    start_line,
                    format!(
                        "window '{}' has {} steps, expected {steps}",
                        full_key,
                        values.len() / features
                    ),
                ));
            }
            // Split group key off the trailing '#idx' window ordinal.
            let group_key = match full_key.rfind('#') {
                Some(pos) => full_key[..pos].to_string(),
                None => full_key.clone(),
            };
            out.push(RawWindow {
                values,
                label,
                group_key,
                provenance: Provenance::Real,
            });
        }
        Ok(())
    };

    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(line, e.to_string()))?;
        if record.len() != expected {
            return Err(Error::parse(
                line,
                format!("row has {} fields, expected {expected}", record.len()),
            ));
        }
        let key = record.get(0).unwrap().to_string();
        let label = parse_label(record.get(1).unwrap(), line)?;
        let t: usize = record
            .get(2)
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, "non-integer step index"))?;

        let starts_new = match &current {
            Some((k, ..)) => *k != key,
            None => true,
        };
        if starts_new {
            flush(current.take(), &mut out)?;
            if t != 0 {
                return Err(Error::parse(line, format!("window '{key}' starts at t={t}")));
            }
            current = Some((key.clone(), label, Vec::with_capacity(steps * features), line));
        }
        let (_, cur_label, values, _) = current.as_mut().unwrap();
        if *cur_label != label {
            return Err(Error::parse(line, "label changes within a window"));
        }
        if t != values.len() / features {
            return Err(Error::parse(
                line,
                format!("step index {t} out of order (expected {})", values.len() / features),
            ));
        }
        for j in 0..features {
            values.push(parse_f64(record.get(3 + j).unwrap(), line, "value")?);
        }
    }
    flush(current.take(), &mut out)?;
    Ok(out)
}

/// Write a dataset in the flat layout with provenance columns.
pub fn write_windows_csv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let d = dataset.steps * dataset.features;
    let mut header: Vec<String> = vec!["group".into(), "label".into()];
    for t in 0..dataset.steps {
        for f in 0..dataset.features {
            header.push(format!("v_{t}_{f}"));
        }
    }
    header.extend(
        ["provenance", "generator_id", "round", "source_index"]
            .iter()
            .map(|s| s.to_string()),
    );
    writer.write_record(&header)?;

    for w in &dataset.windows {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        record.push(w.group_key.clone());
        record.push(w.label.to_string());
        for j in 0..d {
            // RFC-style shortest round-trip formatting keeps files bit-stable.
            record.push(format!("{}", w.values[j]));
        }
        match &w.provenance {
            Provenance::Real => {
                record.extend(["real".into(), String::new(), String::new(), String::new()])
            }
            Provenance::Generated {
                generator_id,
                round,
                source_index,
            } => {
                record.push("generated".into());
                record.push(generator_id.clone());
                record.push(round.to_string());
                record.push(source_index.map_or(String::new(), |s| s.to_string()));
            }
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
