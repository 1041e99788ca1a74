//! Dataset directories: `labels.csv` (optional, header `subject_id,label`)
//! and `ts/<subject_id>.csv` with one line of comma-separated values per
//! parcel.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use metsk_core::data::{Dataset, Domain, SubjectRecord};
use metsk_core::numerics::Tensor;

use crate::error::{Error, Result};

fn csv_line(pos: Option<&csv::Position>) -> usize {
    pos.map_or(0, |p| p.line() as usize)
}

/// Reads one `P x T` time-series file.
pub fn read_timeseries(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, csv_line(e.position()), e.to_string()))?;
        let line = csv_line(record.position());
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, line, format!("column {}: `{cell}` is not a finite number", col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(path, line, format!("{} values, line 1 has {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid(path, "no parcels"));
    }
    let (p, t) = (rows.len(), rows[0].len());
    Tensor::new(&[p, t], rows.concat()).map_err(|e| Error::invalid(path, e.to_string()))
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["subject_id", "label"] {
        return Err(Error::parse(path, 1, "header must be `subject_id,label`"));
    }
    let mut labels = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, csv_line(e.position()), e.to_string()))?;
        let line = csv_line(record.position());
        let id = record[0].trim().to_string();
        check_id(&id).map_err(|d| Error::parse(path, line, d))?;
        let label = match record[1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(path, line, format!("label `{other}` is not 0 or 1"))),
        };
        if labels.insert(id.clone(), label).is_some() {
            return Err(Error::parse(path, line, format!("duplicate subject `{id}`")));
        }
    }
    Ok(labels)
}

fn check_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\', ',']) {
        return Err(format!("subject id `{id}` is not a plain file name"));
    }
    Ok(())
}

/// Loads a dataset directory; records are sorted by subject id.
pub fn load_dataset(dir: &Path, domain: Domain) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::Missing { path: dir.to_path_buf() });
    }
    let ts_dir = dir.join("ts");
    let entries = fs::read_dir(&ts_dir).map_err(Error::io(&ts_dir))?;
    let mut files = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(Error::io(&ts_dir))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.insert(stem.to_string(), path);
            }
        }
    }
    if files.is_empty() {
        return Err(Error::invalid(&ts_dir, "no subject files"));
    }
    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.exists() { Some(read_labels(&labels_path)?) } else { None };
    if let Some(l) = &labels {
        if let Some(id) = l.keys().find(|id| !files.contains_key(*id)) {
            return Err(Error::invalid(&labels_path, format!("subject `{id}` has no time-series file")));
        }
    }
    let mut records = Vec::with_capacity(files.len());
    let mut parcels: Option<(usize, String)> = None;
    for (id, path) in &files {
        let ts = read_timeseries(path)?;
        match &parcels {
            Some((p, first)) if *p != ts.shape()[0] => {
                return Err(Error::invalid(
                    path,
                    format!("inconsistent parcel count: {} parcels, `{first}` has {p}", ts.shape()[0]),
                ));
            }
            None => parcels = Some((ts.shape()[0], id.clone())),
            _ => {}
        }
        let label = match &labels {
            None => None,
            Some(l) => Some(*l.get(id).ok_or_else(|| Error::invalid(&labels_path, format!("no label for `{id}`")))?),
        };
        records.push(SubjectRecord::new(id.clone(), ts, label).map_err(|e| Error::invalid(path, e.to_string()))?);
    }
    Ok(Dataset::new(records, domain)?)
}

/// Writes a dataset directory. Values use the shortest text that parses
/// back to the same `f64`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    let ts_dir = dir.join("ts");
    fs::create_dir_all(&ts_dir).map_err(Error::io(&ts_dir))?;
    for r in dataset.records() {
        check_id(&r.subject_id).map_err(|d| Error::invalid(&ts_dir, d))?;
        let mut text = String::new();
        for i in 0..r.parcels() {
            let row: Vec<String> = r.timeseries.row(i).iter().map(|v| format!("{v}")).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let path = ts_dir.join(format!("{}.csv", r.subject_id));
        fs::write(&path, text).map_err(Error::io(&path))?;
    }
    if dataset.is_labeled() {
        let mut text = String::from("subject_id,label\n");
        for r in dataset.records() {
            text.push_str(&format!("{},{}\n", r.subject_id, r.label.expect("labeled dataset")));
        }
        let path = dir.join("labels.csv");
        fs::write(&path, text).map_err(Error::io(&path))?;
    }
    Ok(())
}

/// Labels from a `labels.csv`, keyed by subject id.
pub fn load_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    read_labels(path)
}
