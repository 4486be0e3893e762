use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EpochSet;
use crate::error::{Error, Result};

/// Header fields supplied alongside a CSV import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpochMeta {
    pub channel_names: Vec<String>,
    pub sampling_rate_hz: f64,
    pub prestim_ms: f64,
}

impl Default for EpochMeta {
    fn default() -> Self {
        Self {
            channel_names: vec!["Fz".into(), "Cz".into(), "Pz".into()],
            sampling_rate_hz: 1000.0,
            prestim_ms: 200.0,
        }
    }
}

fn csv_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, e.to_string()))
}

/// Imports one epoch per CSV row, channels concatenated channel-major
/// (all samples of the first channel, then the second, ...). The labels file
/// holds one 0/1 value per row.
pub fn import_csv(
    data_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    meta: &EpochMeta,
) -> Result<EpochSet> {
    let data_path = data_path.as_ref();
    let labels_path = labels_path.as_ref();
    let n_channels = meta.channel_names.len();
    if n_channels == 0 {
        return Err(Error::InvalidConfig("at least one channel name is required".into()));
    }

    let mut labels = Vec::new();
    for (i, rec) in open(labels_path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(labels_path, i + 1, e.to_string()))?;
        if rec.len() != 1 {
            return Err(csv_err(labels_path, i + 1, "expected exactly one label per row"));
        }
        let label = match &rec[0] {
            "0" => 0,
            "1" => 1,
            other => return Err(csv_err(labels_path, i + 1, format!("label {other:?} is not 0 or 1"))),
        };
        labels.push(label);
    }

    let mut set: Option<EpochSet> = None;
    let mut row_len = 0;
    let mut values = Vec::new();
    let mut n_rows = 0;
    for (i, rec) in open(data_path)?.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| csv_err(data_path, line, e.to_string()))?;
        if set.is_none() {
            row_len = rec.len();
            if row_len == 0 || row_len % n_channels != 0 {
                return Err(csv_err(
                    data_path,
                    line,
                    format!("{row_len} values do not split into {n_channels} channels"),
                ));
            }
            set = Some(EpochSet::empty(
                n_channels,
                row_len / n_channels,
                meta.sampling_rate_hz,
                meta.prestim_ms,
                meta.channel_names.clone(),
            )?);
        }
        if rec.len() != row_len {
            return Err(csv_err(
                data_path,
                line,
                format!("ragged row: {} values, expected {row_len}", rec.len()),
            ));
        }
        values.clear();
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| csv_err(data_path, line, format!("unparsable value {field:?}")))?;
            values.push(v);
        }
        let label = *labels.get(i).ok_or_else(|| {
            csv_err(labels_path, 0, format!("fewer labels ({}) than data rows", labels.len()))
        })?;
        set.as_mut().expect("initialized above").push(&values, label, -1)?;
        n_rows += 1;
    }
    if n_rows != labels.len() {
        return Err(csv_err(
            labels_path,
            0,
            format!("{} labels for {n_rows} data rows", labels.len()),
        ));
    }
    set.ok_or_else(|| csv_err(data_path, 0, "no data rows"))
}
