use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LabeledSeries, TimeSeriesDataset};
use crate::error::{Error, Result};

/// A column named by header or by zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelRef {
    Index(usize),
    Name(String),
}

fn default_true() -> bool {
    true
}

fn default_delimiter() -> char {
    ','
}

/// Column layout shared by every file of a dataset. One file holds one
/// sequence, one row per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Channels fed to the model; empty means every non-label column.
    #[serde(default)]
    pub channels: Vec<ChannelRef>,
    /// Label column inside test files (1 = anomaly).
    #[serde(default)]
    pub label_column: Option<ChannelRef>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            has_header: true,
            delimiter: ',',
            channels: Vec::new(),
            label_column: None,
        }
    }
}

/// A test file and, optionally, a separate label file whose first column
/// holds the labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFile {
    pub data: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

struct Table {
    header: Option<Vec<String>>,
    rows: Vec<(u64, Vec<String>)>,
    width: usize,
}

fn read_table(path: &Path, schema: &CsvSchema) -> Result<Table> {
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| Error::InvalidParameter(format!("delimiter {:?} is not ASCII", schema.delimiter)))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = if schema.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| csv_error(path, e))?
                .iter()
                .map(str::to_owned)
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::data(
                    path,
                    line,
                    format!("ragged row: expected {w} fields, found {}", record.len()),
                ))
            }
            Some(_) => {}
        }
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    Ok(Table {
        header,
        rows,
        width: width.unwrap_or(0),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, line, format!("{other:?}")),
    }
}

fn resolve(path: &Path, table: &Table, col: &ChannelRef) -> Result<usize> {
    match col {
        ChannelRef::Index(i) if *i < table.width => Ok(*i),
        ChannelRef::Index(i) => Err(Error::data(
            path,
            1,
            format!("column {i} out of range for {} columns", table.width),
        )),
        ChannelRef::Name(name) => table
            .header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::data(path, 1, format!("no column named {name:?}"))),
    }
}

fn parse_cell(path: &Path, line: u64, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| Error::data(path, line, format!("non-numeric cell {cell:?}")))
}

fn parse_label(path: &Path, line: u64, cell: &str) -> Result<bool> {
    match parse_cell(path, line, cell)? {
        v if v == 0.0 => Ok(false),
        v if v == 1.0 => Ok(true),
        v => Err(Error::data(path, line, format!("label {v} is neither 0 nor 1"))),
    }
}

struct Parsed {
    names: Vec<String>,
    data: DMatrix<f64>,
    labels: Option<Vec<bool>>,
}

fn parse_file(path: &Path, schema: &CsvSchema, want_labels: bool) -> Result<Parsed> {
    let table = read_table(path, schema)?;
    let label_col = match (&schema.label_column, want_labels) {
        (Some(c), true) => Some(resolve(path, &table, c)?),
        (None, true) => {
            return Err(Error::data(path, 1, "test file has no label column and no label file"))
        }
        (Some(c), false) => resolve(path, &table, c).ok(),
        (None, false) => None,
    };
    let columns: Vec<usize> = if schema.channels.is_empty() {
        (0..table.width).filter(|&c| Some(c) != label_col).collect()
    } else {
        schema
            .channels
            .iter()
            .map(|c| resolve(path, &table, c))
            .collect::<Result<_>>()?
    };
    if columns.is_empty() {
        return Err(Error::data(path, 1, "no channel columns"));
    }
    let names = columns
        .iter()
        .map(|&c| match &table.header {
            Some(h) => h[c].clone(),
            None => format!("ch{c}"),
        })
        .collect();
    let mut data = DMatrix::zeros(columns.len(), table.rows.len());
    let mut labels = label_col.map(|_| Vec::with_capacity(table.rows.len()));
    for (t, (line, row)) in table.rows.iter().enumerate() {
        for (i, &c) in columns.iter().enumerate() {
            data[(i, t)] = parse_cell(path, *line, &row[c])?;
        }
        if let (Some(labels), Some(c)) = (labels.as_mut(), label_col) {
            labels.push(parse_label(path, *line, &row[c])?);
        }
    }
    Ok(Parsed {
        names,
        data,
        labels: if want_labels { labels } else { None },
    })
}

fn read_label_file(path: &Path, schema: &CsvSchema) -> Result<Vec<bool>> {
    let table = read_table(path, schema)?;
    table
        .rows
        .iter()
        .map(|(line, row)| parse_label(path, *line, &row[0]))
        .collect()
}

fn series_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads one sequence per file. Test files need either a label column
/// (per `schema.label_column`) or a separate label file.
pub fn load_csv(train: &[PathBuf], test: &[TestFile], schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    if train.is_empty() {
        return Err(Error::Empty("no training files"));
    }
    let mut channels: Option<Vec<String>> = None;
    let mut train_seqs = Vec::with_capacity(train.len());
    for path in train {
        let parsed = parse_file(path, schema, false)?;
        check_channels(path, &mut channels, parsed.names)?;
        train_seqs.push(parsed.data);
    }
    let mut test_seqs = Vec::with_capacity(test.len());
    for file in test {
        let parsed = parse_file(&file.data, schema, file.labels.is_none())?;
        check_channels(&file.data, &mut channels, parsed.names)?;
        let labels = match &file.labels {
            Some(label_path) => read_label_file(label_path, schema)?,
            None => parsed.labels.expect("labels requested"),
        };
        if labels.len() != parsed.data.ncols() {
            return Err(Error::data(
                file.labels.as_ref().unwrap_or(&file.data),
                0,
                format!("{} labels for {} timesteps", labels.len(), parsed.data.ncols()),
            ));
        }
        test_seqs.push(LabeledSeries {
            id: series_id(&file.data),
            data: parsed.data,
            labels,
        });
    }
    Ok(TimeSeriesDataset {
        channels: channels.unwrap_or_default(),
        train: train_seqs,
        test: test_seqs,
        normalization: None,
    })
}

fn check_channels(path: &Path, seen: &mut Option<Vec<String>>, names: Vec<String>) -> Result<()> {
    match seen {
        None => {
            *seen = Some(names);
            Ok(())
        }
        Some(prev) if prev.len() == names.len() => Ok(()),
        Some(prev) => Err(Error::data(
            path,
            1,
            format!("{} channels where other files have {}", names.len(), prev.len()),
        )),
    }
}
