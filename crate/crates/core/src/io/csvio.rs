//! RFC 4180 CSV ingestion and output of datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Column, ColumnKind, Dataset, Schema, Value};
use crate::error::{GptError, Result};
use crate::numfmt::sig17;

/// How to read a table: which column is the response and how to type the
/// covariates. Columns not listed are numeric when every cell parses as a
/// number and categorical otherwise.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadSpec {
    pub response: String,
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
    /// Columns to drop.
    pub ignore: Vec<String>,
}

impl LoadSpec {
    pub fn new(response: impl Into<String>) -> Self {
        LoadSpec { response: response.into(), ..LoadSpec::default() }
    }
}

struct Raw {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_raw(r: impl Read) -> Result<Raw> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(GptError::EmptyInput("no header row".into()));
    }
    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(GptError::Parse { row: 1, column: h.clone(), message: "duplicate column name".into() });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| GptError::Parse { row: i + 2, column: String::new(), message: e.to_string() })?;
        rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(GptError::EmptyInput("no data rows".into()));
    }
    Ok(Raw { header, rows })
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let err = |message: String| GptError::Parse { row, column: column.to_string(), message };
    if cell.is_empty() {
        return Err(err("missing value".into()));
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_nan() => Err(err(format!("not a number: {cell:?}"))),
        Ok(v) => Ok(v),
        Err(_) => Err(err(format!("not a number: {cell:?}"))),
    }
}

/// Reads a dataset from CSV text. Rows are numbered as file lines, the
/// header being line 1.
pub fn read_dataset(r: impl Read, spec: &LoadSpec) -> Result<Dataset> {
    let raw = read_raw(r)?;
    for name in spec.categorical.iter().chain(&spec.numeric).chain(&spec.ignore) {
        if !raw.header.contains(name) {
            return Err(GptError::Schema(format!("column {name} not found")));
        }
    }
    let resp_idx = raw
        .header
        .iter()
        .position(|h| *h == spec.response)
        .ok_or_else(|| GptError::Schema(format!("response column {} not found", spec.response)))?;
    let response = raw
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse_number(&r[resp_idx], i + 2, &spec.response))
        .collect::<Result<Vec<f64>>>()?;
    if let Some(i) = response.iter().position(|v| v.is_infinite()) {
        return Err(GptError::Parse { row: i + 2, column: spec.response.clone(), message: "infinite response".into() });
    }

    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (j, name) in raw.header.iter().enumerate() {
        if j == resp_idx || spec.ignore.contains(name) {
            continue;
        }
        let cells = raw.rows.iter().map(|r| r[j].as_str());
        let categorical = spec.categorical.contains(name)
            || (!spec.numeric.contains(name) && cells.clone().any(|c| c.parse::<f64>().is_err()));
        let col = if categorical {
            if let Some(i) = cells.clone().position(str::is_empty) {
                return Err(GptError::Parse { row: i + 2, column: name.clone(), message: "missing value".into() });
            }
            let levels: Vec<String> = cells.clone().collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
            let index: BTreeMap<&str, u32> = levels.iter().enumerate().map(|(k, l)| (l.as_str(), k as u32)).collect();
            let ids = cells.map(|c| index[c]).collect();
            Column::Categorical { ids, levels }
        } else {
            let values = cells.enumerate().map(|(i, c)| parse_number(c, i + 2, name)).collect::<Result<Vec<f64>>>()?;
            Column::Numeric(values)
        };
        names.push(name.clone());
        columns.push(col);
    }
    Dataset::new(spec.response.clone(), response, names, columns)
}

pub fn load_csv(path: &Path, spec: &LoadSpec) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?, spec)
}

/// Covariate rows of a query table, converted with a training schema.
/// Category labels unseen in training map to ids past the level table.
pub fn read_query(r: impl Read, schema: &Schema) -> Result<Vec<Vec<Value>>> {
    let raw = read_raw(r)?;
    let missing: Vec<&str> = schema.names.iter().filter(|n| !raw.header.contains(n)).map(String::as_str).collect();
    if !missing.is_empty() {
        let extra: Vec<&str> = raw
            .header
            .iter()
            .filter(|h| !schema.names.contains(h) && **h != schema.response)
            .map(String::as_str)
            .collect();
        return Err(GptError::Schema(format!(
            "query lacks columns [{}]; unexpected columns [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let positions: Vec<usize> =
        schema.names.iter().map(|n| raw.header.iter().position(|h| h == n).expect("checked above")).collect();
    let mut out = Vec::with_capacity(raw.rows.len());
    for (i, row) in raw.rows.iter().enumerate() {
        let mut x = Vec::with_capacity(positions.len());
        for ((&p, kind), name) in positions.iter().zip(&schema.kinds).zip(&schema.names) {
            let cell = row[p].as_str();
            x.push(match kind {
                ColumnKind::Numeric => Value::Num(parse_number(cell, i + 2, name)?),
                ColumnKind::Categorical { levels } => {
                    if cell.is_empty() {
                        return Err(GptError::Parse {
                            row: i + 2,
                            column: name.clone(),
                            message: "missing value".into(),
                        });
                    }
                    Value::Cat(levels.iter().position(|l| l == cell).unwrap_or(levels.len()) as u32)
                }
            });
        }
        out.push(x);
    }
    Ok(out)
}

/// Writes the response followed by the covariates; numbers use 17
/// significant digits.
pub fn write_dataset(d: &Dataset, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![d.response_name.clone()];
    header.extend(d.names.iter().cloned());
    out.write_record(&header)?;
    for i in 0..d.n_rows() {
        let mut rec = vec![sig17(d.response[i])];
        for c in &d.columns {
            rec.push(match c {
                Column::Numeric(v) => sig17(v[i]),
                Column::Categorical { ids, levels } => levels[ids[i] as usize].clone(),
            });
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
