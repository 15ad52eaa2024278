//! Column-oriented response/covariate table and threshold selection.

use serde::{Deserialize, Serialize};

use crate::error::{GptError, Result};

/// One covariate column.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Category ids index into `levels`.
    Categorical {
        ids: Vec<u32>,
        levels: Vec<String>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical { levels, .. } => ColumnKind::Categorical { levels: levels.clone() },
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical { ids, levels } => {
                Column::Categorical { ids: rows.iter().map(|&i| ids[i]).collect(), levels: levels.clone() }
            }
        }
    }

    pub fn value(&self, row: usize) -> Value {
        match self {
            Column::Numeric(v) => Value::Num(v[row]),
            Column::Categorical { ids, .. } => Value::Cat(ids[row]),
        }
    }
}

/// Type of a covariate, with the level table for categorical ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

/// A single covariate value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    /// Category id. Ids at or past the training level table are unseen levels.
    Cat(u32),
}

/// Covariate names and kinds; the schema a fitted tree expects at prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub response: String,
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub response_name: String,
    pub response: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Column>,
}

impl Dataset {
    pub fn new(
        response_name: impl Into<String>,
        response: Vec<f64>,
        names: Vec<String>,
        columns: Vec<Column>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(GptError::Schema(format!("{} names for {} columns", names.len(), columns.len())));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != response.len() {
                return Err(GptError::Schema(format!(
                    "column {name} has {} rows, response has {}",
                    col.len(),
                    response.len()
                )));
            }
            if let Column::Categorical { ids, levels } = col {
                if let Some(bad) = ids.iter().find(|&&id| id as usize >= levels.len()) {
                    return Err(GptError::Schema(format!("column {name}: category id {bad} has no level")));
                }
            }
        }
        Ok(Dataset { response_name: response_name.into(), response, names, columns })
    }

    /// A dataset with one numeric covariate named `x`.
    pub fn univariate(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Dataset::new("y", y, vec!["x".into()], vec![Column::Numeric(x)])
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn schema(&self) -> Schema {
        Schema {
            response: self.response_name.clone(),
            names: self.names.clone(),
            kinds: self.columns.iter().map(Column::kind).collect(),
        }
    }

    /// Covariate vector of one row.
    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    /// Rows `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            response_name: self.response_name.clone(),
            response: rows.iter().map(|&i| self.response[i]).collect(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
        }
    }
}

/// Keeps the rows with `Y > u` and replaces the response by the excess `Y - u`.
pub fn pot_filter(d: &Dataset, u: f64) -> Result<Dataset> {
    if !u.is_finite() {
        return Err(GptError::Domain(format!("threshold must be finite, got {u}")));
    }
    let rows: Vec<usize> = (0..d.n_rows()).filter(|&i| d.response[i] > u).collect();
    if rows.is_empty() {
        return Err(GptError::EmptyExceedance(u));
    }
    let mut out = d.select(&rows);
    for y in &mut out.response {
        *y -= u;
    }
    Ok(out)
}

/// Empirical quantile of a sample with linear interpolation between order
/// statistics (Hyndman–Fan type 7).
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(GptError::Domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    if values.is_empty() {
        return Err(GptError::EmptyInput("no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Empirical `q`-quantile of the response.
pub fn quantile_threshold(d: &Dataset, q: f64) -> Result<f64> {
    empirical_quantile(&d.response, q)
}
