//! Long-format CSV ingestion.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};
use ndarray::Array2;
use synthctl_core::{CovariateTable64, GapSeries64, OutcomeKind, Panel64};
use thiserror::Error;

pub const PANEL_HEADER: [&str; 3] = ["unit", "period", "value"];
pub const COVARIATE_HEADER: [&str; 3] = ["unit", "predictor", "value"];
pub const GAPS_HEADER: [&str; 5] = ["period", "actual", "synthetic", "gap", "window"];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

fn parse_value(raw: &str) -> Result<f64, String> {
    let v: f64 = raw
        .parse()
        .map_err(|_| format!("non-numeric value `{raw}` (expected a dot-decimal number)"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{raw}`"));
    }
    Ok(v)
}

struct Table {
    shown: String,
    /// `(line, fields)` per data row.
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn row_err(&self, line: u64, message: impl Into<String>) -> LoadError {
        LoadError::Row {
            path: self.shown.clone(),
            line,
            message: message.into(),
        }
    }

    fn file_err(&self, message: impl Into<String>) -> LoadError {
        LoadError::File {
            path: self.shown.clone(),
            message: message.into(),
        }
    }
}

/// Reads every record under an exact header; all rows must have its width.
fn read_table(path: &Path, header: &[&str]) -> Result<Table, LoadError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| LoadError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let mut table = Table {
        shown,
        rows: Vec::new(),
    };

    let found = reader
        .headers()
        .map_err(|e| table.row_err(1, e.to_string()))?
        .clone();
    if !found.iter().eq(header.iter().copied()) {
        let found: Vec<&str> = found.iter().collect();
        return Err(table.row_err(
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        ));
    }
    let mut record = StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(table.row_err(line, e.to_string()));
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(table.row_err(
                line,
                format!(
                    "malformed row: expected {} fields, found {}",
                    header.len(),
                    record.len()
                ),
            ));
        }
        table.rows.push((line, record.clone()));
    }
    if table.rows.is_empty() {
        return Err(table.file_err("no data rows"));
    }
    Ok(table)
}

/// A `row x column` grid assembled from long-format cells.
struct Grid {
    rows: Vec<String>,
    cols: Vec<String>,
    values: Array2<f64>,
}

fn assemble(table: &Table, what: &str, sort_numeric_cols: bool) -> Result<Grid, LoadError> {
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    let mut row_ix: HashMap<String, usize> = HashMap::new();
    let mut col_ix: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    let mut cells = Vec::with_capacity(table.rows.len());

    for (line, rec) in &table.rows {
        let (r, c) = (&rec[0], &rec[1]);
        if r.is_empty() || c.is_empty() {
            return Err(table.row_err(*line, "malformed row: empty label"));
        }
        let value = parse_value(&rec[2]).map_err(|m| table.row_err(*line, m))?;
        let ri = *row_ix.entry(r.to_owned()).or_insert_with(|| {
            rows.push(r.to_owned());
            rows.len() - 1
        });
        let ci = *col_ix.entry(c.to_owned()).or_insert_with(|| {
            cols.push(c.to_owned());
            cols.len() - 1
        });
        if let Some(first) = seen.insert((ri, ci), *line) {
            return Err(table.row_err(
                *line,
                format!("duplicate cell ({r}, {c}); first given on line {first}"),
            ));
        }
        cells.push((ri, ci, value));
    }

    // Integer labels sort numerically; anything else keeps file order.
    let mut order: Vec<usize> = (0..cols.len()).collect();
    if sort_numeric_cols {
        let parsed: Option<Vec<i64>> = cols.iter().map(|c| c.parse().ok()).collect();
        if let Some(keys) = parsed {
            order.sort_by_key(|&i| keys[i]);
        }
    }
    let mut position = vec![0; cols.len()];
    for (p, &i) in order.iter().enumerate() {
        position[i] = p;
    }

    if cells.len() != rows.len() * cols.len() {
        for (ri, r) in rows.iter().enumerate() {
            for (ci, c) in cols.iter().enumerate() {
                if !seen.contains_key(&(ri, ci)) {
                    return Err(table.file_err(format!(
                        "incomplete {what}: no value for ({r}, {c}); {} of {} cells present",
                        cells.len(),
                        rows.len() * cols.len()
                    )));
                }
            }
        }
    }
    let mut values = Array2::zeros((rows.len(), cols.len()));
    for (ri, ci, v) in cells {
        values[[ri, position[ci]]] = v;
    }
    let cols = order.iter().map(|&i| cols[i].clone()).collect();
    Ok(Grid { rows, cols, values })
}

/// Loads a `unit,period,value` panel. Units keep file order; periods are
/// sorted numerically when every label is an integer.
pub fn load_panel(path: &Path) -> Result<Panel64, LoadError> {
    let table = read_table(path, &PANEL_HEADER)?;
    let grid = assemble(&table, "panel", true)?;
    let kind = if grid.values.iter().all(|v| (0.0..=1.0).contains(v)) {
        OutcomeKind::Share
    } else {
        OutcomeKind::Real
    };
    Panel64::new(grid.rows, grid.cols, grid.values, kind).map_err(|e| table.file_err(e.to_string()))
}

/// Loads a `unit,predictor,value` covariate table.
pub fn load_covariates(path: &Path) -> Result<CovariateTable64, LoadError> {
    let table = read_table(path, &COVARIATE_HEADER)?;
    let grid = assemble(&table, "covariate table", false)?;
    CovariateTable64::new(grid.rows, grid.cols, grid.values)
        .map_err(|e| table.file_err(e.to_string()))
}

/// Reads back a `gaps.csv` written by this tool.
pub fn load_gaps(path: &Path) -> Result<GapSeries64, LoadError> {
    let table = read_table(path, &GAPS_HEADER)?;
    let mut periods = Vec::new();
    let (mut actual, mut synthetic) = (Vec::new(), Vec::new());
    let mut t0 = 0;
    for (line, rec) in &table.rows {
        let num = |i: usize| parse_value(&rec[i]).map_err(|m| table.row_err(*line, m));
        periods.push(rec[0].to_owned());
        actual.push(num(1)?);
        synthetic.push(num(2)?);
        match &rec[4] {
            "pre" if t0 + 1 == periods.len() => t0 += 1,
            "pre" => return Err(table.row_err(*line, "pre-period row after a post-period row")),
            "post" => {}
            other => return Err(table.row_err(*line, format!("unknown window `{other}`"))),
        }
    }
    GapSeries64::new(periods, actual, synthetic, t0).map_err(|e| table.file_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn panel_err(contents: &str) -> String {
        load_panel(file(contents).path()).unwrap_err().to_string()
    }

    #[test]
    fn missing_cell_is_an_incomplete_panel() {
        let msg = panel_err("unit,period,value\nA,1,0.1\nA,2,0.2\nB,1,0.0\n");
        assert!(msg.contains("incomplete panel"), "{msg}");
        assert!(msg.contains("(B, 2)"), "{msg}");
    }

    #[test]
    fn comma_decimal_is_rejected_with_its_line() {
        let msg = panel_err("unit,period,value\nA,1,0.1\nA,2,0,5\n");
        assert!(msg.contains("line 3"), "{msg}");
        let msg = panel_err("unit,period,value\nA,1,0.1\nA,2,\"0,5\"\n");
        assert!(msg.contains("line 3") && msg.contains("non-numeric"), "{msg}");
    }

    #[test]
    fn duplicate_cells_report_both_lines() {
        let msg = panel_err("unit,period,value\nA,1,0.1\nB,1,0.2\nA,1,0.3\n");
        assert!(msg.contains("line 4") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn header_is_required() {
        let msg = panel_err("A,1,0.1\nA,2,0.2\n");
        assert!(msg.contains("line 1") && msg.contains("expected header"), "{msg}");
    }

    #[test]
    fn integer_periods_sort_numerically() {
        let p = load_panel(file("unit,period,value\nA,10,1\nA,2,0.5\nA,9,0.25\nB,2,0\nB,9,0\nB,10,0\n").path())
            .unwrap();
        assert_eq!(p.period_ids(), ["2", "9", "10"]);
        assert_eq!(p.series(0), [0.5, 0.25, 1.0]);
        assert_eq!(p.kind(), OutcomeKind::Share);
    }

    #[test]
    fn text_periods_keep_file_order() {
        let p = load_panel(file("unit,period,value\nA,w2,1\nA,w1,2\nB,w2,3\nB,w1,4\n").path()).unwrap();
        assert_eq!(p.period_ids(), ["w2", "w1"]);
        assert_eq!(p.kind(), OutcomeKind::Real);
    }

    #[test]
    fn covariates_load_in_file_order() {
        let c = load_covariates(file("unit,predictor,value\nA,z,1\nA,a,2\nB,z,3\nB,a,4\n").path())
            .unwrap();
        assert_eq!(c.predictor_names(), ["z", "a"]);
        assert_eq!(c.row_of("B"), Some(vec![3.0, 4.0]));
    }
}
