//! CSV input and output.

use std::io::Write;
use std::path::Path;

use adapt_core::{ingest, HypothesisSet};

use crate::config::{Columns, SCHEMA_VERSION};
use crate::error::{io_err, write_err, CliError, CliResult};

/// Parsed input table.
#[derive(Debug)]
pub struct Table {
    pub covariate_names: Vec<String>,
    pub set: HypothesisSet,
}

/// Reads a headed CSV. The p-value column is required; covariates are the
/// listed columns or every other column. Lines starting with `#` are skipped.
pub fn read_table(path: &Path, columns: &Columns) -> CliResult<Table> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_table_from(file, columns).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_table_from(reader: impl std::io::Read, columns: &Columns) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("no column `{name}` in header {headers:?}")))
    };
    let p_col = find(&columns.p)?;
    let cov_cols: Vec<usize> = match &columns.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<CliResult<_>>()?,
        None => (0..headers.len()).filter(|&c| c != p_col).collect(),
    };
    let mut pvalues = Vec::new();
    let mut covariates = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("row {}: {e}", row + 1)))?;
        let cell = |c: usize| -> CliResult<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| CliError::Data(format!("row {}, column `{}`: `{raw}` is not a number", row + 1, headers[c])))
        };
        pvalues.push(cell(p_col)?);
        covariates.push(cov_cols.iter().map(|&c| cell(c)).collect::<CliResult<Vec<f64>>>()?);
    }
    if pvalues.is_empty() {
        return Err(CliError::Data("no rows".into()));
    }
    let set = ingest(&pvalues, &covariates)?;
    Ok(Table {
        covariate_names: cov_cols.iter().map(|&c| headers[c].clone()).collect(),
        set,
    })
}

/// Extra per-hypothesis columns: a name and one value per row.
pub struct Column {
    pub name: String,
    pub values: Vec<String>,
}

/// Writes `#schema=1`, then index, covariates, p and the extra columns.
pub fn write_table(path: &Path, table: &Table, extra: &[Column]) -> CliResult<()> {
    let mut buf = Vec::new();
    writeln!(buf, "#schema={SCHEMA_VERSION}").expect("in memory");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["index".to_string()];
        header.extend(table.covariate_names.iter().cloned());
        header.push("p".into());
        header.extend(extra.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(|e| CliError::Internal(e.to_string()))?;
        let h = &table.set;
        for i in 0..h.len() {
            let mut rec = vec![i.to_string()];
            rec.extend(h.covariate(i).iter().map(f64::to_string));
            rec.push(h.pvalues()[i].to_string());
            rec.extend(extra.iter().map(|c| c.values[i].clone()));
            w.write_record(&rec).map_err(|e| CliError::Internal(e.to_string()))?;
        }
        w.flush().map_err(write_err(path))?;
    }
    std::fs::write(path, buf).map_err(write_err(path))
}

/// `1` for indices in `rejected`, `0` otherwise.
pub fn indicator(n: usize, rejected: &[usize]) -> Vec<String> {
    let mut v = vec!["0".to_string(); n];
    for &i in rejected {
        v[i] = "1".into();
    }
    v
}
