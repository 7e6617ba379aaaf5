//! Series tables: one column per variable, a header naming the variables and
//! one row per time point.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<u32>>,
}

impl SeriesTable {
    pub fn column(&self, var: usize) -> Vec<u32> {
        self.rows.iter().map(|r| r[var]).collect()
    }

    /// Reorders columns to match `names`.
    pub fn select(&self, names: &[String]) -> Result<SeriesTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|x| x == n)
                    .ok_or_else(|| Error::Data(format!("column {n} missing from series")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SeriesTable {
            names: names.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

pub fn read_series<R: Read>(reader: R) -> Result<SeriesTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(Error::Data("header must name every column".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<u32>()
                    .map_err(|_| Error::Data(format!("row {}: {v:?} is not a nonnegative integer", i + 1)))
            })
            .collect::<Result<Vec<u32>>>()?;
        rows.push(row);
    }
    Ok(SeriesTable { names, rows })
}

pub fn write_series<W: Write>(writer: W, table: &SeriesTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.names).map_err(csv_err)?;
    for row in &table.rows {
        if row.len() != table.names.len() {
            return Err(Error::Shape("row length differs from header".into()));
        }
        w.write_record(row.iter().map(u32::to_string)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
