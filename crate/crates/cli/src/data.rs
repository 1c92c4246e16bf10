//! CSV ingestion: a header row, then `y` followed by the regressors.

use std::io::Read;

use anyhow::{Context, Result};
use seqmon_core::Error;

pub struct CsvRows<R: Read> {
    reader: csv::Reader<R>,
    intercept: bool,
    line: usize,
    width: usize,
}

impl<R: Read> CsvRows<R> {
    pub fn new(input: R, intercept: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let width = reader
            .headers()
            .map_err(|e| Error::InvalidData(format!("CSV header: {e}")))?
            .len();
        if width == 0 {
            return Err(Error::InvalidData("CSV header is empty".into()).into());
        }
        Ok(Self {
            reader,
            intercept,
            line: 1,
            width,
        })
    }

    /// Regressors per row after the optional intercept is prepended.
    pub fn regressor_count(&self) -> usize {
        self.width - 1 + usize::from(self.intercept)
    }
}

impl<R: Read> Iterator for CsvRows<R> {
    type Item = Result<(f64, Vec<f64>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut rec = csv::StringRecord::new();
        self.line += 1;
        match self.reader.read_record(&mut rec) {
            Ok(false) => None,
            Err(e) => Some(Err(Error::InvalidData(format!(
                "CSV line {}: {e}",
                self.line
            ))
            .into())),
            Ok(true) => Some(parse_record(&rec, self.line, self.intercept)),
        }
    }
}

fn parse_record(rec: &csv::StringRecord, line: usize, intercept: bool) -> Result<(f64, Vec<f64>)> {
    let mut vals = Vec::with_capacity(rec.len() + 1);
    for field in rec.iter() {
        let v: f64 = field.parse().map_err(|_| {
            Error::InvalidData(format!("CSV line {line}: `{field}` is not a number"))
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidData(format!("CSV line {line}: non-finite value")).into());
        }
        vals.push(v);
    }
    let y = vals[0];
    let mut x = Vec::with_capacity(vals.len());
    if intercept {
        x.push(1.0);
    }
    x.extend_from_slice(&vals[1..]);
    Ok((y, x))
}

pub fn read_dataset(path: &std::path::Path, intercept: bool) -> Result<seqmon_core::Dataset> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = CsvRows::new(file, intercept)?
        .map(|r| r.map(|(y, x)| seqmon_core::Observation { y, x }))
        .collect::<Result<Vec<_>>>()?;
    Ok(seqmon_core::Dataset::new(rows, None)?)
}
