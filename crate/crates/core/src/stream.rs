//! Observation streams and the CSV interchange format.
//!
//! A stream is an ordered sequence of `d`-dimensional observations, indexed by
//! time `t = 1, 2, ...`, split into a training block `1..=m` and the monitoring
//! period after it. The CSV layout is one observation per line with a header
//! `y1,...,yd` and, for regression data, a trailing response column `z`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStream {
    dim: usize,
    train_len: usize,
    data: Vec<f64>,
    response: Option<Vec<f64>>,
}

impl ObservationStream {
    /// Build a stream from row-major data. Values are not checked here; use
    /// [`validate_stream`] for a full scan.
    pub fn new(dim: usize, train_len: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Self {
            dim,
            train_len,
            data,
            response: None,
        })
    }

    pub fn from_rows(train_len: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, train_len, data)
    }

    pub fn with_response(mut self, z: Vec<f64>) -> Result<Self> {
        if z.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: z.len(),
            });
        }
        self.response = Some(z);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_len(&self) -> usize {
        self.train_len
    }

    pub fn set_train_len(&mut self, m: usize) {
        self.train_len = m;
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Observation at time `t` (1-based).
    pub fn at(&self, t: usize) -> &[f64] {
        self.row(t - 1)
    }

    /// Observation at 0-based position `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// The training block as an `m x d` matrix.
    pub fn training_matrix(&self) -> Result<DMatrix<f64>> {
        let m = self.train_len;
        if self.len() < m {
            return Err(Error::InsufficientData {
                needed: m,
                available: self.len(),
            });
        }
        Ok(DMatrix::from_row_slice(m, self.dim, &self.data[..m * self.dim]))
    }

    /// Sub-stream of 0-based rows `start..end`, with a new training length.
    pub fn slice(&self, start: usize, end: usize, train_len: usize) -> Self {
        let end = end.min(self.len());
        Self {
            dim: self.dim,
            train_len,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            response: self.response.as_ref().map(|z| z[start..end].to_vec()),
        }
    }

    /// Multiply every observation (and response) by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            dim: self.dim,
            train_len: self.train_len,
            data: self.data.iter().map(|x| x * lambda).collect(),
            response: self
                .response
                .as_ref()
                .map(|z| z.iter().map(|x| x * lambda).collect()),
        }
    }

    pub fn read_csv<R: Read>(reader: R, train_len: usize) -> Result<Self> {
        // Flexible so that short rows are reported by column name below.
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut y_cols = Vec::new();
        let mut z_col = None;
        for (i, h) in headers.iter().enumerate() {
            if h == "z" {
                z_col = Some(i);
            } else if let Some(j) = h.strip_prefix('y').and_then(|s| s.parse::<usize>().ok()) {
                y_cols.push((j, i));
            } else {
                return Err(Error::param("csv header", format!("unexpected column `{h}`")));
            }
        }
        y_cols.sort_unstable();
        for (expected, &(j, _)) in (1..).zip(&y_cols) {
            if j != expected {
                return Err(Error::param("csv header", format!("missing column `y{expected}`")));
            }
        }
        if y_cols.is_empty() {
            return Err(Error::param("csv header", "missing column `y1`"));
        }
        let dim = y_cols.len();
        let mut data = Vec::new();
        let mut z = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                let Some(field) = rec.get(i) else {
                    return Err(Error::param(
                        "csv value",
                        format!("missing column `{}` at row {}", &headers[i], line + 1),
                    ));
                };
                if rec.len() > headers.len() {
                    return Err(Error::param("csv row", format!("row {} has {} fields", line + 1, rec.len())));
                }
                field.parse::<f64>().map_err(|_| {
                    Error::param(
                        "csv value",
                        format!("`{field}` in column `{}` at row {}", &headers[i], line + 1),
                    )
                })
            };
            for &(_, i) in &y_cols {
                data.push(parse(i)?);
            }
            if let Some(i) = z_col {
                z.push(parse(i)?);
            }
        }
        let stream = Self::new(dim, train_len, data)?;
        if z_col.is_some() {
            stream.with_response(z)
        } else {
            Ok(stream)
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("y{j}")).collect();
        if self.response.is_some() {
            header.push("z".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            if let Some(z) = &self.response {
                rec.push(z[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv_path(path: impl AsRef<Path>, train_len: usize) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, train_len)
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dim: usize,
    pub len: usize,
    pub train_len: usize,
    /// `(t, j)` pairs, both 1-based, where the value is NaN or infinite.
    pub non_finite: Vec<(usize, usize)>,
    pub train_available: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.non_finite.is_empty() && self.train_available
    }

    pub fn summary(&self) -> String {
        if self.is_ok() {
            return "ok".into();
        }
        let mut parts = Vec::new();
        if !self.train_available {
            parts.push("train_len unavailable".to_string());
        }
        if !self.non_finite.is_empty() {
            let locs: Vec<String> = self
                .non_finite
                .iter()
                .map(|(t, j)| format!("({t},{j})"))
                .collect();
            parts.push(format!("non-finite at {}", locs.join(" ")));
        }
        parts.join("; ")
    }
}

pub fn validate_stream(stream: &ObservationStream) -> ValidationReport {
    let non_finite = stream
        .rows()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, x)| !x.is_finite())
                .map(move |(j, _)| (i + 1, j + 1))
        })
        .collect();
    ValidationReport {
        dim: stream.dim(),
        len: stream.len(),
        train_len: stream.train_len(),
        non_finite,
        train_available: stream.train_len() >= 2 && stream.len() >= stream.train_len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_non_finite_location() {
        let mut rows = vec![vec![0.0; 3]; 5];
        rows[2][1] = f64::NAN;
        let s = ObservationStream::from_rows(2, &rows).unwrap();
        let r = validate_stream(&s);
        assert_eq!(r.non_finite, vec![(3, 2)]);
        assert!(!r.is_ok());
    }

    #[test]
    fn empty_stream_has_no_training_block() {
        let s = ObservationStream::new(2, 10, vec![]).unwrap();
        let r = validate_stream(&s);
        assert_eq!(r.summary(), "train_len unavailable");
    }

    #[test]
    fn well_formed_stream_is_ok() {
        let s = ObservationStream::new(5, 100, vec![1.0; 5 * 150]).unwrap();
        assert_eq!(validate_stream(&s).summary(), "ok");
    }

    #[test]
    fn csv_round_trip_with_response() {
        let s = ObservationStream::from_rows(1, &[vec![0.1, -2.5], vec![1e-300, 3.0]])
            .unwrap()
            .with_response(vec![0.5, -0.25])
            .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("y1,y2,z\n"));
        let back = ObservationStream::read_csv(&buf[..], 1).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_missing_column_is_named() {
        let err = ObservationStream::read_csv("y1,y3\n1,2\n".as_bytes(), 1).unwrap_err();
        assert!(err.to_string().contains("y2"), "{err}");
    }
}
