use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact storage of a symmetric matrix: the upper triangle, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricJson {
    pub d: usize,
    pub triu: Vec<f64>,
}

impl SymmetricJson {
    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        let d = a.nrows();
        let triu = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).map(|ij| a[ij]).collect();
        Self { d, triu }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.d;
        if self.triu.len() != d * (d + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: d * (d + 1) / 2,
                got: self.triu.len(),
            });
        }
        let mut a = DMatrix::zeros(d, d);
        let mut it = self.triu.iter();
        for i in 0..d {
            for j in i..d {
                let x = *it.next().unwrap();
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        Ok(a)
    }
}

/// Dense row-major CSV without a header.
pub fn write_matrix_csv<W: Write>(a: &DMatrix<f64>, w: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..a.nrows() {
        w.write_record(a.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::param("matrix csv", format!("bad value `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::param("matrix csv", "ragged rows"));
    }
    Ok(DMatrix::from_row_iterator(n, c, rows.into_iter().flatten()))
}
