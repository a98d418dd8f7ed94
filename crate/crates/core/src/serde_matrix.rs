//! Row-major (de)serialization of dense matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct RowMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let data = m.transpose().as_slice().to_vec();
    RowMajor {
        rows: m.nrows(),
        cols: m.ncols(),
        data,
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let rm = RowMajor::deserialize(d)?;
    if rm.rows * rm.cols != rm.data.len() {
        return Err(serde::de::Error::custom(format!(
            "matrix {}x{} has {} values",
            rm.rows,
            rm.cols,
            rm.data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rm.rows, rm.cols, &rm.data))
}
