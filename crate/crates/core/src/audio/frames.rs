use accentvc_tensor::Tensor;

use crate::error::{invalid, Result};

/// Row-major `rows × dims` matrix of per-frame values.
#[derive(Clone, Debug, PartialEq)]
pub struct Frames {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
}

impl Frames {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dims {
            return Err(invalid(format!(
                "{} values cannot form a {rows}×{dims} frame matrix",
                data.len()
            )));
        }
        Ok(Self { rows, dims, data })
    }

    pub fn zeros(rows: usize, dims: usize) -> Self {
        Self {
            rows,
            dims,
            data: vec![0.0; rows * dims],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(invalid("ragged frame rows"));
        }
        Ok(Self {
            rows: rows.len(),
            dims,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn column(&self, j: usize) -> Vec<f32> {
        (0..self.rows).map(|i| self.data[i * self.dims + j]).collect()
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Frames {
        assert!(start + len <= self.rows, "row slice out of range");
        Frames {
            rows: len,
            dims: self.dims,
            data: self.data[start * self.dims..(start + len) * self.dims].to_vec(),
        }
    }

    /// As an `f64` tensor of shape `[rows, dims]`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.rows, self.dims],
            self.data.iter().map(|&x| x as f64).collect(),
        )
    }

    /// Mean absolute difference to another matrix of the same shape.
    pub fn l1_mean(&self, other: &Frames) -> f64 {
        assert_eq!((self.rows, self.dims), (other.rows, other.dims));
        if self.data.is_empty() {
            return 0.0;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>()
            / self.data.len() as f64
    }
}

/// Repeat every row `factor` times in place: row `i` lands on rows
/// `factor*i .. factor*i + factor - 1`.
pub fn upsample_frames(seq: &Frames, factor: usize) -> Result<Frames> {
    if factor < 1 {
        return Err(invalid("upsampling factor must be at least 1"));
    }
    let mut data = Vec::with_capacity(seq.data.len() * factor);
    for i in 0..seq.rows {
        for _ in 0..factor {
            data.extend_from_slice(seq.row(i));
        }
    }
    Ok(Frames {
        rows: seq.rows * factor,
        dims: seq.dims,
        data,
    })
}
