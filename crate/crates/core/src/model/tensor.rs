use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                layer: "tensor".into(),
                expected: format!("{rows}x{cols} = {} values", rows * cols),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Tensor2D { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    layer: "tensor".into(),
                    expected: format!("{cols} columns"),
                    actual: format!("{} columns", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2D {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Errors on the first non-finite entry.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Invalid(format!(
                "non-finite value in {what} at ({}, {})",
                i / self.cols.max(1),
                i % self.cols.max(1)
            ))),
        }
    }
}

/// `out[n x m] = a[n x k] * w[k x m] + b`, all row-major.
pub(crate) fn affine(a: &[f64], w: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(w.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        row.copy_from_slice(b);
        for (p, &a_ip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let w_row = &w[p * m..(p + 1) * m];
            for (o, &wv) in row.iter_mut().zip(w_row) {
                *o += a_ip * wv;
            }
        }
    }
}

/// `dw[k x m] += a^T * dz`, `db[m] += column sums of dz`.
pub(crate) fn accumulate_weight_grad(
    a: &[f64],
    dz: &[f64],
    n: usize,
    k: usize,
    m: usize,
    dw: &mut [f64],
    db: &mut [f64],
) {
    for i in 0..n {
        let dz_row = &dz[i * m..(i + 1) * m];
        for (d, &g) in db.iter_mut().zip(dz_row) {
            *d += g;
        }
        for (p, &a_ip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let dw_row = &mut dw[p * m..(p + 1) * m];
            for (d, &g) in dw_row.iter_mut().zip(dz_row) {
                *d += a_ip * g;
            }
        }
    }
}

/// Dot product with eight interleaved partial sums, combined in a fixed
/// order so results do not depend on the caller.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `da[n x k] = dz[n x m] * w^T`.
pub(crate) fn input_grad(dz: &[f64], w: &[f64], n: usize, k: usize, m: usize, da: &mut [f64]) {
    for i in 0..n {
        let dz_row = &dz[i * m..(i + 1) * m];
        for p in 0..k {
            let w_row = &w[p * m..(p + 1) * m];
            da[i * k + p] = dot(dz_row, w_row);
        }
    }
}
