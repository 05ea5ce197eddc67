//! Dense non-negative matrix type and the elementwise/matrix kernels used by
//! the factorization and evaluation modules.
//!
//! All entries are finite and `>= 0` by construction; every kernel preserves
//! that closure. Storage is row-major dense `f64`.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

/// Dense matrix with every entry finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegMatrix {
    data: Array2<f64>,
}

impl NonNegMatrix {
    /// Builds a matrix from row-major values, validating shape and entries.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyShape { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(Error::DataLength {
                len: values.len(),
                rows,
                cols,
            });
        }
        let data = Array2::from_shape_vec((rows, cols), values)
            .expect("shape already validated against data length");
        Self::from_array(data)
    }

    /// Wraps an `ndarray` array, validating every entry.
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyShape { rows, cols });
        }
        for ((i, j), &v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::InvalidEntry {
                    value: v,
                    row: i,
                    col: j,
                    reason: "entry is not finite",
                });
            }
            if v < 0.0 {
                return Err(Error::InvalidEntry {
                    value: v,
                    row: i,
                    col: j,
                    reason: "entry is negative",
                });
            }
        }
        Ok(NonNegMatrix { data })
    }

    /// Wraps an update produced by a sign-preserving kernel, rejecting
    /// non-finite values (overflow in the reconstruction chain) instead of
    /// panicking. Non-negativity is the kernel's responsibility.
    pub(crate) fn from_array_checked_finite(data: Array2<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "update produced a non-finite entry ({v})"
            )));
        }
        Ok(Self::from_array_unchecked(data))
    }

    /// Wraps an array the caller has already produced from non-negative
    /// inputs. Validity is still checked in debug builds.
    pub(crate) fn from_array_unchecked(data: Array2<f64>) -> Self {
        debug_assert!(
            data.nrows() >= 1 && data.ncols() >= 1 && data.iter().all(|v| v.is_finite() && *v >= 0.0),
            "kernel produced an invalid NonNegMatrix"
        );
        NonNegMatrix { data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyShape { rows, cols });
        }
        Ok(NonNegMatrix {
            data: Array2::zeros((rows, cols)),
        })
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "identity requires n >= 1");
        NonNegMatrix {
            data: Array2::eye(n),
        }
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyShape { rows, cols });
        }
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidEntry {
                value,
                row: 0,
                col: 0,
                reason: "fill value must be finite and non-negative",
            });
        }
        Ok(NonNegMatrix {
            data: Array2::from_elem((rows, cols), value),
        })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[(row, col)]
    }

    /// Row-major view of all entries.
    pub fn values(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("NonNegMatrix storage is always standard layout")
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn transpose(&self) -> NonNegMatrix {
        // `t()` is a view; copy into standard layout so `values()` stays row-major.
        NonNegMatrix {
            data: self.data.t().as_standard_layout().to_owned(),
        }
    }

    /// Standard matrix product. Requires `self.cols == other.rows`.
    pub fn matmul(&self, other: &NonNegMatrix) -> Result<NonNegMatrix> {
        if self.cols() != other.rows() {
            return Err(Error::DimMismatch {
                a_rows: self.rows(),
                a_cols: self.cols(),
                b_rows: other.rows(),
                b_cols: other.cols(),
            });
        }
        Ok(NonNegMatrix::from_array_unchecked(
            self.data.dot(&other.data),
        ))
    }

    /// Elementwise product. Requires equal shapes.
    pub fn hadamard(&self, other: &NonNegMatrix) -> Result<NonNegMatrix> {
        check_same_shape("hadamard", self, other)?;
        Ok(NonNegMatrix::from_array_unchecked(&self.data * &other.data))
    }

    /// Entrywise `num / (den + eps)`. `eps > 0` guarantees finite output.
    pub fn safe_divide(num: &NonNegMatrix, den: &NonNegMatrix, eps: f64) -> Result<NonNegMatrix> {
        check_same_shape("safe_divide", num, den)?;
        if !(eps > 0.0) {
            return Err(Error::Config(format!("safe_divide eps must be > 0, got {eps}")));
        }
        let mut out = num.data.clone();
        Zip::from(&mut out).and(&den.data).for_each(|n, &d| {
            *n /= d + eps;
        });
        Ok(NonNegMatrix::from_array_unchecked(out))
    }

    /// Replaces each entry with the mean of its row, so every row of the
    /// result is constant across columns.
    pub fn row_mean_broadcast(&self) -> NonNegMatrix {
        let n = self.cols() as f64;
        let mut out = Array2::zeros(self.shape());
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let mean = row.sum() / n;
            out.row_mut(i).fill(mean);
        }
        NonNegMatrix::from_array_unchecked(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / (self.rows() * self.cols()) as f64
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

fn check_same_shape(context: &'static str, a: &NonNegMatrix, b: &NonNegMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context,
            a_rows: a.rows(),
            a_cols: a.cols(),
            b_rows: b.rows(),
            b_cols: b.cols(),
        });
    }
    Ok(())
}

/// Free-function form of [`NonNegMatrix::matmul`].
pub fn matmul(a: &NonNegMatrix, b: &NonNegMatrix) -> Result<NonNegMatrix> {
    a.matmul(b)
}

/// Free-function form of [`NonNegMatrix::hadamard`].
pub fn hadamard(a: &NonNegMatrix, b: &NonNegMatrix) -> Result<NonNegMatrix> {
    a.hadamard(b)
}

/// Free-function form of [`NonNegMatrix::safe_divide`].
pub fn safe_divide(num: &NonNegMatrix, den: &NonNegMatrix, eps: f64) -> Result<NonNegMatrix> {
    NonNegMatrix::safe_divide(num, den, eps)
}

/// Free-function form of [`NonNegMatrix::row_mean_broadcast`].
pub fn row_mean_broadcast(h: &NonNegMatrix) -> NonNegMatrix {
    h.row_mean_broadcast()
}
