//! placeholder
pub fn basis_sparsity(_w: &crate::matrix::NonNegMatrix, _t: f64) -> f64 { 0.0 }
