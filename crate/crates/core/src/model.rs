use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A scalar black-box model of `dim()` inputs.
pub trait Model: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Evaluates every row of `x` (parallel map over rows).
    fn eval_rows(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.ncols() });
        }
        let vals: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map_init(
                || vec![0.0; x.ncols()],
                |row, i| {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = x[(i, j)];
                    }
                    self.eval(row)
                },
            )
            .collect();
        Ok(DVector::from_vec(vals))
    }
}

/// Adapts a closure to [`Model`].
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnModel { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}
