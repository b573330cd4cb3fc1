//! Tridiagonal systems.
//!
//! Every operator in this crate is a three-point stencil over the unknown
//! (non-Dirichlet) nodes, so a Thomas sweep is all the linear algebra needed.

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals. `lower[0]` and `upper[n - 1]`
/// are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// `I + scale * self`.
    pub fn shifted_identity(&self, scale: f64) -> Tridiagonal {
        Tridiagonal {
            lower: self.lower.iter().map(|v| scale * v).collect(),
            diag: self.diag.iter().map(|v| 1.0 + scale * v).collect(),
            upper: self.upper.iter().map(|v| scale * v).collect(),
        }
    }

    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let pivot = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.lower[i] * c[i - 1]
            };
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::Numerical(format!("zero pivot in tridiagonal solve at row {i}")));
            }
            d[i] = 1.0 / pivot;
            c[i] = if i + 1 < n { self.upper[i] * d[i] } else { 0.0 };
        }
        Ok(TridiagonalLu { lower: self.lower.clone(), c, inv_pivot: d })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.factor()?.solve_in_place(&mut x);
        Ok(x)
    }
}

/// Thomas factorization, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    c: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagonalLu {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        debug_assert_eq!(n, self.c.len());
        if n == 0 {
            return;
        }
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c[i] * x[i + 1];
        }
    }
}
