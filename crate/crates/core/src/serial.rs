//! JSON layout for complex matrices: separate row-major real and imaginary
//! parts, `{"re": [[..], ..], "im": [[..], ..]}`.

use nalgebra::SMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ReIm {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ReIm {
    pub fn from_matrix<const N: usize>(m: &SMatrix<Complex64, N, N>) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..N)
                .map(|i| (0..N).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        ReIm {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_matrix<const N: usize>(&self) -> Result<SMatrix<Complex64, N, N>, String> {
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == N && rows.iter().all(|r| r.len() == N);
        if !shape_ok(&self.re) || !shape_ok(&self.im) {
            return Err(format!("expected {N}x{N} `re` and `im` arrays"));
        }
        Ok(SMatrix::from_fn(|i, j| {
            Complex64::new(self.re[i][j], self.im[i][j])
        }))
    }
}
