//! Row-oriented Cholesky factor that can grow one variable at a time.
//!
//! Appending a variable computes exactly the row a from-scratch
//! factorization would compute, in the same operation order, so the greedy
//! search and the direct path produce bit-identical densities.

use std::f64::consts::PI;

/// Lower-triangular factor stored row by row (`rows[i].len() == i + 1`).
#[derive(Debug, Clone, Default)]
pub(crate) struct GrowingCholesky {
    rows: Vec<Vec<f64>>,
    log_det_half: f64,
}

impl GrowingCholesky {
    /// Sum of `ln L[i][i]`, i.e. half the log-determinant.
    pub fn log_det_half(&self) -> f64 {
        self.log_det_half
    }

    /// Candidate next row for a variable whose covariances with the current
    /// variables are `cross` and whose variance is `var`. `None` when the
    /// extended matrix is not positive definite.
    pub fn candidate_row(&self, cross: &[f64], var: f64) -> Option<(Vec<f64>, f64)> {
        let n = self.rows.len();
        debug_assert_eq!(cross.len(), n);
        let mut row = Vec::with_capacity(n + 1);
        for c in 0..n {
            let lc = &self.rows[c];
            let mut s = cross[c];
            for k in 0..c {
                s -= row[k] * lc[k];
            }
            row.push(s / lc[c]);
        }
        let mut s = var;
        for v in &row {
            s -= v * v;
        }
        if !(s > 0.0 && s.is_finite()) {
            return None;
        }
        let diag = s.sqrt();
        row.push(diag);
        Some((row, diag))
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.rows.len() + 1);
        self.log_det_half += row[row.len() - 1].ln();
        self.rows.push(row);
    }

    /// Factorizes a dense symmetric matrix given as an entry accessor.
    pub fn factor(n: usize, entry: impl Fn(usize, usize) -> f64) -> Option<Self> {
        let mut f = Self::default();
        for i in 0..n {
            let cross: Vec<f64> = (0..i).map(|j| entry(i, j)).collect();
            let (row, _) = f.candidate_row(&cross, entry(i, i))?;
            f.push_row(row);
        }
        Some(f)
    }

    /// Next whitened coordinate given the previous ones, for a row of `new_row`.
    pub fn whiten_next(row: &[f64], centered: f64, prev: &[f64]) -> f64 {
        let n = prev.len();
        let mut s = centered;
        for k in 0..n {
            s -= row[k] * prev[k];
        }
        s / row[n]
    }

    /// Solves `L y = x` by forward substitution.
    pub fn whiten(&self, centered: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(centered.len());
        for (i, row) in self.rows.iter().enumerate() {
            let v = Self::whiten_next(row, centered[i], &y);
            y.push(v);
        }
        y
    }
}

/// `ln N(x; mu, Sigma)` from the squared Mahalanobis norm and `sum ln L_ii`.
pub(crate) fn log_density(quad: f64, log_det_half: f64, dims: usize) -> f64 {
    -0.5 * quad - log_det_half - 0.5 * dims as f64 * (2.0 * PI).ln()
}
