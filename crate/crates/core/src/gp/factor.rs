//! Lower-triangular Cholesky factor that grows one row at a time.

/// Diagonal additions tried, in order, when a new pivot is not positive.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, Default)]
pub(crate) struct GrowingCholesky {
    rows: Vec<Vec<f64>>,
    jitter: Vec<f64>,
}

impl GrowingCholesky {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Jitter added to each diagonal entry so far.
    pub fn jitter(&self) -> &[f64] {
        &self.jitter
    }

    /// Appends the row for a new variable with covariances `off` against the
    /// existing variables and variance `diag`. Returns the jitter used, or the
    /// last jitter tried if every pivot failed.
    pub fn append(&mut self, off: &[f64], diag: f64) -> Result<f64, f64> {
        debug_assert_eq!(off.len(), self.len());
        let mut row = off.to_vec();
        self.forward_from(&mut row, 0);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        for &jitter in &JITTER_LADDER {
            let pivot = diag + jitter - sq;
            if pivot > 0.0 && pivot.is_finite() {
                row.push(pivot.sqrt());
                self.rows.push(row);
                self.jitter.push(jitter);
                return Ok(jitter);
            }
        }
        Err(JITTER_LADDER[JITTER_LADDER.len() - 1])
    }

    /// Drops rows beyond the first `n`.
    pub fn truncate(&mut self, n: usize) {
        self.rows.truncate(n);
        self.jitter.truncate(n);
    }

    /// Forward substitution in place for entries `start..`, assuming entries
    /// before `start` already hold the solution.
    pub fn forward_from(&self, b: &mut [f64], start: usize) {
        for i in start..b.len() {
            let row = &self.rows[i];
            let mut acc = b[i];
            for (l, v) in row[..i].iter().zip(&b[..i]) {
                acc -= l * v;
            }
            b[i] = acc / row[i];
        }
    }

    /// Extends a solved vector `v` by the entries `tail` of the right-hand side.
    pub fn extend_solution(&self, v: &mut Vec<f64>, tail: &[f64]) {
        let start = v.len();
        v.extend_from_slice(tail);
        self.forward_from(v, start);
    }

    /// Reconstructs `L Lᵀ` (test support).
    #[cfg(test)]
    pub fn product(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.rows[i][k] * self.rows[j][k]).sum();
                out[i][j] = s;
                out[j][i] = s;
            }
        }
        out
    }
}
