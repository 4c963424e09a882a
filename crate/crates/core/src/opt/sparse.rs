/// Compressed sparse row matrix. Only the operations the QP solver needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(ncols: usize) -> Self {
        CsrMatrix {
            nrows: 0,
            ncols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Append a row given as `(column, value)` pairs. Duplicate columns are summed
    /// and exact zeros dropped.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        let mut row: Vec<(usize, f64)> = entries.to_vec();
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (c, v) in row {
            assert!(c < self.ncols, "column {c} out of range {}", self.ncols);
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        for (c, v) in merged {
            if v != 0.0 {
                self.col_idx.push(c);
                self.values.push(v);
            }
        }
        self.row_ptr.push(self.col_idx.len());
        self.nrows += 1;
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = A x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            *o = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `out = Aᵀ y`
    pub fn tmul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate().take(self.nrows) {
            if yi != 0.0 {
                for (c, v) in self.row(i) {
                    out[c] += v * yi;
                }
            }
        }
    }

    /// Scale row `i` by `r[i]` and column `j` by `s[j]`.
    pub fn scale(&mut self, r: &[f64], s: &[f64]) {
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.values[k] *= r[i] * s[self.col_idx[k]];
            }
        }
    }

    pub fn row_inf_norm(&self, i: usize) -> f64 {
        self.row(i).fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut n = vec![0.0f64; self.ncols];
        for (&c, &v) in self.col_idx.iter().zip(&self.values) {
            n[c] = n[c].max(v.abs());
        }
        n
    }
}
