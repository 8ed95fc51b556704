//! Minimal sparse (CSR) and banded symmetric kernels for the saddle solves.
//!
//! The banded factorization is an unpivoted LDL^T. The assembled systems are
//! symmetric quasi-definite (positive face block, negative cell block after
//! the sign flip), for which LDL^T exists under any symmetric permutation, so
//! no pivoting is required at desk scale.

#[derive(Debug, thiserror::Error)]
pub enum LinAlgError {
    #[error("zero pivot at index {0}; matrix is singular to working precision")]
    ZeroPivot(usize),
    #[error("entry ({r}, {c}) outside bandwidth {bw}")]
    OutsideBand { r: usize, c: usize, bw: usize },
}

/// Compressed sparse row matrix with f64 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed in input
    /// order, keeping assembly deterministic.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1, k));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(cc, _)| *cc == c).map_or(0.0, |(_, v)| v)
    }

    /// `y += factor * A x`
    pub fn matvec_add(&self, x: &[f64], factor: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] += factor * acc;
        }
    }

    /// `y += factor * A^T x`
    pub fn transpose_matvec_add(&self, x: &[f64], factor: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        for r in 0..self.n_rows {
            let fx = factor * x[r];
            for (c, v) in self.row(r) {
                y[c] += v * fx;
            }
        }
    }
}

/// Symmetric banded matrix in lower-band storage:
/// `ab[k * n + j] = A[j + k, j]` for `k in 0..=bandwidth`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub bandwidth: usize,
    ab: Vec<f64>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        BandMatrix {
            n,
            bandwidth,
            ab: vec![0.0; (bandwidth + 1) * n],
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, k: usize, j: usize) -> usize {
        k * self.n + j
    }

    /// Add `v` at symmetric position (r, c); only the lower triangle is kept.
    pub fn add(&mut self, r: usize, c: usize, v: f64) -> Result<(), LinAlgError> {
        let (hi, lo) = if r >= c { (r, c) } else { (c, r) };
        let k = hi - lo;
        if k > self.bandwidth {
            return Err(LinAlgError::OutsideBand { r, c, bw: self.bandwidth });
        }
        let idx = self.idx(k, lo);
        self.ab[idx] += v;
        Ok(())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (hi, lo) = if r >= c { (r, c) } else { (c, r) };
        let k = hi - lo;
        if k > self.bandwidth {
            0.0
        } else {
            self.ab[k * self.n + lo]
        }
    }

    /// In-place unpivoted LDL^T. After success, `solve` applies the factors.
    pub fn factor_ldl(&mut self) -> Result<(), LinAlgError> {
        let n = self.n;
        let bw = self.bandwidth;
        let mut col = vec![0.0; bw + 1];
        for j in 0..n {
            let d = self.ab[self.idx(0, j)];
            if d == 0.0 || !d.is_finite() {
                return Err(LinAlgError::ZeroPivot(j));
            }
            let reach = bw.min(n - 1 - j);
            for k in 1..=reach {
                let idx = self.idx(k, j);
                let raw = self.ab[idx];
                col[k] = raw; // u_k = d * l_k
                self.ab[idx] = raw / d;
            }
            for kc in 1..=reach {
                let l_c = self.ab[self.idx(kc, j)];
                if l_c == 0.0 {
                    continue;
                }
                let c = j + kc;
                for kr in kc..=reach {
                    let r = j + kr;
                    let upd = self.ab[self.idx(kr, j)] * col[kc];
                    let idx = self.idx(r - c, c);
                    self.ab[idx] -= upd;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solve `A x = b` in place using the LDL^T factors.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "factor_ldl must run first");
        let n = self.n;
        let bw = self.bandwidth;
        // L z = b
        for j in 0..n {
            let bj = b[j];
            if bj != 0.0 {
                let reach = bw.min(n - 1 - j);
                for k in 1..=reach {
                    b[j + k] -= self.ab[k * n + j] * bj;
                }
            }
        }
        // D y = z
        for j in 0..n {
            b[j] /= self.ab[j];
        }
        // L^T x = y
        for j in (0..n).rev() {
            let reach = bw.min(n - 1 - j);
            let mut acc = b[j];
            for k in 1..=reach {
                acc -= self.ab[k * n + j] * b[j + k];
            }
            b[j] = acc;
        }
    }
}

/// Euclidean norm of a slice.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
