use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Row-compressed complex matrix, enough for the small operators used by
/// the master-equation oracles.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        SparseMatrix { dim, rows: vec![Vec::new(); dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.add(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `value` to entry `(row, col)`.
    pub fn add(&mut self, row: usize, col: usize, value: Complex64) {
        if value == Complex64::default() {
            return;
        }
        match self.rows[row].iter_mut().find(|(c, _)| *c == col) {
            Some((_, v)) => *v += value,
            None => self.rows[row].push((col, value)),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.rows[row]
            .iter()
            .find(|(c, _)| *c == col)
            .map(|(_, v)| *v)
            .unwrap_or_default()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |(c, v)| (r, *c, *v)))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.rows.iter_mut().flatten().for_each(|(_, v)| *v *= s);
        out
    }

    pub fn plus(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (r, c, v) in other.entries() {
            out.add(r, c, v);
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for (r, c, v) in self.entries() {
            out.add(c, r, v.conj());
        }
        out
    }

    pub fn matmul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zeros(self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for (k, a) in row {
                for (c, b) in &other.rows[*k] {
                    out.add(r, *c, a * b);
                }
            }
        }
        out
    }

    /// `(internal ⊗ self)` for a small dense internal matrix, with the
    /// internal index as the slow one.
    pub fn kron_left(internal: &CMatrix, ladder: &SparseMatrix) -> Self {
        let l = ladder.dim;
        let mut out = Self::zeros(internal.nrows() * l);
        for a in 0..internal.nrows() {
            for b in 0..internal.ncols() {
                let s = internal[(a, b)];
                if s == Complex64::default() {
                    continue;
                }
                for (r, c, v) in ladder.entries() {
                    out.add(a * l + r, b * l + c, s * v);
                }
            }
        }
        out
    }

    /// `self * rho`.
    pub fn mul_dense(&self, rho: &CMatrix) -> CMatrix {
        let n = rho.ncols();
        let mut out = CMatrix::zeros(self.dim, n);
        for (r, row) in self.rows.iter().enumerate() {
            for (k, a) in row {
                for c in 0..n {
                    out[(r, c)] += a * rho[(*k, c)];
                }
            }
        }
        out
    }

    /// `rho * self†`.
    pub fn dense_mul_adjoint(&self, rho: &CMatrix) -> CMatrix {
        let n = rho.nrows();
        let mut out = CMatrix::zeros(n, self.dim);
        for (k, row) in self.rows.iter().enumerate() {
            for (j, s) in row {
                let s = s.conj();
                let src = rho.column(*j);
                let mut dst = out.column_mut(k);
                for i in 0..n {
                    dst[i] += src[i] * s;
                }
            }
        }
        out
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(c, a)| a * v[*c]).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }
}

/// Ladder shift `|j⟩ → |j + 1⟩` on `len` sites, without wrap-around.
pub fn raise(len: usize) -> SparseMatrix {
    let mut m = SparseMatrix::zeros(len);
    for j in 0..len.saturating_sub(1) {
        m.add(j + 1, j, Complex64::new(1.0, 0.0));
    }
    m
}
