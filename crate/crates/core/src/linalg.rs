//! Row-compressed symmetric matrices and a preconditioned conjugate gradient.
//!
//! Reductions run in index order so repeated solves are bitwise reproducible.

use crate::error::{Error, Result};

/// Symmetric positive-diagonal matrix in CSR form, full pattern stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    diagonal: Vec<f64>,
}

impl SparseSymmetricMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    ///
    /// Rejects asymmetric patterns or values and missing or non-positive
    /// diagonal entries.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            rows[i].push((j, v));
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            for &(j, v) in row.iter() {
                if col_indices.len() > *row_offsets.last().unwrap()
                    && *col_indices.last().unwrap() == j
                {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_csr(n, row_offsets, col_indices, values)
    }

    /// Takes ownership of CSR arrays with sorted, unique column indices per row.
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1
            || col_indices.len() != values.len()
            || row_offsets[n] != values.len()
        {
            return Err(Error::InvalidMatrix("inconsistent CSR array lengths".into()));
        }
        let mut m = Self {
            n,
            row_offsets,
            col_indices,
            values,
            diagonal: vec![0.0; n],
        };
        for i in 0..n {
            let (cols, _) = m.row(i);
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&j| j >= n) {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} column indices are not sorted, unique and in range"
                )));
            }
        }
        let mut diagonal = vec![0.0; n];
        for (i, d) in diagonal.iter_mut().enumerate() {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !v.is_finite() {
                    return Err(Error::InvalidMatrix(format!("entry ({i}, {j}) is not finite")));
                }
                if i == j {
                    *d = v;
                } else if m.get(j, i) != Some(v) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({i}, {j}) = {v} has no equal transpose"
                    )));
                }
            }
            if !(*d > 0.0) {
                return Err(Error::InvalidMatrix(format!(
                    "diagonal entry {i} is missing or not positive"
                )));
            }
        }
        m.diagonal = diagonal;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }
}

pub fn matvec(a: &SparseSymmetricMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            got: x.len(),
        });
    }
    let mut y = vec![0.0; a.n];
    a.apply(x, &mut y);
    Ok(y)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    /// Plain conjugate gradient.
    Identity,
    /// Diagonal scaling by `1 / A[i][i]`.
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when `||A x - b|| / ||b||` falls to this value.
    pub tol: f64,
    /// `None` selects `10 * sqrt(n) + 100`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| (10.0 * (n as f64).sqrt()).ceil() as usize + 100)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `||A x - b|| / ||b||` of the returned iterate.
    pub residual: f64,
    /// Relative residual of the starting guess.
    pub initial_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
pub fn pcg_solve(
    a: &SparseSymmetricMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PcgSolution> {
    pcg_solve_from(a, b, None, tol, max_iter, Preconditioner::Jacobi)
}

/// Preconditioned conjugate gradient with an optional starting guess.
pub fn pcg_solve_from(
    a: &SparseSymmetricMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    preconditioner: Preconditioner,
) -> Result<PcgSolution> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("solver tolerance must be positive, got {tol}")));
    }

    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(PcgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            initial_residual: 0.0,
        });
    }
    if !b_norm.is_finite() {
        return Err(Error::NonFiniteEncountered { iteration: 0 });
    }

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    a.apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let initial_residual = norm(&r) / b_norm;
    if !initial_residual.is_finite() {
        return Err(Error::NonFiniteEncountered { iteration: 0 });
    }
    if initial_residual <= tol {
        return Ok(PcgSolution {
            x,
            iterations: 0,
            residual: initial_residual,
            initial_residual,
        });
    }

    let inv_diag: Vec<f64> = match preconditioner {
        Preconditioner::Jacobi => a.diagonal.iter().map(|d| 1.0 / d).collect(),
        Preconditioner::Identity => vec![1.0; n],
    };
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = initial_residual;

    for iter in 1..=max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            if pap.is_finite() {
                return Err(Error::InvalidMatrix(
                    "matrix is not positive definite along a search direction".into(),
                ));
            }
            return Err(Error::NonFiniteEncountered { iteration: iter });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        residual = norm(&r) / b_norm;
        if !residual.is_finite() {
            return Err(Error::NonFiniteEncountered { iteration: iter });
        }
        if residual <= tol {
            return Ok(PcgSolution {
                x,
                iterations: iter,
                residual,
                initial_residual,
            });
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverDivergence {
        iterations: max_iter,
        residual,
    })
}
