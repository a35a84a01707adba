//! Sparse matrices and the linear solvers behind the implicit stages and the
//! projection's Poisson problems.

use std::fmt;

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use thiserror::Error;

/// Systems smaller than this are factored directly.
pub const DIRECT_LIMIT: usize = 40_000;
/// Default relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

const PAR_ROWS: usize = 4096;
const RESTART: usize = 50;
const REFINE_STEPS: usize = 4;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("solve did not converge: {0}")]
    NotConverged(SolveReport),
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == col {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    indices.push(col);
                    values.push(sum);
                }
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix::from_triplets(nrows, ncols, std::iter::empty())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// All entries as triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let row_dot = |i: usize| self.row(i).map(|(j, v)| v * x[j]).sum::<f64>();
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
    }

    /// `alpha * self + beta * other`.
    pub fn add(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        SparseMatrix::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets()
                .map(|(i, j, v)| (i, j, alpha * v))
                .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v))),
        )
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut m = self.clone();
        for v in &mut m.values {
            *v *= s;
        }
        m
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    /// Copy with row `k` replaced by the unit row `e_k`.
    pub fn with_identity_row(&self, k: usize) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets()
                .filter(|&(i, _, _)| i != k)
                .chain(std::iter::once((k, k, 1.0))),
        )
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, SolveError> {
        let t: Vec<Triplet<usize, usize, f64>> =
            self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))
    }
}

/// Outcome of a linear solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub method: &'static str,
    pub iterations: usize,
    /// `‖b - A x‖₂ / ‖b‖₂` (absolute when `b = 0`).
    pub residual: f64,
    pub converged: bool,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} iterations, relative residual {:.3e}{}",
            self.method,
            self.iterations,
            self.residual,
            if self.converged { "" } else { " (not converged)" }
        )
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// A direct solve whose refinement stagnates below this residual is at round-off and accepted.
pub const DIRECT_FLOOR: f64 = 1e-9;

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    let nr = norm2(&r);
    (r, if nb > 0.0 { nr / nb } else { nr })
}

/// Incomplete LU with zero fill-in on the pattern of `A`.
struct Ilu0 {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &SparseMatrix) -> Option<Self> {
        let n = a.nrows;
        let mut values = a.values.clone();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                if a.indices[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return None;
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (a.indptr[i], a.indptr[i + 1]);
            for k in lo..hi {
                pos[a.indices[k]] = k;
            }
            for k in lo..hi {
                let p = a.indices[k];
                if p >= i {
                    break;
                }
                let pivot = values[diag[p]];
                if pivot == 0.0 {
                    return None;
                }
                values[k] /= pivot;
                let lik = values[k];
                for kk in diag[p] + 1..a.indptr[p + 1] {
                    let j = a.indices[kk];
                    if pos[j] != usize::MAX {
                        values[pos[j]] -= lik * values[kk];
                    }
                }
            }
            for k in lo..hi {
                pos[a.indices[k]] = usize::MAX;
            }
            if values[diag[i]] == 0.0 {
                return None;
            }
        }
        Some(Ilu0 {
            n,
            indptr: a.indptr.clone(),
            indices: a.indices.clone(),
            values,
            diag,
        })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = r.to_vec();
        for i in 0..self.n {
            for k in self.indptr[i]..self.diag[i] {
                z[i] -= self.values[k] * z[self.indices[k]];
            }
        }
        for i in (0..self.n).rev() {
            for k in self.diag[i] + 1..self.indptr[i + 1] {
                z[i] -= self.values[k] * z[self.indices[k]];
            }
            z[i] /= self.values[self.diag[i]];
        }
        z
    }
}

/// Right-preconditioned restarted GMRES. Returns the iterate and the
/// history of recursive residual estimates.
fn gmres(
    a: &SparseMatrix,
    m: &Ilu0,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize) {
    let n = b.len();
    let nb = norm2(b).max(f64::MIN_POSITIVE);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut iters = 0;
    while iters < max_iter {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta / nb <= tol {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut hcols: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        for j in 0..RESTART {
            iters += 1;
            let zj = m.apply(&v[j]);
            let mut w = a.matvec(&zj);
            z.push(zj);
            let mut h = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                h[i] = dot(&w, vi);
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= h[i] * vk;
                }
            }
            h[j + 1] = norm2(&w);
            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = h[j].hypot(h[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[j] / denom, h[j + 1] / denom) };
            let hj1 = h[j + 1];
            h[j] = c * h[j] + s * hj1;
            h[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            hcols.push(h);
            let happy = hj1 <= 1e-14 * beta;
            if !happy {
                v.push(w.iter().map(|wk| wk / hj1).collect());
            }
            if g[j + 1].abs() / nb <= tol || happy || iters >= max_iter {
                break;
            }
        }
        let k = hcols.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= hcols[l][i] * y[l];
            }
            y[i] = s / hcols[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            for (xk, zk) in x.iter_mut().zip(zi) {
                *xk += yi * zk;
            }
        }
    }
    (x, iters)
}

enum Backend {
    Direct(Lu<usize, f64>),
    Krylov(Ilu0, Option<Lu<usize, f64>>),
}

/// A factored or preconditioned operator that can be applied to many right-hand sides.
pub struct LinearSolver {
    matrix: SparseMatrix,
    backend: Backend,
    tol: f64,
    max_iter: usize,
}

impl fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSolver")
            .field("n", &self.matrix.nrows)
            .field("nnz", &self.matrix.nnz())
            .field("tol", &self.tol)
            .finish()
    }
}

impl LinearSolver {
    pub fn new(matrix: SparseMatrix, tol: f64) -> Result<Self, SolveError> {
        Self::with_options(matrix, tol, 1000, DIRECT_LIMIT)
    }

    /// `direct_limit` selects sparse LU for systems with fewer unknowns.
    pub fn with_options(
        matrix: SparseMatrix,
        tol: f64,
        max_iter: usize,
        direct_limit: usize,
    ) -> Result<Self, SolveError> {
        if matrix.nrows != matrix.ncols {
            return Err(SolveError::Shape(format!(
                "matrix is {}x{}",
                matrix.nrows, matrix.ncols
            )));
        }
        let backend = if matrix.nrows < direct_limit {
            Backend::Direct(Self::factor(&matrix)?)
        } else {
            match Ilu0::new(&matrix) {
                Some(ilu) => Backend::Krylov(ilu, None),
                None => Backend::Direct(Self::factor(&matrix)?),
            }
        };
        Ok(LinearSolver {
            matrix,
            backend,
            tol,
            max_iter,
        })
    }

    fn factor(matrix: &SparseMatrix) -> Result<Lu<usize, f64>, SolveError> {
        matrix
            .to_faer()?
            .sp_lu()
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn lu_solve(lu: &Lu<usize, f64>, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = lu.solve(&rhs);
        (0..b.len()).map(|i| x[i]).collect()
    }

    /// Solve `A x = b`; never errors, check `report.converged`.
    pub fn solve_with_guess(&mut self, b: &[f64], x0: Option<&[f64]>) -> (Vec<f64>, SolveReport) {
        assert_eq!(b.len(), self.matrix.nrows);
        if norm2(b) == 0.0 {
            let report = SolveReport {
                method: "trivial",
                iterations: 0,
                residual: 0.0,
                converged: true,
            };
            return (vec![0.0; b.len()], report);
        }
        match &mut self.backend {
            Backend::Direct(lu) => {
                let mut x = Self::lu_solve(lu, b);
                let (mut r, mut res) = relative_residual(&self.matrix, &x, b);
                let mut steps = 1;
                let mut stagnated = false;
                while res.is_finite() && res > self.tol && steps <= REFINE_STEPS {
                    let dx = Self::lu_solve(lu, &r);
                    let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
                    let (r2, res2) = relative_residual(&self.matrix, &trial, b);
                    if !(res2 < 0.5 * res) {
                        stagnated = true;
                        if res2 < res {
                            x = trial;
                            res = res2;
                        }
                        break;
                    }
                    x = trial;
                    r = r2;
                    res = res2;
                    steps += 1;
                }
                let converged = res.is_finite() && (res <= self.tol || (stagnated && res <= DIRECT_FLOOR));
                log::debug!("direct solve: {steps} refinement passes, residual {res:.3e}");
                (
                    x,
                    SolveReport {
                        method: "sparse-lu",
                        iterations: steps,
                        residual: res,
                        converged,
                    },
                )
            }
            Backend::Krylov(ilu, fallback) => {
                let (x, iters) = gmres(&self.matrix, ilu, b, x0, self.tol, self.max_iter);
                let (_, res) = relative_residual(&self.matrix, &x, b);
                log::debug!("gmres: {iters} iterations, residual {res:.3e}");
                if res.is_finite() && res <= self.tol {
                    return (
                        x,
                        SolveReport {
                            method: "gmres-ilu0",
                            iterations: iters,
                            residual: res,
                            converged: true,
                        },
                    );
                }
                log::info!("gmres stalled at {res:.3e}; falling back to sparse LU");
                if fallback.is_none() {
                    match Self::factor(&self.matrix) {
                        Ok(lu) => *fallback = Some(lu),
                        Err(_) => {
                            return (
                                x,
                                SolveReport {
                                    method: "gmres-ilu0",
                                    iterations: iters,
                                    residual: res,
                                    converged: false,
                                },
                            )
                        }
                    }
                }
                let lu = fallback.as_ref().expect("fallback factorization");
                let x = Self::lu_solve(lu, b);
                let (_, res) = relative_residual(&self.matrix, &x, b);
                (
                    x,
                    SolveReport {
                        method: "gmres-ilu0+lu",
                        iterations: iters + 1,
                        residual: res,
                        converged: res.is_finite() && res <= self.tol,
                    },
                )
            }
        }
    }

    pub fn solve(&mut self, b: &[f64]) -> (Vec<f64>, SolveReport) {
        self.solve_with_guess(b, None)
    }
}

/// One-shot solve of `A x = b`.
pub fn solve(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let mut s = LinearSolver::with_options(a.clone(), tol, max_iter, DIRECT_LIMIT)?;
    Ok(s.solve(b))
}

/// Solver for a singular operator whose null space is the constants and whose
/// left null vector is the cell volumes (all-Neumann Laplacian).
#[derive(Debug)]
pub struct NeumannSolver {
    inner: LinearSolver,
    volumes: Vec<f64>,
    pin: usize,
}

impl NeumannSolver {
    pub fn new(a: &SparseMatrix, volumes: Vec<f64>, tol: f64) -> Result<Self, SolveError> {
        if volumes.len() != a.nrows() {
            return Err(SolveError::Shape(format!(
                "{} volumes for {} rows",
                volumes.len(),
                a.nrows()
            )));
        }
        // pin the largest cell; any row works since its equation is redundant
        let pin = (0..volumes.len())
            .max_by(|&i, &j| volumes[i].total_cmp(&volumes[j]).then(j.cmp(&i)))
            .unwrap_or(0);
        let inner = LinearSolver::new(a.with_identity_row(pin), tol)?;
        Ok(NeumannSolver {
            inner,
            volumes,
            pin,
        })
    }

    /// Volume-weighted mean.
    pub fn mean(&self, x: &[f64]) -> f64 {
        let vt: f64 = self.volumes.iter().sum();
        dot(&self.volumes, x) / vt
    }

    /// Solve after removing the incompatible part of `b`; result has zero volume-weighted mean.
    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> (Vec<f64>, SolveReport) {
        let mb = self.mean(b);
        let mut rhs: Vec<f64> = b.iter().map(|v| v - mb).collect();
        let compat = rhs.clone();
        rhs[self.pin] = 0.0;
        let (mut x, mut report) = self.inner.solve(&rhs);
        let mx = self.mean(&x);
        for v in &mut x {
            *v -= mx;
        }
        let (_, res) = relative_residual(a, &x, &compat);
        let scale = if norm2(&compat) > 0.0 { 1.0 } else { 0.0 };
        report.residual = res * scale;
        report.converged = report.converged && (scale == 0.0 || res <= 100.0 * self.inner.tol.max(1e-14));
        (x, report)
    }
}

/// One-shot singular Neumann solve.
pub fn solve_neumann_singular(
    a: &SparseMatrix,
    volumes: &[f64],
    b: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let mut s = NeumannSolver::new(a, volumes.to_vec(), tol)?;
    Ok(s.solve(a, b))
}
