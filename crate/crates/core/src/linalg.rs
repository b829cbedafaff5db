//! Compressed sparse row storage, linear solvers and the M-matrix predicate.
//!
//! The default solver factors the matrix in band storage without pivoting.
//! For M-matrices this keeps every multiplier nonpositive, so forward and
//! backward substitution with a nonnegative right-hand side only ever adds
//! nonnegative terms and the computed solution stays positive in floating
//! point. Matrices whose band would be too large, or whose factorization
//! breaks down, go to ILU(0)-preconditioned BiCGStab.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

/// Default relative residual tolerance for every solve.
pub const DEFAULT_LINEAR_TOL: f64 = 1e-12;

const MAX_BAND_ENTRIES: usize = 20_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Triplet accumulator; duplicates are summed by [`CsrMatrix::from_triplets`].
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            entries: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn extend_from(&mut self, other: &Triplets) {
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Square `n x n` matrix from `(row, col, value)` triplets.
pub fn csr_from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<CsrMatrix> {
    CsrMatrix::from_triplets(n, n, triplets)
}

impl CsrMatrix {
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r}, {c}) outside a {n_rows} x {n_cols} matrix"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        // Bucket by row, then sort and merge within each row.
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n_rows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    pub fn triplets(&self) -> Triplets {
        let mut t = Triplets::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push(i, j, v);
            }
        }
        t
    }

    pub fn add(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::InvalidArgument("matrix dimensions differ".into()));
        }
        let mut t = self.triplets();
        t.extend_from(&other.triplets());
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, t.entries())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Adds `diag[i]` to entry `(i, i)`, inserting it when absent.
    pub fn add_diagonal(&self, diag: &[f64]) -> Result<CsrMatrix> {
        self.add(&CsrMatrix::from_diagonal(diag))
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self
            .triplets()
            .entries()
            .iter()
            .map(|&(i, j, v)| (j, i, v))
            .collect();
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &t).expect("indices in range")
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let mut neg = other.clone();
        neg.scale(-1.0);
        match self.add(&neg) {
            Ok(d) => d.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    /// `(lower, upper)` bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for i in 0..self.n_rows {
            for &j in self.row(i).0 {
                if j < i {
                    lo = lo.max(i - j);
                } else {
                    up = up.max(j - i);
                }
            }
        }
        (lo, up)
    }

    /// MatrixMarket coordinate dump (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:?}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// True iff every off-diagonal entry is `<= tol`, every diagonal entry is
/// positive and every row sum is `>= -tol`.
pub fn is_m_matrix(a: &CsrMatrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    (0..a.n_rows()).all(|i| {
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut sum = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else if v > tol {
                return false;
            }
            sum += v;
        }
        diag > 0.0 && sum >= -tol
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// Band LU when the band fits, BiCGStab otherwise or on breakdown.
    Auto,
    BandLu,
    BiCgStab,
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolverMethod::Auto => "auto",
            SolverMethod::BandLu => "band-lu",
            SolverMethod::BiCgStab => "bicgstab-ilu0",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub method: SolverMethod,
    /// Krylov iterations, or refinement sweeps for the direct method.
    pub iterations: usize,
    /// `||b - A x||_2`.
    pub residual_norm: f64,
    /// `||b||_2`.
    pub rhs_norm: f64,
    pub converged: bool,
}

impl SolveReport {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm > 0.0 {
            self.residual_norm / self.rhs_norm
        } else {
            self.residual_norm
        }
    }
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} iterations, residual {:e} (relative {:e}), converged = {}",
            self.method,
            self.iterations,
            self.residual_norm,
            self.relative_residual(),
            self.converged
        )
    }
}

/// Solves `A x = b` to `||b - A x|| <= tol ||b||`.
pub fn solve(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    solve_with(SolverMethod::Auto, a, b, tol, max_iter)
}

pub fn solve_with(
    method: SolverMethod,
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    if !a.is_square() || a.n_rows() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot solve a {} x {} system with a right-hand side of length {}",
            a.n_rows(),
            a.n_cols(),
            b.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    let fail = |report: SolveReport| Error::Solve {
        context: "linear solve".into(),
        report,
    };
    let rhs_norm = norm2(b);
    if rhs_norm == 0.0 {
        let report = SolveReport {
            method,
            iterations: 0,
            residual_norm: 0.0,
            rhs_norm,
            converged: true,
        };
        return Ok((vec![0.0; b.len()], report));
    }
    match method {
        SolverMethod::BandLu => {
            let (x, report) = band_lu_solve(a, b, tol, max_iter);
            if report.converged {
                Ok((x, report))
            } else {
                Err(fail(report))
            }
        }
        SolverMethod::BiCgStab => {
            let (x, report) = bicgstab(a, b, tol, max_iter);
            if report.converged {
                Ok((x, report))
            } else {
                Err(fail(report))
            }
        }
        SolverMethod::Auto => {
            let (lo, up) = a.bandwidth();
            if a.n_rows().saturating_mul(lo + up + 1) <= MAX_BAND_ENTRIES {
                let (x, report) = band_lu_solve(a, b, tol, max_iter);
                if report.converged {
                    return Ok((x, report));
                }
            }
            let (x, report) = bicgstab(a, b, tol, max_iter);
            if report.converged {
                Ok((x, report))
            } else {
                Err(fail(report))
            }
        }
    }
}

/// LU factors of a banded matrix, computed without pivoting.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    lower: usize,
    upper: usize,
    /// Row-major band: row `i` stores columns `i - lower ..= i + upper`.
    band: Vec<f64>,
}

impl BandLu {
    /// Returns `None` when a pivot vanishes.
    pub fn factor(a: &CsrMatrix) -> Option<BandLu> {
        let n = a.n_rows();
        let (lower, upper) = a.bandwidth();
        let w = lower + upper + 1;
        let mut band = vec![0.0; n * w];
        let mut row_scale = vec![0.0f64; n];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                band[i * w + j + lower - i] = v;
                row_scale[i] = row_scale[i].max(v.abs());
            }
        }
        for k in 0..n {
            let pivot = band[k * w + lower];
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * row_scale[k] || pivot == 0.0 {
                return None;
            }
            let last_row = (k + lower).min(n - 1);
            let last_col = (k + upper).min(n - 1);
            for i in k + 1..=last_row {
                let ik = i * w + k + lower - i;
                let l = band[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                band[ik] = l;
                for j in k + 1..=last_col {
                    band[i * w + j + lower - i] -= l * band[k * w + j + lower - k];
                }
            }
        }
        Some(BandLu {
            n,
            lower,
            upper,
            band,
        })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, lo, up) = (self.n, self.lower, self.upper);
        let w = lo + up + 1;
        for i in 0..n {
            let start = i.saturating_sub(lo);
            let mut s = x[i];
            for j in start..i {
                s -= self.band[i * w + j + lo - i] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + up).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=end {
                s -= self.band[i * w + j + lo - i] * x[j];
            }
            x[i] = s / self.band[i * w + lo];
        }
    }
}

fn band_lu_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, SolveReport) {
    let rhs_norm = norm2(b);
    let mut report = SolveReport {
        method: SolverMethod::BandLu,
        iterations: 0,
        residual_norm: f64::INFINITY,
        rhs_norm,
        converged: false,
    };
    let Some(lu) = BandLu::factor(a) else {
        return (vec![0.0; b.len()], report);
    };
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    let mut r = residual(a, &x, b);
    report.residual_norm = norm2(&r);
    // Iterative refinement only when the first solve misses the tolerance.
    while !(report.residual_norm <= tol * rhs_norm) && report.iterations < max_iter {
        lu.solve_in_place(&mut r);
        x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
        r = residual(a, &x, b);
        report.residual_norm = norm2(&r);
        report.iterations += 1;
    }
    report.converged = report.residual_norm <= tol * rhs_norm && x.iter().all(|v| v.is_finite());
    (x, report)
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
struct Ilu0 {
    m: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Option<Ilu0> {
        let n = a.n_rows();
        let mut m = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (m.row_ptr[i], m.row_ptr[i + 1]);
            if let Ok(k) = m.col_idx[s..e].binary_search(&i) {
                diag_pos[i] = s + k;
            } else {
                return None;
            }
        }
        for i in 1..n {
            let (s, e) = (m.row_ptr[i], m.row_ptr[i + 1]);
            for kk in s..e {
                let k = m.col_idx[kk];
                if k >= i {
                    break;
                }
                let pivot = m.values[diag_pos[k]];
                if pivot == 0.0 {
                    return None;
                }
                let l = m.values[kk] / pivot;
                m.values[kk] = l;
                let ke = m.row_ptr[k + 1];
                let mut p = kk + 1;
                for q in diag_pos[k] + 1..ke {
                    let j = m.col_idx[q];
                    while p < e && m.col_idx[p] < j {
                        p += 1;
                    }
                    if p < e && m.col_idx[p] == j {
                        m.values[p] -= l * m.values[q];
                    }
                }
            }
            if m.values[diag_pos[i]] == 0.0 {
                return None;
            }
        }
        if m.values[diag_pos[0]] == 0.0 {
            return None;
        }
        Some(Ilu0 { m, diag_pos })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut s = r[i];
            for kk in self.m.row_ptr[i]..self.diag_pos[i] {
                s -= self.m.values[kk] * z[self.m.col_idx[kk]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for kk in self.diag_pos[i] + 1..self.m.row_ptr[i + 1] {
                s -= self.m.values[kk] * z[self.m.col_idx[kk]];
            }
            z[i] = s / self.m.values[self.diag_pos[i]];
        }
    }
}

enum Preconditioner {
    Ilu(Ilu0),
    Jacobi(Vec<f64>),
    None,
}

impl Preconditioner {
    fn new(a: &CsrMatrix) -> Self {
        if let Some(ilu) = Ilu0::new(a) {
            return Preconditioner::Ilu(ilu);
        }
        let d = a.diagonal();
        if d.iter().all(|&v| v != 0.0) {
            Preconditioner::Jacobi(d.iter().map(|v| 1.0 / v).collect())
        } else {
            Preconditioner::None
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Ilu(ilu) => ilu.apply(r, z),
            Preconditioner::Jacobi(inv) => z
                .iter_mut()
                .zip(r.iter().zip(inv))
                .for_each(|(z, (r, d))| *z = r * d),
            Preconditioner::None => z.copy_from_slice(r),
        }
    }
}

/// Right-preconditioned BiCGStab.
fn bicgstab(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    let rhs_norm = norm2(b);
    let pc = Preconditioner::new(a);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut report = SolveReport {
        method: SolverMethod::BiCgStab,
        iterations: 0,
        residual_norm: rhs_norm,
        rhs_norm,
        converged: false,
    };
    while report.iterations < max_iter {
        report.iterations += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pc.apply(&p, &mut p_hat);
        a.mul_vec_into(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            x[i] += alpha * p_hat[i];
            r[i] -= alpha * v[i];
        }
        report.residual_norm = norm2(&r);
        if report.residual_norm <= tol * rhs_norm {
            break;
        }
        pc.apply(&r, &mut s_hat);
        a.mul_vec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            break;
        }
        omega = dot(&t, &r) / tt;
        for i in 0..n {
            x[i] += omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        report.residual_norm = norm2(&r);
        if report.residual_norm <= tol * rhs_norm || omega == 0.0 {
            break;
        }
    }
    // Report the true residual, not the recursively updated one.
    report.residual_norm = norm2(&residual(a, &x, b));
    report.converged = report.residual_norm <= tol * rhs_norm && x.iter().all(|v| v.is_finite());
    (x, report)
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(ax).map(|(b, ax)| b - ax).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        csr_from_triplets(n, &t).unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = csr_from_triplets(1, &[(0, 0, 1.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 2.0);
    }

    #[test]
    fn empty_triplets() {
        let a = csr_from_triplets(3, &[]).unwrap();
        assert_eq!(a.row_ptr(), &[0, 0, 0, 0]);
        assert_eq!(a.nnz(), 0);
    }

    #[test]
    fn tridiagonal_pattern() {
        let a = laplace_1d(3);
        assert_eq!(a.row_ptr(), &[0, 2, 5, 7]);
        assert_eq!(a.col_idx(), &[0, 1, 0, 1, 2, 1, 2]);
        assert_eq!(a.values(), &[2.0, -1.0, -1.0, 2.0, -1.0, -1.0, 2.0]);
    }

    #[test]
    fn out_of_range_triplet() {
        assert!(matches!(
            csr_from_triplets(2, &[(2, 0, 1.0)]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn identity_solve() {
        let a = CsrMatrix::identity(3);
        for m in [
            SolverMethod::Auto,
            SolverMethod::BandLu,
            SolverMethod::BiCgStab,
        ] {
            let (x, rep) = solve_with(m, &a, &[1.0, 2.0, 3.0], 1e-12, 10).unwrap();
            assert_eq!(x, vec![1.0, 2.0, 3.0]);
            assert!(rep.converged);
        }
    }

    #[test]
    fn tridiagonal_solve() {
        let a = laplace_1d(3);
        for m in [
            SolverMethod::Auto,
            SolverMethod::BandLu,
            SolverMethod::BiCgStab,
        ] {
            let (x, rep) = solve_with(m, &a, &[1.0, 1.0, 1.0], 1e-12, 50).unwrap();
            for (xi, ei) in x.iter().zip([1.5, 2.0, 1.5]) {
                assert!((xi - ei).abs() < 1e-12, "{m}: {x:?}");
            }
            assert!(rep.relative_residual() <= 1e-12);
        }
    }

    #[test]
    fn singular_matrix_fails() {
        let a = csr_from_triplets(3, &[]).unwrap();
        for m in [
            SolverMethod::Auto,
            SolverMethod::BandLu,
            SolverMethod::BiCgStab,
        ] {
            let err = solve_with(m, &a, &[1.0, 0.0, 0.0], 1e-12, 50).unwrap_err();
            match err {
                Error::Solve { report, .. } => assert!(!report.converged),
                other => panic!("unexpected {other}"),
            }
        }
    }

    #[test]
    fn nonsymmetric_krylov() {
        // Convection-diffusion-like nonsymmetric system.
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i > 0 {
                t.push((i, i - 1, -2.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.5));
            }
        }
        let a = csr_from_triplets(n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let (x1, _) = solve_with(SolverMethod::BiCgStab, &a, &b, 1e-12, 500).unwrap();
        let (x2, _) = solve_with(SolverMethod::BandLu, &a, &b, 1e-12, 5).unwrap();
        for (a, b) in x1.iter().zip(&x2) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn m_matrix_predicate() {
        let a =
            csr_from_triplets(2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        assert!(is_m_matrix(&a, 1e-12));
        let b =
            csr_from_triplets(2, &[(0, 0, 1.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 1.0)]).unwrap();
        assert!(!is_m_matrix(&b, 1e-12));
        let c =
            csr_from_triplets(2, &[(0, 0, 1.0), (0, 1, -2.0), (1, 0, -0.5), (1, 1, 1.0)]).unwrap();
        assert!(!is_m_matrix(&c, 1e-12), "negative row sum");
    }

    #[test]
    fn matrix_market_dump() {
        let a = laplace_1d(2);
        let mut out = Vec::new();
        a.write_matrix_market(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 4\n"));
        assert!(text.contains("1 2 -1.0"));
    }

    #[test]
    fn deterministic_solves() {
        let a = laplace_1d(40);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x1 = solve(&a, &b, 1e-12, 10).unwrap().0;
        let x2 = solve(&a, &b, 1e-12, 10).unwrap().0;
        assert_eq!(x1, x2);
    }

    #[test]
    fn band_lu_keeps_m_matrix_solutions_positive() {
        // Strongly graded right-hand side: tiny values must not go negative.
        let a = laplace_1d(200).add_diagonal(&vec![1e-3; 200]).unwrap();
        let mut b = vec![0.0; 200];
        b[0] = 1.0;
        b[199] = 1e-200;
        let (x, _) = solve_with(SolverMethod::BandLu, &a, &b, 1e-12, 5).unwrap();
        assert!(x.iter().all(|&v| v > 0.0));
    }
}
