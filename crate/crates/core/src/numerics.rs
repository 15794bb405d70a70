//! Dense real linear algebra and probability kernels.
//!
//! Everything here is sized for the detector's working dimensions (a few
//! tens of rows) and the polynomial baselines' least-squares systems (a few
//! thousand rows, a few hundred columns). All arithmetic is `f64`.

use crate::error::{Error, Result};
use std::ops::{Index, IndexMut};

/// Off-diagonal tolerance for the one-sided Jacobi sweeps.
pub const SVD_TOLERANCE: f64 = 1e-12;
/// Maximum number of Jacobi sweeps before giving up.
pub const SVD_MAX_SWEEPS: usize = 100;

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    /// Builds a matrix from row-major entries. Entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "RealMatrix::new",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("RealMatrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "RealMatrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "RealMatrix::matmul",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared Euclidean norm of every row.
    pub fn row_energies(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v * v).sum())
            .collect()
    }

    /// Largest absolute entry of `selfᵀ·self − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.cols {
            for j in 0..self.cols {
                let g: f64 = (0..self.rows).map(|r| self[(r, i)] * self[(r, j)]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Factorization `A = U · diag(s) · V` with orthogonal `U` (m×m) and `V` (n×n).
///
/// `V` multiplies on the right as stored, so its rows are the right singular
/// vectors.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: RealMatrix,
    pub singular_values: Vec<f64>,
    pub v: RealMatrix,
}

impl SvdFactors {
    /// `U · diag(s) · V` with the rectangular diagonal sized to the input.
    pub fn reconstruct(&self) -> RealMatrix {
        let m = self.u.rows();
        let n = self.v.rows();
        RealMatrix::from_fn(m, n, |i, j| {
            self.singular_values
                .iter()
                .enumerate()
                .map(|(r, s)| self.u[(i, r)] * s * self.v[(r, j)])
                .sum()
        })
    }

    /// `diag(s) · V`, the m×n matrix equal to `Uᵀ A`.
    pub fn scaled_right(&self) -> RealMatrix {
        let m = self.u.rows();
        let n = self.v.rows();
        RealMatrix::from_fn(m, n, |i, j| {
            self.singular_values
                .get(i)
                .map_or(0.0, |s| s * self.v[(i, j)])
        })
    }
}

/// Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
pub fn svd(a: &RealMatrix) -> Result<SvdFactors> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("svd of empty {m}x{n} matrix")));
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let tall = m >= n;
    // Columns of the matrix being orthogonalized (tall orientation).
    let (rows, cols) = if tall { (m, n) } else { (n, m) };
    let mut work: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            (0..rows)
                .map(|i| if tall { a[(i, j)] } else { a[(j, i)] })
                .collect()
        })
        .collect();
    let mut rot: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = false;
    let mut residual = 0.0;
    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0f64;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = norm_sq(&work[i]);
                let beta = norm_sq(&work[j]);
                let gamma = dot(&work[i], &work[j]);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= SVD_TOLERANCE {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut work, i, j, c, s);
                rotate_pair(&mut rot, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            rows: m,
            cols: n,
            residual,
        });
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = work.iter().map(|c| norm_sq(c).sqrt()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let smax = singular_values[0];
    let cutoff = smax * f64::EPSILON * rows as f64;

    // Left vectors of the tall problem; zero singular values get filled in by completion.
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(rows);
    for (&j, &s) in order.iter().zip(&singular_values) {
        if s > cutoff && s > 0.0 {
            left.push(work[j].iter().map(|v| v / s).collect());
        } else {
            break;
        }
    }
    complete_basis(&mut left, rows);
    let right: Vec<Vec<f64>> = order.iter().map(|&j| rot[j].clone()).collect();

    // Tall: A = L Σ Rᵀ, so U = L and stored V has rows R_j.
    // Wide: Aᵀ = L Σ Rᵀ, so A = R Σ Lᵀ, U has columns R_j and stored V has rows L_j.
    let (u, v) = if tall {
        (
            RealMatrix::from_fn(m, m, |i, r| left[r][i]),
            RealMatrix::from_fn(n, n, |r, j| right[r][j]),
        )
    } else {
        (
            RealMatrix::from_fn(m, m, |i, r| right[r][i]),
            RealMatrix::from_fn(n, n, |r, j| left[r][j]),
        )
    };
    Ok(SvdFactors {
        u,
        singular_values,
        v,
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Extends a set of orthonormal vectors of length `dim` to a full basis.
fn complete_basis(basis: &mut Vec<Vec<f64>>, dim: usize) {
    let mut candidate = 0;
    while basis.len() < dim && candidate < dim {
        let mut v = vec![0.0; dim];
        v[candidate] = 1.0;
        candidate += 1;
        // Two Gram-Schmidt passes.
        for _ in 0..2 {
            for b in basis.iter() {
                let p = dot(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= p * bi;
                }
            }
        }
        let nrm = norm_sq(&v).sqrt();
        if nrm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / nrm).collect());
        }
    }
}

/// Product of two Gaussian densities in the same variable, returned as
/// `(mean, variance)` of the (unnormalized) result.
///
/// Infinite variance means an uninformative factor; two uninformative
/// factors give an uninformative result.
pub fn gaussian_product(m1: f64, v1: f64, m2: f64, v2: f64) -> Result<(f64, f64)> {
    if !(v1 > 0.0) {
        return Err(Error::NonPositiveVariance(v1));
    }
    if !(v2 > 0.0) {
        return Err(Error::NonPositiveVariance(v2));
    }
    match (v1.is_infinite(), v2.is_infinite()) {
        (true, true) => Ok((0.5 * (m1 + m2), f64::INFINITY)),
        (true, false) => Ok((m2, v2)),
        (false, true) => Ok((m1, v1)),
        (false, false) => {
            let var = 1.0 / (1.0 / v1 + 1.0 / v2);
            Ok((var * (m1 / v1 + m2 / v2), var))
        }
    }
}

/// Softmax of log-weights, shifted by the maximum for stability.
pub fn normalized_exp(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.is_empty() {
        return Err(Error::InvalidParameter("empty weight list".into()));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::NonFinite("normalized_exp input"));
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let mut out: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// Numerically stable `ln(e^a + e^b)`.
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Outcome of a pivoted least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LsReport {
    pub rank: usize,
    pub cols: usize,
    /// `|R₁₁| / |R_rr|` over the retained pivots.
    pub condition_estimate: f64,
}

/// Householder QR with column pivoting, `A P = Q R`, plus a complete
/// orthogonal decomposition of the retained rows for minimum-norm solves.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    m: usize,
    n: usize,
    /// Householder vectors, one per step, each of length `m - step`.
    reflectors: Vec<Vec<f64>>,
    /// Upper triangular factor, `n` columns, column-major, rows `0..steps`.
    r_cols: Vec<Vec<f64>>,
    perm: Vec<usize>,
    rank: usize,
    /// QR of `R_topᵀ` (n × rank) used for the minimum-norm step.
    cod: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

impl PivotedQr {
    /// Factors `a`. Pivots with `|R_jj| <= rcond · |R_00|` are treated as
    /// numerically zero; `rcond = None` uses `max(m, n) · ε`.
    pub fn factor(a: &RealMatrix, rcond: Option<f64>) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter("empty least-squares system".into()));
        }
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut reflectors = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);
        for j in 0..steps {
            let (best, best_norm) = (j..n)
                .map(|c| (c, norm_sq(&cols[c][j..])))
                .fold((j, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            cols.swap(j, best);
            perm.swap(j, best);
            let alpha = best_norm.sqrt();
            let mut v: Vec<f64> = cols[j][j..].to_vec();
            if alpha == 0.0 {
                reflectors.push(vec![0.0; m - j]);
                diag.push(0.0);
                continue;
            }
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm = norm_sq(&v).sqrt();
            for x in &mut v {
                *x /= vnorm;
            }
            for col in cols.iter_mut().skip(j) {
                let p = 2.0 * dot(&v, &col[j..]);
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c -= p * vi;
                }
            }
            diag.push(cols[j][j]);
            reflectors.push(v);
        }
        let tol = rcond.unwrap_or(m.max(n) as f64 * f64::EPSILON) * diag[0].abs();
        let rank = diag.iter().take_while(|d| d.abs() > tol).count();
        let r_cols: Vec<Vec<f64>> = cols.into_iter().map(|c| c[..steps].to_vec()).collect();

        let mut qr = Self {
            m,
            n,
            reflectors,
            r_cols,
            perm,
            rank,
            cod: None,
        };
        if rank < n {
            qr.cod = Some(qr.orthogonal_complement());
        }
        Ok(qr)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn report(&self) -> LsReport {
        let condition_estimate = if self.rank == 0 {
            f64::INFINITY
        } else {
            self.r_cols[0][0].abs() / self.r_cols[self.rank - 1][self.rank - 1].abs()
        };
        LsReport {
            rank: self.rank,
            cols: self.n,
            condition_estimate,
        }
    }

    /// QR of `R_topᵀ` where `R_top` is the `rank × n` block of retained rows.
    /// Returns (reflectors, triangular columns).
    fn orthogonal_complement(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let r = self.rank;
        let n = self.n;
        // Columns of R_topᵀ: column i is row i of R_top, length n.
        let mut cols: Vec<Vec<f64>> = (0..r)
            .map(|i| (0..n).map(|j| self.r_cols[j][i]).collect())
            .collect();
        let mut refl = Vec::with_capacity(r);
        for j in 0..r {
            let alpha = norm_sq(&cols[j][j..]).sqrt();
            let mut v: Vec<f64> = cols[j][j..].to_vec();
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm = norm_sq(&v).sqrt();
            if vnorm > 0.0 {
                for x in &mut v {
                    *x /= vnorm;
                }
            }
            for col in cols.iter_mut().skip(j) {
                let p = 2.0 * dot(&v, &col[j..]);
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c -= p * vi;
                }
            }
            refl.push(v);
        }
        let tri: Vec<Vec<f64>> = cols.into_iter().map(|c| c[..r].to_vec()).collect();
        (refl, tri)
    }

    /// Minimum-norm least-squares solution of `A x ≈ b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.m {
            return Err(Error::DimensionMismatch {
                context: "PivotedQr::solve",
                expected: self.m,
                actual: b.len(),
            });
        }
        let r = self.rank;
        let mut y = b.to_vec();
        for (j, v) in self.reflectors.iter().enumerate() {
            let p = 2.0 * dot(v, &y[j..]);
            for (yi, vi) in y[j..].iter_mut().zip(v) {
                *yi -= p * vi;
            }
        }
        let c = &y[..r];
        let mut z = vec![0.0; self.n];
        match &self.cod {
            None => {
                // Back substitution with R_top (r == n).
                for i in (0..r).rev() {
                    let mut acc = c[i];
                    for j in (i + 1)..r {
                        acc -= self.r_cols[j][i] * z[j];
                    }
                    z[i] = acc / self.r_cols[i][i];
                }
            }
            Some((refl, tri)) => {
                // R_top = Lᵀ Zᵀ with R_topᵀ = Z [L; 0]; solve Lᵀ w = c by forward
                // substitution (Lᵀ is lower triangular as L is upper).
                let mut w = vec![0.0; self.n];
                for i in 0..r {
                    let mut acc = c[i];
                    for j in 0..i {
                        acc -= tri[i][j] * w[j];
                    }
                    w[i] = acc / tri[i][i];
                }
                // z = Z w, applying reflectors in reverse.
                for (j, v) in refl.iter().enumerate().rev() {
                    let p = 2.0 * dot(v, &w[j..]);
                    for (wi, vi) in w[j..].iter_mut().zip(v) {
                        *wi -= p * vi;
                    }
                }
                z = w;
            }
        }
        let mut x = vec![0.0; self.n];
        for (j, &p) in self.perm.iter().enumerate() {
            x[p] = z[j];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> RealMatrix {
        RealMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rel_error(a: &RealMatrix, b: &RealMatrix) -> f64 {
        let diff = RealMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] - b[(i, j)]);
        diff.frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    /// Cyclic Jacobi eigenvalue iteration on a symmetric matrix.
    fn symmetric_eigenvalues(mut a: RealMatrix) -> Vec<f64> {
        let n = a.rows();
        for _ in 0..200 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| a[(i, j)].powi(2))
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn svd_identity() {
        let f = svd(&RealMatrix::identity(3)).unwrap();
        assert_eq!(f.singular_values, vec![1.0, 1.0, 1.0]);
        assert!(f.u.matmul(&f.v).unwrap().orthogonality_error() < 1e-12);
    }

    #[test]
    fn svd_diagonal_with_negative_entry() {
        let a = RealMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -2.0]]).unwrap();
        let f = svd(&a).unwrap();
        assert!((f.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((f.singular_values[1] - 2.0).abs() < 1e-14);
        assert!(rel_error(&a, &f.reconstruct()) < 1e-14);
    }

    #[test]
    fn svd_random_tall_matches_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 20, 10);
        let f = svd(&a).unwrap();
        assert!(rel_error(&a, &f.reconstruct()) < 1e-9);
        assert!(f.u.orthogonality_error() < 1e-10);
        assert!(f.v.orthogonality_error() < 1e-10);
        let gram = a.transpose().matmul(&a).unwrap();
        let eig = symmetric_eigenvalues(gram);
        for (s, e) in f.singular_values.iter().zip(&eig) {
            assert!((s - e.max(0.0).sqrt()).abs() < 1e-9 * f.singular_values[0]);
        }
    }

    #[test]
    fn svd_wide_and_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4, 9);
        let f = svd(&a).unwrap();
        assert_eq!(f.u.rows(), 4);
        assert_eq!(f.v.rows(), 9);
        assert!(rel_error(&a, &f.reconstruct()) < 1e-12);
        assert!(f.v.orthogonality_error() < 1e-10);

        // Duplicate columns: rank 2 of 3.
        let b = RealMatrix::from_rows(&[
            vec![1.0, 2.0, 1.0],
            vec![0.5, -1.0, 0.5],
            vec![3.0, 0.0, 3.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap();
        let f = svd(&b).unwrap();
        assert!(f.singular_values[2].abs() < 1e-12);
        assert!(f.u.orthogonality_error() < 1e-10);
        assert!(rel_error(&b, &f.reconstruct()) < 1e-12);
    }

    #[test]
    fn svd_zero_matrix() {
        let f = svd(&RealMatrix::zeros(3, 2)).unwrap();
        assert!(f.singular_values.iter().all(|s| *s == 0.0));
        assert!(f.u.orthogonality_error() < 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let a = RealMatrix {
            rows: 1,
            cols: 1,
            data: vec![f64::NAN],
        };
        assert!(svd(&a).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn svd_reconstructs_and_is_orthogonal(m in 1usize..=40, n in 1usize..=40, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, m, n);
            let f = svd(&a).unwrap();
            prop_assert!(rel_error(&a, &f.reconstruct()) < 1e-9);
            prop_assert!(f.u.orthogonality_error() < 1e-10);
            prop_assert!(f.v.orthogonality_error() < 1e-10);
            prop_assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(f.singular_values.iter().all(|s| *s >= 0.0));
        }

        #[test]
        fn gaussian_product_commutes(m1 in -10.0..10.0f64, v1 in 0.01..10.0f64, m2 in -10.0..10.0f64, v2 in 0.01..10.0f64) {
            let (a, b) = gaussian_product(m1, v1, m2, v2).unwrap();
            let (c, d) = gaussian_product(m2, v2, m1, v1).unwrap();
            prop_assert!((a - c).abs() < 1e-12 && (b - d).abs() < 1e-12);
        }

        #[test]
        fn normalized_exp_shift_invariant(x in proptest::collection::vec(-50.0..50.0f64, 1..20), c in -100.0..100.0f64) {
            let p = normalized_exp(&x).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let q = normalized_exp(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_product_examples() {
        assert_eq!(gaussian_product(0.0, 1.0, 0.0, 1.0).unwrap(), (0.0, 0.5));
        assert_eq!(gaussian_product(1.0, 1.0, 3.0, 1.0).unwrap(), (2.0, 0.5));
        let (m, v) = gaussian_product(2.0, 0.5, -1.0, 2.0).unwrap();
        assert!((m - 1.4).abs() < 1e-14 && (v - 0.4).abs() < 1e-14);
        assert!(gaussian_product(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(gaussian_product(0.0, 1.0, 1.0, -1.0).is_err());
        assert_eq!(
            gaussian_product(5.0, f64::INFINITY, 1.0, 2.0).unwrap(),
            (1.0, 2.0)
        );
    }

    #[test]
    fn normalized_exp_examples() {
        assert_eq!(normalized_exp(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        let p = normalized_exp(&[1000.0, 999.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert_eq!(normalized_exp(&[0.0, f64::NEG_INFINITY]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(
            normalized_exp(&[f64::NEG_INFINITY; 3]),
            Err(Error::DegenerateWeights)
        );
    }

    #[test]
    fn pivoted_qr_full_rank_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 30, 6);
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let qr = PivotedQr::factor(&a, None).unwrap();
        assert_eq!(qr.rank(), 6);
        let x = qr.solve(&b).unwrap();
        // Residual must be orthogonal to the column space.
        let ax = a.matvec(&x);
        let res: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let g = a.matvec_transposed(&res);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pivoted_qr_minimum_norm_on_rank_deficiency() {
        // Third column duplicates the first: minimum-norm splits the weight.
        let a = RealMatrix::from_rows(&[
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![2.0, 0.0, 2.0],
        ])
        .unwrap();
        let b = vec![2.0, 1.0, 3.0, 4.0];
        let qr = PivotedQr::factor(&a, None).unwrap();
        assert_eq!(qr.rank(), 2);
        let x = qr.solve(&b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
        assert!((x[2] - 1.0).abs() < 1e-12);
        let zero = PivotedQr::factor(&a, None).unwrap().solve(&[0.0; 4]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }
}
