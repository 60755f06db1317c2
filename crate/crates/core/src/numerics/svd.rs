//! Singular value decompositions.
//!
//! [`full_svd`] uses one-sided (Hestenes) Jacobi rotations, which gives
//! singular vectors that are orthonormal to working precision even for tiny
//! singular values. [`truncated_svd`] is a randomized range finder with
//! subspace iteration followed by an exact SVD of the small projected matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Factors `U diag(sigma) Vᵀ` of a matrix, full or rank-truncated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    /// Left singular vectors, `rows x k`.
    pub u: Matrix,
    /// Singular values in non-increasing order.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `cols x k`.
    pub v: Matrix,
}

impl SpectralBasis {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul_nt(&self.v).expect("factor shapes agree")
    }

    /// `‖M − U diag(sigma) Vᵀ‖_F / max(1, ‖M‖_F)`.
    pub fn relative_residual(&self, m: &Matrix) -> f64 {
        let r = self.reconstruct();
        r.sub(m).expect("basis matches matrix").frobenius_norm() / m.frobenius_norm().max(1.0)
    }

    /// Frobenius norms of `UᵀU − I` and `VᵀV − I`.
    pub fn orthonormality_defect(&self) -> (f64, f64) {
        let k = self.rank();
        let eye = Matrix::identity(k);
        let du = self.u.matmul_tn(&self.u).unwrap().sub(&eye).unwrap();
        let dv = self.v.matmul_tn(&self.v).unwrap().sub(&eye).unwrap();
        (du.frobenius_norm(), dv.frobenius_norm())
    }

    /// Flips each singular pair so the largest-magnitude entry of the `U` column is positive.
    pub fn fix_signs(&mut self) {
        for j in 0..self.rank() {
            let mut best = 0.0f64;
            let mut sign = 1.0;
            for i in 0..self.u.rows() {
                let x = self.u[(i, j)];
                if x.abs() > best {
                    best = x.abs();
                    sign = x.signum();
                }
            }
            if sign < 0.0 {
                for i in 0..self.u.rows() {
                    self.u[(i, j)] = -self.u[(i, j)];
                }
                for i in 0..self.v.rows() {
                    self.v[(i, j)] = -self.v[(i, j)];
                }
            }
        }
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> Result<SpectralBasis> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate rank-{} basis to {k}",
                self.rank()
            )));
        }
        Ok(SpectralBasis {
            u: self.u.columns(0, k)?,
            sigma: self.sigma[..k].to_vec(),
            v: self.v.columns(0, k)?,
        })
    }
}

/// Full thin SVD: `U` is `m x k`, `V` is `n x k`, with `k = min(m, n)`.
pub fn full_svd(m: &Matrix) -> Result<SpectralBasis> {
    if !m.is_finite() {
        return Err(Error::NonFinite("full_svd input".into()));
    }
    let (rows, cols) = m.shape();
    let mut basis = if rows >= cols {
        jacobi_tall(m)?
    } else {
        let t = jacobi_tall(&m.transpose())?;
        SpectralBasis {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }
    };
    basis.fix_signs();
    Ok(basis)
}

/// One-sided Jacobi on an `m x n` matrix with `m >= n`.
fn jacobi_tall(a: &Matrix) -> Result<SpectralBasis> {
    let (m, n) = a.shape();
    if n == 0 {
        return Ok(SpectralBasis {
            u: Matrix::zeros(m, 0),
            sigma: Vec::new(),
            v: Matrix::zeros(0, 0),
        });
    }
    // Column-major working copies.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let tol = f64::EPSILON * (m as f64).sqrt();
    // Columns this small are roundoff; rotating them cannot converge.
    let fro = norms.iter().sum::<f64>().sqrt();
    let negligible = n as f64 * f64::EPSILON * fro;
    let negligible_sq = negligible * negligible;

    let mut converged = false;
    let mut sweeps = 0;
    let mut worst = 0.0f64;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        worst = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible_sq || beta <= negligible_sq {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                let ratio = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                worst = worst.max(ratio);
                if ratio <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                rotate(&mut left[p], &mut right[0], c, s);
                let (left, right) = vcols.split_at_mut(q);
                rotate(&mut left[p], &mut right[0], c, s);
                norms[p] = dot(&cols[p], &cols[p]);
                norms[q] = dot(&cols[q], &cols[q]);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    let sigma_raw: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    if !converged {
        let smax = sigma_raw.iter().cloned().fold(0.0, f64::max);
        let smin = sigma_raw.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(Error::NoConvergence {
            sweeps,
            off_ratio: worst,
            sigma_max: smax,
            sigma_min: smin,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma_raw[j].total_cmp(&sigma_raw[i]));

    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut null_slots = Vec::new();
    for (slot, &src) in order.iter().enumerate() {
        let s = sigma_raw[src];
        sigma.push(s);
        for i in 0..n {
            v[(i, slot)] = vcols[src][i];
        }
        if s > negligible {
            for i in 0..m {
                u[(i, slot)] = cols[src][i] / s;
            }
        } else {
            null_slots.push(slot);
        }
    }
    complete_orthonormal(&mut u, &null_slots);
    Ok(SpectralBasis { u, sigma, v })
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every other column.
fn complete_orthonormal(u: &mut Matrix, slots: &[usize]) {
    if slots.is_empty() {
        return;
    }
    let (m, k) = u.shape();
    let mut filled: Vec<bool> = vec![true; k];
    for &s in slots {
        filled[s] = false;
    }
    for &slot in slots {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _ in 0..2 {
                for j in (0..k).filter(|&j| filled[j]) {
                    let col = u.column(j);
                    let proj = dot(&cand, &col);
                    for (c, x) in cand.iter_mut().zip(&col) {
                        *c -= proj * x;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > best_norm {
                best_norm = norm;
                best = Some(cand);
                if norm > 0.5 {
                    break;
                }
            }
        }
        let cand = best.expect("a complement direction exists while k <= m");
        for i in 0..m {
            u[(i, slot)] = cand[i] / best_norm;
        }
        filled[slot] = true;
    }
}

/// Thin orthonormal factor `Q` (`m x l`, `m >= l`) of a Householder QR of `y`.
pub fn orthonormalize(y: &Matrix) -> Matrix {
    let (m, l) = y.shape();
    assert!(m >= l, "orthonormalize needs a tall matrix");
    let mut cols: Vec<Vec<f64>> = (0..l).map(|j| y.column(j)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(l);
    for j in 0..l {
        let x = &cols[j][j..];
        let norm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        if norm == 0.0 {
            v.iter_mut().for_each(|e| *e = 0.0);
            v[0] = 1.0;
        } else {
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
        }
        let vn = dot(&v, &v).sqrt();
        if vn > 0.0 {
            v.iter_mut().for_each(|e| *e /= vn);
        }
        for col in cols.iter_mut().skip(j) {
            let seg = &mut col[j..];
            let p = 2.0 * dot(&v, seg);
            for (s, vv) in seg.iter_mut().zip(&v) {
                *s -= p * vv;
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{l-1} applied to the first l columns of the identity.
    let mut q = Matrix::zeros(m, l);
    for c in 0..l {
        let mut e = vec![0.0; m];
        e[c] = 1.0;
        for j in (0..l).rev() {
            let v = &reflectors[j];
            let seg = &mut e[j..];
            let p = 2.0 * dot(v, seg);
            for (s, vv) in seg.iter_mut().zip(v) {
                *s -= p * vv;
            }
        }
        for i in 0..m {
            q[(i, c)] = e[i];
        }
    }
    q
}

/// Anything that can multiply a dense block from the left, with and without transposition.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `self · x`
    fn apply(&self, x: &Matrix) -> Result<Matrix>;
    /// `selfᵀ · x`
    fn apply_transpose(&self, x: &Matrix) -> Result<Matrix>;
}

impl LinearOperator for Matrix {
    fn nrows(&self) -> usize {
        self.rows()
    }
    fn ncols(&self) -> usize {
        self.cols()
    }
    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.matmul(x)
    }
    fn apply_transpose(&self, x: &Matrix) -> Result<Matrix> {
        self.matmul_tn(x)
    }
}

impl LinearOperator for CsrMatrix {
    fn nrows(&self) -> usize {
        self.rows()
    }
    fn ncols(&self) -> usize {
        self.cols()
    }
    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.spmm(x)
    }
    fn apply_transpose(&self, x: &Matrix) -> Result<Matrix> {
        self.spmm_t(x)
    }
}

/// Parameters of the randomized range finder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncatedSvdParams {
    pub k: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

/// Rank-`k` randomized SVD.
///
/// A Gaussian test block of width `k + oversample` (capped at `min(rows, cols)`)
/// is pushed through `power_iters` rounds of subspace iteration with
/// re-orthonormalization after every product, then `QᵀM` is factored exactly.
pub fn truncated_svd<A: LinearOperator + ?Sized>(
    m: &A,
    params: TruncatedSvdParams,
) -> Result<SpectralBasis> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let min_dim = rows.min(cols);
    let k = params.k;
    if k == 0 || k > min_dim {
        return Err(Error::InvalidArgument(format!(
            "truncated rank {k} outside 1..={min_dim}"
        )));
    }
    let width = (k + params.oversample).min(min_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let omega = Matrix::from_fn(cols, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(&m.apply(&omega)?);
    for _ in 0..params.power_iters {
        let z = orthonormalize(&m.apply_transpose(&q)?);
        q = orthonormalize(&m.apply(&z)?);
    }
    // B = QᵀM, factored through its transpose (cols x width, tall).
    let bt = m.apply_transpose(&q)?;
    if !bt.is_finite() {
        return Err(Error::NonFinite("truncated_svd projection".into()));
    }
    let small = jacobi_tall(&bt)?;
    // Bᵀ = Ub Σ Vbᵀ  =>  B = Vb Σ Ubᵀ  =>  M ≈ (Q Vb) Σ Ubᵀ
    let u_full = q.matmul(&small.v)?;
    let mut basis = SpectralBasis {
        u: u_full.columns(0, k)?,
        sigma: small.sigma[..k].to_vec(),
        v: small.u.columns(0, k)?,
    };
    basis.fix_signs();
    Ok(basis)
}
