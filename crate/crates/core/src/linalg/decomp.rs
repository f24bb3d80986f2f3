//! Jacobi SVD, Jacobi symmetric eigensolver, Cholesky and the PSD matrix
//! functions built on them.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues down to `-PSD_CLAMP * max(1, λ_max)` count as zero.
pub const PSD_CLAMP: f64 = 1e-8;
/// Stabilizer used when `inv_sqrt_psd` is called with `eps = 0`.
pub const MIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Svd {
    /// m x r, orthonormal columns.
    pub u: Matrix,
    /// Length r, nonincreasing.
    pub sigma: Vec<f64>,
    /// r x n, orthonormal rows.
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.vt)
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd { u: t.vt.transpose(), sigma: t.sigma, vt: t.u.transpose() });
    }
    let (m, n) = a.shape();
    // Rows of `w` are the columns of A; rows of `v` are the columns of V.
    let mut w = a.transpose();
    let mut v = Matrix::identity(n);
    let mut converged = n < 2;
    let mut residual = 0.0;
    // columns count as orthogonal once |cos| is at rounding level for length m
    let tol = (m as f64 * f64::EPSILON).max(1e-15);
    for _ in 0..MAX_SWEEPS {
        residual = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let wp = w.row(p);
                    let wq = w.row(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { routine: "jacobi svd", iterations: MAX_SWEEPS, residual });
    }

    let norms: Vec<f64> = (0..n).map(|j| dot(w.row(j), w.row(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep column order
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let sigma_max = norms.iter().cloned().fold(0.0, f64::max);
    let zero_tol = sigma_max * 1e-13;

    let mut u = Matrix::zeros(m, n);
    let mut vt = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        sigma.push(norms[j]);
        for (i, x) in v.row(j).iter().enumerate() {
            vt[(k, i)] = *x;
        }
        if norms[j] > zero_tol && norms[j] > 0.0 {
            for (i, x) in w.row(j).iter().enumerate() {
                u[(i, k)] = x / norms[j];
            }
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(Svd { u, sigma, vt })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for k in 0..cols {
        let xp = data[p * cols + k];
        let xq = data[q * cols + k];
        data[p * cols + k] = c * xp - s * xq;
        data[q * cols + k] = s * xp + c * xq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns (Gram–Schmidt over the standard basis).
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    let m = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !missing.contains(j)).collect();
    for &target in missing {
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _ in 0..2 {
                for &j in &filled {
                    let col = u.col(j);
                    let proj = dot(&col, &cand);
                    for (c, x) in cand.iter_mut().zip(&col) {
                        *c -= proj * x;
                    }
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if nrm > 0.5 {
                let unit: Vec<f64> = cand.iter().map(|x| x / nrm).collect();
                u.set_col(target, &unit);
                filled.push(target);
                break;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SymEig {
    /// Descending.
    pub values: Vec<f64>,
    /// Column i is the eigenvector for `values[i]`.
    pub vectors: Matrix,
}

impl SymEig {
    /// `V f(Λ) Vᵀ`
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|l| f(*l)).collect();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= fv[j];
            }
        }
        scaled.matmul_t(&self.vectors)
    }
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch { op: "symmetric matrix", left: a.shape(), right: (a.cols(), a.rows()) });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("symmetric matrix".into()));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, eigenvalues in
/// descending order.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut m = a.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    let mut converged = false;
    let mut off = 0.0;
    for _ in 0..MAX_SWEEPS {
        off = off_diagonal_norm(&m);
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let negligible = apq.abs() <= 0.5 * f64::EPSILON * (m[(p, p)] * m[(q, q)]).abs().sqrt()
                    || apq.abs() <= 1e-18 * scale;
                if negligible {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t =
                    if theta.is_finite() { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) } else { 0.0 };
                if t == 0.0 {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J with J = [[c, s], [-s, c]] at (p, q)
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { routine: "jacobi eigen", iterations: MAX_SWEEPS, residual: off });
    }
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.select_cols(&order);
    Ok(SymEig { values, vectors })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a PSD matrix with tiny negative eigenvalues clamped
/// to zero. Rejects eigenvalues below `-PSD_CLAMP * max(1, λ_max)`.
pub fn psd_eig(a: &Matrix) -> Result<SymEig> {
    let mut eig = sym_eig(a)?;
    let tol = PSD_CLAMP * eig.values.first().copied().unwrap_or(0.0).max(1.0);
    for l in eig.values.iter_mut() {
        if *l < -tol {
            return Err(Error::NegativeEigenvalue(*l));
        }
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    Ok(eig)
}

/// `(A + εI)^{-1/2}` for symmetric PSD `A`. `eps = 0` is replaced by
/// [`MIN_EPS`].
pub fn inv_sqrt_psd(a: &Matrix, eps: f64) -> Result<Matrix> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let eps = eps.max(MIN_EPS);
    let eig = psd_eig(a)?;
    Ok(eig.apply_fn(|l| 1.0 / (l + eps).sqrt()))
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        check_symmetric(a)?;
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::ShapeMismatch { op: "cholesky solve", left: (n, n), right: b.shape() });
        }
        let mut x = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(&Matrix::column(b))?.into_vec())
    }
}

pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    Cholesky::new(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random(rng: &mut SplitMix64, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.uniform_in(-1.0, 1.0))
    }

    fn assert_orthonormal_cols(u: &Matrix, tol: f64) {
        let g = u.t_matmul(u);
        let e = (&g - &Matrix::identity(u.cols())).max_abs();
        assert!(e <= tol, "orthogonality error {e}");
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0, 1.0]);
        let s = svd(&Matrix::diag(&[2.0, 3.0])).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0]);
        assert!((s.u[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((s.vt[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random() {
        let mut rng = SplitMix64::new(11);
        for (m, n) in [(5, 4), (4, 5), (1, 3), (7, 7), (16, 9)] {
            let a = random(&mut rng, m, n);
            let s = svd(&a).unwrap();
            assert_eq!(s.u.shape(), (m, m.min(n)));
            assert_eq!(s.vt.shape(), (m.min(n), n));
            assert!((&s.reconstruct() - &a).max_abs() <= 1e-8 * a.max_abs().max(1.0));
            assert_orthonormal_cols(&s.u, 1e-10);
            assert_orthonormal_cols(&s.vt.transpose(), 1e-10);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rank_deficient_keeps_orthonormal_u() {
        let u = Matrix::column(&[1.0, 2.0, -1.0, 0.5]);
        let v = Matrix::from_rows(&[vec![3.0, -1.0, 2.0]]).unwrap();
        let a = u.matmul(&v);
        let s = svd(&a).unwrap();
        assert!(s.sigma[1] < 1e-12);
        assert_orthonormal_cols(&s.u, 1e-10);
        assert!((&s.reconstruct() - &a).max_abs() < 1e-12);
        let z = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_orthonormal_cols(&z.u, 1e-12);
    }

    #[test]
    fn eig_small_cases() {
        let e = sym_eig(&Matrix::diag(&[1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![2.0, 1.0]);
        let e = sym_eig(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15 && (e.values[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_residual_random() {
        let mut rng = SplitMix64::new(5);
        let b = random(&mut rng, 6, 6);
        let a = (&b + &b.transpose()).scale(0.5);
        let e = sym_eig(&a).unwrap();
        for i in 0..6 {
            let v = Matrix::column(&e.vectors.col(i));
            let r = &a.matmul(&v) - &v.scale(e.values[i]);
            assert!(r.max_abs() < 1e-8);
        }
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn inv_sqrt_cases() {
        let b = inv_sqrt_psd(&Matrix::identity(3), 0.0).unwrap();
        assert!((&b - &Matrix::identity(3)).max_abs() < 1e-10);
        let b = inv_sqrt_psd(&Matrix::diag(&[3.0, 0.0]), 1.0).unwrap();
        assert!((&b - &Matrix::diag(&[0.5, 1.0])).max_abs() < 1e-14);
        assert!(matches!(inv_sqrt_psd(&Matrix::diag(&[1.0, -0.1]), 1.0), Err(Error::NegativeEigenvalue(_))));
        assert!(inv_sqrt_psd(&Matrix::identity(2), -1.0).is_err());
    }

    #[test]
    fn inv_sqrt_gram_identity_residual() {
        let mut rng = SplitMix64::new(9);
        let x = random(&mut rng, 5, 3);
        let a = x.matmul_t(&x); // rank 3, PSD
        let eps = 0.1;
        let b = inv_sqrt_psd(&a, eps).unwrap();
        let r = b.matmul(&a.add_identity(eps)).matmul(&b);
        assert!((&r - &Matrix::identity(5)).max_abs() < 1e-8);
        assert!(b.asymmetry() < 1e-12);
    }

    #[test]
    fn spd_solve_cases() {
        let b = Matrix::column(&[1.0, 2.0, 3.0]);
        assert_eq!(solve_spd(&Matrix::identity(3), &b).unwrap(), b);
        let x = solve_spd(&Matrix::identity(2).scale(2.0), &Matrix::filled(2, 1, 1.0)).unwrap();
        assert!(x.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-15));
        let not_pd = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_spd(&not_pd, &Matrix::column(&[1.0, 1.0])),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn spd_solve_random_residual() {
        let mut rng = SplitMix64::new(13);
        let g = random(&mut rng, 6, 6);
        let a = g.matmul_t(&g).add_identity(0.5);
        let b = random(&mut rng, 6, 2);
        let x = solve_spd(&a, &b).unwrap();
        assert!((&a.matmul(&x) - &b).max_abs() <= 1e-8 * b.max_abs().max(1.0));
    }
}
