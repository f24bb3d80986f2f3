//! Quadratic invariance regularizers in a Gaussian RKHS, handled through a
//! Nyström embedding. The prox of `½Σ⟨z̃ᵢ, v⟩²` has the closed form
//! `(λI + Z̃Z̃ᵀ)⁻¹λφ̃(x)`; the kernel-warping variant uses `(I + Z̃Z̃ᵀ/λ)^{-1/2}`.
//!
//! Input points are rows of a matrix. Embedded vectors are columns.

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_psd, svd, Cholesky, Matrix};

/// Ridge added to `K_W` before the inverse square root.
pub const LANDMARK_RIDGE: f64 = 1e-8;

pub fn gaussian_kernel(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `1 / median` of the pairwise squared distances between rows.
pub fn median_heuristic_gamma(points: &Matrix) -> Result<f64> {
    let n = points.rows();
    let mut d2 = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (points.row(i), points.row(j));
            d2.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
        }
    }
    if d2.is_empty() {
        return Err(Error::InvalidArgument("median heuristic needs at least 2 points".into()));
    }
    d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = d2.len();
    let median = if m % 2 == 1 { d2[m / 2] } else { 0.5 * (d2[m / 2 - 1] + d2[m / 2]) };
    if median <= 0.0 {
        return Err(Error::ZeroVariance("pairwise distances"));
    }
    Ok(1.0 / median)
}

#[derive(Debug, Clone)]
pub struct NystromMap {
    landmarks: Matrix,
    gamma: f64,
    k_w_inv_sqrt: Matrix,
}

impl NystromMap {
    pub fn new(landmarks: Matrix, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("kernel bandwidth must be > 0, got {gamma}")));
        }
        if landmarks.rows() == 0 {
            return Err(Error::InvalidArgument("no landmarks".into()));
        }
        let p = landmarks.rows();
        let k_w = Matrix::from_fn(p, p, |i, j| gaussian_kernel(gamma, landmarks.row(i), landmarks.row(j)));
        let k_w_inv_sqrt = inv_sqrt_psd(&k_w, LANDMARK_RIDGE)?;
        Ok(Self { landmarks, gamma, k_w_inv_sqrt })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn landmarks(&self) -> &Matrix {
        &self.landmarks
    }

    pub fn k_w_inv_sqrt(&self) -> &Matrix {
        &self.k_w_inv_sqrt
    }

    pub fn dim(&self) -> usize {
        self.landmarks.rows()
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        gaussian_kernel(self.gamma, a, b)
    }

    fn landmark_column(&self, f: impl Fn(&[f64]) -> f64) -> Matrix {
        let values: Vec<f64> = (0..self.dim()).map(|l| f(self.landmarks.row(l))).collect();
        self.k_w_inv_sqrt.matmul(&Matrix::column(&values))
    }

    /// `φ̃(x) = K_W^{-1/2} (k(x, ω₁), …, k(x, ω_p))ᵀ`
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.landmark_column(|w| self.kernel(x, w)).into_vec())
    }

    /// Embeddings of every row of `points`, as the columns of a `p × n` matrix.
    pub fn embed_rows(&self, points: &Matrix) -> Result<Matrix> {
        self.check_point(&vec![0.0; points.cols()])?;
        let k = Matrix::from_fn(self.dim(), points.rows(), |l, i| self.kernel(self.landmarks.row(l), points.row(i)));
        Ok(self.k_w_inv_sqrt.matmul(&k))
    }

    /// One column per (anchor, coordinate), anchor-major: the embedding of
    /// `∂k(xᵢ, ·)/∂x_{ij} = −2γ(x_{ij} − ω_j) k(xᵢ, ω)`.
    pub fn gradient_representers(&self, anchors: &Matrix) -> Result<InvarianceSet> {
        if anchors.rows() == 0 {
            return Err(Error::InvalidArgument("no anchors".into()));
        }
        self.check_point(anchors.row(0))?;
        let dim = anchors.cols();
        let mut raw = Matrix::zeros(self.dim(), anchors.rows() * dim);
        for i in 0..anchors.rows() {
            let x = anchors.row(i);
            for l in 0..self.dim() {
                let w = self.landmarks.row(l);
                let k = self.kernel(x, w);
                for j in 0..dim {
                    raw[(l, i * dim + j)] = -2.0 * self.gamma * (x[j] - w[j]) * k;
                }
            }
        }
        Ok(InvarianceSet::new(self.k_w_inv_sqrt.matmul(&raw)))
    }

    /// One column `√w (φ̃(xᵢ) − φ̃(xⱼ))` per edge `(i, j, w)`.
    pub fn laplacian_representers(&self, points: &Matrix, edges: &[(usize, usize, f64)]) -> Result<InvarianceSet> {
        let phi = self.embed_rows(points)?;
        let mut z = Matrix::zeros(self.dim(), edges.len());
        for (e, &(i, j, w)) in edges.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has weight {w}")));
            }
            if i >= points.rows() || j >= points.rows() {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) out of range")));
            }
            let s = w.sqrt();
            for r in 0..self.dim() {
                z[(r, e)] = s * (phi[(r, i)] - phi[(r, j)]);
            }
        }
        Ok(InvarianceSet::new(z))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.landmarks.cols() {
            return Err(Error::ShapeMismatch {
                op: "nystrom embed",
                left: self.landmarks.shape(),
                right: (1, x.len()),
            });
        }
        Ok(())
    }
}

/// Embedded invariance representers `Z̃` (`p × m`).
#[derive(Debug, Clone)]
pub struct InvarianceSet {
    pub z_tilde: Matrix,
}

impl InvarianceSet {
    pub fn new(z_tilde: Matrix) -> Self {
        Self { z_tilde }
    }

    pub fn dim(&self) -> usize {
        self.z_tilde.rows()
    }

    pub fn count(&self) -> usize {
        self.z_tilde.cols()
    }

    /// `½ Σᵢ ⟨z̃ᵢ, v⟩²`
    pub fn penalty(&self, v: &[f64]) -> f64 {
        let zt_v = self.z_tilde.t_matmul(&Matrix::column(v));
        0.5 * zt_v.frobenius_sq()
    }

    pub fn penalty_gradient(&self, v: &[f64]) -> Vec<f64> {
        let zt_v = self.z_tilde.t_matmul(&Matrix::column(v));
        self.z_tilde.matmul(&zt_v).into_vec()
    }
}

enum Solver {
    /// Cholesky of `λI + Z̃Z̃ᵀ` (`p × p`).
    Direct(Cholesky),
    /// Cholesky of `λI + Z̃ᵀZ̃` (`m × m`), Woodbury identity.
    Woodbury(Cholesky),
}

/// Prox and warping maps for a fixed `Z̃` and `λ`, factorized once.
pub struct WarpOperator {
    z: Matrix,
    lambda: f64,
    solver: Solver,
    /// Left singular vectors and values of `Z̃`, computed on first use of
    /// the square-root variant.
    spectrum: std::cell::OnceCell<(Matrix, Vec<f64>)>,
}

impl WarpOperator {
    pub fn new(set: &InvarianceSet, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        let z = set.z_tilde.clone();
        let solver = if z.rows() <= z.cols() {
            Solver::Direct(Cholesky::new(&z.matmul_t(&z).add_identity(lambda))?)
        } else {
            Solver::Woodbury(Cholesky::new(&z.t_matmul(&z).add_identity(lambda))?)
        };
        Ok(Self { z, lambda, solver, spectrum: std::cell::OnceCell::new() })
    }

    pub fn uses_woodbury(&self) -> bool {
        matches!(self.solver, Solver::Woodbury(_))
    }

    /// `(λI + Z̃Z̃ᵀ)⁻¹ λ Φ` for the columns of `phi`.
    pub fn apply(&self, phi: &Matrix) -> Result<Matrix> {
        self.check(phi)?;
        match &self.solver {
            Solver::Direct(ch) => ch.solve(&phi.scale(self.lambda)),
            Solver::Woodbury(ch) => {
                let inner = ch.solve(&self.z.t_matmul(phi))?;
                Ok(phi - &self.z.matmul(&inner))
            }
        }
    }

    /// `(I + Z̃Z̃ᵀ/λ)^{-1/2} Φ`, computed from the SVD of `Z̃`.
    pub fn apply_sqrt(&self, phi: &Matrix) -> Result<Matrix> {
        self.check(phi)?;
        let (u, s) = match self.spectrum.get() {
            Some(v) => v,
            None => {
                let d = svd(&self.z)?;
                let _ = self.spectrum.set((d.u, d.sigma));
                self.spectrum.get().unwrap()
            }
        };
        let mut coef = u.t_matmul(phi);
        for (r, sv) in s.iter().enumerate() {
            let factor = 1.0 / (1.0 + sv * sv / self.lambda).sqrt() - 1.0;
            for c in 0..coef.cols() {
                coef[(r, c)] *= factor;
            }
        }
        Ok(phi + &u.matmul(&coef))
    }

    fn check(&self, phi: &Matrix) -> Result<()> {
        if phi.rows() != self.z.rows() {
            return Err(Error::ShapeMismatch { op: "warp prox", left: self.z.shape(), right: phi.shape() });
        }
        Ok(())
    }
}

/// `(I + Z̃Z̃ᵀ)⁻¹ φ̃`
pub fn warp_prox(set: &InvarianceSet, phi: &[f64]) -> Result<Vec<f64>> {
    Ok(WarpOperator::new(set, 1.0)?.apply(&Matrix::column(phi))?.into_vec())
}

/// `(I + Z̃Z̃ᵀ)^{-1/2} φ̃`
pub fn warp_prox_sqrt(set: &InvarianceSet, phi: &[f64]) -> Result<Vec<f64>> {
    Ok(WarpOperator::new(set, 1.0)?.apply_sqrt(&Matrix::column(phi))?.into_vec())
}

pub fn warped_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Projections of the centered columns of `outputs` (`p × n`) onto their
/// top two principal directions, as an `n × 2` matrix.
pub fn kpca_top2(outputs: &Matrix) -> Result<Matrix> {
    let n = outputs.cols();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("kernel PCA needs n >= 3, got {n}")));
    }
    let centered = outputs.center_columns();
    let d = svd(&centered)?;
    let top = d.sigma.first().copied().unwrap_or(0.0);
    let rank = d.sigma.iter().filter(|s| **s > 1e-10 * top.max(f64::MIN_POSITIVE)).count();
    if top == 0.0 || rank < 2 {
        return Err(Error::RankDeficient { required: 2, rank });
    }
    let dirs = d.u.select_cols(&[0, 1]);
    Ok(centered.t_matmul(&dirs))
}
