//! Mini-batch proximal CCA.
//!
//! For centered views `X, Y` (d × n) the layer computes
//!
//! `argmin_{P,Q} λ/(2n)‖P − X‖² + λ/(2n)‖Q − Y‖² + L(P, Q)`
//!
//! where `L(P, Q) = −Σ_{i≤k} σ_i(T)` and
//! `T = (PPᵀ + εI)^{-1/2} PQᵀ (QQᵀ + εI)^{-1/2}`. The backward pass uses the
//! fact that the Jacobian of a prox is symmetric, so the adjoint is a single
//! finite difference of two solves. Also holds the multi-view (GCCA) closed
//! form and a small two-tower model that uses the layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_eig, svd, sym_eig, Cholesky, Matrix, Svd, SymEig};
use crate::rng::SplitMix64;
use crate::tape::{Tape, Var};

/// Minimum gap `σ_k − σ_{k+1}` for the top-k sum to be differentiable.
pub const SPECTRAL_GAP: f64 = 1e-8;
/// Ridge added to every `X_jᵀX_j` in the multi-view solve.
pub const GCCA_RIDGE: f64 = 1e-8;

/// Finite-difference scheme of the backward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomkeScheme {
    /// `(P(X + εV) − P(X)) / ε`, two solves, error `O(ε)`.
    #[default]
    Forward,
    /// `(P(X + εV) − P(X − εV)) / 2ε`, three solves, error `O(ε²)`.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcaLayerConfig {
    /// Number of canonical components in `L`.
    pub k: usize,
    /// Stabilizer added to both covariance blocks.
    pub eps: f64,
    pub k_sched: f64,
    pub alpha0: f64,
    pub max_iters: usize,
    /// Max-abs gradient at which a forward solve stops.
    pub tol: f64,
    /// Tolerance for the solves inside the backward pass; the finite
    /// difference divides solver error by `domke_eps`.
    pub backward_tol: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub domke_eps: f64,
    pub domke_scheme: DomkeScheme,
    /// The prox is skipped once `λ_t` reaches this value.
    pub fade_threshold: f64,
}

impl Default for CcaLayerConfig {
    fn default() -> Self {
        Self {
            k: 1,
            eps: 1e-4,
            k_sched: 0.5,
            alpha0: 0.1,
            max_iters: 2000,
            tol: 1e-6,
            backward_tol: 1e-11,
            armijo: 1e-4,
            shrink: 0.5,
            domke_eps: 1e-4,
            domke_scheme: DomkeScheme::Forward,
            fade_threshold: 1e6,
        }
    }
}

impl CcaLayerConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k == 0 || self.k > d {
            return Err(Error::InvalidArgument(format!("k = {} must lie in 1..={d}", self.k)));
        }
        let positive = [self.eps, self.alpha0, self.tol, self.backward_tol, self.domke_eps];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.k_sched >= 0.0) {
            return Err(Error::InvalidArgument(format!("bad CCA layer config {self:?}")));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidArgument("line search constants must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn lambda_at(&self, epoch: usize) -> f64 {
        lambda_schedule(self.k_sched, self.alpha0, epoch)
    }
}

/// `λ_t = (1 + k t) α₀`
pub fn lambda_schedule(k_sched: f64, alpha0: f64, epoch: usize) -> f64 {
    (1.0 + k_sched * epoch as f64) * alpha0
}

#[derive(Debug, Clone)]
pub struct CcaObjective {
    /// `−Σ_{i≤k} σ_i(T)`
    pub value: f64,
    pub t: Matrix,
    pub svd: Svd,
}

struct Whitening {
    eig: SymEig,
    inv_sqrt: Matrix,
}

fn whitening(x: &Matrix, eps: f64) -> Result<Whitening> {
    let mut eig = psd_eig(&x.matmul_t(x).symmetrize())?;
    for l in eig.values.iter_mut() {
        *l += eps;
    }
    let inv_sqrt = eig.apply_fn(|l| 1.0 / l.sqrt());
    Ok(Whitening { eig, inv_sqrt })
}

fn check_views(x: &Matrix, y: &Matrix, eps: f64, k: usize) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch { op: "cca views", left: x.shape(), right: y.shape() });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if k == 0 || k > x.rows() {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={}", x.rows())));
    }
    Ok(())
}

pub fn cca_objective(x: &Matrix, y: &Matrix, eps: f64, k: usize) -> Result<CcaObjective> {
    check_views(x, y, eps, k)?;
    let a = whitening(x, eps)?;
    let c = whitening(y, eps)?;
    let t = a.inv_sqrt.matmul(&x.matmul_t(y)).matmul(&c.inv_sqrt);
    let svd = svd(&t)?;
    let value = -svd.sigma[..k].iter().sum::<f64>();
    Ok(CcaObjective { value, t, svd })
}

/// Adjoint of `A` given the adjoint `K` of `A^{-1/2}`:
/// `Q (F ∘ QᵀKQ) Qᵀ` with the divided differences of `λ ↦ λ^{-1/2}`.
fn inv_sqrt_adjoint(w: &Whitening, k: &Matrix) -> Matrix {
    let q = &w.eig.vectors;
    let inner = q.t_matmul(&k.symmetrize()).matmul(q);
    let r: Vec<f64> = w.eig.values.iter().map(|l| l.sqrt()).collect();
    let scaled = Matrix::from_fn(inner.rows(), inner.cols(), |i, j| -inner[(i, j)] / (r[i] * r[j] * (r[i] + r[j])));
    q.matmul(&scaled).matmul_t(q)
}

/// `L` and its gradients in `X` and `Y`.
pub fn cca_objective_grad(x: &Matrix, y: &Matrix, eps: f64, k: usize) -> Result<(f64, Matrix, Matrix)> {
    check_views(x, y, eps, k)?;
    let a = whitening(x, eps)?;
    let c = whitening(y, eps)?;
    let s12 = x.matmul_t(y);
    let t = a.inv_sqrt.matmul(&s12).matmul(&c.inv_sqrt);
    let dec = svd(&t)?;
    if k < dec.sigma.len() {
        let gap = dec.sigma[k - 1] - dec.sigma[k];
        if gap < SPECTRAL_GAP {
            return Err(Error::DegenerateSpectrum { k, gap });
        }
    }
    let value = -dec.sigma[..k].iter().sum::<f64>();
    let d = x.rows();
    // ∂Σσ/∂T = U_k V_kᵀ
    let uk = Matrix::from_fn(d, k, |i, j| dec.u[(i, j)]);
    let vk = Matrix::from_fn(d, k, |i, j| dec.vt[(j, i)]);
    let gamma = uk.matmul_t(&vk);

    let psi = a.inv_sqrt.matmul(&gamma).matmul(&c.inv_sqrt);
    let k_a = gamma.matmul(&c.inv_sqrt).matmul_t(&s12);
    let k_c = s12.t_matmul(&a.inv_sqrt).matmul(&gamma);
    let g_a = inv_sqrt_adjoint(&a, &k_a);
    let g_c = inv_sqrt_adjoint(&c, &k_c);
    let mut dx = &psi.matmul(y) + &g_a.matmul(x).scale(2.0);
    let mut dy = &psi.t_matmul(x) + &g_c.matmul(y).scale(2.0);
    // L is the negated sum
    dx = dx.scale(-1.0);
    dy = dy.scale(-1.0);
    Ok((value, dx, dy))
}

#[derive(Debug, Clone)]
pub struct ProxCcaSolution {
    pub p: Matrix,
    pub q: Matrix,
    pub iterations: usize,
    /// Max-abs gradient of the prox objective at `(P, Q)`.
    pub residual: f64,
    /// Prox objective after every accepted step, starting at the initial point.
    pub trace: Vec<f64>,
}

struct Eval {
    f: f64,
    gp: Matrix,
    gq: Matrix,
}

fn prox_eval(cfg: &CcaLayerConfig, x: &Matrix, y: &Matrix, p: &Matrix, q: &Matrix, lambda: f64) -> Result<Eval> {
    let (l, mut gp, mut gq) = cca_objective_grad(p, q, cfg.eps, cfg.k)?;
    let n = x.cols() as f64;
    let dp = p - x;
    let dq = q - y;
    gp.axpy(lambda / n, &dp);
    gq.axpy(lambda / n, &dq);
    let f = l + lambda / (2.0 * n) * (dp.frobenius_sq() + dq.frobenius_sq());
    Ok(Eval { f, gp, gq })
}

fn max_abs2(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs().max(b.max_abs())
}

/// Prox objective value at `(P, Q)`.
pub fn prox_cca_objective(
    cfg: &CcaLayerConfig,
    x: &Matrix,
    y: &Matrix,
    p: &Matrix,
    q: &Matrix,
    lambda: f64,
) -> Result<f64> {
    let l = cca_objective(p, q, cfg.eps, cfg.k)?.value;
    let n = x.cols() as f64;
    Ok(l + lambda / (2.0 * n) * ((p - x).frobenius_sq() + (q - y).frobenius_sq()))
}

/// Gradient descent with Barzilai–Borwein trial steps and Armijo
/// backtracking, started at `(p0, q0)`.
pub fn prox_cca_from(
    cfg: &CcaLayerConfig,
    x: &Matrix,
    y: &Matrix,
    lambda: f64,
    p0: &Matrix,
    q0: &Matrix,
    tol: f64,
) -> Result<ProxCcaSolution> {
    cfg.validate(x.rows())?;
    check_views(x, y, cfg.eps, cfg.k)?;
    if p0.shape() != x.shape() || q0.shape() != y.shape() {
        return Err(Error::ShapeMismatch { op: "prox_cca start", left: p0.shape(), right: x.shape() });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let n = x.cols() as f64;
    let (mut p, mut q) = (p0.clone(), q0.clone());
    let mut cur = prox_eval(cfg, x, y, &p, &q, lambda)?;
    let mut trace = vec![cur.f];
    let mut step = n / lambda;
    // the quadratic term cannot resolve gradients below a few ulps of
    // (λ/n)·|P|, so a large λ caps the attainable tolerance
    let floor = 64.0 * f64::EPSILON * lambda / n * max_abs2(x, y).max(1.0);
    let tol = tol.max(floor);
    for it in 0..cfg.max_iters {
        let res = max_abs2(&cur.gp, &cur.gq);
        if res <= tol {
            return Ok(ProxCcaSolution { p, q, iterations: it, residual: res, trace });
        }
        let g2 = cur.gp.frobenius_sq() + cur.gq.frobenius_sq();
        let noise = 1e-14 * cur.f.abs().max(1.0);
        // a full trial step that promises less than the rounding noise of f
        // means the iterate is stationary to working precision
        let at_floor = cfg.armijo * step * g2 <= noise;
        let mut t = step;
        let (np, nq, next) = loop {
            let mut np = p.clone();
            let mut nq = q.clone();
            np.axpy(-t, &cur.gp);
            nq.axpy(-t, &cur.gq);
            let cand = prox_eval(cfg, x, y, &np, &nq, lambda)?;
            let pred = cfg.armijo * t * g2;
            if cand.f <= cur.f - pred {
                break (np, nq, cand);
            }
            // below rounding noise the value cannot rank the points; accept
            // a step that does not raise it and shrinks the gradient
            let g2c = cand.gp.frobenius_sq() + cand.gq.frobenius_sq();
            if pred <= noise && cand.f <= cur.f + noise && g2c < g2 {
                break (np, nq, cand);
            }
            t *= cfg.shrink;
            if t * g2.sqrt() < 1e-18 * (1.0 + p.frobenius_norm() + q.frobenius_norm()) {
                if at_floor {
                    return Ok(ProxCcaSolution { p, q, iterations: it, residual: res, trace });
                }
                return Err(Error::NoConvergence { routine: "prox_cca line search", iterations: it, residual: res });
            }
        };
        let sp = &np - &p;
        let sq = &nq - &q;
        let yp = &next.gp - &cur.gp;
        let yq = &next.gq - &cur.gq;
        let sy = sp.inner(&yp) + sq.inner(&yq);
        let ss = sp.frobenius_sq() + sq.frobenius_sq();
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 2.0 * t };
        p = np;
        q = nq;
        cur = next;
        trace.push(cur.f);
    }
    Err(Error::NoConvergence { routine: "prox_cca", iterations: cfg.max_iters, residual: max_abs2(&cur.gp, &cur.gq) })
}

/// Forward solve started at `(X, Y)`.
pub fn prox_cca(cfg: &CcaLayerConfig, x: &Matrix, y: &Matrix, lambda: f64) -> Result<ProxCcaSolution> {
    prox_cca_from(cfg, x, y, lambda, x, y, cfg.tol)
}

/// Adjoints `(∂J/∂X, ∂J/∂Y)` by the one-sided difference
/// `(P(X + ε∂J/∂P, Y + ε∂J/∂Q) − P(X, Y)) / ε`. Both solves are warm-started
/// at `base` and run to `backward_tol`.
pub fn prox_cca_backward(
    cfg: &CcaLayerConfig,
    x: &Matrix,
    y: &Matrix,
    base: &ProxCcaSolution,
    dj_dp: &Matrix,
    dj_dq: &Matrix,
    lambda: f64,
) -> Result<(Matrix, Matrix)> {
    if dj_dp.shape() != x.shape() || dj_dq.shape() != y.shape() {
        return Err(Error::ShapeMismatch { op: "prox_cca_backward", left: dj_dp.shape(), right: x.shape() });
    }
    let scale = max_abs2(dj_dp, dj_dq);
    if scale == 0.0 {
        return Ok((Matrix::zeros(x.rows(), x.cols()), Matrix::zeros(y.rows(), y.cols())));
    }
    let eps = cfg.domke_eps / scale.max(1.0);
    let at = prox_cca_from(cfg, x, y, lambda, &base.p, &base.q, cfg.backward_tol)?;
    let mut xp = x.clone();
    let mut yp = y.clone();
    xp.axpy(eps, dj_dp);
    yp.axpy(eps, dj_dq);
    let moved = prox_cca_from(cfg, &xp, &yp, lambda, &at.p, &at.q, cfg.backward_tol)?;
    let (back, width) = match cfg.domke_scheme {
        DomkeScheme::Forward => (at, eps),
        DomkeScheme::Central => {
            let mut xm = x.clone();
            let mut ym = y.clone();
            xm.axpy(-eps, dj_dp);
            ym.axpy(-eps, dj_dq);
            (prox_cca_from(cfg, &xm, &ym, lambda, &at.p, &at.q, cfg.backward_tol)?, 2.0 * eps)
        }
    };
    Ok(((&moved.p - &back.p).scale(1.0 / width), (&moved.q - &back.q).scale(1.0 / width)))
}

/// Tape node for the layer. Its value stacks `[P; Q]` (2d × n).
pub fn prox_cca_node<'t>(tape: &'t Tape, x: Var<'t>, y: Var<'t>, cfg: CcaLayerConfig, lambda: f64) -> Result<Var<'t>> {
    let (xv, yv) = (x.value(), y.value());
    let sol = prox_cca(&cfg, &xv, &yv, lambda)?;
    let value = Matrix::vstack(&sol.p, &sol.q);
    let d = xv.rows();
    Ok(tape.custom(&[x, y], value, "prox_cca", move |up| {
        let (dx, dy) = prox_cca_backward(&cfg, &xv, &yv, &sol, &up.row_block(0, d), &up.row_block(d, 2 * d), lambda)?;
        Ok(vec![dx, dy])
    }))
}

#[derive(Debug, Clone)]
pub struct GccaSolution {
    /// N × r, orthonormal columns.
    pub g: Matrix,
    /// `U_j`, d_j × r.
    pub u: Vec<Matrix>,
    pub objective: f64,
}

/// `Σ_j ‖G − X_j U_j‖²_F`
pub fn gcca_objective(views: &[Matrix], g: &Matrix, u: &[Matrix]) -> f64 {
    views.iter().zip(u).map(|(x, u)| (g - &x.matmul(u)).frobenius_sq()).sum()
}

fn check_gcca(views: &[Matrix], r: usize) -> Result<()> {
    let Some(first) = views.first() else {
        return Err(Error::InvalidArgument("no views".into()));
    };
    let n = first.rows();
    if let Some(bad) = views.iter().find(|v| v.rows() != n) {
        return Err(Error::ShapeMismatch { op: "gcca views", left: first.shape(), right: bad.shape() });
    }
    let min_d = views.iter().map(|v| v.cols()).min().unwrap_or(0);
    if r == 0 || r > min_d {
        return Err(Error::InvalidArgument(format!("r = {r} must lie in 1..={min_d}")));
    }
    Ok(())
}

fn least_squares_u(x: &Matrix, g: &Matrix) -> Result<Matrix> {
    let chol = Cholesky::new(&x.t_matmul(x).symmetrize().add_identity(GCCA_RIDGE))?;
    chol.solve(&x.t_matmul(g))
}

/// Views are N × d_j with centered columns. `G` is the top-r eigenspace of
/// `Σ_j X_j (X_jᵀX_j + εI)⁻¹ X_jᵀ`.
pub fn gcca_solve(views: &[Matrix], r: usize) -> Result<GccaSolution> {
    check_gcca(views, r)?;
    let n = views[0].rows();
    let mut m = Matrix::zeros(n, n);
    for x in views {
        let chol = Cholesky::new(&x.t_matmul(x).symmetrize().add_identity(GCCA_RIDGE))?;
        let proj = x.matmul(&chol.solve(&x.transpose())?);
        m = &m + &proj;
    }
    let eig = sym_eig(&m.symmetrize())?;
    let top = eig.values[0].max(1.0);
    let rank = eig.values.iter().filter(|l| **l > 1e-9 * top).count();
    if r > rank {
        return Err(Error::RankDeficient { required: r, rank });
    }
    let g = Matrix::from_fn(n, r, |i, j| eig.vectors[(i, j)]);
    let u = views.iter().map(|x| least_squares_u(x, &g)).collect::<Result<Vec<_>>>()?;
    let objective = gcca_objective(views, &g, &u);
    Ok(GccaSolution { g, u, objective })
}

/// Reference solver: alternate the least-squares `U_j` with the polar
/// factor of `Σ_j X_jU_j` for `G`, from `starts` random orthonormal starts.
pub fn gcca_alternating(
    views: &[Matrix],
    r: usize,
    starts: usize,
    iters: usize,
    rng: &mut SplitMix64,
) -> Result<GccaSolution> {
    check_gcca(views, r)?;
    let n = views[0].rows();
    let mut best: Option<GccaSolution> = None;
    for _ in 0..starts {
        let mut g = polar(&Matrix::from_fn(n, r, |_, _| rng.normal()))?;
        let mut last = f64::INFINITY;
        for _ in 0..iters {
            let u = views.iter().map(|x| least_squares_u(x, &g)).collect::<Result<Vec<_>>>()?;
            let mut b = Matrix::zeros(n, r);
            for (x, uj) in views.iter().zip(&u) {
                b = &b + &x.matmul(uj);
            }
            g = polar(&b)?;
            let obj = gcca_objective(views, &g, &u);
            if (last - obj).abs() <= 1e-15 * obj.max(1.0) {
                break;
            }
            last = obj;
        }
        let u = views.iter().map(|x| least_squares_u(x, &g)).collect::<Result<Vec<_>>>()?;
        let objective = gcca_objective(views, &g, &u);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(GccaSolution { g, u, objective });
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no starts".into()))
}

/// `U Vᵀ` from the thin SVD of `b`.
fn polar(b: &Matrix) -> Result<Matrix> {
    let s = svd(b)?;
    Ok(s.u.matmul(&s.vt))
}

/// Two one-layer tanh towers sharing a linear classifier head. Observations
/// are columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewModel {
    pub f_w: Matrix,
    pub f_b: Vec<f64>,
    pub g_w: Matrix,
    pub g_b: Vec<f64>,
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MultiviewOutput {
    pub logits_x: Matrix,
    pub logits_y: Matrix,
    pub averaged: Matrix,
    /// `−L` of the layer outputs.
    pub correlation: f64,
    pub lambda: f64,
    pub bypassed: bool,
}

impl MultiviewModel {
    pub fn random(dx: usize, dy: usize, hidden: usize, classes: usize, rng: &mut SplitMix64) -> Self {
        let mut init = |r: usize, c: usize| {
            let k = 1.0 / (c as f64).sqrt();
            Matrix::from_fn(r, c, |_, _| rng.uniform_in(-k, k))
        };
        Self {
            f_w: init(hidden, dx),
            f_b: vec![0.0; hidden],
            g_w: init(hidden, dy),
            g_b: vec![0.0; hidden],
            head_w: init(classes, hidden),
            head_b: vec![0.0; classes],
        }
    }

    pub fn hidden(&self) -> usize {
        self.f_w.rows()
    }

    fn parts(&self) -> [(&[f64], (usize, usize)); 6] {
        [
            (self.f_w.as_slice(), self.f_w.shape()),
            (&self.f_b, (self.f_b.len(), 1)),
            (self.g_w.as_slice(), self.g_w.shape()),
            (&self.g_b, (self.g_b.len(), 1)),
            (self.head_w.as_slice(), self.head_w.shape()),
            (&self.head_b, (self.head_b.len(), 1)),
        ]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.parts().iter().flat_map(|(v, _)| v.iter().copied()).collect()
    }

    pub fn set_from_slice(&mut self, v: &[f64]) -> Result<()> {
        let total: usize = self.parts().iter().map(|(p, _)| p.len()).sum();
        if v.len() != total {
            return Err(Error::ShapeMismatch { op: "multiview parameters", left: (v.len(), 1), right: (total, 1) });
        }
        let mut rest = v;
        for slot in [
            self.f_w.as_mut_slice(),
            &mut self.f_b,
            self.g_w.as_mut_slice(),
            &mut self.g_b,
            self.head_w.as_mut_slice(),
            &mut self.head_b,
        ] {
            let (a, b) = rest.split_at(slot.len());
            slot.copy_from_slice(a);
            rest = b;
        }
        Ok(())
    }

    fn leaves<'t>(&self, tape: &'t Tape) -> [Var<'t>; 6] {
        self.parts().map(|(v, (r, c))| tape.leaf(Matrix::from_vec(r, c, v.to_vec()).expect("shape")))
    }
}

struct Graph<'t> {
    leaves: [Var<'t>; 6],
    logits_x: Var<'t>,
    logits_y: Var<'t>,
    averaged: Var<'t>,
    correlation: f64,
    lambda: f64,
    bypassed: bool,
}

fn build<'t>(
    tape: &'t Tape,
    model: &MultiviewModel,
    cfg: &CcaLayerConfig,
    x_obs: &Matrix,
    y_obs: &Matrix,
    lambda: f64,
) -> Result<Graph<'t>> {
    let leaves = model.leaves(tape);
    let [fw, fb, gw, gb, hw, hb] = leaves;
    let xo = tape.leaf(x_obs.clone());
    let yo = tape.leaf(y_obs.clone());
    let x = fw.matmul(xo)?.add_col(fb)?.tanh().center();
    let y = gw.matmul(yo)?.add_col(gb)?.tanh().center();
    let d = model.hidden();
    let bypassed = lambda >= cfg.fade_threshold;
    let (p, q) = if bypassed {
        (x, y)
    } else {
        let pq = prox_cca_node(tape, x, y, *cfg, lambda)?;
        (pq.rows(0, d)?.center(), pq.rows(d, 2 * d)?.center())
    };
    let correlation = -cca_objective(&p.value(), &q.value(), cfg.eps, cfg.k)?.value;
    let logits_x = hw.matmul(p)?.add_col(hb)?;
    let logits_y = hw.matmul(q)?.add_col(hb)?;
    let averaged = logits_x.add(logits_y)?.scale(0.5);
    Ok(Graph { leaves, logits_x, logits_y, averaged, correlation, lambda, bypassed })
}

/// Towers, centering, the prox layer at `λ_epoch` (skipped past the fade
/// threshold), re-centering, shared head, averaged logits.
pub fn multiview_forward(
    model: &MultiviewModel,
    cfg: &CcaLayerConfig,
    x_obs: &Matrix,
    y_obs: &Matrix,
    epoch: usize,
) -> Result<MultiviewOutput> {
    let tape = Tape::new();
    let g = build(&tape, model, cfg, x_obs, y_obs, cfg.lambda_at(epoch))?;
    Ok(MultiviewOutput {
        logits_x: g.logits_x.value(),
        logits_y: g.logits_y.value(),
        averaged: g.averaged.value(),
        correlation: g.correlation,
        lambda: g.lambda,
        bypassed: g.bypassed,
    })
}

/// Mean cross-entropy of the averaged logits with its parameter gradient
/// (laid out as [`MultiviewModel::to_vec`]) and the forward output.
pub fn multiview_loss_and_grad(
    model: &MultiviewModel,
    cfg: &CcaLayerConfig,
    x_obs: &Matrix,
    y_obs: &Matrix,
    labels: &[usize],
    lambda: f64,
) -> Result<(f64, Vec<f64>, MultiviewOutput)> {
    let tape = Tape::new();
    let g = build(&tape, model, cfg, x_obs, y_obs, lambda)?;
    let loss = g.averaged.cross_entropy_loss(labels)?;
    tape.backward(loss)?;
    let mut grad = Vec::new();
    for v in g.leaves {
        match tape.grad(v) {
            Some(m) => grad.extend_from_slice(m.as_slice()),
            None => grad.extend(std::iter::repeat_n(0.0, v.value().len())),
        }
    }
    let out = MultiviewOutput {
        logits_x: g.logits_x.value(),
        logits_y: g.logits_y.value(),
        averaged: g.averaged.value(),
        correlation: g.correlation,
        lambda: g.lambda,
        bypassed: g.bypassed,
    };
    Ok((loss.scalar(), grad, out))
}
