//! Dropout as an adaptive regularizer, recovered as the per-point proximal map
//!
//! `c_x = argmin_c Σᵢ p(1−p) xᵢ² cᵢ² + (λ/2)‖c − x‖²`, with `p = σ(xᵀc)`,
//!
//! solved by fixing `s = xᵀc` (so that `p(1−p) = α_s / 2` with
//! `α_s = 2/(2 + eˢ + e⁻ˢ)`), eliminating the constraint with a multiplier
//! `μ`, and searching over `s`. Also holds the two logistic models that are
//! compared in the dropout simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::tape::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutProxConfig {
    pub lambda: f64,
    /// Lower bound on the half-width of the `s` grid; widened per point to a
    /// provable bound on `|xᵀc|`.
    pub s_max: f64,
    pub grid_points: usize,
    /// Width of the golden-section bracket at termination.
    pub refine_tol: f64,
    /// Bisection tolerance on `μ`.
    pub mu_tol: f64,
}

impl Default for DropoutProxConfig {
    fn default() -> Self {
        Self { lambda: 1.0, s_max: 10.0, grid_points: 401, refine_tol: 1e-6, mu_tol: 1e-10 }
    }
}

impl DropoutProxConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.grid_points < 3 || !(self.s_max > 0.0) || !(self.refine_tol > 0.0) || !(self.mu_tol > 0.0) {
            return Err(Error::InvalidArgument("invalid dropout prox grid settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutProx {
    pub c: Vec<f64>,
    pub s: f64,
    pub mu: f64,
}

/// `α_s = 2/(2 + eˢ + e⁻ˢ) = 2σ(s)(1 − σ(s))`
pub fn alpha_s(s: f64) -> f64 {
    let p = sigmoid(s);
    2.0 * p * (1.0 - p)
}

/// `Σᵢ p(1−p) xᵢ² cᵢ² + (λ/2)‖c − x‖²` with `p = σ(xᵀc)`.
pub fn dropout_objective(x: &[f64], c: &[f64], lambda: f64) -> f64 {
    let p = sigmoid(dot(x, c));
    let q = p * (1.0 - p);
    x.iter().zip(c).map(|(xi, ci)| q * xi * xi * ci * ci + 0.5 * lambda * (ci - xi) * (ci - xi)).sum()
}

/// `cᵢ(μ) = (λ + μ) xᵢ / (λ + α xᵢ²)`
fn c_of_mu(x: &[f64], lambda: f64, alpha: f64, mu: f64) -> Vec<f64> {
    x.iter().map(|xi| (lambda + mu) * xi / (lambda + alpha * xi * xi)).collect()
}

/// Root of `xᵀc(μ) = s` by bisection. `xᵀc(μ)` is increasing in `μ`
/// (each `cᵢ` is linear in `μ` with slope `xᵢ/(λ + αxᵢ²)`), so the bracket
/// is widened geometrically until the sign changes.
pub fn solve_mu(x: &[f64], lambda: f64, alpha: f64, s: f64, tol: f64) -> Result<f64> {
    let residual = |mu: f64| dot(x, &c_of_mu(x, lambda, alpha, mu)) - s;
    let max_ax2 = x.iter().map(|v| alpha * v * v).fold(0.0, f64::max);
    let xx = dot(x, x);
    let mut lo = -lambda;
    let mut hi = lambda * (1.0 + max_ax2) * xx;
    let (mut f_lo, mut f_hi) = (residual(lo), residual(hi));
    let mut width = (hi - lo).max(1.0);
    for _ in 0..200 {
        if f_lo <= 0.0 && f_hi >= 0.0 {
            break;
        }
        width *= 2.0;
        if f_lo > 0.0 {
            lo -= width;
            f_lo = residual(lo);
        }
        if f_hi < 0.0 {
            hi += width;
            f_hi = residual(hi);
        }
    }
    if !(f_lo <= 0.0 && f_hi >= 0.0) {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    while hi - lo > tol * lo.abs().max(hi.abs()).max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = residual(mid);
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Candidate `(c, μ)` on the slice `xᵀc = s`.
fn slice_solution(x: &[f64], s: f64, cfg: &DropoutProxConfig) -> Result<(Vec<f64>, f64)> {
    let alpha = alpha_s(s);
    let mu = solve_mu(x, cfg.lambda, alpha, s, cfg.mu_tol)?;
    Ok((c_of_mu(x, cfg.lambda, alpha, mu), mu))
}

/// Bound on `|xᵀc*|`. From `F(c*) ≤ F(x) ≤ ¼Σxᵢ⁴` follows
/// `‖c* − x‖ ≤ ‖x‖₄² / √(2λ)`.
fn s_bound(x: &[f64], lambda: f64) -> f64 {
    let nx = norm(x);
    let l4sq = x.iter().map(|v| v.powi(4)).sum::<f64>().sqrt();
    nx * (nx + l4sq / (2.0 * lambda).sqrt())
}

pub fn prox_dropout(x: &[f64], cfg: &DropoutProxConfig) -> Result<DropoutProx> {
    cfg.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dropout prox input".into()));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(DropoutProx { c: vec![0.0; x.len()], s: 0.0, mu: 0.0 });
    }
    let s_max = cfg.s_max.max(s_bound(x, cfg.lambda));
    let value = |s: f64| -> Result<f64> {
        let (c, _) = slice_solution(x, s, cfg)?;
        Ok(dropout_objective(x, &c, cfg.lambda))
    };
    let step = 2.0 * s_max / (cfg.grid_points - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..cfg.grid_points {
        let v = value(-s_max + k as f64 * step)?;
        if v < best.1 {
            best = (k, v);
        }
    }
    // golden-section refinement on the neighbouring grid cells
    let centre = -s_max + best.0 as f64 * step;
    let (mut a, mut b) = (centre - step, centre + step);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c1 = b - inv_phi * (b - a);
    let mut c2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (value(c1)?, value(c2)?);
    while b - a > cfg.refine_tol {
        if f1 <= f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - inv_phi * (b - a);
            f1 = value(c1)?;
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + inv_phi * (b - a);
            f2 = value(c2)?;
        }
    }
    let mut s = 0.5 * (a + b);
    if value(s)? > best.1 {
        s = centre;
    }
    let (c, mu) = slice_solution(x, s, cfg)?;
    Ok(DropoutProx { c, s, mu })
}

/// `prox_dropout` applied to every row of `xs`.
pub fn prox_dropout_rows(xs: &Matrix, cfg: &DropoutProxConfig) -> Result<Matrix> {
    let mut out = Matrix::zeros(xs.rows(), xs.cols());
    for i in 0..xs.rows() {
        let c = prox_dropout(xs.row(i), cfg)?.c;
        for (j, v) in c.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

const TRAIN_MAX_ITERS: usize = 200_000;
const TRAIN_GRAD_TOL: f64 = 1e-6;
const DIVERGENCE_WINDOW: usize = 50;

fn check_labels(xs: &Matrix, ys: &[f64]) -> Result<()> {
    if xs.rows() != ys.len() || xs.rows() == 0 {
        return Err(Error::ShapeMismatch { op: "logistic training", left: xs.shape(), right: (ys.len(), 1) });
    }
    if ys.iter().any(|y| *y != 1.0 && *y != -1.0) {
        return Err(Error::InvalidArgument("labels must be -1 or +1".into()));
    }
    Ok(())
}

/// Mean logistic loss `(1/n) Σ log(1 + exp(−yᵢ wᵀxᵢ))` and its gradient.
fn logistic_loss(xs: &Matrix, ys: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let n = xs.rows() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (i, y) in ys.iter().enumerate() {
        let x = xs.row(i);
        let m = y * dot(w, x);
        // log(1 + e^{−m}) without overflow
        loss += if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
        let g = -y * sigmoid(-m);
        for (gj, xj) in grad.iter_mut().zip(x) {
            *gj += g * xj / n;
        }
    }
    (loss / n, grad)
}

/// `aⱼ = (1/n) Σᵢ pᵢ(1 − pᵢ) xᵢⱼ²` with `pᵢ = σ(βᵀxᵢ)`.
pub fn dropout_weights(xs: &Matrix, beta: &[f64]) -> Vec<f64> {
    let n = xs.rows() as f64;
    let mut a = vec![0.0; xs.cols()];
    for i in 0..xs.rows() {
        let x = xs.row(i);
        let p = sigmoid(dot(beta, x));
        for (aj, xj) in a.iter_mut().zip(x) {
            *aj += p * (1.0 - p) * xj * xj / n;
        }
    }
    a
}

/// Gradient descent with backtracking on `loss(w) + Σⱼ penalty(w)ⱼ wⱼ²`,
/// where the per-coordinate penalty weights are re-evaluated at every
/// iterate and held fixed within the step.
fn penalized_logistic(xs: &Matrix, ys: &[f64], penalty: impl Fn(&[f64]) -> Vec<f64>) -> Result<Vec<f64>> {
    check_labels(xs, ys)?;
    let d = xs.cols();
    let mut w = vec![0.0; d];
    // curvature bound of the loss: (1/4n) Σ ‖xᵢ‖²
    let lip = (0..xs.rows()).map(|i| dot(xs.row(i), xs.row(i))).sum::<f64>() / (4.0 * xs.rows() as f64);
    let mut step = 1.0 / lip.max(1e-12);
    let objective = |w: &[f64], pen: &[f64]| -> (f64, Vec<f64>) {
        let (l, mut g) = logistic_loss(xs, ys, w);
        let mut r = 0.0;
        for j in 0..d {
            r += pen[j] * w[j] * w[j];
            g[j] += 2.0 * pen[j] * w[j];
        }
        (l + r, g)
    };
    let mut last = f64::INFINITY;
    let mut rising = 0usize;
    for it in 0..TRAIN_MAX_ITERS {
        let pen = penalty(&w);
        let (f, g) = objective(&w, &pen);
        if !f.is_finite() {
            return Err(Error::NanLoss(it));
        }
        if norm(&g) <= TRAIN_GRAD_TOL {
            return Ok(w);
        }
        rising = if f > last { rising + 1 } else { 0 };
        if rising >= DIVERGENCE_WINDOW {
            return Err(Error::Divergence(it));
        }
        last = f;
        let gg = dot(&g, &g);
        let mut t = step;
        loop {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let (f_cand, g_cand) = objective(&cand, &pen);
            // Once the predicted decrease is below the rounding noise of f the
            // Armijo test is meaningless; require a smaller gradient instead.
            let noise = 1e-15 * f.abs().max(1.0);
            let accept = if 0.5 * t * gg > noise {
                f_cand <= f - 0.5 * t * gg
            } else {
                f_cand <= f + noise && dot(&g_cand, &g_cand) < gg
            };
            if accept {
                w = cand;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return Err(Error::NoConvergence {
                    routine: "logistic line search",
                    iterations: it,
                    residual: gg.sqrt(),
                });
            }
        }
        step = 2.0 * t;
    }
    let (_, g) = objective(&w, &penalty(&w));
    Err(Error::NoConvergence { routine: "logistic training", iterations: TRAIN_MAX_ITERS, residual: norm(&g) })
}

/// Dropout as adaptive regularization:
/// `min_β (1/n) Σ log(1 + exp(−yᵢβᵀxᵢ)) + μ Σⱼ aⱼ βⱼ²`, rows of `xs` are points.
pub fn rrm_dropout_train(xs: &Matrix, ys: &[f64], mu: f64) -> Result<Vec<f64>> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be >= 0, got {mu}")));
    }
    penalized_logistic(xs, ys, |beta| dropout_weights(xs, beta).into_iter().map(|a| mu * a).collect())
}

/// Ridge logistic regression `min_α (1/n) Σ log(1 + exp(−yᵢαᵀPᵢ)) + c‖α‖²` on
/// prox outputs (rows of `prox_out`).
pub fn prox_pipeline_train(prox_out: &Matrix, ys: &[f64], c_reg: f64) -> Result<Vec<f64>> {
    if !(c_reg >= 0.0) {
        return Err(Error::InvalidArgument(format!("c must be >= 0, got {c_reg}")));
    }
    let d = prox_out.cols();
    penalized_logistic(prox_out, ys, |_| vec![c_reg; d])
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs two equal-length series of length >= 2".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance("discriminant values"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone)]
pub struct DiscriminantComparison {
    /// `(βᵀxᵢ, αᵀP(xᵢ))`
    pub pairs: Vec<(f64, f64)>,
    pub pearson_r: f64,
}

pub fn compare_discriminants(
    xs: &Matrix,
    prox_out: &Matrix,
    beta: &[f64],
    alpha: &[f64],
) -> Result<DiscriminantComparison> {
    let pairs: Vec<(f64, f64)> = (0..xs.rows()).map(|i| (dot(beta, xs.row(i)), dot(alpha, prox_out.row(i)))).collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
    let pearson_r = pearson(&a, &b)?;
    Ok(DiscriminantComparison { pairs, pearson_r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{prox_numeric, FeasibleSet, ProxOperator, Regularizer};
    use crate::rng::SplitMix64;

    #[test]
    fn alpha_matches_its_exponential_form() {
        for s in [-7.0, -1.0, 0.0, 0.3, 4.0] {
            let direct = 2.0 / (2.0 + f64::exp(s) + f64::exp(-s));
            assert!((alpha_s(s) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_gives_zero() {
        let out = prox_dropout(&[0.0, 0.0, 0.0], &DropoutProxConfig::default()).unwrap();
        assert_eq!(out.c, vec![0.0; 3]);
    }

    #[test]
    fn huge_lambda_is_nearly_identity() {
        let x = [0.7, -1.3, 2.0];
        let out = prox_dropout(&x, &DropoutProxConfig::with_lambda(1e6)).unwrap();
        for (c, xi) in out.c.iter().zip(&x) {
            assert!((c - xi).abs() < 1e-4);
        }
    }

    #[test]
    fn mu_bisection_matches_closed_form() {
        // xᵀc(μ) is affine in μ, so the root has a closed form
        let mut rng = SplitMix64::new(6);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| 2.0 * rng.normal()).collect();
            let lambda = rng.uniform_in(0.05, 5.0);
            let s = rng.uniform_in(-10.0, 10.0);
            let alpha = alpha_s(s);
            let mu = solve_mu(&x, lambda, alpha, s, 1e-12).unwrap();
            let w: f64 = x.iter().map(|v| v * v / (lambda + alpha * v * v)).sum();
            let exact = s / w - lambda;
            assert!((mu - exact).abs() <= 1e-9 * exact.abs().max(1.0), "{mu} vs {exact}");
        }
    }

    #[test]
    fn x_dot_c_is_increasing_in_mu() {
        let x = [0.4, -2.0, 1.1];
        let mut last = f64::NEG_INFINITY;
        for k in 0..50 {
            let mu = -3.0 + 0.2 * k as f64;
            let v = dot(&x, &c_of_mu(&x, 0.5, 0.3, mu));
            assert!(v > last);
            last = v;
        }
    }

    fn dropout_regularizer(x: Vec<f64>) -> Regularizer {
        let x2 = x.clone();
        Regularizer::new(
            move |c| {
                let p = sigmoid(dot(&x, c));
                let q = p * (1.0 - p);
                x.iter().zip(c).map(|(xi, ci)| q * xi * xi * ci * ci).sum()
            },
            move |c| {
                let p = sigmoid(dot(&x2, c));
                let q = p * (1.0 - p);
                let dq = q * (1.0 - 2.0 * p);
                let quad: f64 = x2.iter().zip(c).map(|(xi, ci)| xi * xi * ci * ci).sum();
                x2.iter().zip(c).map(|(xi, ci)| 2.0 * q * xi * xi * ci + dq * xi * quad).collect()
            },
        )
    }

    #[test]
    fn matches_direct_minimization_of_the_objective() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..30 {
            let x: Vec<f64> = (0..3).map(|_| 1.5 * rng.normal()).collect();
            let lambda = rng.uniform_in(0.1, 2.0);
            let out = prox_dropout(&x, &DropoutProxConfig::with_lambda(lambda)).unwrap();
            let op = ProxOperator::new(dropout_regularizer(x.clone()), FeasibleSet::Unconstrained, lambda).unwrap();
            let oracle = prox_numeric(&op, &x).unwrap();
            let (fa, fb) = (dropout_objective(&x, &out.c, lambda), dropout_objective(&x, &oracle, lambda));
            assert!(fa <= fb + 1e-9, "line search {fa} vs gradient oracle {fb}");
            for (a, b) in out.c.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-4, "{:?} vs {:?}", out.c, oracle);
            }
        }
    }

    #[test]
    fn objective_beats_identity_and_zero() {
        let mut rng = SplitMix64::new(23);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| 2.0 * rng.normal()).collect();
            let lambda = rng.uniform_in(0.05, 3.0);
            let out = prox_dropout(&x, &DropoutProxConfig::with_lambda(lambda)).unwrap();
            let f = dropout_objective(&x, &out.c, lambda);
            assert!(f <= dropout_objective(&x, &x, lambda) + 1e-12);
            assert!(f <= dropout_objective(&x, &[0.0; 4], lambda) + 1e-12);
            // self-consistency: the slice value equals xᵀc
            assert!((dot(&x, &out.c) - out.s).abs() < 1e-8 * out.s.abs().max(1.0));
        }
    }

    #[test]
    fn reformulated_weights_give_the_same_predictions() {
        let mut rng = SplitMix64::new(29);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let lambda = rng.uniform_in(0.1, 2.0);
            let out = prox_dropout(&x, &DropoutProxConfig::with_lambda(lambda)).unwrap();
            let alpha = alpha_s(out.s);
            let beta: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let h: Vec<f64> =
                beta.iter().zip(&x).map(|(b, xi)| b * (lambda + alpha * xi * xi) / (lambda + out.mu)).collect();
            assert!((dot(&beta, &x) - dot(&h, &out.c)).abs() < 1e-10);
        }
    }

    #[test]
    fn rrm_separates_two_points() {
        let xs = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.8, -1.0]]).unwrap();
        let ys = [1.0, -1.0];
        let beta = rrm_dropout_train(&xs, &ys, 0.1).unwrap();
        for (i, y) in ys.iter().enumerate() {
            assert!(dot(&beta, xs.row(i)) * y > 0.0);
        }
    }

    #[test]
    fn rrm_symmetric_data_aligns_with_x() {
        // equal feature magnitudes keep the adaptive penalty isotropic; with
        // unequal ones aⱼ ∝ xⱼ² tilts β away from x
        let xs = Matrix::from_rows(&[vec![1.5, -1.5], vec![-1.5, 1.5]]).unwrap();
        let beta = rrm_dropout_train(&xs, &[1.0, -1.0], 0.5).unwrap();
        let cos = dot(&beta, &[1.5, -1.5]) / (norm(&beta) * 4.5f64.sqrt());
        assert!(cos > 0.99, "cos {cos}");
    }

    fn noisy_problem(seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = SplitMix64::new(seed);
        let xs = Matrix::from_fn(60, 2, |_, _| rng.normal());
        let ys: Vec<f64> = (0..60)
            .map(|i| if xs[(i, 0)] - 0.5 * xs[(i, 1)] + 0.8 * rng.normal() > 0.0 { 1.0 } else { -1.0 })
            .collect();
        (xs, ys)
    }

    /// Plain logistic regression by Newton's method.
    fn newton_logistic(xs: &Matrix, ys: &[f64], ridge: f64) -> Vec<f64> {
        let d = xs.cols();
        let n = xs.rows() as f64;
        let mut w = vec![0.0; d];
        for _ in 0..50 {
            let (_, mut g) = logistic_loss(xs, ys, &w);
            let mut h = Matrix::zeros(d, d).add_identity(2.0 * ridge);
            for i in 0..xs.rows() {
                let x = xs.row(i);
                let p = sigmoid(dot(&w, x));
                for a in 0..d {
                    for b in 0..d {
                        h[(a, b)] += p * (1.0 - p) * x[a] * x[b] / n;
                    }
                }
            }
            for j in 0..d {
                g[j] += 2.0 * ridge * w[j];
            }
            let step = crate::linalg::solve_spd(&h, &Matrix::column(&g)).unwrap();
            for j in 0..d {
                w[j] -= step[(j, 0)];
            }
        }
        w
    }

    #[test]
    fn rrm_with_zero_mu_is_logistic_regression() {
        let (xs, ys) = noisy_problem(31);
        let beta = rrm_dropout_train(&xs, &ys, 0.0).unwrap();
        let oracle = newton_logistic(&xs, &ys, 0.0);
        for (a, b) in beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-4, "{beta:?} vs {oracle:?}");
        }
    }

    #[test]
    fn pipeline_on_identity_prox_is_ridge_logistic() {
        let (xs, ys) = noisy_problem(37);
        let prox = prox_dropout_rows(&xs, &DropoutProxConfig::with_lambda(1e9)).unwrap();
        let alpha = prox_pipeline_train(&prox, &ys, 0.05).unwrap();
        let oracle = newton_logistic(&xs, &ys, 0.05);
        for (a, b) in alpha.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-4, "{alpha:?} vs {oracle:?}");
        }
    }

    #[test]
    fn pipeline_with_huge_ridge_is_near_zero() {
        let (xs, ys) = noisy_problem(41);
        let alpha = prox_pipeline_train(&xs, &ys, 1e8).unwrap();
        assert!(norm(&alpha) < 1e-8);
    }

    #[test]
    fn pipeline_separates_two_points() {
        let xs = Matrix::from_rows(&[vec![0.3, 1.0], vec![-0.2, -0.7]]).unwrap();
        let alpha = prox_pipeline_train(&xs, &[-1.0, 1.0], 0.01).unwrap();
        assert!(dot(&alpha, xs.row(0)) < 0.0 && dot(&alpha, xs.row(1)) > 0.0);
    }

    #[test]
    fn labels_must_be_signs() {
        let xs = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(rrm_dropout_train(&xs, &[1.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn pearson_trivial_cases() {
        let a = [1.0, 2.0, 4.0, 7.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let b: Vec<f64> = a.iter().map(|v| -3.0 * v + 1.0).collect();
        assert!((pearson(&a, &b).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&a, &[2.0; 4]), Err(Error::ZeroVariance(_))));
    }
}
