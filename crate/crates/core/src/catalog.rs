//! Activation functions and normalizations recovered as proximal maps
//! `argmin_{z ∈ C} R(z) + (λ/2)‖z − x‖²`, with a generic projected-gradient
//! solver that serves as the independent oracle for every closed form.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::tape::sigmoid;

/// Iterates of log/logit regularizers are kept this far from 0 and 1.
pub const DOMAIN_GUARD: f64 = 1e-12;

const MAX_ITERS: usize = 10_000;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleSet {
    Unconstrained,
    Box {
        lo: f64,
        hi: f64,
    },
    /// Probability simplex `{z ≥ 0, 1ᵀz = 1}`.
    Simplex,
    /// `{‖z‖ = √n, 1ᵀz = 0}` (nonconvex).
    SphereHyperplane,
}

impl FeasibleSet {
    pub fn is_convex(&self) -> bool {
        !matches!(self, FeasibleSet::SphereHyperplane)
    }

    /// Euclidean projection, additionally restricted to `[floor, ceil]` per
    /// coordinate when a domain guard is given.
    pub fn project(&self, z: &mut [f64], guard: Option<(f64, f64)>) -> Result<()> {
        match (self, guard) {
            (FeasibleSet::Unconstrained, None) => {}
            (FeasibleSet::Unconstrained, Some((lo, hi))) => clamp(z, lo, hi),
            (FeasibleSet::Box { lo, hi }, g) => {
                let (glo, ghi) = g.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                clamp(z, lo.max(glo), hi.min(ghi));
            }
            (FeasibleSet::Simplex, g) => {
                project_simplex(z, g.map_or(0.0, |(lo, _)| lo.max(0.0)));
            }
            (FeasibleSet::SphereHyperplane, _) => {
                let n = z.len() as f64;
                let mean = z.iter().sum::<f64>() / n;
                z.iter_mut().for_each(|v| *v -= mean);
                let r = norm(z);
                if r <= 1e-12 * (1.0 + mean.abs()) {
                    return Err(Error::ZeroVariance("sphere-hyperplane projection"));
                }
                let s = n.sqrt() / r;
                z.iter_mut().for_each(|v| *v *= s);
            }
        }
        Ok(())
    }

    /// Projection in the metric `Σ dᵢ (zᵢ − yᵢ)²`. Box-type sets are
    /// separable so the weights do not matter; the sphere set ignores them.
    pub fn project_scaled(&self, z: &mut [f64], d: &[f64], guard: Option<(f64, f64)>) -> Result<()> {
        match self {
            FeasibleSet::Simplex => {
                project_simplex_scaled(z, d, guard.map_or(0.0, |(lo, _)| lo.max(0.0)));
                Ok(())
            }
            _ => self.project(z, guard),
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        match self {
            FeasibleSet::Unconstrained => true,
            FeasibleSet::Box { lo, hi } => z.iter().all(|v| *v >= lo - tol && *v <= hi + tol),
            FeasibleSet::Simplex => z.iter().all(|v| *v >= -tol) && (z.iter().sum::<f64>() - 1.0).abs() <= tol,
            FeasibleSet::SphereHyperplane => {
                let n = z.len() as f64;
                z.iter().sum::<f64>().abs() <= tol * n && (norm(z) - n.sqrt()).abs() <= tol * n
            }
        }
    }
}

fn clamp(z: &mut [f64], lo: f64, hi: f64) {
    z.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

/// Sort-based projection onto `{z ≥ floor, 1ᵀz = 1}`.
fn project_simplex(z: &mut [f64], floor: f64) {
    let n = z.len();
    let radius = 1.0 - floor * n as f64;
    let mut sorted: Vec<f64> = z.iter().map(|v| v - floor).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    z.iter_mut().for_each(|v| *v = floor + (*v - floor - theta).max(0.0));
}

/// Weighted simplex projection: `zᵢ = max(floor, yᵢ − ν/dᵢ)` with `ν` found by
/// bisection on `Σ zᵢ = 1`, then solved exactly on the final free set.
fn project_simplex_scaled(z: &mut [f64], d: &[f64], floor: f64) {
    let at = |nu: f64, y: &[f64]| -> f64 { y.iter().zip(d).map(|(yi, di)| (yi - nu / di).max(floor)).sum() };
    let y = z.to_vec();
    let mut lo = y.iter().zip(d).map(|(yi, di)| di * (yi - 1.0)).fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = y.iter().zip(d).map(|(yi, di)| di * (yi - floor)).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid, &y) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    let (mut ysum, mut inv, mut pinned) = (0.0, 0.0, 0usize);
    for (yi, di) in y.iter().zip(d) {
        if yi - nu / di > floor {
            ysum += yi;
            inv += 1.0 / di;
        } else {
            pinned += 1;
        }
    }
    let nu = if inv > 0.0 { (ysum + pinned as f64 * floor - 1.0) / inv } else { nu };
    for ((zi, yi), di) in z.iter_mut().zip(&y).zip(d) {
        *zi = (yi - nu / di).max(floor);
    }
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MapFn = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A differentiable regularizer `R` given by its value and gradient.
pub struct Regularizer {
    value: ValueFn,
    gradient: GradFn,
    /// Diagonal of the Hessian, used as a metric by the solver.
    curvature: Option<GradFn>,
    /// Per-coordinate interval the iterates must stay in.
    guard: Option<(f64, f64)>,
}

impl Regularizer {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { value: Box::new(value), gradient: Box::new(gradient), curvature: None, guard: None }
    }

    /// Declares `R` separable with second derivatives `curvature(z)`.
    pub fn with_curvature(mut self, curvature: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.curvature = Some(Box::new(curvature));
        self
    }

    pub fn with_guard(mut self, lo: f64, hi: f64) -> Self {
        self.guard = Some((lo, hi));
        self
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |z| vec![0.0; z.len()])
    }

    /// `R(z) = Σ ∫σ⁻¹ − z²/2`, whose prox with λ = 1 is the logistic sigmoid.
    pub fn logistic() -> Self {
        Self::new(
            |z| z.iter().map(|v| logit_antiderivative(*v) - 0.5 * v * v).sum(),
            |z| z.iter().map(|v| logit(*v) - v).collect(),
        )
        .with_curvature(|z| z.iter().map(|v| 1.0 / (v * (1.0 - v)) - 1.0).collect())
        .with_guard(DOMAIN_GUARD, 1.0 - DOMAIN_GUARD)
    }

    /// `R(z) = Σ z log z − z²/2`, whose prox on the simplex is softmax.
    pub fn neg_entropy_minus_square() -> Self {
        Self::new(
            |z| z.iter().map(|v| v * v.ln() - 0.5 * v * v).sum(),
            |z| z.iter().map(|v| v.ln() + 1.0 - v).collect(),
        )
        .with_curvature(|z| z.iter().map(|v| 1.0 / v - 1.0).collect())
        .with_guard(DOMAIN_GUARD, 1.0 - DOMAIN_GUARD)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        (self.value)(z)
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (self.gradient)(z)
    }

    pub fn curvature(&self, z: &[f64]) -> Option<Vec<f64>> {
        self.curvature.as_ref().map(|c| c(z))
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `∫_{1/2}^{p} logit(t) dt = p ln p + (1 − p) ln(1 − p) + ln 2`.
pub fn logit_antiderivative(p: f64) -> f64 {
    let xlogx = |t: f64| if t <= 0.0 { 0.0 } else { t * t.ln() };
    xlogx(p) + xlogx(1.0 - p) + std::f64::consts::LN_2
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `R`, `C` and `λ` of a proximal map, optionally with a known closed form.
pub struct ProxOperator {
    pub regularizer: Regularizer,
    pub set: FeasibleSet,
    lambda: f64,
    closed_form: Option<MapFn>,
}

impl fmt::Debug for ProxOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProxOperator")
            .field("set", &self.set)
            .field("lambda", &self.lambda)
            .field("closed_form", &self.closed_form.is_some())
            .finish()
    }
}

impl ProxOperator {
    pub fn new(regularizer: Regularizer, set: FeasibleSet, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self { regularizer, set, lambda, closed_form: None })
    }

    pub fn with_closed_form(mut self, map: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.closed_form = Some(Box::new(map));
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form.is_some()
    }

    pub fn sigmoid() -> Self {
        Self::new(Regularizer::logistic(), FeasibleSet::Unconstrained, 1.0)
            .unwrap()
            .with_closed_form(|x| Ok(sigmoid_as_prox(x)))
    }

    pub fn softmax() -> Self {
        Self::new(Regularizer::neg_entropy_minus_square(), FeasibleSet::Simplex, 1.0)
            .unwrap()
            .with_closed_form(|x| Ok(softmax_as_prox(x)))
    }

    pub fn relu() -> Self {
        Self::new(Regularizer::zero(), FeasibleSet::Box { lo: 0.0, hi: f64::INFINITY }, 1.0)
            .unwrap()
            .with_closed_form(|x| Ok(relu_as_prox(x)))
    }

    pub fn hardtanh() -> Self {
        Self::new(Regularizer::zero(), FeasibleSet::Box { lo: -1.0, hi: 1.0 }, 1.0)
            .unwrap()
            .with_closed_form(|x| Ok(hardtanh_as_prox(x)))
    }

    pub fn batchnorm() -> Self {
        Self::new(Regularizer::zero(), FeasibleSet::SphereHyperplane, 1.0).unwrap().with_closed_form(batchnorm_as_prox)
    }

    /// `R(z) + (λ/2)‖z − x‖²`
    pub fn objective(&self, z: &[f64], x: &[f64]) -> f64 {
        let d: f64 = z.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        self.regularizer.value(z) + 0.5 * self.lambda * d
    }

    pub fn project(&self, z: &mut [f64]) -> Result<()> {
        self.set.project(z, self.regularizer.guard)
    }

    /// Closed form when available, otherwise [`prox_numeric`].
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.closed_form {
            Some(f) => f(x),
            None => prox_numeric(self, x),
        }
    }

    /// Norm of `z − Proj(z − ∇F(z))`, zero exactly at stationary points.
    /// For regularizers with known curvature `D = diag(∇²R) + λ` the step
    /// and the norm are taken in the metric `D`, which keeps the residual
    /// meaningful next to a log barrier.
    pub fn stationarity_residual(&self, z: &[f64], x: &[f64]) -> Result<f64> {
        let g = self.objective_gradient(z, x);
        let d = self.metric(z);
        let mut probe: Vec<f64> = z.iter().zip(&g).zip(&d).map(|((a, b), di)| a - b / di).collect();
        self.set.project_scaled(&mut probe, &d, self.regularizer.guard)?;
        Ok(z.iter().zip(&probe).zip(&d).map(|((a, b), di)| di * (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    fn metric(&self, z: &[f64]) -> Vec<f64> {
        match self.regularizer.curvature(z) {
            Some(c) => c.into_iter().map(|v| (v + self.lambda).max(1e-3 * self.lambda)).collect(),
            None => vec![1.0; z.len()],
        }
    }

    fn objective_gradient(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        let mut g = self.regularizer.gradient(z);
        for ((gi, zi), xi) in g.iter_mut().zip(z).zip(x) {
            *gi += self.lambda * (zi - xi);
        }
        g
    }
}

/// Solves the prox problem by projected gradient with backtracking on the
/// sufficient-decrease condition. Without curvature the trial steps are
/// Barzilai–Borwein; with curvature the step is scaled by `D⁻¹` and starts
/// at 1 (a projected Newton step for separable `R`).
pub fn prox_numeric(op: &ProxOperator, x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prox input".into()));
    }
    // Start away from the guard, where the curvature of a log barrier is of
    // order 1/guard.
    let mut z = x.to_vec();
    let start_guard = op.regularizer.guard.map(|(lo, hi)| {
        let margin = 1e-3 * (hi - lo);
        (lo + margin, hi - margin)
    });
    op.set.project(&mut z, start_guard)?;
    op.project(&mut z)?;
    let scaled = op.regularizer.curvature.is_some();
    let mut f = op.objective(&z, x);
    let mut g = op.objective_gradient(&z, x);
    let mut step = if scaled { 1.0 } else { 1.0 / op.lambda };
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        residual = op.stationarity_residual(&z, x)?;
        if residual <= RESIDUAL_TOL {
            return Ok(z);
        }
        let d = op.metric(&z);
        let mut t = step;
        let (z_new, f_new) = loop {
            let mut cand: Vec<f64> = z.iter().zip(&g).zip(&d).map(|((a, b), di)| a - t * b / di).collect();
            op.set.project_scaled(&mut cand, &d, op.regularizer.guard)?;
            let f_cand = op.objective(&cand, x);
            let delta: Vec<f64> = cand.iter().zip(&z).map(|(a, b)| a - b).collect();
            let quad: f64 = delta.iter().zip(&d).map(|(s, di)| di * s * s).sum();
            let bound = f + dot(&g, &delta) + quad / (2.0 * t);
            // Near the optimum the predicted decrease falls below the rounding
            // noise of `f`; a short enough step is then taken on the gradient
            // information alone.
            let noise = 1e-15 * f.abs().max(1.0);
            let below_noise = dot(&g, &delta).abs() <= 1e2 * noise && quad.sqrt() <= 1e-6 * norm(&z).max(1.0);
            if f_cand <= bound + noise || below_noise {
                break (cand, f_cand);
            }
            t *= 0.5;
            if t < 1e-300 {
                return Err(Error::NoConvergence { routine: "prox_numeric line search", iterations: 0, residual });
            }
        };
        let g_new = op.objective_gradient(&z_new, x);
        step = if scaled {
            (2.0 * t).min(1.0)
        } else {
            let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 0.0 {
                dot(&s, &s) / sy
            } else {
                t * 2.0
            }
        };
        z = z_new;
        f = f_new;
        g = g_new;
    }
    Err(Error::NoConvergence { routine: "prox_numeric", iterations: MAX_ITERS, residual })
}

pub fn sigmoid_as_prox(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| sigmoid(*v)).collect()
}

pub fn softmax_as_prox(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn relu_as_prox(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn hardtanh_as_prox(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

/// `(x − μ1)/σ` with population standard deviation. Constant input has a
/// set-valued prox and is rejected.
pub fn batchnorm_as_prox(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sd = (dot(&centered, &centered) / n).sqrt();
    if sd <= 1e-12 * (1.0 + mean.abs()) {
        return Err(Error::ZeroVariance("batchnorm input"));
    }
    Ok(centered.into_iter().map(|v| v / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_simplex_projection_with_unit_weights_matches_sort_projection() {
        let y = [0.7, -0.2, 1.4, 0.05, 0.3];
        let mut a = y.to_vec();
        let mut b = y.to_vec();
        project_simplex(&mut a, 1e-12);
        project_simplex_scaled(&mut b, &[1.0; 5], 1e-12);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn scaled_simplex_projection_satisfies_kkt() {
        let y = [0.9, 0.4, -0.3, 0.2];
        let d = [1e6, 2.0, 0.5, 30.0];
        let mut z = y.to_vec();
        project_simplex_scaled(&mut z, &d, 0.0);
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // free coordinates share one multiplier ν = dᵢ(yᵢ − zᵢ); pinned ones have dᵢyᵢ ≤ ν
        let free: Vec<f64> = (0..4).filter(|&i| z[i] > 0.0).map(|i| d[i] * (y[i] - z[i])).collect();
        let nu = free[0];
        for v in &free {
            assert!((v - nu).abs() < 1e-8 * nu.abs().max(1.0));
        }
        for i in (0..4).filter(|&i| z[i] == 0.0) {
            assert!(d[i] * y[i] <= nu + 1e-9);
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zero_regularizer_unconstrained_is_identity() {
        let op = ProxOperator::new(Regularizer::zero(), FeasibleSet::Unconstrained, 1.0).unwrap();
        let x = [0.3, -2.0, 5.0];
        assert_eq!(prox_numeric(&op, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn relu_projection() {
        let op = ProxOperator::relu();
        assert_eq!(prox_numeric(&op, &[-1.0]).unwrap(), vec![0.0]);
        assert_eq!(op.apply(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn sigmoid_cases() {
        assert_eq!(sigmoid_as_prox(&[0.0]), vec![0.5]);
        assert!((sigmoid_as_prox(&[50.0])[0] - 1.0).abs() <= 1e-10);
        let op = ProxOperator::sigmoid();
        let z = prox_numeric(&op, &[0.0, 50.0, -3.0, 1.5]).unwrap();
        assert!(close(&z, &sigmoid_as_prox(&[0.0, 50.0, -3.0, 1.5]), 1e-6));
    }

    #[test]
    fn softmax_symmetry_cases() {
        assert!(close(&softmax_as_prox(&[0.0, 0.0]), &[0.5, 0.5], 1e-15));
        assert!(close(&softmax_as_prox(&[1.0, 1.0, 1.0]), &[1.0 / 3.0; 3], 1e-15));
        let z = prox_numeric(&ProxOperator::softmax(), &[0.0, 0.0]).unwrap();
        assert!(close(&z, &[0.5, 0.5], 1e-9));
    }

    #[test]
    fn batchnorm_cases() {
        assert!(close(&batchnorm_as_prox(&[1.0, -1.0]).unwrap(), &[1.0, -1.0], 1e-15));
        assert!(close(&batchnorm_as_prox(&[2.0, 0.0]).unwrap(), &[1.0, -1.0], 1e-15));
        assert_eq!(batchnorm_as_prox(&[3.0, 3.0, 3.0]), Err(Error::ZeroVariance("batchnorm input")));
        assert!(prox_numeric(&ProxOperator::batchnorm(), &[3.0, 3.0]).is_err());
    }

    #[test]
    fn hardtanh_cases() {
        assert_eq!(hardtanh_as_prox(&[0.3, -7.0]), vec![0.3, -1.0]);
        let z = prox_numeric(&ProxOperator::hardtanh(), &[0.3, -7.0, 4.0]).unwrap();
        assert!(close(&z, &[0.3, -1.0, 1.0], 1e-10));
    }

    #[test]
    fn simplex_projection_with_floor() {
        let mut z = vec![2.0, -1.0, 0.5];
        project_simplex(&mut z, 0.0);
        assert!(close(&z, &[1.0, 0.0, 0.0], 1e-15));
        let mut z = vec![0.2, 0.2, 0.2];
        project_simplex(&mut z, 0.0);
        assert!(close(&z, &[1.0 / 3.0; 3], 1e-15));
        let mut z = vec![5.0, -5.0];
        project_simplex(&mut z, 1e-3);
        assert!(close(&z, &[0.999, 1e-3], 1e-15));
    }

    #[test]
    fn logit_antiderivative_matches_quadrature() {
        for p in [0.01, 0.2, 0.5, 0.77, 0.999] {
            let q = adaptive_simpson(&logit, 0.5, p, 1e-10);
            assert!((q - logit_antiderivative(p)).abs() < 1e-8, "p={p}");
        }
    }

    #[test]
    fn dropout_style_quadratic_vs_grid_search() {
        // R(z) = Σ w_i z_i² with weights from σ(1ᵀz)(1−σ(1ᵀz)) frozen at a
        // reference point; convex and smooth, so the grid minimum is unique.
        let w = [0.4, 1.3, 0.25];
        let reg = Regularizer::new(
            move |z| z.iter().zip(&w).map(|(v, w)| w * v * v).sum(),
            move |z| z.iter().zip(&w).map(|(v, w)| 2.0 * w * v).collect(),
        );
        let op = ProxOperator::new(reg, FeasibleSet::Unconstrained, 0.8).unwrap();
        let x = [1.0, -0.6, 0.9];
        let z = prox_numeric(&op, &x).unwrap();
        // coarse-to-fine grid down to 1e-3 resolution
        let mut center = x.to_vec();
        let mut half: f64 = 1.5;
        let mut h: f64 = 0.1;
        while h >= 1e-3 {
            let mut best = (f64::INFINITY, center.clone());
            let k = (half / h).round() as i64;
            for a in -k..=k {
                for b in -k..=k {
                    for c in -k..=k {
                        let p = [center[0] + a as f64 * h, center[1] + b as f64 * h, center[2] + c as f64 * h];
                        let f = op.objective(&p, &x);
                        if f < best.0 {
                            best = (f, p.to_vec());
                        }
                    }
                }
            }
            center = best.1;
            half = 2.0 * h;
            h /= 10.0;
        }
        assert!(close(&z, &center, 1e-3), "{z:?} vs {center:?}");
    }

    #[test]
    fn lambda_must_be_positive() {
        assert!(ProxOperator::new(Regularizer::zero(), FeasibleSet::Unconstrained, 0.0).is_err());
    }
}
