//! ProxLSTM: an LSTM cell whose candidate state is pulled towards the null
//! space of its own input sensitivity.
//!
//! Each step forms the usual candidate `s_t = f ⊙ c_{t-1} + i ⊙ g` and then
//! replaces it by `c_t = (I + ρ G_t G_tᵀ)⁻¹ s_t` with `G_t = ∂s_t/∂x_t` and
//! `ρ = δ²/λ`. The output `h_t = o ⊙ tanh(s_t)` reads the candidate, so `h_t`
//! is a function of `(c_{t-1}, h_{t-1}, x_t)` and a loss on `h_T` does not see
//! the final prox state.
//!
//! Backpropagation is written out by hand. The adjoint of `G_t` reaches
//! `(c_{t-1}, h_{t-1})` and the weights through second derivatives of the
//! gate nonlinearities, which are closed-form for sigmoid and tanh.
//!
//! Gate rows are stacked as `[i; f; o; g]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
pub use crate::optim::{Optimizer, OptimizerState, TrainConfig};
use crate::rng::SplitMix64;
use crate::tape::{sigmoid, Tape, Var};

const GATES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × D`
    pub w_x: Matrix,
    /// `4H × H`
    pub w_h: Matrix,
    /// `4H`
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w_x: Matrix::zeros(GATES * hidden, input),
            w_h: Matrix::zeros(GATES * hidden, hidden),
            b: vec![0.0; GATES * hidden],
        }
    }

    /// Uniform in `±1/√H`, the usual LSTM initialisation.
    pub fn random(hidden: usize, input: usize, rng: &mut SplitMix64) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(hidden, input);
        for v in p.w_x.as_mut_slice().iter_mut().chain(p.w_h.as_mut_slice()).chain(p.b.iter_mut()) {
            *v = rng.uniform_in(-k, k);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn input(&self) -> usize {
        self.w_x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.w_h.rows() != GATES * h {
            return Err(Error::ShapeMismatch { op: "lstm w_h", left: self.w_h.shape(), right: (GATES * h, h) });
        }
        if self.w_x.rows() != GATES * h {
            return Err(Error::ShapeMismatch {
                op: "lstm w_x",
                left: self.w_x.shape(),
                right: (GATES * h, self.input()),
            });
        }
        if self.b.len() != GATES * h {
            return Err(Error::ShapeMismatch { op: "lstm bias", left: (self.b.len(), 1), right: (GATES * h, 1) });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `w_x`, then `w_h`, then `b`, each row-major.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(self.w_x.as_slice());
        out.extend_from_slice(self.w_h.as_slice());
        out.extend_from_slice(&self.b);
        out
    }

    pub fn from_slice(hidden: usize, input: usize, v: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(hidden, input);
        if v.len() != p.len() {
            return Err(Error::ShapeMismatch { op: "lstm parameter vector", left: (v.len(), 1), right: (p.len(), 1) });
        }
        let (a, rest) = v.split_at(p.w_x.len());
        let (b, c) = rest.split_at(p.w_h.len());
        p.w_x.as_mut_slice().copy_from_slice(a);
        p.w_h.as_mut_slice().copy_from_slice(b);
        p.b.copy_from_slice(c);
        Ok(p)
    }
}

/// Gate activations of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    /// Candidate state before the prox.
    pub s: Vec<f64>,
    /// `o ⊙ tanh(s)`
    pub h: Vec<f64>,
    pub gates: Gates,
}

fn check_len(op: &'static str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { op, left: (got, 1), right: (want, 1) })
    }
}

fn gates(p: &LstmParams, h_prev: &[f64], x: &[f64]) -> Gates {
    let hd = p.hidden();
    let z: Vec<f64> = (0..GATES * hd).map(|r| dot(p.w_x.row(r), x) + dot(p.w_h.row(r), h_prev) + p.b[r]).collect();
    Gates {
        i: z[..hd].iter().map(|v| sigmoid(*v)).collect(),
        f: z[hd..2 * hd].iter().map(|v| sigmoid(*v)).collect(),
        o: z[2 * hd..3 * hd].iter().map(|v| sigmoid(*v)).collect(),
        g: z[3 * hd..].iter().map(|v| v.tanh()).collect(),
    }
}

pub fn lstm_step(p: &LstmParams, c_prev: &[f64], h_prev: &[f64], x: &[f64]) -> Result<LstmStep> {
    p.validate()?;
    check_len("lstm c_prev", c_prev.len(), p.hidden())?;
    check_len("lstm h_prev", h_prev.len(), p.hidden())?;
    check_len("lstm x", x.len(), p.input())?;
    let gates = gates(p, h_prev, x);
    let s: Vec<f64> = (0..p.hidden()).map(|k| gates.f[k] * c_prev[k] + gates.i[k] * gates.g[k]).collect();
    let h = s.iter().zip(&gates.o).map(|(s, o)| o * s.tanh()).collect();
    Ok(LstmStep { s, h, gates })
}

/// `∂s/∂x` given the gates:
/// `diag(c_prev ⊙ f(1−f)) W_f + diag(g ⊙ i(1−i)) W_i + diag(i ⊙ (1−g²)) W_g`.
fn jacobian_from_gates(p: &LstmParams, c_prev: &[f64], gt: &Gates) -> Matrix {
    let hd = p.hidden();
    let mut out = Matrix::zeros(hd, p.input());
    for k in 0..hd {
        let (i, f, g) = (gt.i[k], gt.f[k], gt.g[k]);
        let u_i = g * i * (1.0 - i);
        let u_f = c_prev[k] * f * (1.0 - f);
        let u_g = i * (1.0 - g * g);
        let (wi, wf, wg) = (p.w_x.row(k), p.w_x.row(hd + k), p.w_x.row(3 * hd + k));
        for j in 0..p.input() {
            out[(k, j)] = u_f * wf[j] + u_i * wi[j] + u_g * wg[j];
        }
    }
    out
}

/// `G_t = ∂s_t/∂x_t`, hidden × input.
pub fn input_jacobian(p: &LstmParams, c_prev: &[f64], h_prev: &[f64], x: &[f64]) -> Result<Matrix> {
    let step = lstm_step(p, c_prev, h_prev, x)?;
    Ok(jacobian_from_gates(p, c_prev, &step.gates))
}

/// Solution of `(I + ρGGᵀ)c = s` together with the factor needed by the
/// backward pass.
#[derive(Debug, Clone)]
pub struct ProxSolve {
    s: Vec<f64>,
    g: Matrix,
    rho: f64,
    c: Vec<f64>,
    chol: Option<Cholesky>,
}

impl ProxSolve {
    pub fn new(s: &[f64], g: &Matrix, lambda: f64, delta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be non-negative, got {delta}")));
        }
        check_len("prox_step", g.rows(), s.len())?;
        if !g.is_finite() {
            return Err(Error::NonFinite("prox_step G".into()));
        }
        let rho = delta * delta / lambda;
        if rho == 0.0 {
            return Ok(Self { s: s.to_vec(), g: g.clone(), rho, c: s.to_vec(), chol: None });
        }
        let m = g.matmul_t(g).scale(rho).add_identity(1.0);
        let chol = Cholesky::new(&m)?;
        let c = chol.solve_vec(s)?;
        Ok(Self { s: s.to_vec(), g: g.clone(), rho, c, chol: Some(chol) })
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `‖(I + ρGGᵀ)c − s‖_∞`
    pub fn residual(&self) -> f64 {
        let gc = self.g.t_matmul(&Matrix::column(&self.c));
        let ggc = self.g.matmul(&gc);
        (0..self.s.len()).map(|k| (self.c[k] + self.rho * ggc[(k, 0)] - self.s[k]).abs()).fold(0.0, f64::max)
    }
}

pub fn prox_step(s: &[f64], g: &Matrix, lambda: f64, delta: f64) -> Result<Vec<f64>> {
    Ok(ProxSolve::new(s, g, lambda, delta)?.c)
}

/// Adjoints of `s` and `G` given `∂J/∂c`: with `a = M⁻¹ ∂J/∂c`,
/// `∂J/∂s = a` and `∂J/∂G = −ρ(acᵀ + caᵀ)G`.
pub fn prox_step_backward(solve: &ProxSolve, dj_dc: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    check_len("prox_step_backward", dj_dc.len(), solve.s.len())?;
    let a = match &solve.chol {
        Some(chol) => chol.solve_vec(dj_dc)?,
        None => dj_dc.to_vec(),
    };
    let g = &solve.g;
    let gc = g.t_matmul(&Matrix::column(&solve.c));
    let ga = g.t_matmul(&Matrix::column(&a));
    let d_g = Matrix::from_fn(g.rows(), g.cols(), |k, j| -solve.rho * (a[k] * gc[(j, 0)] + solve.c[k] * ga[(j, 0)]));
    Ok((a, d_g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxLstmConfig {
    pub lambda: f64,
    pub delta: f64,
}

impl ProxLstmConfig {
    pub fn vanilla() -> Self {
        Self { lambda: 1.0, delta: 0.0 }
    }

    pub fn rho(&self) -> f64 {
        self.delta * self.delta / self.lambda
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct ProxLstmStepCache {
    pub x: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub gates: Gates,
    pub prox: ProxSolve,
    pub h: Vec<f64>,
}

impl ProxLstmStepCache {
    pub fn s(&self) -> &[f64] {
        self.prox.s()
    }

    pub fn c(&self) -> &[f64] {
        self.prox.c()
    }
}

/// Runs the cell over `seq` from a zero state.
pub fn forward(p: &LstmParams, seq: &[Vec<f64>], cfg: ProxLstmConfig) -> Result<Vec<ProxLstmStepCache>> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let hd = p.hidden();
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    let mut out = Vec::with_capacity(seq.len());
    for x in seq {
        let step = lstm_step(p, &c, &h, x)?;
        let g = jacobian_from_gates(p, &c, &step.gates);
        let prox = ProxSolve::new(&step.s, &g, cfg.lambda, cfg.delta)?;
        let cache = ProxLstmStepCache { x: x.clone(), c_prev: c, h_prev: h, gates: step.gates, h: step.h, prox };
        c = cache.c().to_vec();
        h = cache.h.clone();
        out.push(cache);
    }
    Ok(out)
}

/// Parameter gradients given `∂J/∂h_t` for every step (zeros where a step
/// does not enter the loss).
pub fn bptt(p: &LstmParams, caches: &[ProxLstmStepCache], dh: &[Vec<f64>]) -> Result<LstmParams> {
    if caches.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    check_len("bptt adjoints", dh.len(), caches.len())?;
    let hd = p.hidden();
    let dd = p.input();
    let mut grads = LstmParams::zeros(hd, dd);
    let mut dh_next = vec![0.0; hd];
    // the loss never reads c_T
    let mut dc_next = vec![0.0; hd];
    for (t, cache) in caches.iter().enumerate().rev() {
        check_len("bptt adjoint", dh[t].len(), hd)?;
        let (ds, d_g) = prox_step_backward(&cache.prox, &dc_next)?;
        let dh_t: Vec<f64> = dh[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        (dh_next, dc_next) = cell_backward(p, cache, &dh_t, ds, &d_g, &mut grads);
    }
    Ok(grads)
}

/// One step of the recursion: given adjoints of `h_t`, `s_t` (from the prox)
/// and `G_t`, accumulates weight gradients and returns the adjoints of
/// `(h_{t-1}, c_{t-1})`.
fn cell_backward(
    p: &LstmParams,
    cache: &ProxLstmStepCache,
    dh: &[f64],
    mut ds: Vec<f64>,
    d_g: &Matrix,
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>) {
    let hd = p.hidden();
    let dd = p.input();
    let gt = &cache.gates;
    let mut dz = vec![0.0; GATES * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let (i, f, o, g) = (gt.i[k], gt.f[k], gt.o[k], gt.g[k]);
        let cp = cache.c_prev[k];
        let ts = cache.s()[k].tanh();
        let d_o = dh[k] * ts;
        ds[k] += dh[k] * o * (1.0 - ts * ts);

        let (di, df, dg) = (ds[k] * g, ds[k] * cp, ds[k] * i);
        dc_prev[k] = ds[k] * f;

        let (si, sf, so, tg) = (i * (1.0 - i), f * (1.0 - f), o * (1.0 - o), 1.0 - g * g);
        // ⟨∂J/∂G, ∂s/∂x⟩ = Σ_k r_i u_i + r_f u_f + r_g u_g, differentiated
        // through the u's
        let dgk = d_g.row(k);
        let r_i = dot(dgk, p.w_x.row(k));
        let r_f = dot(dgk, p.w_x.row(hd + k));
        let r_g = dot(dgk, p.w_x.row(3 * hd + k));
        dc_prev[k] += r_f * sf;

        dz[k] = di * si + r_i * g * si * (1.0 - 2.0 * i) + r_g * si * tg;
        dz[hd + k] = df * sf + r_f * cp * sf * (1.0 - 2.0 * f);
        dz[2 * hd + k] = d_o * so;
        dz[3 * hd + k] = dg * tg + r_i * si * tg - r_g * i * 2.0 * g * tg;

        // G reads W_x directly as well
        let (u_i, u_f, u_g) = (g * si, cp * sf, i * tg);
        for (j, dg) in dgk.iter().enumerate().take(dd) {
            grads.w_x[(k, j)] += u_i * dg;
            grads.w_x[(hd + k, j)] += u_f * dg;
            grads.w_x[(3 * hd + k, j)] += u_g * dg;
        }
    }
    for (r, &dzr) in dz.iter().enumerate() {
        if dzr == 0.0 {
            continue;
        }
        for j in 0..dd {
            grads.w_x[(r, j)] += dzr * cache.x[j];
        }
        for j in 0..hd {
            grads.w_h[(r, j)] += dzr * cache.h_prev[j];
        }
        grads.b[r] += dzr;
    }
    let dh_prev = (0..hd).map(|j| (0..GATES * hd).map(|r| p.w_h[(r, j)] * dz[r]).sum()).collect();
    (dh_prev, dc_prev)
}

/// [`bptt`] for a loss on `h_T` only.
pub fn bptt_last(p: &LstmParams, caches: &[ProxLstmStepCache], dh_last: &[f64]) -> Result<LstmParams> {
    let mut dh = vec![vec![0.0; p.hidden()]; caches.len()];
    if let Some(last) = dh.last_mut() {
        *last = dh_last.to_vec();
    }
    bptt(p, caches, &dh)
}

/// Gradients of `⟨dh_last, h_T⟩` for a plain LSTM (`c_t = s_t`,
/// `h_t = o ⊙ tanh(c_t)`), built from tape primitives. Used as an
/// independent reference for the hand-written recursion.
pub fn vanilla_bptt(p: &LstmParams, seq: &[Vec<f64>], dh_last: &[f64]) -> Result<LstmParams> {
    p.validate()?;
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let hd = p.hidden();
    let tape = Tape::new();
    let w_x = tape.leaf(p.w_x.clone());
    let w_h = tape.leaf(p.w_h.clone());
    let b = tape.leaf(Matrix::column(&p.b));
    let mut h = tape.leaf(Matrix::zeros(hd, 1));
    let mut c = tape.leaf(Matrix::zeros(hd, 1));
    for x in seq {
        check_len("lstm x", x.len(), p.input())?;
        let xt = tape.leaf(Matrix::column(x));
        let z = w_x.matmul(xt)?.add(w_h.matmul(h)?)?.add(b)?;
        let i = z.rows(0, hd)?.sigmoid();
        let f = z.rows(hd, 2 * hd)?.sigmoid();
        let o = z.rows(2 * hd, 3 * hd)?.sigmoid();
        let g = z.rows(3 * hd, 4 * hd)?.tanh();
        c = f.hadamard(c)?.add(i.hadamard(g)?)?;
        h = o.hadamard(c.tanh())?;
    }
    let root = h.hadamard(tape.leaf(Matrix::column(dh_last)))?.sum();
    tape.backward(root)?;
    let grad = |v: Var<'_>| tape.grad(v).unwrap_or_else(|| Matrix::zeros(v.shape().0, v.shape().1));
    Ok(LstmParams { w_x: grad(w_x), w_h: grad(w_h), b: grad(b).into_vec() })
}

/// Tape node for one prox step with `G` held fixed; its backward pass is
/// [`prox_step_backward`].
pub fn prox_node<'t>(tape: &'t Tape, s: Var<'t>, g: &Matrix, cfg: ProxLstmConfig) -> Result<Var<'t>> {
    let solve = ProxSolve::new(s.value().as_slice(), g, cfg.lambda, cfg.delta)?;
    let value = Matrix::column(solve.c());
    Ok(tape.custom(&[s], value, "prox_lstm_step", move |up| {
        let (ds, _) = prox_step_backward(&solve, up.as_slice())?;
        Ok(vec![Matrix::column(&ds)])
    }))
}

/// Tape node mapping `(W_x, W_h, b)` to the final hidden state `h_T`. Its
/// backward pass runs the hand-derived [`bptt`].
pub fn sequence_node<'t>(
    tape: &'t Tape,
    w_x: Var<'t>,
    w_h: Var<'t>,
    b: Var<'t>,
    seq: &[Vec<f64>],
    cfg: ProxLstmConfig,
) -> Result<Var<'t>> {
    let p = LstmParams { w_x: w_x.value(), w_h: w_h.value(), b: b.value().into_vec() };
    p.validate()?;
    let caches = forward(&p, seq, cfg)?;
    let value = Matrix::column(&caches[caches.len() - 1].h);
    Ok(tape.custom(&[w_x, w_h, b], value, "prox_lstm_sequence", move |up| {
        let g = bptt_last(&p, &caches, up.as_slice())?;
        Ok(vec![g.w_x, g.w_h, Matrix::column(&g.b)])
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub steps: Vec<Vec<f64>>,
    pub label: usize,
}

/// ProxLSTM followed by a linear head on `h_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceClassifier {
    pub lstm: LstmParams,
    /// classes × hidden
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
}

impl SequenceClassifier {
    pub fn random(hidden: usize, input: usize, classes: usize, rng: &mut SplitMix64) -> Self {
        let lstm = LstmParams::random(hidden, input, rng);
        let k = 1.0 / (hidden as f64).sqrt();
        let head_w = Matrix::from_fn(classes, hidden, |_, _| rng.uniform_in(-k, k));
        let head_b = (0..classes).map(|_| rng.uniform_in(-k, k)).collect();
        Self { lstm, head_w, head_b }
    }

    pub fn classes(&self) -> usize {
        self.head_w.rows()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.lstm.to_vec();
        v.extend_from_slice(self.head_w.as_slice());
        v.extend_from_slice(&self.head_b);
        v
    }

    /// Overwrites every parameter from a vector laid out as [`Self::to_vec`].
    pub fn set_from_slice(&mut self, v: &[f64]) -> Result<()> {
        let n = self.lstm.len();
        check_len("classifier parameters", v.len(), n + self.head_w.len() + self.head_b.len())?;
        self.lstm = LstmParams::from_slice(self.lstm.hidden(), self.lstm.input(), &v[..n])?;
        let (w, b) = v[n..].split_at(self.head_w.len());
        self.head_w.as_mut_slice().copy_from_slice(w);
        self.head_b.copy_from_slice(b);
        Ok(())
    }

    pub fn logits(&self, seq: &[Vec<f64>], cfg: ProxLstmConfig) -> Result<Vec<f64>> {
        let caches = forward(&self.lstm, seq, cfg)?;
        let h = &caches[caches.len() - 1].h;
        Ok((0..self.classes()).map(|c| dot(self.head_w.row(c), h) + self.head_b[c]).collect())
    }

    pub fn predict(&self, seq: &[Vec<f64>], cfg: ProxLstmConfig) -> Result<usize> {
        let z = self.logits(seq, cfg)?;
        Ok(argmax(&z))
    }

    /// Cross-entropy of one sequence and its gradient, laid out as
    /// [`Self::to_vec`].
    pub fn loss_and_grad(&self, seq: &LabeledSequence, cfg: ProxLstmConfig) -> Result<(f64, Vec<f64>)> {
        let tape = Tape::new();
        let w_x = tape.leaf(self.lstm.w_x.clone());
        let w_h = tape.leaf(self.lstm.w_h.clone());
        let b = tape.leaf(Matrix::column(&self.lstm.b));
        let hw = tape.leaf(self.head_w.clone());
        let hb = tape.leaf(Matrix::column(&self.head_b));
        let h = sequence_node(&tape, w_x, w_h, b, &seq.steps, cfg)?;
        let loss = hw.matmul(h)?.add_col(hb)?.cross_entropy_loss(&[seq.label])?;
        tape.backward(loss)?;
        let mut grad = Vec::with_capacity(self.to_vec().len());
        for v in [w_x, w_h, b, hw, hb] {
            let g = tape.grad(v).unwrap_or_else(|| Matrix::zeros(v.shape().0, v.shape().1));
            grad.extend_from_slice(g.as_slice());
        }
        Ok((loss.scalar(), grad))
    }

    pub fn accuracy(&self, data: &[LabeledSequence], cfg: ProxLstmConfig) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty evaluation set".into()));
        }
        let mut hits = 0usize;
        for item in data {
            if self.predict(&item.steps, cfg)? == item.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Mini-batch training for a fixed number of epochs. Batch gradients are
/// summed in sequence order and averaged. `on_epoch` may stop training
/// early by returning `false`.
#[allow(clippy::too_many_arguments)]
pub fn train_sequence_classifier(
    model: &mut SequenceClassifier,
    train: &[LabeledSequence],
    test: &[LabeledSequence],
    cell: ProxLstmConfig,
    cfg: TrainConfig,
    epochs: usize,
    rng: &mut SplitMix64,
    mut on_epoch: impl FnMut(&EpochMetrics) -> bool,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut theta = model.to_vec();
    let mut opt = OptimizerState::new(cfg, theta.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    let mut step = 0usize;
    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; theta.len()];
            for &k in batch {
                let (loss, g) = model.loss_and_grad(&train[k], cell)?;
                if !loss.is_finite() {
                    return Err(Error::NanLoss(step));
                }
                total += loss;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            opt.step(&mut theta, &grad);
            model.set_from_slice(&theta)?;
            step += 1;
        }
        let m = EpochMetrics {
            epoch,
            train_loss: total / train.len() as f64,
            train_accuracy: model.accuracy(train, cell)?,
            test_accuracy: if test.is_empty() { f64::NAN } else { model.accuracy(test, cell)? },
        };
        let keep_going = on_epoch(&m);
        history.push(m);
        if !keep_going {
            break;
        }
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStartConfig {
    pub hidden: usize,
    pub cell: ProxLstmConfig,
    pub train: TrainConfig,
    /// Upper bound on the vanilla phase.
    pub vanilla_epochs: usize,
    /// The vanilla phase stops once the training loss changed by less than
    /// `plateau_tol` over `plateau_window` epochs.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub prox_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    pub vanilla_phase: Vec<EpochMetrics>,
    /// The vanilla model trained further for the same number of epochs.
    pub vanilla_continued: Vec<EpochMetrics>,
    pub prox_phase: Vec<EpochMetrics>,
    pub vanilla_test_accuracy: f64,
    pub prox_test_accuracy: f64,
}

/// Trains a vanilla LSTM to a plateau, then continues from that model twice
/// with identical batch order: once unchanged and once as a ProxLSTM.
pub fn warm_start(
    train: &[LabeledSequence],
    test: &[LabeledSequence],
    input: usize,
    classes: usize,
    cfg: &WarmStartConfig,
    rng: &mut SplitMix64,
) -> Result<WarmStartReport> {
    let mut model = SequenceClassifier::random(cfg.hidden, input, classes, rng);
    let vanilla = ProxLstmConfig::vanilla();
    let mut losses: Vec<f64> = Vec::new();
    let vanilla_phase =
        train_sequence_classifier(&mut model, train, test, vanilla, cfg.train, cfg.vanilla_epochs, rng, |m| {
            losses.push(m.train_loss);
            let w = cfg.plateau_window;
            !(w > 0 && losses.len() > w && (losses[losses.len() - 1 - w] - m.train_loss).abs() < cfg.plateau_tol)
        })?;
    let branch_rng = rng.fork();

    let mut plain = model.clone();
    let vanilla_continued = train_sequence_classifier(
        &mut plain,
        train,
        test,
        vanilla,
        cfg.train,
        cfg.prox_epochs,
        &mut branch_rng.clone(),
        |_| true,
    )?;
    let mut prox = model;
    let prox_phase = train_sequence_classifier(
        &mut prox,
        train,
        test,
        cfg.cell,
        cfg.train,
        cfg.prox_epochs,
        &mut branch_rng.clone(),
        |_| true,
    )?;
    Ok(WarmStartReport {
        vanilla_test_accuracy: plain.accuracy(test, vanilla)?,
        prox_test_accuracy: prox.accuracy(test, cfg.cell)?,
        vanilla_phase,
        vanilla_continued,
        prox_phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{finite_diff_check, max_rel_error, numeric_gradient};

    fn rand_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect()
    }

    fn random_seq(rng: &mut SplitMix64, len: usize, d: usize) -> Vec<Vec<f64>> {
        (0..len).map(|_| rand_vec(rng, d)).collect()
    }

    #[test]
    fn zero_weights_and_state_give_zero_candidate() {
        let p = LstmParams::zeros(3, 2);
        let step = lstm_step(&p, &[0.0; 3], &[0.0; 3], &[1.0, -1.0]).unwrap();
        assert_eq!(step.s, vec![0.0; 3]);
    }

    #[test]
    fn saturated_forget_gate_keeps_the_cell() {
        let mut p = LstmParams::zeros(2, 1);
        for k in 0..2 {
            p.b[k] = -800.0; // input gate closed
            p.b[2 + k] = 800.0; // forget gate open
        }
        let c = [0.3, -0.7];
        let step = lstm_step(&p, &c, &[0.1, 0.2], &[5.0]).unwrap();
        assert_eq!(step.s, c.to_vec());
    }

    #[test]
    fn shape_errors_are_reported() {
        let p = LstmParams::zeros(3, 2);
        assert!(matches!(lstm_step(&p, &[0.0; 2], &[0.0; 3], &[0.0; 2]), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(lstm_step(&p, &[0.0; 3], &[0.0; 3], &[0.0; 3]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn candidate_state_matches_finite_differences() {
        let mut rng = SplitMix64::new(3);
        let p = LstmParams::random(4, 3, &mut rng);
        let c = rand_vec(&mut rng, 4);
        let h = rand_vec(&mut rng, 4);
        let x = rand_vec(&mut rng, 3);
        let w = rand_vec(&mut rng, 4);
        // derivative of ⟨w, s⟩ in c_prev, h_prev and x through the gates
        let f = |c: &[f64], h: &[f64], x: &[f64]| dot(&w, &lstm_step(&p, c, h, x).unwrap().s);
        let gt = lstm_step(&p, &c, &h, &x).unwrap().gates;
        let hd = 4;
        let mut dz = [0.0; 16];
        for k in 0..hd {
            dz[k] = w[k] * gt.g[k] * gt.i[k] * (1.0 - gt.i[k]);
            dz[hd + k] = w[k] * c[k] * gt.f[k] * (1.0 - gt.f[k]);
            dz[3 * hd + k] = w[k] * gt.i[k] * (1.0 - gt.g[k] * gt.g[k]);
        }
        let an_h: Vec<f64> = (0..4).map(|j| (0..16).map(|r| p.w_h[(r, j)] * dz[r]).sum()).collect();
        let an_c: Vec<f64> = (0..4).map(|k| w[k] * gt.f[k]).collect();
        let num = |v: &[f64], which: usize| -> Vec<f64> {
            numeric_gradient(
                |m| {
                    Ok(match which {
                        0 => f(m.as_slice(), &h, &x),
                        _ => f(&c, m.as_slice(), &x),
                    })
                },
                &Matrix::column(v),
                1e-6,
            )
            .unwrap()
            .into_vec()
        };
        for (a, n) in an_c.iter().zip(num(&c, 0)) {
            assert!((a - n).abs() < 1e-6);
        }
        for (a, n) in an_h.iter().zip(num(&h, 1)) {
            assert!((a - n).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_input_weights_give_zero_jacobian() {
        let mut rng = SplitMix64::new(5);
        let mut p = LstmParams::random(3, 2, &mut rng);
        p.w_x = Matrix::zeros(12, 2);
        let g = input_jacobian(&p, &[0.5; 3], &[0.2; 3], &[1.0, 2.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn scalar_jacobian_matches_hand_expansion() {
        let p = LstmParams {
            w_x: Matrix::column(&[0.3, -0.4, 0.9, 0.7]),
            w_h: Matrix::column(&[0.1, 0.2, -0.3, 0.5]),
            b: vec![0.05, -0.1, 0.2, 0.0],
        };
        let (c, h, x) = (0.6, -0.2, 0.8);
        let g = input_jacobian(&p, &[c], &[h], &[x]).unwrap()[(0, 0)];
        let zi = 0.3 * x + 0.1 * h + 0.05;
        let zf = -0.4 * x + 0.2 * h - 0.1;
        let zg = 0.7 * x + 0.5 * h;
        let (i, f, gg) = (sigmoid(zi), sigmoid(zf), zg.tanh());
        // s = f c + i g, differentiated by hand in x
        let expect = c * f * (1.0 - f) * -0.4 + gg * i * (1.0 - i) * 0.3 + i * (1.0 - gg * gg) * 0.7;
        assert!((g - expect).abs() <= 1e-10);
    }

    #[test]
    fn jacobian_matches_column_finite_differences() {
        let mut rng = SplitMix64::new(8);
        let p = LstmParams::random(4, 3, &mut rng);
        let c = rand_vec(&mut rng, 4);
        let h = rand_vec(&mut rng, 4);
        let x = rand_vec(&mut rng, 3);
        let g = input_jacobian(&p, &c, &h, &x).unwrap();
        let eps = 1e-6;
        for j in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += eps;
            xm[j] -= eps;
            let sp = lstm_step(&p, &c, &h, &xp).unwrap().s;
            let sm = lstm_step(&p, &c, &h, &xm).unwrap().s;
            for k in 0..4 {
                assert!((g[(k, j)] - (sp[k] - sm[k]) / (2.0 * eps)).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn prox_step_closed_cases() {
        let s = [1.0, -2.0];
        let g = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(prox_step(&s, &g, 3.0, 0.0).unwrap(), s.to_vec());
        let c = prox_step(&[1.0], &Matrix::filled(1, 1, 1.0), 1.0, 1.0).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn prox_step_rejects_bad_input() {
        let g = Matrix::filled(1, 1, f64::NAN);
        assert!(matches!(prox_step(&[1.0], &g, 1.0, 1.0), Err(Error::NonFinite(_))));
        let g = Matrix::filled(1, 1, 1.0);
        assert!(prox_step(&[1.0], &g, 0.0, 1.0).is_err());
        assert!(prox_step(&[1.0], &g, 1.0, -1.0).is_err());
    }

    #[test]
    fn prox_step_is_stationary_for_its_objective() {
        let mut rng = SplitMix64::new(13);
        for _ in 0..20 {
            let s = rand_vec(&mut rng, 4);
            let g = Matrix::from_fn(4, 3, |_, _| rng.uniform_in(-2.0, 2.0));
            let (lambda, delta) = (rng.uniform_in(0.1, 2.0), rng.uniform_in(0.0, 2.0));
            let solve = ProxSolve::new(&s, &g, lambda, delta).unwrap();
            assert!(solve.residual() <= 1e-10);
            // gradient of λ‖c−s‖² + δ²‖Gᵀc‖²
            let c = solve.c();
            let gc = g.t_matmul(&Matrix::column(c));
            let ggc = g.matmul(&gc);
            for k in 0..4 {
                let grad = 2.0 * lambda * (c[k] - s[k]) + 2.0 * delta * delta * ggc[(k, 0)];
                assert!(grad.abs() <= 1e-10);
            }
            let norm_c: f64 = c.iter().map(|v| v * v).sum();
            let norm_s: f64 = s.iter().map(|v| v * v).sum();
            assert!(norm_c <= norm_s + 1e-14);
        }
    }

    #[test]
    fn scalar_backward_matches_hand_values() {
        let solve = ProxSolve::new(&[1.0], &Matrix::filled(1, 1, 1.0), 1.0, 1.0).unwrap();
        let (ds, dg) = prox_step_backward(&solve, &[1.0]).unwrap();
        assert!((ds[0] - 0.5).abs() < 1e-15);
        assert!((dg[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_jacobian_passes_the_adjoint_through() {
        let solve = ProxSolve::new(&[1.0, 2.0], &Matrix::zeros(2, 3), 1.0, 1.0).unwrap();
        let (ds, dg) = prox_step_backward(&solve, &[0.3, -0.4]).unwrap();
        assert_eq!(ds, vec![0.3, -0.4]);
        assert_eq!(dg.max_abs(), 0.0);
    }

    #[test]
    fn prox_backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..10 {
            let s = rand_vec(&mut rng, 4);
            let g = Matrix::from_fn(4, 3, |_, _| rng.uniform_in(-1.0, 1.0));
            let w = rand_vec(&mut rng, 4);
            let (lambda, delta) = (0.7, 1.3);
            let solve = ProxSolve::new(&s, &g, lambda, delta).unwrap();
            let (ds, dg) = prox_step_backward(&solve, &w).unwrap();
            let num_s = numeric_gradient(
                |m| Ok(dot(&w, &prox_step(m.as_slice(), &g, lambda, delta)?)),
                &Matrix::column(&s),
                1e-6,
            )
            .unwrap();
            let num_g = numeric_gradient(|m| Ok(dot(&w, &prox_step(&s, m, lambda, delta)?)), &g, 1e-6).unwrap();
            assert!(max_rel_error(&Matrix::column(&ds), &num_s) <= 1e-8);
            assert!(max_rel_error(&dg, &num_g) <= 1e-8);
        }
    }

    #[test]
    fn prox_node_passes_finite_difference_check() {
        let mut rng = SplitMix64::new(34);
        let g = Matrix::from_fn(3, 2, |_, _| rng.uniform_in(-1.0, 1.0));
        let cfg = ProxLstmConfig { lambda: 0.5, delta: 1.0 };
        let s = Matrix::from_fn(3, 1, |_, _| rng.uniform_in(-2.0, 2.0));
        let w = Matrix::from_fn(3, 1, |_, _| rng.uniform_in(-1.0, 1.0));
        let err = finite_diff_check(
            |tape, s| {
                let c = prox_node(tape, s, &g, cfg)?;
                Ok(c.hadamard(c)?.hadamard(tape.leaf(w.clone()))?.sum())
            },
            &s,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    fn loss_of(p: &LstmParams, seq: &[Vec<f64>], w: &[f64], cfg: ProxLstmConfig) -> f64 {
        let caches = forward(p, seq, cfg).unwrap();
        dot(w, &caches[caches.len() - 1].h)
    }

    #[test]
    fn bptt_matches_finite_differences_on_every_parameter() {
        let mut rng = SplitMix64::new(55);
        let p = LstmParams::random(4, 3, &mut rng);
        let seq = random_seq(&mut rng, 5, 3);
        let w = rand_vec(&mut rng, 4);
        let cfg = ProxLstmConfig { lambda: 0.5, delta: 1.5 };
        let caches = forward(&p, &seq, cfg).unwrap();
        let grads = bptt_last(&p, &caches, &w).unwrap();
        let theta = Matrix::column(&p.to_vec());
        let num = numeric_gradient(
            |m| Ok(loss_of(&LstmParams::from_slice(4, 3, m.as_slice())?, &seq, &w, cfg)),
            &theta,
            1e-5,
        )
        .unwrap();
        let err = max_rel_error(&Matrix::column(&grads.to_vec()), &num);
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn per_step_losses_add_up() {
        let mut rng = SplitMix64::new(56);
        let p = LstmParams::random(3, 2, &mut rng);
        let seq = random_seq(&mut rng, 4, 2);
        let cfg = ProxLstmConfig { lambda: 1.0, delta: 1.0 };
        let dh: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 3)).collect();
        let caches = forward(&p, &seq, cfg).unwrap();
        let grads = bptt(&p, &caches, &dh).unwrap();
        let num = numeric_gradient(
            |m| {
                let q = LstmParams::from_slice(3, 2, m.as_slice())?;
                let c = forward(&q, &seq, cfg)?;
                Ok(c.iter().zip(&dh).map(|(c, w)| dot(w, &c.h)).sum())
            },
            &Matrix::column(&p.to_vec()),
            1e-5,
        )
        .unwrap();
        assert!(max_rel_error(&Matrix::column(&grads.to_vec()), &num) <= 1e-7);
    }

    #[test]
    fn second_order_term_matches_nested_differences() {
        // ∂/∂(c_prev, h_prev) ⟨D, ∂s/∂x⟩ against differences of the FD Jacobian
        let mut rng = SplitMix64::new(89);
        let p = LstmParams::random(3, 2, &mut rng);
        let c = rand_vec(&mut rng, 3);
        let h = rand_vec(&mut rng, 3);
        let x = rand_vec(&mut rng, 2);
        let d = Matrix::from_fn(3, 2, |_, _| rng.uniform_in(-1.0, 1.0));
        let fd_jac = |c: &[f64], h: &[f64]| {
            let eps = 1e-4;
            Matrix::from_fn(3, 2, |k, j| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += eps;
                xm[j] -= eps;
                (lstm_step(&p, c, h, &xp).unwrap().s[k] - lstm_step(&p, c, h, &xm).unwrap().s[k]) / (2.0 * eps)
            })
        };
        let nested_c = numeric_gradient(|m| Ok(fd_jac(m.as_slice(), &h).inner(&d)), &Matrix::column(&c), 1e-4).unwrap();
        let nested_h = numeric_gradient(|m| Ok(fd_jac(&c, m.as_slice()).inner(&d)), &Matrix::column(&h), 1e-4).unwrap();

        // drive one step of the recursion with an adjoint on G only
        let caches = forward(&p, std::slice::from_ref(&x), ProxLstmConfig::vanilla()).unwrap();
        let mut cache = caches[0].clone();
        cache.c_prev = c.clone();
        cache.h_prev = h.clone();
        cache.gates = lstm_step(&p, &c, &h, &x).unwrap().gates;
        let mut grads = LstmParams::zeros(3, 2);
        let (dh_prev, dc_prev) = cell_backward(&p, &cache, &[0.0; 3], vec![0.0; 3], &d, &mut grads);
        assert!(max_rel_error(&Matrix::column(&dc_prev), &nested_c) <= 1e-3);
        assert!(max_rel_error(&Matrix::column(&dh_prev), &nested_h) <= 1e-3);
    }

    #[test]
    fn zero_delta_matches_vanilla_lstm() {
        let mut rng = SplitMix64::new(144);
        let p = LstmParams::random(4, 3, &mut rng);
        let seq = random_seq(&mut rng, 6, 3);
        let w = rand_vec(&mut rng, 4);
        let caches = forward(&p, &seq, ProxLstmConfig { lambda: 0.3, delta: 0.0 }).unwrap();
        let ours = bptt_last(&p, &caches, &w).unwrap();
        let reference = vanilla_bptt(&p, &seq, &w).unwrap();
        let err = max_rel_error(&Matrix::column(&ours.to_vec()), &Matrix::column(&reference.to_vec()));
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn length_one_sequence_composes_step_backwards() {
        let mut rng = SplitMix64::new(233);
        let p = LstmParams::random(3, 2, &mut rng);
        let x = rand_vec(&mut rng, 2);
        let w = rand_vec(&mut rng, 3);
        let cfg = ProxLstmConfig { lambda: 1.0, delta: 2.0 };
        let caches = forward(&p, std::slice::from_ref(&x), cfg).unwrap();
        let grads = bptt_last(&p, &caches, &w).unwrap();
        // from zero state only o and g see the loss; c_1 is unused, so the
        // prox adjoints vanish
        let (ds, dg) = prox_step_backward(&caches[0].prox, &[0.0; 3]).unwrap();
        assert_eq!(ds, vec![0.0; 3]);
        assert_eq!(dg.max_abs(), 0.0);
        let reference = vanilla_bptt(&p, &[x], &w).unwrap();
        assert!(max_rel_error(&Matrix::column(&grads.to_vec()), &Matrix::column(&reference.to_vec())) <= 1e-12);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let p = LstmParams::zeros(2, 2);
        assert!(forward(&p, &[], ProxLstmConfig::vanilla()).is_err());
        assert!(bptt(&p, &[], &[]).is_err());
    }

    #[test]
    fn classifier_gradient_goes_through_the_custom_node() {
        let mut rng = SplitMix64::new(377);
        let model = SequenceClassifier::random(3, 2, 3, &mut rng);
        let item = LabeledSequence { steps: random_seq(&mut rng, 4, 2), label: 2 };
        let cfg = ProxLstmConfig { lambda: 0.5, delta: 1.0 };
        let (_, grad) = model.loss_and_grad(&item, cfg).unwrap();
        let num = numeric_gradient(
            |m| {
                let mut q = model.clone();
                q.set_from_slice(m.as_slice())?;
                Ok(q.loss_and_grad(&item, cfg)?.0)
            },
            &Matrix::column(&model.to_vec()),
            1e-5,
        )
        .unwrap();
        assert!(max_rel_error(&Matrix::column(&grad), &num) <= 1e-7);
    }

    #[test]
    fn constant_class_is_learned_quickly() {
        let mut rng = SplitMix64::new(610);
        let data: Vec<LabeledSequence> =
            (0..40).map(|_| LabeledSequence { steps: random_seq(&mut rng, 5, 2), label: 1 }).collect();
        let mut model = SequenceClassifier::random(4, 2, 2, &mut rng);
        let cfg = TrainConfig { lr: 0.05, ..TrainConfig::default() };
        let hist = train_sequence_classifier(
            &mut model,
            &data,
            &data,
            ProxLstmConfig { lambda: 1.0, delta: 0.5 },
            cfg,
            5,
            &mut rng,
            |_| true,
        )
        .unwrap();
        assert_eq!(hist.last().unwrap().test_accuracy, 1.0);
    }

    #[test]
    fn zero_delta_prox_phase_equals_continued_vanilla_training() {
        let mut rng = SplitMix64::new(987);
        let data: Vec<LabeledSequence> =
            (0..30).map(|k| LabeledSequence { steps: random_seq(&mut rng, 4, 2), label: k % 2 }).collect();
        let base = SequenceClassifier::random(3, 2, 2, &mut rng);
        let run = |cell| {
            let mut m = base.clone();
            let mut r = SplitMix64::new(4);
            train_sequence_classifier(&mut m, &data, &data, cell, TrainConfig::default(), 3, &mut r, |_| true).unwrap()
        };
        let a = run(ProxLstmConfig::vanilla());
        let b = run(ProxLstmConfig { lambda: 2.0, delta: 0.0 });
        for (x, y) in a.iter().zip(&b) {
            assert!((x.train_loss - y.train_loss).abs() <= 1e-10);
        }
    }
}
