//! Synthetic datasets. Every generator draws from one [`SplitMix64`]
//! stream seeded by the caller, in a fixed documented order.

use std::f64::consts::PI;

use proxnet::lstm::LabeledSequence;
use proxnet::rng::SplitMix64;
use proxnet::Matrix;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct TwoMoon {
    /// n × 2, one point per row.
    pub points: Matrix,
    /// 0 for the upper moon, 1 for the lower one.
    pub labels: Vec<usize>,
    /// Indices of the two labelled points, one per moon.
    pub labeled: [usize; 2],
}

/// Upper moon `(cos t, sin t)` and lower moon `(1 − cos t, ½ − sin t)` for
/// `t = πi/(n/2 − 1)`, then Gaussian noise on x and y of each point in turn.
///
/// The labelled points are the leftmost point of the upper moon and the
/// rightmost point of the lower moon, so the two labels sit at the far tips.
pub fn gen_twomoon(n: usize, noise: f64, seed: u64) -> Result<TwoMoon, HarnessError> {
    gen_twomoon_from(n, noise, &mut SplitMix64::new(seed))
}

/// [`gen_twomoon`] drawing from a caller-owned stream.
pub fn gen_twomoon_from(n: usize, noise: f64, rng: &mut SplitMix64) -> Result<TwoMoon, HarnessError> {
    if n < 10 || !n.is_multiple_of(2) {
        return Err(HarnessError::Config(format!("two-moon needs an even n >= 10, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(HarnessError::Config(format!("noise must be >= 0, got {noise}")));
    }
    let half = n / 2;
    let mut points = Matrix::zeros(n, 2);
    let mut labels = vec![0; n];
    for i in 0..n {
        let moon = i / half;
        let t = PI * (i % half) as f64 / (half - 1) as f64;
        let (x, y) = if moon == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        points[(i, 0)] = x + noise * rng.normal();
        points[(i, 1)] = y + noise * rng.normal();
        labels[i] = moon;
    }
    let by_x = |range: std::ops::Range<usize>, pick_max: bool| {
        range
            .reduce(|a, b| {
                let better = if pick_max { points[(b, 0)] > points[(a, 0)] } else { points[(b, 0)] < points[(a, 0)] };
                if better {
                    b
                } else {
                    a
                }
            })
            .expect("non-empty moon")
    };
    let labeled = [by_x(0..half, false), by_x(half..n, true)];
    Ok(TwoMoon { points, labels, labeled })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiviewSpec {
    pub n: usize,
    pub d_latent: usize,
    pub d_obs_x: usize,
    pub d_obs_y: usize,
    pub noise_x: f64,
    pub noise_y: f64,
    pub classes: usize,
    /// Distance of every class mean from the origin, in units of the latent
    /// standard deviation. Class `c` has mean `separation · e_c`.
    pub separation: f64,
    /// Use the x-view maps for the y view as well.
    pub shared_maps: bool,
}

impl Default for MultiviewSpec {
    fn default() -> Self {
        Self {
            n: 600,
            d_latent: 4,
            d_obs_x: 12,
            d_obs_y: 10,
            noise_x: 0.5,
            noise_y: 0.5,
            classes: 3,
            separation: 2.0,
            shared_maps: false,
        }
    }
}

impl MultiviewSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n < 2 || self.classes < 2 || self.classes > self.d_latent || self.d_obs_x == 0 || self.d_obs_y == 0 {
            return Err(HarnessError::Config(format!("bad multiview data settings {self:?}")));
        }
        if !(self.noise_x >= 0.0 && self.noise_y >= 0.0 && self.separation >= 0.0) {
            return Err(HarnessError::Config("noise levels and separation must be >= 0".into()));
        }
        if self.shared_maps && self.d_obs_x != self.d_obs_y {
            return Err(HarnessError::Config("shared maps need d_obs_x == d_obs_y".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Multiview {
    /// Latent codes, d_latent × n.
    pub z: Matrix,
    /// d_obs_x × n
    pub x: Matrix,
    /// d_obs_y × n
    pub y: Matrix,
    pub labels: Vec<usize>,
    /// Class means, d_latent × classes.
    pub means: Matrix,
}

/// `z ~ N(separation·e_label, I)`, `x = A tanh(Bz) + ε_x`,
/// `y = C tanh(Dz) + ε_y`. Draw order: B, A, D, C (entries `N(0, 1/cols)`),
/// then per sample the label, z, x noise and y noise.
pub fn gen_synthetic_multiview(spec: &MultiviewSpec, seed: u64) -> Result<Multiview, HarnessError> {
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut gaussian = |r: usize, c: usize| {
        let s = 1.0 / (c as f64).sqrt();
        Matrix::from_fn(r, c, |_, _| s * rng.normal())
    };
    let dl = spec.d_latent;
    let b = gaussian(spec.d_obs_x, dl);
    let a = gaussian(spec.d_obs_x, spec.d_obs_x);
    let (d, c) = if spec.shared_maps {
        (b.clone(), a.clone())
    } else {
        let d = gaussian(spec.d_obs_y, dl);
        let c = gaussian(spec.d_obs_y, spec.d_obs_y);
        (d, c)
    };
    let means = Matrix::from_fn(dl, spec.classes, |i, j| if i == j { spec.separation } else { 0.0 });
    let mut z = Matrix::zeros(dl, spec.n);
    let mut x = Matrix::zeros(spec.d_obs_x, spec.n);
    let mut y = Matrix::zeros(spec.d_obs_y, spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for s in 0..spec.n {
        let label = rng.below(spec.classes);
        labels.push(label);
        for i in 0..dl {
            z[(i, s)] = means[(i, label)] + rng.normal();
        }
        let zs = Matrix::column(&z.col(s));
        let xs = a.matmul(&b.matmul(&zs).map(f64::tanh));
        let ys = c.matmul(&d.matmul(&zs).map(f64::tanh));
        for i in 0..spec.d_obs_x {
            x[(i, s)] = xs[(i, 0)] + spec.noise_x * rng.normal();
        }
        for i in 0..spec.d_obs_y {
            y[(i, s)] = ys[(i, 0)] + spec.noise_y * rng.normal();
        }
    }
    Ok(Multiview { z, x, y, labels, means })
}

/// Nearest class mean on the latent codes; the Bayes rule for these
/// equal-covariance Gaussians with uniform class prior.
pub fn latent_oracle_accuracy(data: &Multiview) -> f64 {
    let n = data.labels.len();
    let hits = (0..n)
        .filter(|&s| {
            let zs = data.z.col(s);
            let dist = |c: usize| -> f64 { (0..zs.len()).map(|i| (zs[i] - data.means[(i, c)]).powi(2)).sum() };
            let best = (0..data.means.cols()).min_by(|a, b| dist(*a).total_cmp(&dist(*b))).unwrap_or(0);
            best == data.labels[s]
        })
        .count();
    hits as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSpec {
    pub n: usize,
    pub length: usize,
    pub vocab: usize,
    /// Standard deviation of the Gaussian noise added to every one-hot entry.
    pub corruption: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self { n: 1000, length: 30, vocab: 3, corruption: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceSet {
    pub items: Vec<LabeledSequence>,
    /// Token ids before corruption.
    pub clean: Vec<Vec<usize>>,
}

/// The most frequent token, or `None` on a tie.
pub fn unique_majority(tokens: &[usize], vocab: usize) -> Option<usize> {
    let mut counts = vec![0usize; vocab];
    for t in tokens {
        counts[*t] += 1;
    }
    let top = *counts.iter().max()?;
    let mut winners = counts.iter().enumerate().filter(|(_, c)| **c == top);
    let (first, _) = winners.next()?;
    if winners.next().is_some() {
        None
    } else {
        Some(first)
    }
}

/// Noisy-majority classification. Each clean sequence draws tokens
/// uniformly and is redrawn until it has a unique majority token, which is
/// the label. Inputs are one-hot vectors plus `N(0, corruption²)` noise,
/// drawn after the tokens of that sequence.
pub fn gen_sequences(spec: &SequenceSpec, seed: u64) -> Result<SequenceSet, HarnessError> {
    if spec.n == 0 || spec.length == 0 || spec.vocab < 2 || !(spec.corruption >= 0.0) {
        return Err(HarnessError::Config(format!("bad sequence settings {spec:?}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut items = Vec::with_capacity(spec.n);
    let mut clean = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (tokens, label) = loop {
            let tokens: Vec<usize> = (0..spec.length).map(|_| rng.below(spec.vocab)).collect();
            if let Some(label) = unique_majority(&tokens, spec.vocab) {
                break (tokens, label);
            }
        };
        let steps = tokens
            .iter()
            .map(|&t| {
                (0..spec.vocab).map(|v| if v == t { 1.0 } else { 0.0 } + spec.corruption * rng.normal()).collect()
            })
            .collect();
        items.push(LabeledSequence { steps, label });
        clean.push(tokens);
    }
    Ok(SequenceSet { items, clean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_moons_lie_on_unit_circles() {
        let m = gen_twomoon(200, 0.0, 3).unwrap();
        for i in 0..200 {
            let (x, y) = (m.points[(i, 0)], m.points[(i, 1)]);
            let r =
                if m.labels[i] == 0 { (x * x + y * y).sqrt() } else { ((x - 1.0).powi(2) + (y - 0.5).powi(2)).sqrt() };
            assert!((r - 1.0).abs() <= 1e-12);
        }
        assert_eq!(m.labels.iter().filter(|l| **l == 0).count(), 100);
        let tip = m.points.row(m.labeled[0]);
        assert!((tip[0] + 1.0).abs() <= 1e-12 && tip[1].abs() <= 1e-12);
        assert_eq!(m.labels[m.labeled[1]], 1);
    }

    #[test]
    fn twomoon_is_deterministic() {
        let a = gen_twomoon(50, 0.1, 9).unwrap();
        let b = gen_twomoon(50, 0.1, 9).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.labeled, b.labeled);
        assert!(gen_twomoon(8, 0.1, 1).is_err());
    }

    #[test]
    fn identical_maps_without_noise_give_equal_views() {
        let spec =
            MultiviewSpec { noise_x: 0.0, noise_y: 0.0, d_obs_y: 12, shared_maps: true, ..MultiviewSpec::default() };
        let d = gen_synthetic_multiview(&spec, 4).unwrap();
        assert_eq!(d.x, d.y);
    }

    #[test]
    fn latent_classes_are_separable_at_four_sigma() {
        let spec = MultiviewSpec { n: 2000, separation: 4.0, ..MultiviewSpec::default() };
        let d = gen_synthetic_multiview(&spec, 11).unwrap();
        assert!(latent_oracle_accuracy(&d) >= 0.99);
        let again = gen_synthetic_multiview(&spec, 11).unwrap();
        assert_eq!(d.x, again.x);
    }

    #[test]
    fn clean_sequences_follow_the_majority_rule() {
        let spec = SequenceSpec { n: 200, corruption: 0.0, ..SequenceSpec::default() };
        let s = gen_sequences(&spec, 5).unwrap();
        for (item, tokens) in s.items.iter().zip(&s.clean) {
            assert_eq!(unique_majority(tokens, 3), Some(item.label));
            let read: Vec<usize> = item.steps.iter().map(|x| x.iter().position(|v| *v == 1.0).unwrap()).collect();
            assert_eq!(&read, tokens);
        }
    }

    #[test]
    fn sequence_labels_are_balanced_and_deterministic() {
        let spec = SequenceSpec::default();
        let s = gen_sequences(&spec, 8).unwrap();
        for c in 0..3 {
            let frac = s.items.iter().filter(|i| i.label == c).count() as f64 / 1000.0;
            assert!((frac - 1.0 / 3.0).abs() <= 0.05, "class {c}: {frac}");
        }
        let again = gen_sequences(&spec, 8).unwrap();
        assert_eq!(s.items, again.items);
    }

    #[test]
    fn ties_have_no_majority() {
        assert_eq!(unique_majority(&[0, 1, 0, 1], 2), None);
        assert_eq!(unique_majority(&[2, 1, 2], 3), Some(2));
    }
}
