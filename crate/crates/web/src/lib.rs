//! Browser bindings for three small demos. Each binding returns a JSON
//! string; the plain functions underneath are what the native tests call.

use proxnet::cca::{cca_objective, lambda_schedule, prox_cca, CcaLayerConfig};
use proxnet::dropout::{
    compare_discriminants, prox_dropout_rows, prox_pipeline_train, rrm_dropout_train, DropoutProxConfig,
};
use proxnet::kernel::{kpca_top2, median_heuristic_gamma, warped_distance, NystromMap, WarpOperator};
use proxnet::rng::SplitMix64;
use proxnet::Matrix;
use proxnet_cli::data::gen_twomoon_from;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct TwoMoonView {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub labeled: [usize; 2],
    /// Kernel-PCA coordinates of the warped embedding.
    pub embedding: Vec<[f64; 2]>,
    /// Label predicted from the nearest labelled point, warped metric.
    pub predicted: Vec<usize>,
    pub warped_accuracy: f64,
    pub unwarped_accuracy: f64,
}

fn nearest_labeled(emb: &Matrix, labels: &[usize], labeled: [usize; 2]) -> Vec<usize> {
    let a = [emb.col(labeled[0]), emb.col(labeled[1])];
    (0..emb.cols())
        .map(|i| {
            let e = emb.col(i);
            let pick = usize::from(warped_distance(&e, &a[1]) < warped_distance(&e, &a[0]));
            labels[labeled[pick]]
        })
        .collect()
}

fn share_correct(pred: &[usize], labels: &[usize]) -> f64 {
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

pub fn twomoon_view(n: usize, noise: f64, landmarks: usize, lambda: f64, seed: u64) -> Result<TwoMoonView, String> {
    let mut rng = SplitMix64::new(seed);
    let data = gen_twomoon_from(n, noise, &mut rng).map_err(|e| e.to_string())?;
    if landmarks == 0 || landmarks > n {
        return Err(format!("landmarks must be in 1..={n}"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let w = Matrix::from_fn(landmarks, 2, |l, j| data.points[(idx[l], j)]);
    let run = || -> proxnet::Result<(Matrix, Matrix, Matrix)> {
        let map = NystromMap::new(w, median_heuristic_gamma(&data.points)?)?;
        let phi = map.embed_rows(&data.points)?;
        let warped = WarpOperator::new(&map.gradient_representers(&data.points)?, lambda)?.apply(&phi)?;
        let emb = kpca_top2(&warped)?;
        Ok((phi, warped, emb))
    };
    let (phi, warped, emb) = run().map_err(|e| e.to_string())?;
    let predicted = nearest_labeled(&warped, &data.labels, data.labeled);
    let plain = nearest_labeled(&phi, &data.labels, data.labeled);
    Ok(TwoMoonView {
        points: (0..n).map(|i| [data.points[(i, 0)], data.points[(i, 1)]]).collect(),
        embedding: (0..n).map(|i| [emb[(i, 0)], emb[(i, 1)]]).collect(),
        warped_accuracy: share_correct(&predicted, &data.labels),
        unwarped_accuracy: share_correct(&plain, &data.labels),
        predicted,
        labels: data.labels,
        labeled: data.labeled,
    })
}

#[derive(Debug, Serialize)]
pub struct DropoutView {
    /// `(βᵀx, αᵀP(x))` per point.
    pub pairs: Vec<(f64, f64)>,
    pub labels: Vec<f64>,
    pub pearson_r: f64,
}

pub fn dropout_view(lambda: f64, mu: f64, c_coef: f64, seed: u64) -> Result<DropoutView, String> {
    let n = 200;
    let data = gen_twomoon_from(n, 0.08, &mut SplitMix64::new(seed)).map_err(|e| e.to_string())?;
    let mean: Vec<f64> = (0..2).map(|j| (0..n).map(|i| data.points[(i, j)]).sum::<f64>() / n as f64).collect();
    let xs = Matrix::from_fn(n, 2, |i, j| data.points[(i, j)] - mean[j]);
    let ys: Vec<f64> = data.labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
    let run = || -> proxnet::Result<DropoutView> {
        let prox = prox_dropout_rows(&xs, &DropoutProxConfig::with_lambda(lambda))?;
        let beta = rrm_dropout_train(&xs, &ys, mu)?;
        let alpha = prox_pipeline_train(&prox, &ys, c_coef * lambda * lambda * mu)?;
        let cmp = compare_discriminants(&xs, &prox, &beta, &alpha)?;
        Ok(DropoutView { pairs: cmp.pairs, labels: ys.clone(), pearson_r: cmp.pearson_r })
    };
    run().map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct FadeView {
    pub lambda: Vec<f64>,
    /// `‖[P; Q] − [X; Y]‖ / ‖[X; Y]‖` per epoch.
    pub displacement: Vec<f64>,
    /// `−L(P, Q)` per epoch.
    pub correlation: Vec<f64>,
    /// `−L(X, Y)` of the unprocessed views.
    pub input_correlation: f64,
}

/// One fixed pair of weakly correlated views pushed through the layer at
/// each scheduled `λ_t`. As `λ_t` grows the layer output returns to its input.
pub fn fade_view(k_sched: f64, alpha0: f64, epochs: usize, seed: u64) -> Result<FadeView, String> {
    let (d, n) = (3, 40);
    let mut rng = SplitMix64::new(seed);
    let z = Matrix::from_fn(d, n, |_, _| rng.normal());
    let x = Matrix::from_fn(d, n, |i, j| z[(i, j)] + rng.normal()).center_columns();
    let y = Matrix::from_fn(d, n, |i, j| z[(i, j)] + rng.normal()).center_columns();
    let cfg = CcaLayerConfig { k_sched, alpha0, ..Default::default() };
    let run = || -> proxnet::Result<FadeView> {
        cfg.validate(d)?;
        let norm = (x.frobenius_sq() + y.frobenius_sq()).sqrt();
        let mut out = FadeView {
            lambda: Vec::new(),
            displacement: Vec::new(),
            correlation: Vec::new(),
            input_correlation: -cca_objective(&x, &y, cfg.eps, cfg.k)?.value,
        };
        for t in 0..epochs {
            let lambda = lambda_schedule(k_sched, alpha0, t);
            let sol = prox_cca(&cfg, &x, &y, lambda)?;
            let moved = ((&sol.p - &x).frobenius_sq() + (&sol.q - &y).frobenius_sq()).sqrt();
            out.lambda.push(lambda);
            out.displacement.push(moved / norm);
            out.correlation.push(-cca_objective(&sol.p, &sol.q, cfg.eps, cfg.k)?.value);
        }
        Ok(out)
    };
    run().map_err(|e| e.to_string())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn twomoon(n: usize, noise: f64, landmarks: usize, lambda: f64, seed: u64) -> Result<String, JsValue> {
    to_js(twomoon_view(n, noise, landmarks, lambda, seed))
}

#[wasm_bindgen]
pub fn dropout_scatter(lambda: f64, mu: f64, c_coef: f64, seed: u64) -> Result<String, JsValue> {
    to_js(dropout_view(lambda, mu, c_coef, seed))
}

#[wasm_bindgen]
pub fn cca_fade(k_sched: f64, alpha0: f64, epochs: usize, seed: u64) -> Result<String, JsValue> {
    to_js(fade_view(k_sched, alpha0, epochs, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warping_separates_the_moons() {
        let v = twomoon_view(200, 0.08, 100, 1e-4, 1).unwrap();
        assert_eq!(v.embedding.len(), 200);
        assert!(v.warped_accuracy > v.unwarped_accuracy);
    }

    #[test]
    fn bad_landmark_count_is_reported() {
        assert!(twomoon_view(40, 0.08, 0, 1e-4, 1).is_err());
    }

    #[test]
    fn dropout_pipelines_agree() {
        let v = dropout_view(0.5, 0.1, 0.2, 1).unwrap();
        assert_eq!(v.pairs.len(), 200);
        assert!(v.pearson_r > 0.9);
    }

    #[test]
    fn fade_returns_to_identity() {
        let v = fade_view(1.0, 0.5, 30, 3).unwrap();
        assert_eq!(v.lambda[0], 0.5);
        assert!(v.displacement[29] < v.displacement[0]);
        assert!(v.correlation[0] >= v.input_correlation);
    }
}
