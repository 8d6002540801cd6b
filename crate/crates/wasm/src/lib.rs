//! Browser bindings for three interactive views: streaming state-evolution
//! curves, the per-batch replica potential and the clustering overlap.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented on
//! the pure functions, which are also what the native tests exercise.

use miniamp_core::denoisers::{ChannelSpec, PriorSpec};
use miniamp_core::replica::{scan_landscape, GridSpec};
use miniamp_core::state_evolution::{
    se_lowrank, se_mini, se_offline, CentroidPrior, LowRankSeOptions, SeOptions,
};
use wasm_bindgen::prelude::*;

type Out = Result<Vec<f64>, String>;

fn sparse(rho: f64) -> Result<PriorSpec, String> {
    PriorSpec::gauss_bernoulli(rho).map_err(|e| e.to_string())
}

fn gaussian(delta: f64) -> Result<ChannelSpec, String> {
    ChannelSpec::gaussian(delta).map_err(|e| e.to_string())
}

/// `[alpha_1, E_1, alpha_2, E_2, ...]`, one pair per batch, for sparse
/// regression with `alpha_b` per batch up to `alpha_max`.
pub fn streaming_curve(rho: f64, delta: f64, alpha_b: f64, alpha_max: f64) -> Out {
    if !(alpha_b > 0.0) || !(alpha_max >= alpha_b) {
        return Err("need 0 < alpha_b <= alpha_max".into());
    }
    let batches = (alpha_max / alpha_b + 1e-9).floor() as usize;
    if batches > 5000 {
        return Err("too many batches; raise alpha_b".into());
    }
    let traj = se_mini(&sparse(rho)?, &gaussian(delta)?, alpha_b, batches, &SeOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(traj.alphas().into_iter().zip(traj.batch_mse()).flat_map(|(a, e)| [a, e]).collect())
}

/// Offline curve on `points` evenly spaced values of `alpha` in
/// `(0, alpha_max]`, same layout as [`streaming_curve`].
pub fn offline_curve(rho: f64, delta: f64, alpha_max: f64, points: usize) -> Out {
    let (prior, ch) = (sparse(rho)?, gaussian(delta)?);
    let points = points.clamp(2, 400);
    let mut out = Vec::with_capacity(2 * points);
    for i in 1..=points {
        let a = alpha_max * i as f64 / points as f64;
        let e = se_offline(&prior, &ch, a, &SeOptions::default()).map_err(|e| e.to_string())?.final_mse();
        out.extend([a, e]);
    }
    Ok(out)
}

/// `[m, E_min_1, .., E_min_m, E_1, f_1, E_2, f_2, ...]`: the number of local
/// minima, their positions, then the sampled potential.
pub fn landscape(rho: f64, delta: f64, alpha_b: f64, lambda: f64, points: usize) -> Out {
    let grid = GridSpec { points: points.clamp(20, 2000), ..GridSpec::default() };
    let scan = scan_landscape(&sparse(rho)?, delta, alpha_b, lambda, &grid).map_err(|e| e.to_string())?;
    let mut out = vec![scan.minima.len() as f64];
    out.extend(scan.minima.iter().map(|m| m.e));
    out.extend(scan.e.iter().zip(&scan.values).flat_map(|(&e, &f)| [e, f]));
    Ok(out)
}

/// `[overlap_1, mse_1, loss_1, ...]` per batch for Gaussian-mixture
/// clustering with `rank` unit-variance centroids.
pub fn cluster_overlap(rank: usize, delta: f64, alpha_b: f64, batches: usize, initial_overlap: f64) -> Out {
    let prior = CentroidPrior::isotropic(rank, 1.0).map_err(|e| e.to_string())?;
    let opts = LowRankSeOptions { initial_overlap, ..LowRankSeOptions::default() };
    let traj = se_lowrank(&prior, delta, alpha_b, batches.min(500), &opts).map_err(|e| e.to_string())?;
    Ok(traj.finals().iter().flat_map(|o| [o.ansatz_u().0, o.centroid_mse, o.label_error]).collect())
}

fn js(r: Out) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = streamingCurve)]
pub fn streaming_curve_js(rho: f64, delta: f64, alpha_b: f64, alpha_max: f64) -> Result<Vec<f64>, JsError> {
    js(streaming_curve(rho, delta, alpha_b, alpha_max))
}

#[wasm_bindgen(js_name = offlineCurve)]
pub fn offline_curve_js(rho: f64, delta: f64, alpha_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    js(offline_curve(rho, delta, alpha_max, points))
}

#[wasm_bindgen(js_name = landscape)]
pub fn landscape_js(rho: f64, delta: f64, alpha_b: f64, lambda: f64, points: usize) -> Result<Vec<f64>, JsError> {
    js(landscape(rho, delta, alpha_b, lambda, points))
}

#[wasm_bindgen(js_name = clusterOverlap)]
pub fn cluster_overlap_js(
    rank: usize,
    delta: f64,
    alpha_b: f64,
    batches: usize,
    initial_overlap: f64,
) -> Result<Vec<f64>, JsError> {
    js(cluster_overlap(rank, delta, alpha_b, batches, initial_overlap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_layout() {
        let c = streaming_curve(0.3, 1e-8, 0.5, 2.0).unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(c[6], 2.0);
        assert!(c[7] < c[1]);
        assert!(streaming_curve(0.3, 1e-8, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_batch_is_offline() {
        let s = streaming_curve(0.3, 1e-4, 1.2, 1.2).unwrap();
        let o = offline_curve(0.3, 1e-4, 1.2, 2).unwrap();
        assert_eq!(s[1], o[3]);
    }

    #[test]
    fn landscape_counts_minima() {
        let l = landscape(0.3, 1e-8, 0.35, 0.0, 200).unwrap();
        let m = l[0] as usize;
        assert_eq!(m, 2);
        assert_eq!(l.len(), 1 + m + 2 * 200);
        assert!(landscape(0.3, 0.0, 0.35, 0.0, 200).is_err());
    }

    #[test]
    fn overlap_stays_zero_without_seed() {
        let o = cluster_overlap(3, 0.1, 0.5, 4, 0.0).unwrap();
        assert_eq!(o.len(), 12);
        assert!(o.chunks(3).all(|c| c[0].abs() < 1e-12));
    }
}
