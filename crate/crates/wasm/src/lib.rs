//! Browser bindings: fBm path sampling, a distance-ratio sweep and a small
//! density profile, each returning a flat `Float64Array`.

use std::collections::BTreeMap;

use wasm_bindgen::prelude::*;

use fracdens::density::lower_bound_check;
use fracdens::distance::{comparison_sweep, unit_directions, OptimizeOptions};
use fracdens::fbm::sample_paths;
use fracdens::{registry_build, Hurst, TimeGrid, VectorFieldSet};

fn js(e: fracdens::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn sin_field(eps: f64, dim: usize) -> fracdens::Result<VectorFieldSet> {
    registry_build(
        "sin-perturbed",
        &BTreeMap::from([("eps".to_string(), eps)]),
        dim,
    )
}

/// `count` scalar paths on `n` cells, path-major (`count * (n + 1)` values).
pub fn fbm_paths_flat(hurst: f64, n: usize, count: usize, seed: u64) -> fracdens::Result<Vec<f64>> {
    let paths = sample_paths(TimeGrid::new(n)?, Hurst::new(hurst)?, 1, count, seed, 0)?;
    Ok(paths.iter().flat_map(|p| p.values().to_vec()).collect())
}

/// Optimized distance over `|x - y|` from the origin of `R^2` under the
/// sin-perturbed field, radius-major with four directions per radius.
pub fn distance_ratios_flat(
    hurst: f64,
    n: usize,
    eps: f64,
    radii: &[f64],
) -> fracdens::Result<Vec<f64>> {
    let v = sin_field(eps, 2)?;
    let sweep = comparison_sweep(
        &[0.0, 0.0],
        radii,
        &unit_directions(2, 4),
        &v,
        TimeGrid::new(n)?,
        Hurst::new(hurst)?,
        &OptimizeOptions::default(),
    )?;
    Ok(sweep.cells.iter().map(|c| c.result.ratio).collect())
}

/// Pairs `(p̂ t^{NH}, stderr)` per horizon for the sin-perturbed field on `R^2`.
pub fn density_profile_flat(
    hurst: f64,
    eps: f64,
    t_list: &[f64],
    count: usize,
    seed: u64,
) -> fracdens::Result<Vec<f64>> {
    let v = sin_field(eps, 2)?;
    let lb = lower_bound_check(
        &[0.0, 0.0],
        &[0.6, 0.8],
        &v,
        TimeGrid::new(32)?,
        Hurst::new(hurst)?,
        t_list,
        count,
        seed,
    )?;
    Ok(lb
        .rows
        .iter()
        .flat_map(|r| [r.scaled, r.scaled_stderr])
        .collect())
}

#[wasm_bindgen]
pub fn fbm_paths(hurst: f64, n: usize, count: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    fbm_paths_flat(hurst, n, count, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn distance_ratios(
    hurst: f64,
    n: usize,
    eps: f64,
    radii: Vec<f64>,
) -> Result<Vec<f64>, JsError> {
    distance_ratios_flat(hurst, n, eps, &radii).map_err(js)
}

#[wasm_bindgen]
pub fn density_profile(
    hurst: f64,
    eps: f64,
    t_list: Vec<f64>,
    count: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    density_profile_flat(hurst, eps, &t_list, count, seed.into()).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let p = fbm_paths_flat(0.7, 8, 3, 1).unwrap();
        assert_eq!(p.len(), 27);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[9], 0.0);
        let r = distance_ratios_flat(0.75, 16, 0.1, &[0.25, 0.1]).unwrap();
        assert_eq!(r.len(), 8);
        assert!(r.iter().all(|x| (0.7..1.3).contains(x)));
        let d = density_profile_flat(0.75, 0.1, &[0.5, 0.25], 2000, 3).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d[0] > 0.0 && d[2] > 0.0);
    }

    #[test]
    fn bad_input_errors() {
        assert!(fbm_paths_flat(1.5, 8, 3, 1).is_err());
        assert!(distance_ratios_flat(0.75, 8, 0.1, &[2.0]).is_err());
        assert!(density_profile_flat(0.75, 0.1, &[2.0], 100, 1).is_err());
    }
}
