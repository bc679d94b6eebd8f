//! Deterministic Malliavin covariance of the endpoint `Φ_1(x; h)`.
//!
//! The derivative kernel is `k(s) = J_1 J_s⁻¹ V(Φ_s)`, an `N x d` matrix per
//! node. For `H > 1/2`
//!
//! ```text
//! Γ = H(2H-1) ∫∫ k(s) k(t)* |t - s|^{2H-2} ds dt
//! ```
//!
//! is evaluated with `k` frozen at cell midpoints and the weight integrated
//! exactly over each pair of cells, which gives the increment covariance
//! `E[ΔB_i ΔB_j]`. For `H <= 1/2` the `L²` Gram `∫ k k* dt` is returned as a
//! lower-bound surrogate (up to an unknown embedding constant).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cameron_martin::cm_norm;
use crate::error::{invalid, Error, Result};
use crate::fbm::increment_cov;
use crate::fields::VectorFieldSet;
use crate::grid::{Hurst, Path, TimeGrid};
use crate::rng::{stream_rng, substream};
use crate::sde::{ito_map, SolveResult};

/// RNG stream of [`nondegeneracy_scan`].
pub const SCAN_STREAM: u64 = 6;

/// Sine modes in the random paths of the scan.
pub const SCAN_MODES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaRegime {
    DoubleIntegral,
    L2LowerBound,
}

impl GammaRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            GammaRegime::DoubleIntegral => "double-integral",
            GammaRegime::L2LowerBound => "l2-lower-bound",
        }
    }

    pub fn for_hurst(hurst: Hurst) -> Self {
        if hurst.value() > 0.5 {
            GammaRegime::DoubleIntegral
        } else {
            GammaRegime::L2LowerBound
        }
    }
}

#[derive(Debug, Clone)]
pub struct GammaMatrix {
    pub matrix: DMatrix<f64>,
    pub hurst: Hurst,
    pub regime: GammaRegime,
    pub det: f64,
}

impl GammaMatrix {
    fn new(matrix: DMatrix<f64>, hurst: Hurst, regime: GammaRegime) -> Self {
        let det = matrix.determinant();
        Self {
            matrix,
            hurst,
            regime,
            det,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigen().eigenvalues.min()
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

/// `J_1 J_s⁻¹ V(Φ_s)` at every node `s`.
pub fn dphi_kernel(result: &SolveResult, v: &VectorFieldSet) -> Vec<DMatrix<f64>> {
    let n = result.state.grid().n();
    let j1 = &result.jacobian[n];
    (0..=n)
        .map(|k| j1 * &result.jacobian_inv[k] * v.matrix(result.state.at(k)))
        .collect()
}

fn check_regime(hurst: Hurst, young: bool) -> Result<()> {
    let h = hurst.value();
    if young && h <= 0.5 {
        return Err(invalid(
            "hurst",
            format!("double-integral Γ needs H > 1/2, got {h}"),
        ));
    }
    if !young && h > 0.5 {
        return Err(invalid(
            "hurst",
            format!("L² surrogate is for H <= 1/2, got {h}"),
        ));
    }
    Ok(())
}

/// `Γ` for `H > 1/2`.
pub fn gamma_young(result: &SolveResult, v: &VectorFieldSet, hurst: Hurst) -> Result<GammaMatrix> {
    check_regime(hurst, true)?;
    let kernel = dphi_kernel(result, v);
    let grid = result.state.grid();
    let n = grid.n();
    let mid: Vec<DMatrix<f64>> = kernel.windows(2).map(|w| (&w[0] + &w[1]) * 0.5).collect();
    let weights: Vec<f64> = (0..n as i64)
        .map(|m| increment_cov(m, grid.dt(), hurst))
        .collect();
    let big_n = kernel[0].nrows();
    let d = kernel[0].ncols();
    let mut gamma = DMatrix::zeros(big_n, big_n);
    let mut acc = DMatrix::zeros(big_n, d);
    for i in 0..n {
        acc.fill(0.0);
        for (j, kj) in mid.iter().enumerate() {
            acc += kj * weights[i.abs_diff(j)];
        }
        gamma += &mid[i] * acc.transpose();
    }
    let sym = (&gamma + gamma.transpose()) * 0.5;
    Ok(GammaMatrix::new(sym, hurst, GammaRegime::DoubleIntegral))
}

/// Trapezoid `∫_0^1 k(t) k(t)* dt` for `H <= 1/2`.
pub fn gamma_l2_bound(
    result: &SolveResult,
    v: &VectorFieldSet,
    hurst: Hurst,
) -> Result<GammaMatrix> {
    check_regime(hurst, false)?;
    let kernel = dphi_kernel(result, v);
    let dt = result.state.grid().dt();
    let n = kernel.len() - 1;
    let big_n = kernel[0].nrows();
    let mut gamma = DMatrix::zeros(big_n, big_n);
    for (k, m) in kernel.iter().enumerate() {
        let w = if k == 0 || k == n { 0.5 * dt } else { dt };
        gamma += m * m.transpose() * w;
    }
    Ok(GammaMatrix::new(gamma, hurst, GammaRegime::L2LowerBound))
}

/// `Γ` in the regime of `hurst`.
pub fn gamma(result: &SolveResult, v: &VectorFieldSet, hurst: Hurst) -> Result<GammaMatrix> {
    match GammaRegime::for_hurst(hurst) {
        GammaRegime::DoubleIntegral => gamma_young(result, v, hurst),
        GammaRegime::L2LowerBound => gamma_l2_bound(result, v, hurst),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub iter: usize,
    pub h_norm: f64,
    pub det: f64,
    pub regime: GammaRegime,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub det_min: f64,
    pub det_max: f64,
    /// Rows dropped from the extremes (failed solve or non-finite `det`).
    pub excluded: usize,
}

/// Random path `h_c(t) = Σ_m a_{cm} sin((m - ½)πt) / m` with standard
/// normal `a`.
fn random_path(grid: TimeGrid, d: usize, rng: &mut impl Rng) -> Path {
    let coeffs: Vec<f64> = (0..d * SCAN_MODES)
        .map(|i| rng.sample::<f64, _>(StandardNormal) / (1 + i % SCAN_MODES) as f64)
        .collect();
    Path::from_fn(grid, d, |t, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = (0..SCAN_MODES)
                .map(|m| {
                    coeffs[c * SCAN_MODES + m] * ((m as f64 + 0.5) * std::f64::consts::PI * t).sin()
                })
                .sum();
        }
    })
}

fn scan_row(
    iter: usize,
    x: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    radius: f64,
    seed: u64,
) -> Result<ScanRow> {
    let mut rng = stream_rng(seed, substream(SCAN_STREAM, iter as u64));
    let u: f64 = rng.gen();
    let raw = random_path(grid, v.noise_dim(), &mut rng);
    let norm = cm_norm(&raw, hurst)?.value;
    let h = raw.scaled(u * radius / norm);
    let h_norm = cm_norm(&h, hurst)?.value;
    let regime = GammaRegime::for_hurst(hurst);
    let det = ito_map(x, &h, v)
        .and_then(|r| gamma(&r, v, hurst))
        .map(|g| g.det)
        .unwrap_or(f64::NAN);
    Ok(ScanRow {
        iter,
        h_norm,
        det,
        regime,
        converged: det.is_finite(),
    })
}

/// Extremal `det Γ` over `count` random paths with `‖h‖ = u M`,
/// `u ~ U[0, 1]`.
pub fn nondegeneracy_scan(
    x: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<ScanResult> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(
            "M",
            format!("scan radius {radius} must be positive"),
        ));
    }
    if count == 0 {
        return Err(invalid("count", "empty scan"));
    }
    if x.len() != v.state_dim() {
        return Err(Error::Dimension(format!(
            "x has {} components, field acts on R^{}",
            x.len(),
            v.state_dim()
        )));
    }
    let rows = (0..count)
        .into_par_iter()
        .map(|i| scan_row(i, x, v, grid, hurst, radius, seed))
        .collect::<Result<Vec<_>>>()?;
    let good: Vec<f64> = rows.iter().filter(|r| r.converged).map(|r| r.det).collect();
    if good.is_empty() {
        return Err(Error::Degenerate(
            "no scan iteration produced a finite determinant".into(),
        ));
    }
    Ok(ScanResult {
        excluded: rows.len() - good.len(),
        det_min: good.iter().copied().fold(f64::INFINITY, f64::min),
        det_max: good.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::registry_build;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n).unwrap()
    }

    fn hurst(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    fn wiggly(g: TimeGrid, d: usize, a: f64) -> Path {
        Path::from_fn(g, d, |t, out| {
            for (c, o) in out.iter_mut().enumerate() {
                *o = a * ((2.0 + c as f64) * t).sin() + 0.3 * a * t * t;
            }
        })
    }

    fn eye(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
    }

    #[test]
    fn kernel_examples() {
        let g = grid(32);
        let id = VectorFieldSet::identity(2);
        let r = ito_map(&[0.1, 0.2], &Path::zeros(g, 2), &id).unwrap();
        assert!(dphi_kernel(&r, &id).iter().all(|k| *k == eye(2)));

        let v = VectorFieldSet::sin_perturbed(2, 0.4).unwrap();
        let r = ito_map(&[0.1, 0.2], &wiggly(g, 2, 1.0), &v).unwrap();
        let k = dphi_kernel(&r, &v);
        assert!((&k[32] - v.matrix(r.endpoint())).amax() < 1e-12);

        let g = grid(64);
        let lin = VectorFieldSet::diagonal_linear(1);
        let x = 0.8;
        let r = ito_map(&[x], &Path::scalar_fn(g, |t| t), &lin).unwrap();
        let target = std::f64::consts::E * x;
        for m in dphi_kernel(&r, &lin) {
            assert!((m[(0, 0)] - target).abs() < 1e-6);
        }
    }

    #[test]
    fn young_gamma_examples() {
        let g = grid(64);
        let id = VectorFieldSet::identity(3);
        let r = ito_map(&[0.0; 3], &Path::zeros(g, 3), &id).unwrap();
        let gm = gamma_young(&r, &id, hurst(0.7)).unwrap();
        assert!((gm.matrix - eye(3)).amax() < 1e-12);

        let g = grid(256);
        let lin = VectorFieldSet::diagonal_linear(1);
        let x = 0.6;
        let r = ito_map(&[x], &Path::scalar_fn(g, |t| t), &lin).unwrap();
        let gm = gamma_young(&r, &lin, hurst(0.75)).unwrap();
        let exact = (std::f64::consts::E * x).powi(2);
        assert!((gm.det / exact - 1.0).abs() < 0.01);
        assert!(gamma_young(&r, &lin, hurst(0.5)).is_err());
    }

    #[test]
    fn identity_field_gamma_ignores_driver() {
        let id = VectorFieldSet::identity(2);
        let g = grid(64);
        let r = ito_map(&[1.0, -1.0], &wiggly(g, 2, 3.0), &id).unwrap();
        for h in [0.3, 0.5, 0.6, 0.9] {
            let gm = gamma(&r, &id, hurst(h)).unwrap();
            assert!((gm.matrix - eye(2)).amax() < 1e-6, "H = {h}");
        }
    }

    #[test]
    fn l2_gamma_examples() {
        let g = grid(32);
        let sigma = 1.7;
        let c = VectorFieldSet::constant(DMatrix::from_element(1, 1, sigma)).unwrap();
        let r = ito_map(&[0.0], &Path::zeros(g, 1), &c).unwrap();
        let gm = gamma_l2_bound(&r, &c, hurst(0.4)).unwrap();
        assert!((gm.det - sigma * sigma).abs() < 1e-12);
        assert!(gamma_l2_bound(&r, &c, hurst(0.6)).is_err());
    }

    #[test]
    fn l2_gamma_smallest_eigenvalue() {
        let g = grid(128);
        let v = VectorFieldSet::sin_perturbed(2, 0.5).unwrap();
        let e = v.ellipticity().unwrap();
        let mut rng = stream_rng(3, 0);
        for trial in 0..5 {
            let h = wiggly(g, 2, 0.5 + trial as f64);
            let r = ito_map(&[0.3 * trial as f64, -0.2], &h, &v).unwrap();
            let gm = gamma_l2_bound(&r, &v, hurst(0.4)).unwrap();
            let lmin = gm.min_eigenvalue();
            let brute = (0..1000)
                .map(|_| {
                    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let z = nalgebra::DVector::from_vec(vec![a.cos(), a.sin()]);
                    (z.transpose() * &gm.matrix * &z)[(0, 0)]
                })
                .fold(f64::INFINITY, f64::min);
            assert!(brute >= lmin - 1e-12);
            assert!(brute <= lmin * 1.001 + 1e-12, "{brute} vs {lmin}");
            // Λ₁ ∫ σ_min(J_1 J_t⁻¹)² dt
            let n = 128;
            let bound: f64 = (0..=n)
                .map(|k| {
                    let m = &r.jacobian[n] * &r.jacobian_inv[k];
                    let s = m.singular_values().min();
                    let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                    w * s * s / n as f64
                })
                .sum::<f64>()
                * e.lambda1;
            assert!(lmin >= bound * (1.0 - 1e-9), "{lmin} < {bound}");
        }
    }

    #[test]
    fn young_gamma_quadrature_consistent() {
        let v = VectorFieldSet::sin_perturbed(2, 0.3).unwrap();
        let coarse = {
            let g = grid(128);
            let r = ito_map(&[0.2, 0.4], &wiggly(g, 2, 1.0), &v).unwrap();
            gamma_young(&r, &v, hurst(0.7)).unwrap().matrix
        };
        let g = grid(256);
        let r = ito_map(&[0.2, 0.4], &wiggly(g, 2, 1.0), &v).unwrap();
        let fine = gamma_young(&r, &v, hurst(0.7)).unwrap().matrix;
        let scale = fine.amax();
        assert!((coarse - fine).amax() < 0.01 * scale);
    }

    #[test]
    fn scan_examples() {
        let id = VectorFieldSet::identity(2);
        let s = nondegeneracy_scan(&[0.0, 0.0], &id, grid(32), hurst(0.75), 2.0, 20, 1).unwrap();
        assert!((s.det_min - 1.0).abs() < 1e-6 && (s.det_max - 1.0).abs() < 1e-6);
        assert!(s.rows.iter().all(|r| r.h_norm <= 2.0 + 1e-9));
        assert!(nondegeneracy_scan(&[0.0, 0.0], &id, grid(32), hurst(0.75), 2.0, 0, 1).is_err());

        let v = VectorFieldSet::sin_perturbed(2, 0.1).unwrap();
        let s = nondegeneracy_scan(&[0.0, 0.0], &v, grid(64), hurst(0.75), 2.0, 200, 42).unwrap();
        assert_eq!(s.excluded, 0);
        assert!(
            s.det_min > 0.0 && s.det_max / s.det_min <= 10.0,
            "{} {}",
            s.det_min,
            s.det_max
        );
    }

    #[test]
    fn scan_is_deterministic() {
        let v = registry_build("const-sigma", &BTreeMap::from([("shear".into(), 0.5)]), 2).unwrap();
        let a = nondegeneracy_scan(&[0.0, 0.0], &v, grid(16), hurst(0.4), 1.0, 16, 9).unwrap();
        let b = nondegeneracy_scan(&[0.0, 0.0], &v, grid(16), hurst(0.4), 1.0, 16, 9).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gamma_symmetric_psd(
            a in 0.1..3.0f64,
            eps in -0.8..0.8f64,
            h in 0.35..0.95f64,
            x0 in -5.0..5.0f64,
        ) {
            let v = VectorFieldSet::sin_perturbed(2, eps).unwrap();
            let r = ito_map(&[x0, 1.0], &wiggly(grid(32), 2, a), &v).unwrap();
            let gm = gamma(&r, &v, hurst(h)).unwrap();
            prop_assert!(gm.asymmetry() <= 1e-10);
            prop_assert!(gm.min_eigenvalue() >= -1e-10);
            prop_assert!(gm.det > 0.0);
        }
    }
}
