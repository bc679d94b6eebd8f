//! Volterra operator `K`, its adjoint `K*`, Cameron-Martin norms and the
//! Young pairing between `H` and the Cameron-Martin space.
//!
//! `K` and `K*` are compositions of fractional operators with the power
//! weights `s^{±(H - 1/2)}`:
//!
//! ```text
//! H > 1/2:  K φ  = C_H I^1   ( t^{H-1/2} I^{H-1/2} ( s^{1/2-H} φ ) )
//! H <= 1/2: K φ  = C_H I^{2H}( t^{1/2-H} I^{1/2-H} ( s^{H-1/2} φ ) )
//! H > 1/2:  K* f = C_H t^{1/2-H} I_{1-}^{H-1/2} ( s^{H-1/2} f )
//! H <= 1/2: K* f = C_H t^{1/2-H} D_{1-}^{1/2-H} ( s^{H-1/2} f )
//! ```
//!
//! The constant `C_H` is calibrated numerically (see [`k_constant`]).
//! Power weights with a negative exponent are singular at `s = 0`; on the
//! grid their node-0 value is replaced by the weight's mean over the first
//! cell, `dt^p / (p + 1)`.

use std::collections::HashMap;
use std::sync::RwLock;

use gauss_quad::GaussJacobi;
use once_cell::sync::Lazy;

use crate::error::{invalid, Error, Result};
use crate::fbm::gram_cached;
use crate::fraccalc::{frac_deriv_right, frac_int_left, frac_int_right, gamma, FracOrder};
use crate::grid::{Hurst, Path, TimeGrid};

/// Reference grid on which `C_H` is fitted.
pub const CALIBRATION_N: usize = 256;

/// Nodes of the Gauss-Jacobi rules used by [`cm_norm_kinv`] (kept even).
const JACOBI_DEGREE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    /// `h* R⁻¹ h` over the grid nodes.
    GridRkhs,
    /// `‖K⁻¹ h‖_{L²}`.
    KInverse,
}

impl NormMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMethod::GridRkhs => "grid-rkhs",
            NormMethod::KInverse => "k-inverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmNormResult {
    pub value: f64,
    pub grid_n: usize,
    pub method: NormMethod,
}

/// `s_k^p` on the grid, with the first-cell mean at `s = 0` when `p < 0`.
pub fn power_weight(grid: TimeGrid, p: f64) -> Vec<f64> {
    let mut w: Vec<f64> = grid.nodes().iter().map(|t| t.powf(p)).collect();
    w[0] = if p > 0.0 {
        0.0
    } else if p == 0.0 {
        1.0
    } else {
        grid.dt().powf(p) / (p + 1.0)
    };
    w
}

/// Resets the node-0 value of `y ~ c t^q` so that the first trapezoid cell
/// integrates `c t^q` exactly.
fn power_law_start(y: &mut [f64], q: f64) {
    if q != 0.0 && y.len() > 1 {
        y[0] = y[1] * (1.0 - q) / (1.0 + q);
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn int_left(grid: TimeGrid, f: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if alpha == 0.0 {
        Ok(f.to_vec())
    } else {
        frac_int_left(grid, f, FracOrder::integral(alpha)?)
    }
}

fn check_scalar(grid: TimeGrid, f: &[f64]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "grid has {} nodes, data has {}",
            grid.len(),
            f.len()
        )));
    }
    Ok(())
}

/// `K φ` with `C_H = 1`.
fn operator_k_unscaled(grid: TimeGrid, phi: &[f64], hurst: Hurst) -> Result<Vec<f64>> {
    check_scalar(grid, phi)?;
    let h = hurst.value();
    if h > 0.5 {
        let inner = mul(phi, &power_weight(grid, 0.5 - h));
        let mut y = mul(
            &int_left(grid, &inner, h - 0.5)?,
            &power_weight(grid, h - 0.5),
        );
        power_law_start(&mut y, h - 0.5);
        int_left(grid, &y, 1.0)
    } else {
        let inner = mul(phi, &power_weight(grid, h - 0.5));
        let mut y = mul(
            &int_left(grid, &inner, 0.5 - h)?,
            &power_weight(grid, 0.5 - h),
        );
        power_law_start(&mut y, 0.5 - h);
        int_left(grid, &y, 2.0 * h)
    }
}

static K_CONSTANTS: Lazy<RwLock<HashMap<u64, f64>>> = Lazy::new(|| RwLock::new(HashMap::new()));

/// Calibrated `C_H`: the least-squares factor matching `(K 1)(t_i)` to the
/// row sums `√dt Σ_j L_{ij}` of the discrete Cholesky kernel on the
/// reference grid `n = 256`.
pub fn k_constant(hurst: Hurst) -> Result<f64> {
    let key = hurst.value().to_bits();
    if let Some(c) = K_CONSTANTS
        .read()
        .expect("constant cache poisoned")
        .get(&key)
    {
        return Ok(*c);
    }
    let grid = TimeGrid::new(CALIBRATION_N)?;
    let gram = gram_cached(grid, hurst)?;
    let raw = operator_k_unscaled(grid, &vec![1.0; grid.len()], hurst)?;
    let l = gram.chol();
    let sqrt_dt = grid.dt().sqrt();
    let (mut ab, mut aa) = (0.0, 0.0);
    for i in 0..grid.n() {
        let b = sqrt_dt * l.row(i).iter().take(i + 1).sum::<f64>();
        let a = raw[i + 1];
        ab += a * b;
        aa += a * a;
    }
    let c = ab / aa;
    K_CONSTANTS
        .write()
        .expect("constant cache poisoned")
        .insert(key, c);
    Ok(c)
}

/// `(K φ)(t_k)` for scalar grid data `phi`.
pub fn operator_k(grid: TimeGrid, phi: &[f64], hurst: Hurst) -> Result<Vec<f64>> {
    let c = k_constant(hurst)?;
    Ok(operator_k_unscaled(grid, phi, hurst)?
        .into_iter()
        .map(|v| c * v)
        .collect())
}

/// `(K* f)(t_k)`. For `H < 1/2` the entry at `t = 1` is NaN (singular
/// endpoint of the right derivative).
pub fn operator_kstar(grid: TimeGrid, f: &[f64], hurst: Hurst) -> Result<Vec<f64>> {
    check_scalar(grid, f)?;
    let h = hurst.value();
    if h == 0.5 {
        return Ok(f.to_vec());
    }
    let c = k_constant(hurst)?;
    let inner = mul(f, &power_weight(grid, h - 0.5));
    let y = if h > 0.5 {
        frac_int_right(grid, &inner, FracOrder::integral(h - 0.5)?)?
    } else {
        frac_deriv_right(grid, &inner, FracOrder::derivative(0.5 - h)?)?
    };
    Ok(y.iter()
        .zip(power_weight(grid, 0.5 - h))
        .map(|(v, w)| c * w * v)
        .collect())
}

fn check_starts_at_zero(h: &Path) -> Result<()> {
    if h.start().iter().any(|v| *v != 0.0) {
        return Err(invalid(
            "h",
            format!("Cameron-Martin paths start at 0, got {:?}", h.start()),
        ));
    }
    Ok(())
}

/// Grid RKHS norm `(Σ_c h_c* R⁻¹ h_c)^{1/2}` over the nodes `t_1..t_n`.
pub fn cm_norm(h: &Path, hurst: Hurst) -> Result<CmNormResult> {
    check_starts_at_zero(h)?;
    let grid = h.grid();
    let gram = gram_cached(grid, hurst)?;
    let sq: f64 = (0..h.dim())
        .map(|j| gram.quad_form(&h.component(j)[1..]))
        .sum();
    Ok(CmNormResult {
        value: sq.sqrt(),
        grid_n: grid.n(),
        method: NormMethod::GridRkhs,
    })
}

fn jacobi(alpha: f64, beta: f64) -> GaussJacobi {
    GaussJacobi::new(
        JACOBI_DEGREE.try_into().expect("nonzero degree"),
        alpha.try_into().expect("exponent above -1"),
        beta.try_into().expect("exponent above -1"),
    )
}

/// `‖K⁻¹ h‖_{L²}` for scalar `h` and `H > 1/2`.
///
/// With `a = 1/2 - H`, `φ = K⁻¹ h` is evaluated as
///
/// ```text
/// φ(t) = [(2-2H) t^{a} G(t) + t^{1+a} G'(t)] / (C_H Γ(3/2 - H))
/// G(t) = ∫_0^1 (u(1-u))^a ḣ(tu) du
/// ```
///
/// with `ḣ` from second-order finite differences (interpolated linearly),
/// Gauss-Jacobi rules for the `(u(1-u))^a` and `t^{2a}` weights, and the
/// same calibrated `C_H` as [`operator_k`].
pub fn cm_norm_kinv(h: &Path, hurst: Hurst) -> Result<CmNormResult> {
    if h.dim() != 1 {
        return Err(Error::Dimension(
            "k-inverse norm takes a scalar path".into(),
        ));
    }
    let hv = hurst.value();
    if hv <= 0.5 {
        return Err(Error::Unsupported(format!(
            "k-inverse norm is implemented for H > 1/2 only (H = {hv}); use the grid RKHS norm"
        )));
    }
    check_starts_at_zero(h)?;
    let grid = h.grid();
    let n = grid.n();
    if n < 2 {
        return Err(invalid("h", "k-inverse norm needs at least two cells"));
    }
    let dt = grid.dt();
    let v = h.values();
    let mut hdot = vec![0.0; n + 1];
    for k in 1..n {
        hdot[k] = (v[k + 1] - v[k - 1]) / (2.0 * dt);
    }
    if n >= 3 {
        hdot[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt);
        hdot[n] = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * dt);
    } else {
        hdot[0] = (v[1] - v[0]) / dt;
        hdot[n] = (v[n] - v[n - 1]) / dt;
    }
    // piecewise-linear ḣ and its cellwise slope
    let cell = |s: f64| -> (usize, f64) {
        let x = (s * n as f64).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        (k, x - k as f64)
    };
    let hdot_at = |s: f64| {
        let (k, w) = cell(s);
        hdot[k] * (1.0 - w) + hdot[k + 1] * w
    };
    let hddot_at = |s: f64| {
        let (k, _) = cell(s);
        (hdot[k + 1] - hdot[k]) / dt
    };
    let a = 0.5 - hv;
    let inner = jacobi(a, a);
    let inner_scale = 4f64.powf(a);
    let g = |t: f64| inner.integrate(0.0, 1.0, |u| hdot_at(t * u)) / inner_scale;
    let gp = |t: f64| inner.integrate(0.0, 1.0, |u| u * hddot_at(t * u)) / inner_scale;
    let beta = 1.0 - 2.0 * hv;
    let outer = jacobi(0.0, beta);
    let weighted = outer.integrate(0.0, 1.0, |t| {
        let r = (2.0 - 2.0 * hv) * g(t) + t * gp(t);
        r * r
    }) / 2f64.powf(beta);
    let c = k_constant(hurst)? * gamma(1.5 - hv);
    Ok(CmNormResult {
        value: weighted.max(0.0).sqrt() / c,
        grid_n: n,
        method: NormMethod::KInverse,
    })
}

/// Young pairing `∫_0^1 f dh` by left-point Riemann-Stieltjes sums, summed
/// over components.
pub fn pairing(f: &Path, h: &Path) -> Result<f64> {
    if f.dim() != h.dim() || f.grid() != h.grid() {
        return Err(Error::Dimension(format!(
            "pairing of a {}-dim path on n = {} with a {}-dim path on n = {}",
            f.dim(),
            f.grid().n(),
            h.dim(),
            h.grid().n()
        )));
    }
    let mut acc = 0.0;
    for k in 0..f.grid().n() {
        for j in 0..f.dim() {
            acc += f.at(k)[j] * h.increment(k, j);
        }
    }
    Ok(acc)
}

/// `‖ḣ‖_{L²}` for the piecewise-linear interpolant of `h`.
pub fn w12_norm(h: &Path) -> Result<f64> {
    check_starts_at_zero(h)?;
    let dt = h.grid().dt();
    let mut acc = 0.0;
    for k in 0..h.grid().n() {
        for j in 0..h.dim() {
            acc += h.increment(k, j).powi(2);
        }
    }
    Ok((acc / dt).sqrt())
}
