//! The deterministic Itô map `Φ(x; h)` for piecewise-linear drivers and
//! pathwise solvers for fBm-driven equations, with propagation of the
//! Jacobian flow `J_t = ∂Φ_t/∂x` and its inverse.
//!
//! Every scheme is a one-step map `X_{k+1} = S_k(X_k)`. Its derivative
//! `M_k = DS_k(X_k)` gives `J_{k+1} = M_k J_k` and
//! `J_{k+1}⁻¹ = J_k⁻¹ M_k⁻¹`, so `J J⁻¹ = I` holds to roundoff at every node.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fields::VectorFieldSet;
use crate::grid::{Hurst, Path};

/// Lowest Hurst index the increment schemes accept (exclusive).
pub const MIN_HURST: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// `H > 1/2`.
    YoungEuler,
    /// `1/3 < H <= 1/2`.
    MilsteinIncrement,
    /// Classical RK4 per cell for smooth drivers.
    OdeRk4,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::YoungEuler => "young-euler",
            Scheme::MilsteinIncrement => "milstein-increment",
            Scheme::OdeRk4 => "ode-rk4",
        }
    }

    /// Scheme used by [`solve_sde`] at Hurst index `hurst`.
    pub fn for_hurst(hurst: Hurst) -> Result<Self> {
        let h = hurst.value();
        if h <= MIN_HURST {
            Err(Error::Unsupported(format!(
                "H = {h}: increment schemes need H > 1/3 (no Lévy area is simulated)"
            )))
        } else if h > 0.5 {
            Ok(Scheme::YoungEuler)
        } else {
            Ok(Scheme::MilsteinIncrement)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: Path,
    /// `J_{t_k}` for every node.
    pub jacobian: Vec<DMatrix<f64>>,
    /// `J_{t_k}⁻¹` for every node.
    pub jacobian_inv: Vec<DMatrix<f64>>,
    pub scheme: Scheme,
}

impl SolveResult {
    pub fn endpoint(&self) -> &[f64] {
        self.state.end()
    }

    /// `max_k ‖J_k J_k⁻¹ − I‖_max`.
    pub fn inverse_defect(&self) -> f64 {
        self.jacobian
            .iter()
            .zip(&self.jacobian_inv)
            .map(|(j, ji)| {
                let p = j * ji;
                let n = p.nrows();
                (p - DMatrix::<f64>::identity(n, n)).amax()
            })
            .fold(0.0, f64::max)
    }
}

fn check_inputs(x: &[f64], driver: &Path, v: &VectorFieldSet) -> Result<()> {
    if x.len() != v.state_dim() {
        return Err(Error::Dimension(format!(
            "initial point has {} components, field `{}` acts on R^{}",
            x.len(),
            v.name(),
            v.state_dim()
        )));
    }
    if driver.dim() != v.noise_dim() {
        return Err(Error::Dimension(format!(
            "driver has {} components, field `{}` has {} vector fields",
            driver.dim(),
            v.name(),
            v.noise_dim()
        )));
    }
    Ok(())
}

/// Buffers for one step; `tan` holds `M_k` row-major.
struct Work {
    n: usize,
    dh: Vec<f64>,
    k: [Vec<f64>; 4],
    y: Vec<f64>,
    a: Vec<f64>,
    d: [Vec<f64>; 4],
    tmp: Vec<f64>,
    tan: Vec<f64>,
}

impl Work {
    fn new(n: usize, d: usize) -> Self {
        let v = || vec![0.0; n];
        let m = || vec![0.0; n * n];
        Self {
            n,
            dh: vec![0.0; d],
            k: [v(), v(), v(), v()],
            y: v(),
            a: m(),
            d: [m(), m(), m(), m()],
            tmp: m(),
            tan: m(),
        }
    }
}

/// `out = a (I + c b)` for row-major `n x n` matrices.
fn mul_shifted(n: usize, a: &[f64], b: &[f64], c: f64, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = a[i * n + j];
            for l in 0..n {
                s += c * a[i * n + l] * b[l * n + j];
            }
            out[i * n + j] = s;
        }
    }
}

fn load_increment(driver: &Path, k: usize, dh: &mut [f64]) {
    for (j, d) in dh.iter_mut().enumerate() {
        *d = driver.increment(k, j);
    }
}

/// RK4 over one cell of `dX = V(X) ḣ dt` with `ḣ` constant on the cell.
fn rk4_step(v: &VectorFieldSet, x: &[f64], out: &mut [f64], w: &mut Work, tangent: bool) {
    let n = w.n;
    let Work {
        dh,
        k,
        y,
        a,
        d,
        tmp,
        tan,
        ..
    } = w;
    let [k1, k2, k3, k4] = k;
    v.apply(x, dh, k1);
    for i in 0..n {
        y[i] = x[i] + 0.5 * k1[i];
    }
    if tangent {
        v.tangent(x, dh, &mut d[0]);
        v.tangent(y, dh, a);
        let [d0, d1, ..] = d;
        mul_shifted(n, a, d0, 0.5, d1);
    }
    v.apply(y, dh, k2);
    for i in 0..n {
        y[i] = x[i] + 0.5 * k2[i];
    }
    if tangent {
        v.tangent(y, dh, a);
        tmp.copy_from_slice(&d[1]);
        mul_shifted(n, a, tmp, 0.5, &mut d[2]);
    }
    v.apply(y, dh, k3);
    for i in 0..n {
        y[i] = x[i] + k3[i];
    }
    if tangent {
        v.tangent(y, dh, a);
        tmp.copy_from_slice(&d[2]);
        mul_shifted(n, a, tmp, 1.0, &mut d[3]);
    }
    v.apply(y, dh, k4);
    for i in 0..n {
        out[i] = x[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    if tangent {
        for (idx, t) in tan.iter_mut().enumerate() {
            let eye = if idx / n == idx % n { 1.0 } else { 0.0 };
            *t = eye + (d[0][idx] + 2.0 * d[1][idx] + 2.0 * d[2][idx] + d[3][idx]) / 6.0;
        }
    }
}

/// `X + V(X)ΔB + ½ ∂V(X)[V(X)ΔB]ΔB + s V_0(X)`.
fn increment_step(
    v: &VectorFieldSet,
    x: &[f64],
    drift_scale: f64,
    out: &mut [f64],
    w: &mut Work,
    tangent: bool,
) {
    let n = w.n;
    let Work {
        dh, k, a, d, tan, ..
    } = w;
    let [g, c, ..] = k;
    v.apply(x, dh, g);
    v.apply_tangent(x, dh, g, c);
    for i in 0..n {
        out[i] = x[i] + g[i] + 0.5 * c[i];
    }
    if drift_scale != 0.0 {
        v.add_drift(x, drift_scale, out);
    }
    if tangent {
        let dg = &mut d[0];
        v.tangent(x, dh, dg);
        v.second_tangent(x, dh, g, a);
        for i in 0..n {
            for j in 0..n {
                let mut dd = 0.0;
                for l in 0..n {
                    dd += dg[i * n + l] * dg[l * n + j];
                }
                let eye = if i == j { 1.0 } else { 0.0 };
                tan[i * n + j] = eye + dg[i * n + j] + 0.5 * (a[i * n + j] + dd);
            }
        }
        if drift_scale != 0.0 {
            v.add_drift_tangent(x, drift_scale, tan);
        }
    }
}

enum Stepper {
    Rk4,
    Increment { drift_scale: f64 },
}

impl Stepper {
    fn step(&self, v: &VectorFieldSet, x: &[f64], out: &mut [f64], w: &mut Work, tangent: bool) {
        match *self {
            Stepper::Rk4 => rk4_step(v, x, out, w, tangent),
            Stepper::Increment { drift_scale } => {
                increment_step(v, x, drift_scale, out, w, tangent)
            }
        }
    }
}

fn integrate(
    x: &[f64],
    driver: &Path,
    v: &VectorFieldSet,
    stepper: Stepper,
    scheme: Scheme,
) -> Result<SolveResult> {
    check_inputs(x, driver, v)?;
    let grid = driver.grid();
    let n = v.state_dim();
    let mut w = Work::new(n, v.noise_dim());
    let mut state = Path::zeros(grid, n);
    state.at_mut(0).copy_from_slice(x);
    let mut jacobian = Vec::with_capacity(grid.len());
    let mut jacobian_inv = Vec::with_capacity(grid.len());
    jacobian.push(DMatrix::identity(n, n));
    jacobian_inv.push(DMatrix::identity(n, n));
    let mut next = vec![0.0; n];
    for k in 0..grid.n() {
        load_increment(driver, k, &mut w.dh);
        stepper.step(v, state.at(k), &mut next, &mut w, true);
        state.at_mut(k + 1).copy_from_slice(&next);
        let m = DMatrix::from_row_slice(n, n, &w.tan);
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate(format!("step tangent is singular on cell {k}")))?;
        let j = &m * &jacobian[k];
        let ji = &jacobian_inv[k] * m_inv;
        jacobian.push(j);
        jacobian_inv.push(ji);
    }
    Ok(SolveResult {
        state,
        jacobian,
        jacobian_inv,
        scheme,
    })
}

fn integrate_endpoint(
    x: &[f64],
    driver: &Path,
    v: &VectorFieldSet,
    stepper: Stepper,
) -> Result<Vec<f64>> {
    check_inputs(x, driver, v)?;
    let n = v.state_dim();
    let mut w = Work::new(n, v.noise_dim());
    let mut cur = x.to_vec();
    let mut next = vec![0.0; n];
    for k in 0..driver.grid().n() {
        load_increment(driver, k, &mut w.dh);
        stepper.step(v, &cur, &mut next, &mut w, false);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Solves `dX = V(X) dh` from `x` for the piecewise-linear interpolant of
/// `h`, one RK4 step per cell.
pub fn ito_map(x: &[f64], h: &Path, v: &VectorFieldSet) -> Result<SolveResult> {
    integrate(x, h, v, Stepper::Rk4, Scheme::OdeRk4)
}

/// `Φ_1(x; h)` without Jacobians.
pub fn ito_endpoint(x: &[f64], h: &Path, v: &VectorFieldSet) -> Result<Vec<f64>> {
    integrate_endpoint(x, h, v, Stepper::Rk4)
}

fn drift_scale(driver: &Path, hurst: Hurst, epsilon: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(crate::error::invalid(
            "epsilon",
            format!("{epsilon} must be finite and >= 0"),
        ));
    }
    Ok(epsilon.powf(1.0 / hurst.value()) * driver.grid().dt())
}

/// Pathwise solution of `dX = V(X) dB` for a sampled fBm path `B`; any
/// drift attached to `v` is ignored.
///
/// Steps are `X + V(X)ΔB + ½ ∂V(X)[V(X)ΔB]ΔB`, the second-order
/// increment expansion of the geometric solution, for both regimes.
pub fn solve_sde(x: &[f64], b: &Path, v: &VectorFieldSet, hurst: Hurst) -> Result<SolveResult> {
    let scheme = Scheme::for_hurst(hurst)?;
    integrate(x, b, v, Stepper::Increment { drift_scale: 0.0 }, scheme)
}

/// As [`solve_sde`] with the drift of `v` added as `ε^{1/H} V_0(X) Δt`.
pub fn solve_sde_drift(
    x: &[f64],
    b: &Path,
    v: &VectorFieldSet,
    hurst: Hurst,
    epsilon: f64,
) -> Result<SolveResult> {
    let scheme = Scheme::for_hurst(hurst)?;
    let drift_scale = drift_scale(b, hurst, epsilon)?;
    integrate(x, b, v, Stepper::Increment { drift_scale }, scheme)
}

/// Endpoint of [`solve_sde_drift`] (or [`solve_sde`] when `epsilon` is 0)
/// without Jacobians.
pub fn sde_endpoint(
    x: &[f64],
    b: &Path,
    v: &VectorFieldSet,
    hurst: Hurst,
    epsilon: f64,
) -> Result<Vec<f64>> {
    Scheme::for_hurst(hurst)?;
    let drift_scale = drift_scale(b, hurst, epsilon)?;
    integrate_endpoint(x, b, v, Stepper::Increment { drift_scale })
}
