//! Riemann-Liouville fractional integrals and Marchaud-type fractional
//! derivatives of grid functions on `[0, 1]`.
//!
//! Grid data is read as the piecewise-linear interpolant of its node values
//! and the singular kernels are integrated exactly against it on each cell
//! (product integration), so linear data is reproduced to roundoff.
//!
//! Right-sided operators are the left-sided ones conjugated by the
//! reflection `t -> 1 - t`, which is exact on a uniform grid.

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;

/// Order of a fractional operator.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FracOrder(f64);

impl FracOrder {
    /// Order of a fractional integral, `alpha > 0`.
    pub fn integral(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Self(alpha))
        } else {
            Err(invalid(
                "alpha",
                format!("integral order {alpha} must be > 0"),
            ))
        }
    }

    /// Order of a fractional derivative, `alpha ∈ (0, 1)`.
    pub fn derivative(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(invalid(
                "alpha",
                format!("derivative order {alpha} must lie in (0, 1)"),
            ))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

fn check_len(grid: TimeGrid, f: &[f64]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "grid has {} nodes, data has {}",
            grid.len(),
            f.len()
        )));
    }
    Ok(())
}

fn reflect(f: &[f64]) -> Vec<f64> {
    f.iter().rev().copied().collect()
}

/// `(I_{0+}^α f)(t_k)` for `k = 0..=n`.
pub fn frac_int_left(grid: TimeGrid, f: &[f64], alpha: FracOrder) -> Result<Vec<f64>> {
    check_len(grid, f)?;
    let a = alpha.value();
    let n = grid.n();
    let scale = grid.dt().powf(a) / gamma(a + 2.0);
    // p[m] = m^{α+1}
    let p: Vec<f64> = (0..=n).map(|m| (m as f64).powf(a + 1.0)).collect();
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        let kf = k as f64;
        let mut sum = (p[k - 1] - (kf - 1.0 - a) * kf.powf(a)) * f[0] + f[k];
        for j in 1..k {
            let m = k - j;
            sum += (p[m + 1] - 2.0 * p[m] + p[m - 1]) * f[j];
        }
        out[k] = scale * sum;
    }
    Ok(out)
}

/// `(I_{1-}^α f)(t_k)` for `k = 0..=n`.
pub fn frac_int_right(grid: TimeGrid, f: &[f64], alpha: FracOrder) -> Result<Vec<f64>> {
    check_len(grid, f)?;
    Ok(reflect(&frac_int_left(grid, &reflect(f), alpha)?))
}

/// `(D_{0+}^α f)(t_k)` by the Marchaud-type formula
/// `[f(t)/t^α + α ∫_0^t (f(t) - f(s)) / (t - s)^{α+1} ds] / Γ(1 - α)`.
///
/// The value at `t_0` is singular unless `f(0) = 0` and is returned as NaN;
/// entries `1..=n` are finite.
pub fn frac_deriv_left(grid: TimeGrid, f: &[f64], alpha: FracOrder) -> Result<Vec<f64>> {
    check_len(grid, f)?;
    let a = alpha.value();
    if a >= 1.0 {
        return Err(invalid("alpha", "derivative order must lie in (0, 1)"));
    }
    let n = grid.n();
    let h = grid.dt();
    // Cell with u = t_k - s ∈ [m h, (m+1) h]:
    //   ∫ u^{-α-1} du        = h^{-α} P[m]
    //   ∫ (u - m h) u^{-α-1}  = h^{1-α} Q[m]
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    q[0] = 1.0 / (1.0 - a);
    for m in 1..n {
        let mf = m as f64;
        p[m] = (mf.powf(-a) - (mf + 1.0).powf(-a)) / a;
        q[m] = ((mf + 1.0).powf(1.0 - a) - mf.powf(1.0 - a)) / (1.0 - a) - mf * p[m];
    }
    let norm = 1.0 / gamma(1.0 - a);
    let mut out = vec![f64::NAN; n + 1];
    for k in 1..=n {
        let fk = f[k];
        let mut integral = 0.0;
        for j in 0..k {
            let m = k - j - 1;
            // f_k - f_lin(s) = (f_k - f_{j+1}) - (f_j - f_{j+1}) (u - m h) / h
            let c0 = fk - f[j + 1];
            let c1 = f[j] - f[j + 1];
            integral += if m == 0 {
                -c1 * q[0]
            } else {
                c0 * p[m] - c1 * q[m]
            };
        }
        let t = grid.node(k);
        out[k] = norm * (fk / t.powf(a) + a * h.powf(-a) * integral);
    }
    Ok(out)
}

/// `(D_{1-}^α f)(t_k)`; the entry at `t_n = 1` is NaN.
pub fn frac_deriv_right(grid: TimeGrid, f: &[f64], alpha: FracOrder) -> Result<Vec<f64>> {
    check_len(grid, f)?;
    Ok(reflect(&frac_deriv_left(grid, &reflect(f), alpha)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n).unwrap()
    }

    fn sample(g: TimeGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        g.nodes().into_iter().map(f).collect()
    }

    #[test]
    fn order_validation() {
        assert!(FracOrder::integral(0.0).is_err());
        assert!(FracOrder::integral(2.5).is_ok());
        assert!(FracOrder::derivative(1.0).is_err());
        assert!(FracOrder::derivative(0.3).is_ok());
    }

    #[test]
    fn integral_order_one_is_cumulative() {
        let g = grid(10);
        let out = frac_int_left(g, &[1.0; 11], FracOrder::integral(1.0).unwrap()).unwrap();
        for (k, v) in out.iter().enumerate() {
            assert!((v - g.node(k)).abs() < 1e-14);
        }
        let out = frac_int_right(g, &[1.0; 11], FracOrder::integral(1.0).unwrap()).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn integral_power_closed_forms() {
        let half = FracOrder::integral(0.5).unwrap();
        for n in [256, 512] {
            let g = grid(n);
            let one = frac_int_left(g, &vec![1.0; n + 1], half).unwrap();
            assert!((one[n] - 1.0 / gamma(1.5)).abs() < 1e-3);
            let lin = frac_int_left(g, &sample(g, |s| s), half).unwrap();
            assert!((lin[n] - gamma(2.0) / gamma(2.5)).abs() < 1e-3);
            let right = frac_int_right(g, &vec![1.0; n + 1], half).unwrap();
            assert!((right[0] - 1.0 / gamma(1.5)).abs() < 1e-3);
        }
    }

    #[test]
    fn reflection_identities_exact() {
        let g = grid(33);
        let f = sample(g, |s| (3.0 * s).sin() + s * s);
        let fr: Vec<f64> = f.iter().rev().copied().collect();
        let a = FracOrder::integral(0.3).unwrap();
        let lhs = frac_int_right(g, &f, a).unwrap();
        let rhs = frac_int_left(g, &fr, a).unwrap();
        for k in 0..=33 {
            assert_eq!(lhs[k], rhs[33 - k]);
        }
        let a = FracOrder::derivative(0.3).unwrap();
        let lhs = frac_deriv_right(g, &f, a).unwrap();
        let rhs = frac_deriv_left(g, &fr, a).unwrap();
        for k in 0..33 {
            assert_eq!(lhs[k], rhs[33 - k]);
        }
        assert!(lhs[33].is_nan());
    }

    #[test]
    fn derivative_of_sqrt_is_constant() {
        let n = 512;
        let g = grid(n);
        let f = sample(g, f64::sqrt);
        let d = frac_deriv_left(g, &f, FracOrder::derivative(0.5).unwrap()).unwrap();
        let target = gamma(1.5) / gamma(1.0);
        for k in n / 8..=n {
            assert!((d[k] - target).abs() < 2e-2, "t = {}: {}", g.node(k), d[k]);
        }
    }

    #[test]
    fn derivative_power_closed_form_256() {
        // D^α s^β = Γ(β+1)/Γ(β+1-α) s^{β-α}
        let g = grid(256);
        let (a, b) = (0.3, 1.5);
        let f = sample(g, |s| s.powf(b));
        let d = frac_deriv_left(g, &f, FracOrder::derivative(a).unwrap()).unwrap();
        for k in 32..=256 {
            let t = g.node(k);
            let exact = gamma(b + 1.0) / gamma(b + 1.0 - a) * t.powf(b - a);
            assert!((d[k] - exact).abs() < 2e-2);
        }
    }

    #[test]
    fn derivative_of_zero() {
        let g = grid(16);
        let d = frac_deriv_left(g, &[0.0; 17], FracOrder::derivative(0.4).unwrap()).unwrap();
        assert!(d[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_inverts_integral() {
        let n = 512;
        let g = grid(n);
        let f = sample(g, |s| (2.0 * std::f64::consts::PI * s).sin());
        for a in [0.2, 0.5, 0.8] {
            let i = frac_int_left(g, &f, FracOrder::integral(a).unwrap()).unwrap();
            let d = frac_deriv_left(g, &i, FracOrder::derivative(a).unwrap()).unwrap();
            let err = (1..=n).map(|k| (d[k] - f[k]).abs()).fold(0.0, f64::max);
            assert!(err < 5e-2, "alpha {a}: {err}");
        }
    }

    #[test]
    fn inverse_error_shrinks_under_refinement() {
        let errs: Vec<f64> = [64usize, 128, 256, 512]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let f = sample(g, |s| (2.0 * std::f64::consts::PI * s).sin());
                let i = frac_int_left(g, &f, FracOrder::integral(0.5).unwrap()).unwrap();
                let d = frac_deriv_left(g, &i, FracOrder::derivative(0.5).unwrap()).unwrap();
                (1..=n).map(|k| (d[k] - f[k]).abs()).fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[3]).log2() / 3.0;
        assert!(order >= 0.5, "{errs:?} order {order}");
    }

    proptest! {
        #[test]
        fn operators_are_linear(
            a in 0.05..0.95f64,
            c in -3.0..3.0f64,
            u in proptest::collection::vec(-1.0..1.0f64, 17),
            v in proptest::collection::vec(-1.0..1.0f64, 17),
        ) {
            let g = grid(16);
            let comb: Vec<f64> = u.iter().zip(&v).map(|(x, y)| c * x + y).collect();
            type Op = fn(TimeGrid, &[f64], FracOrder) -> Result<Vec<f64>>;
            let ops: [Op; 4] = [frac_int_left, frac_int_right, frac_deriv_left, frac_deriv_right];
            for op in ops {
                let ord = FracOrder(a);
                let lhs = op(g, &comb, ord).unwrap();
                let fu = op(g, &u, ord).unwrap();
                let fv = op(g, &v, ord).unwrap();
                for k in 0..17 {
                    if lhs[k].is_nan() { continue; }
                    let rhs = c * fu[k] + fv[k];
                    prop_assert!((lhs[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) * 16.0);
                }
            }
        }
    }
}
