//! Control distance `d(x, y) = inf { ‖h‖ : Φ_1(x; h) = y }` over
//! Cameron-Martin paths: the explicit straight-line connecting path, its
//! norm as an upper bound, a penalty optimizer and the radius sweep
//! comparing `d(x, y)` with `|x - y|`.
//!
//! The optimizer works on the node values `θ = (h_c(t_i))`, `i = 1..n`, of a
//! piecewise-linear `h` and minimises
//!
//! ```text
//! F(θ) = Σ_c θ_c* R⁻¹ θ_c + ρ |Φ_1(x; h_θ) - y|²
//! ```
//!
//! for an increasing sequence of `ρ`. Each step is Gauss-Newton with the
//! endpoint Jacobian `G` taken by central finite differences; the
//! `nd x nd` normal equations are reduced to an `N x N` solve with the
//! Woodbury identity, using that the inverse of the quadratic part is
//! `blockdiag(R)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cameron_martin::cm_norm;
use crate::error::{invalid, Error, Result};
use crate::fbm::gram_cached;
use crate::fields::VectorFieldSet;
use crate::grid::{Hurst, Path, TimeGrid};
use crate::sde::ito_endpoint;

/// Largest condition number of `V V*` accepted along a segment.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub rho_stages: Vec<f64>,
    /// Gauss-Newton iterations per stage.
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Endpoint residual below which a result counts as converged.
    pub residual_tol: f64,
    /// Finite-difference step for the endpoint Jacobian.
    pub fd_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            rho_stages: vec![1e2, 1e3, 1e4, 1e5, 1e6, 1e7],
            max_iter: 500,
            grad_tol: 1e-6,
            residual_tol: 1e-4,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistanceResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Norm of the connecting path.
    pub upper_bound: f64,
    /// Norm of the best path found.
    pub optimized: f64,
    /// `|Φ_1(x; h*) - y|`.
    pub endpoint_residual: f64,
    /// `optimized / |x - y|`; NaN when `x = y`.
    pub ratio: f64,
    pub grid_n: usize,
    pub hurst: Hurst,
    pub converged: bool,
    pub iterations: usize,
    /// The minimising path `h*`.
    pub path: Path,
}

fn check_points(x: &[f64], y: &[f64], v: &VectorFieldSet) -> Result<()> {
    if x.len() != v.state_dim() || y.len() != v.state_dim() {
        return Err(Error::Dimension(format!(
            "points have {} and {} components, field `{}` acts on R^{}",
            x.len(),
            y.len(),
            v.name(),
            v.state_dim()
        )));
    }
    if x.iter().chain(y).any(|c| !c.is_finite()) {
        return Err(invalid("x", "points must be finite"));
    }
    Ok(())
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `ḣ(s) = V*(z)(V V*(z))⁻¹ (y - x)` at `z = x + s (y - x)`.
fn connecting_velocity(x: &[f64], y: &[f64], v: &VectorFieldSet, s: f64) -> Result<DVector<f64>> {
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect();
    let m = v.matrix(&z);
    let vvt = &m * m.transpose();
    let eig = vvt.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::NotElliptic(format!(
            "V V* at {z:?} has eigenvalues in [{lo:e}, {hi:e}]"
        )));
    }
    let diff = DVector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| b - a));
    let lambda = vvt
        .cholesky()
        .ok_or_else(|| Error::NotElliptic(format!("V V* at {z:?} is not positive definite")))?
        .solve(&diff);
    Ok(m.transpose() * lambda)
}

/// Cumulative-trapezoid integral of the straight-line control
/// `V*(z_s)(V V*(z_s))⁻¹ (y - x)` along `z_s = x + s (y - x)`.
pub fn connecting_path(x: &[f64], y: &[f64], v: &VectorFieldSet, grid: TimeGrid) -> Result<Path> {
    check_points(x, y, v)?;
    let d = v.noise_dim();
    let mut path = Path::zeros(grid, d);
    if x == y {
        return Ok(path);
    }
    let rates = (0..grid.len())
        .map(|k| connecting_velocity(x, y, v, grid.node(k)))
        .collect::<Result<Vec<_>>>()?;
    let half = 0.5 * grid.dt();
    for k in 1..grid.len() {
        for c in 0..d {
            let prev = path.at(k - 1)[c];
            path.at_mut(k)[c] = prev + half * (rates[k - 1][c] + rates[k][c]);
        }
    }
    Ok(path)
}

/// Cameron-Martin norm of [`connecting_path`], an upper bound for `d(x, y)`.
pub fn distance_upper(
    x: &[f64],
    y: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
) -> Result<f64> {
    Ok(cm_norm(&connecting_path(x, y, v, grid)?, hurst)?.value)
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    v: &'a VectorFieldSet,
    grid: TimeGrid,
    d: usize,
    r: DMatrix<f64>,
    gram: std::sync::Arc<crate::fbm::CovGram>,
}

impl Problem<'_> {
    fn path(&self, theta: &[f64]) -> Path {
        let n = self.grid.n();
        let mut p = Path::zeros(self.grid, self.d);
        for c in 0..self.d {
            for i in 0..n {
                p.at_mut(i + 1)[c] = theta[c * n + i];
            }
        }
        p
    }

    fn theta(&self, p: &Path) -> Vec<f64> {
        (0..self.d)
            .flat_map(|c| p.component(c)[1..].to_vec())
            .collect()
    }

    fn residual(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let end = ito_endpoint(self.x, &self.path(theta), self.v)?;
        Ok(DVector::from_iterator(
            end.len(),
            end.iter().zip(self.y).map(|(a, b)| a - b),
        ))
    }

    /// `(Σ_c θ_c* R⁻¹ θ_c, R⁻¹ θ)`.
    fn quadratic(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.grid.n();
        let mut q = 0.0;
        let mut grad = Vec::with_capacity(theta.len());
        for c in 0..self.d {
            let block = &theta[c * n..(c + 1) * n];
            let s = self.gram.solve(block);
            q += s.iter().zip(block).map(|(a, b)| a * b).sum::<f64>();
            grad.extend(s.iter());
        }
        (q, grad)
    }

    fn objective(&self, theta: &[f64], rho: f64) -> Result<f64> {
        Ok(self.quadratic(theta).0 + rho * self.residual(theta)?.norm_squared())
    }

    fn endpoint_jacobian(&self, theta: &[f64], step: f64) -> Result<DMatrix<f64>> {
        let big_n = self.x.len();
        let mut g = DMatrix::zeros(big_n, theta.len());
        let mut work = theta.to_vec();
        for p in 0..theta.len() {
            work[p] = theta[p] + step;
            let plus = ito_endpoint(self.x, &self.path(&work), self.v)?;
            work[p] = theta[p] - step;
            let minus = ito_endpoint(self.x, &self.path(&work), self.v)?;
            work[p] = theta[p];
            for i in 0..big_n {
                g[(i, p)] = (plus[i] - minus[i]) / (2.0 * step);
            }
        }
        Ok(g)
    }

    /// Gauss-Newton direction `δ = -w + R G* S⁻¹ G w` with
    /// `w = θ + ρ R G* r` and `S = I/ρ + G R G*` (block-diagonal `R`).
    fn direction(
        &self,
        theta: &[f64],
        g: &DMatrix<f64>,
        res: &DVector<f64>,
        rho: f64,
    ) -> Result<DVector<f64>> {
        let n = self.grid.n();
        let big_n = g.nrows();
        let mut rg = DMatrix::zeros(theta.len(), big_n);
        for c in 0..self.d {
            let gc = g.columns(c * n, n);
            rg.rows_mut(c * n, n).copy_from(&(&self.r * gc.transpose()));
        }
        let w = DVector::from_column_slice(theta) + (&rg * res) * rho;
        let s = DMatrix::identity(big_n, big_n) / rho + g * &rg;
        let lu = s.lu();
        let z = lu
            .solve(&(g * &w))
            .ok_or_else(|| Error::Degenerate("singular Gauss-Newton system".into()))?;
        Ok(-w + rg * z)
    }
}

/// Minimises `‖h‖²` subject to `Φ_1(x; h) = y` by quadratic penalty with
/// `ρ`-escalation, warm-started from [`connecting_path`].
///
/// The reported path is the smaller-norm one among the optimizer output and
/// the warm start, restricted to those meeting `opts.residual_tol`; if
/// neither does, the optimizer output is reported with `converged = false`.
pub fn distance_optimize(
    x: &[f64],
    y: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    opts: &OptimizeOptions,
) -> Result<DistanceResult> {
    check_points(x, y, v)?;
    let dist = euclid(x, y);
    if dist > 1.0 + 1e-12 {
        return Err(invalid(
            "y",
            format!("|x - y| = {dist} exceeds the local range 1"),
        ));
    }
    if opts.rho_stages.is_empty() || opts.rho_stages.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("rho_stages", "need at least one positive penalty"));
    }
    let start = connecting_path(x, y, v, grid)?;
    let upper = cm_norm(&start, hurst)?.value;
    if x == y {
        return Ok(DistanceResult {
            x: x.to_vec(),
            y: y.to_vec(),
            upper_bound: 0.0,
            optimized: 0.0,
            endpoint_residual: 0.0,
            ratio: f64::NAN,
            grid_n: grid.n(),
            hurst,
            converged: true,
            iterations: 0,
            path: start,
        });
    }
    let gram = gram_cached(grid, hurst)?;
    let problem = Problem {
        x,
        y,
        v,
        grid,
        d: v.noise_dim(),
        r: gram.matrix().clone(),
        gram,
    };
    let start_theta = problem.theta(&start);
    let start_residual = problem.residual(&start_theta)?.norm();
    let mut theta = start_theta;
    let mut iterations = 0;
    for &rho in &opts.rho_stages {
        let mut f = problem.objective(&theta, rho)?;
        for _ in 0..opts.max_iter {
            let res = problem.residual(&theta)?;
            let g = problem.endpoint_jacobian(&theta, opts.fd_step)?;
            let (_, rinv_theta) = problem.quadratic(&theta);
            let grad = (DVector::from_vec(rinv_theta) + g.transpose() * &res * rho) * 2.0;
            if grad.norm() < opts.grad_tol {
                break;
            }
            iterations += 1;
            let delta = problem.direction(&theta, &g, &res, rho)?;
            let slope = grad.dot(&delta);
            if !(slope < 0.0) {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = theta
                    .iter()
                    .zip(delta.iter())
                    .map(|(t, d)| t + step * d)
                    .collect();
                let ft = problem.objective(&trial, rho)?;
                if ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft));
                    break;
                }
                step *= 0.5;
            }
            let Some((trial, ft)) = accepted else { break };
            let decrease = f - ft;
            theta = trial;
            f = ft;
            if decrease <= 1e-15 * f.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    let optimized = problem.quadratic(&theta).0.max(0.0).sqrt();
    let residual = problem.residual(&theta)?.norm();
    let tol = opts.residual_tol;
    let (path, optimized, residual) =
        if start_residual <= tol && (residual > tol || upper < optimized) {
            (start, upper, start_residual)
        } else {
            (problem.path(&theta), optimized, residual)
        };
    Ok(DistanceResult {
        x: x.to_vec(),
        y: y.to_vec(),
        upper_bound: upper,
        optimized,
        endpoint_residual: residual,
        ratio: optimized / dist,
        grid_n: grid.n(),
        hurst,
        converged: residual <= tol,
        iterations,
        path,
    })
}

/// `k` deterministic unit vectors in `R^n`: `±e_1` alternating for
/// `n = 1`, otherwise angles `2πj/k` in coordinate planes `(e_p, e_{p+1})`
/// taken in turn.
pub fn unit_directions(n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|j| {
            let mut u = vec![0.0; n];
            if n == 1 {
                u[0] = if j % 2 == 0 { 1.0 } else { -1.0 };
            } else {
                let plane = j % (n - 1);
                let angle = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                u[plane] = angle.cos();
                u[plane + 1] = angle.sin();
            }
            u
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub radius: f64,
    pub dir_index: usize,
    pub result: DistanceResult,
}

#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    /// Ordered by radius index, then direction index.
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn min_ratio(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.result.ratio)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_ratio(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.result.ratio)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `C` with every ratio in `[1/C, C]`.
    pub fn fitted_constant(&self) -> f64 {
        self.max_ratio().max(1.0 / self.min_ratio()).max(1.0)
    }

    pub fn max_residual(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.result.endpoint_residual)
            .fold(0.0, f64::max)
    }

    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(|c| c.result.converged)
    }
}

/// Runs [`distance_optimize`] for `y = x + r u` over all radii and
/// directions, in parallel.
#[allow(clippy::too_many_arguments)]
pub fn comparison_sweep(
    x: &[f64],
    radii: &[f64],
    directions: &[Vec<f64>],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    opts: &OptimizeOptions,
) -> Result<SweepTable> {
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(invalid("radii", format!("radius {r} is not in (0, 1]")));
    }
    for (i, u) in directions.iter().enumerate() {
        let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        if u.len() != x.len() || (norm - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "directions",
                format!("direction {i} is not a unit vector in R^{}", x.len()),
            ));
        }
    }
    let jobs: Vec<(f64, usize)> = radii
        .iter()
        .flat_map(|&r| (0..directions.len()).map(move |k| (r, k)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(radius, dir_index)| {
            let y: Vec<f64> = x
                .iter()
                .zip(&directions[dir_index])
                .map(|(a, u)| a + radius * u)
                .collect();
            distance_optimize(x, &y, v, grid, hurst, opts).map(|result| SweepCell {
                radius,
                dir_index,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::cov;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n).unwrap()
    }

    fn hurst(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    #[test]
    fn identity_connecting_path_is_linear() {
        let g = grid(16);
        let (x, y) = ([0.5, -1.0], [0.8, -0.6]);
        let h = connecting_path(&x, &y, &VectorFieldSet::identity(2), g).unwrap();
        for k in 0..=16 {
            let t = g.node(k);
            assert!((h.at(k)[0] - t * 0.3).abs() < 1e-14);
            assert!((h.at(k)[1] - t * 0.4).abs() < 1e-14);
        }
        assert!(connecting_path(&x, &x, &VectorFieldSet::identity(2), g)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn scalar_constant_field_reaches_target() {
        let g = grid(64);
        let sigma = 2.5;
        let v = VectorFieldSet::constant(DMatrix::from_element(1, 1, sigma)).unwrap();
        let h = connecting_path(&[0.1], &[0.7], &v, g).unwrap();
        for k in 0..=64 {
            assert!((h.at(k)[0] - g.node(k) * 0.6 / sigma).abs() < 1e-14);
        }
        let end = ito_endpoint(&[0.1], &h, &v).unwrap();
        assert!((end[0] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn singular_segment_rejected() {
        let v = VectorFieldSet::diagonal_linear(2);
        let err = connecting_path(&[0.0, 1.0], &[1.0, 1.0], &v, grid(8)).unwrap_err();
        assert!(matches!(err, Error::NotElliptic(_)));
    }

    #[test]
    fn upper_bound_examples() {
        let v = VectorFieldSet::identity(2);
        let (x, y) = ([0.0, 0.0], [0.6, 0.8]);
        let b = distance_upper(&x, &y, &v, grid(64), hurst(0.5)).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        assert_eq!(
            distance_upper(&x, &x, &v, grid(64), hurst(0.75)).unwrap(),
            0.0
        );

        // oracle: LU solve of the covariance system for the linear path
        let n = 256;
        let h = 0.75;
        let cov_m = DMatrix::from_fn(n, n, |i, j| {
            cov(
                (i + 1) as f64 / n as f64,
                (j + 1) as f64 / n as f64,
                hurst(h),
            )
        });
        let lin = DVector::from_fn(n, |i, _| (i + 1) as f64 / n as f64);
        let sol = cov_m.clone().lu().solve(&lin).unwrap();
        let oracle = lin.dot(&sol).sqrt();
        let b = distance_upper(&x, &y, &v, grid(n), hurst(h)).unwrap();
        assert!((1.0..=1.5).contains(&b), "{b}");
        assert!((b / oracle - 1.0).abs() < 1e-8, "{b} vs {oracle}");
    }

    #[test]
    fn identity_optimum_is_representer() {
        let v = VectorFieldSet::identity(2);
        let g = grid(64);
        for h in [0.5, 0.75] {
            let (x, y) = ([0.2, 0.1], [0.5, 0.5]);
            let r =
                distance_optimize(&x, &y, &v, g, hurst(h), &OptimizeOptions::default()).unwrap();
            assert!(r.converged);
            assert!((r.ratio - 1.0).abs() < 0.01, "H = {h}: {}", r.ratio);
            assert!(r.optimized <= r.upper_bound + 1e-6);
            for k in 0..=64 {
                let s = g.node(k);
                let rep = cov(s, 1.0, hurst(h));
                assert!((r.path.at(k)[0] - 0.3 * rep).abs() < 1e-4);
                assert!((r.path.at(k)[1] - 0.4 * rep).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn coincident_points_need_no_iterations() {
        let v = VectorFieldSet::sin_perturbed(2, 0.1).unwrap();
        let r = distance_optimize(
            &[0.3, 0.3],
            &[0.3, 0.3],
            &v,
            grid(16),
            hurst(0.6),
            &OptimizeOptions::default(),
        )
        .unwrap();
        assert_eq!((r.optimized, r.upper_bound, r.iterations), (0.0, 0.0, 0));
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn scalar_brownian_distance_matches_quadrature() {
        let eps = 0.1;
        let v = VectorFieldSet::sin_perturbed(1, eps).unwrap();
        for (x, y) in [(0.3, 0.4), (1.2, 1.1), (-2.0, -1.9)] {
            let r = distance_optimize(
                &[x],
                &[y],
                &v,
                grid(64),
                hurst(0.5),
                &OptimizeOptions::default(),
            )
            .unwrap();
            let oracle = simpson(|u| 1.0 / (1.0 + eps * u.sin()), x, y, 200).abs();
            assert!(r.converged);
            assert!(
                (r.optimized / oracle - 1.0).abs() < 0.01,
                "{} vs {oracle}",
                r.optimized
            );
            assert!(r.ratio >= 1.0 / 1.1 && r.ratio <= 1.0 / 0.9);
        }
    }

    #[test]
    fn sweep_examples() {
        let v = VectorFieldSet::identity(2);
        let dirs = unit_directions(2, 4);
        let empty = comparison_sweep(
            &[0.0, 0.0],
            &[],
            &dirs,
            &v,
            grid(32),
            hurst(0.75),
            &Default::default(),
        )
        .unwrap();
        assert!(empty.cells.is_empty());
        let t = comparison_sweep(
            &[0.0, 0.0],
            &[0.5, 0.1],
            &dirs,
            &v,
            grid(32),
            hurst(0.75),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(t.cells.len(), 8);
        assert_eq!((t.cells[5].radius, t.cells[5].dir_index), (0.1, 1));
        assert!(t.min_ratio() > 0.98 && t.max_ratio() < 1.02);
        assert!(comparison_sweep(
            &[0.0, 0.0],
            &[1.5],
            &dirs,
            &v,
            grid(8),
            hurst(0.75),
            &Default::default()
        )
        .is_err());
    }

    #[test]
    fn directions_are_unit() {
        for n in 1..4 {
            for u in unit_directions(n, 6) {
                assert!((u.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn connecting_path_hits_target(
            x in proptest::collection::vec(-3.0..3.0f64, 2),
            u in proptest::collection::vec(-0.7..0.7f64, 2),
            eps in -0.5..0.5f64,
        ) {
            let v = VectorFieldSet::sin_perturbed(2, eps).unwrap();
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + b).collect();
            let h = connecting_path(&x, &y, &v, grid(64)).unwrap();
            let end = ito_endpoint(&x, &h, &v).unwrap();
            prop_assert!(euclid(&end, &y) < 1e-4);
        }

        #[test]
        fn optimum_dominated_by_upper_bound(
            u in proptest::collection::vec(-0.4..0.4f64, 2),
            h in 0.4..0.8f64,
        ) {
            let v = VectorFieldSet::sin_perturbed(2, 0.2).unwrap();
            let x = [0.5, -0.5];
            let y = [x[0] + u[0], x[1] + u[1]];
            let r = distance_optimize(&x, &y, &v, grid(16), hurst(h), &OptimizeOptions::default()).unwrap();
            if r.converged {
                prop_assert!(r.optimized <= r.upper_bound + 1e-6);
            }
        }
    }
}
