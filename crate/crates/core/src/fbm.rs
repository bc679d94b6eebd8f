//! Fractional Brownian motion: covariance, Gram matrices and exact sampling.
//!
//! The Gram matrix is taken over the nodes `t_1..t_n` (the row at `t_0 = 0`
//! vanishes identically). Its lower Cholesky factor `L` is a discrete
//! Volterra kernel: `B = L ξ` with `ξ` standard normal has exactly the fBm
//! covariance on the grid, and row `i` of `L` plays the role of `K(t_i, ·)`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use once_cell::sync::Lazy;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Hurst, Path, TimeGrid};
use crate::rng::{stream_rng, substream, StreamRng};

/// Diagonal jitter ladder tried in order when the Gram matrix is not
/// numerically positive definite.
pub const JITTER_LADDER: [f64; 3] = [0.0, 1e-12, 1e-10];

/// Paths generated per RNG sub-stream.
pub const BATCH: usize = 1024;

/// `R(s, t) = ½ (s^{2H} + t^{2H} - |s - t|^{2H})`.
pub fn cov(s: f64, t: f64, hurst: Hurst) -> f64 {
    let two_h = 2.0 * hurst.value();
    0.5 * (s.powf(two_h) + t.powf(two_h) - (s - t).abs().powf(two_h))
}

/// Covariance of the increments over cells `i` and `j` of a grid with step
/// `dt`: `½ dt^{2H} (|m+1|^{2H} - 2|m|^{2H} + |m-1|^{2H})`, `m = i - j`.
pub fn increment_cov(m: i64, dt: f64, hurst: Hurst) -> f64 {
    let two_h = 2.0 * hurst.value();
    let m = m.unsigned_abs() as f64;
    let p = |x: f64| x.abs().powf(two_h);
    0.5 * dt.powf(two_h) * (p(m + 1.0) - 2.0 * p(m) + p(m - 1.0))
}

/// Gram matrix of fBm over `t_1..t_n` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovGram {
    grid: TimeGrid,
    hurst: Hurst,
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
    /// Lower triangle of `chol`, packed row by row.
    packed: Vec<f64>,
    jitter_used: f64,
}

impl CovGram {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular `L` with `L L* = matrix + jitter_used I`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// `R⁻¹ v` for `v` indexed by `t_1..t_n`.
    pub fn solve(&self, v: &[f64]) -> DVector<f64> {
        let mut x = DVector::from_column_slice(v);
        self.chol.solve_lower_triangular_mut(&mut x);
        self.chol.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `R v`.
    pub fn apply(&self, v: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(v)
    }

    /// `v* R⁻¹ v = |L⁻¹ v|²`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut x = DVector::from_column_slice(v);
        self.chol.solve_lower_triangular_mut(&mut x);
        x.norm_squared()
    }

    /// Writes `L ξ` into `out` (length `n`) for fresh standard normals `ξ`.
    pub fn sample_into(&self, rng: &mut StreamRng, xi: &mut [f64], out: &mut [f64]) {
        let n = self.grid.n();
        for v in xi.iter_mut().take(n) {
            *v = rng.sample(StandardNormal);
        }
        let mut offset = 0;
        for i in 0..n {
            let row = &self.packed[offset..offset + i + 1];
            out[i] = row.iter().zip(&xi[..=i]).map(|(l, x)| l * x).sum();
            offset += i + 1;
        }
    }
}

fn factorize(matrix: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = matrix.nrows();
    for jitter in JITTER_LADDER {
        let m = if jitter == 0.0 {
            matrix.clone()
        } else {
            matrix + DMatrix::identity(n, n) * jitter
        };
        if let Some(c) = m.cholesky() {
            return Some((c.l(), jitter));
        }
    }
    None
}

/// Covariance Gram over arbitrary positive times, with factor and jitter.
pub fn gram_on_times(times: &[f64], hurst: Hurst) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let n = times.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| cov(times[i], times[j], hurst));
    let (chol, jitter) = factorize(&matrix).ok_or(Error::Factorization {
        n,
        hurst: hurst.value(),
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })?;
    Ok((matrix, chol, jitter))
}

fn pack(chol: &DMatrix<f64>) -> Vec<f64> {
    let n = chol.nrows();
    let mut packed = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            packed.push(chol[(i, j)]);
        }
    }
    packed
}

/// Gram matrix of fBm on `grid` (nodes `t_1..t_n`) with Cholesky factor.
pub fn gram(grid: TimeGrid, hurst: Hurst) -> Result<CovGram> {
    let times: Vec<f64> = (1..=grid.n()).map(|k| grid.node(k)).collect();
    let (matrix, chol, jitter_used) = gram_on_times(&times, hurst)?;
    Ok(CovGram {
        grid,
        hurst,
        packed: pack(&chol),
        matrix,
        chol,
        jitter_used,
    })
}

type GramKey = (usize, u64);
static GRAM_CACHE: Lazy<RwLock<HashMap<GramKey, Arc<CovGram>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// [`gram`] memoised per `(n, H)`.
pub fn gram_cached(grid: TimeGrid, hurst: Hurst) -> Result<Arc<CovGram>> {
    let key = (grid.n(), hurst.value().to_bits());
    if let Some(g) = GRAM_CACHE.read().expect("gram cache poisoned").get(&key) {
        return Ok(Arc::clone(g));
    }
    let g = Arc::new(gram(grid, hurst)?);
    GRAM_CACHE
        .write()
        .expect("gram cache poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&g));
    Ok(g)
}

/// Draws one `d`-dimensional discrete fBm path (independent components,
/// `B_0 = 0`) into `path`.
pub fn sample_path_into(
    gram: &CovGram,
    rng: &mut StreamRng,
    scratch: &mut Scratch,
    path: &mut Path,
) {
    let n = gram.grid().n();
    let d = path.dim();
    for j in 0..d {
        gram.sample_into(rng, &mut scratch.xi, &mut scratch.out);
        let values = path.values_mut();
        values[j] = 0.0;
        for k in 0..n {
            values[(k + 1) * d + j] = scratch.out[k];
        }
    }
}

/// Per-thread buffers for [`sample_path_into`].
pub struct Scratch {
    xi: Vec<f64>,
    out: Vec<f64>,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            xi: vec![0.0; n],
            out: vec![0.0; n],
        }
    }
}

/// Runs `f` on `count` i.i.d. fBm paths and collects the results in path
/// order. Paths are generated in batches of [`BATCH`], batch `b` drawing from
/// sub-stream `substream(stream, b)`, so the output is independent of thread
/// scheduling.
pub fn map_paths<T, F>(
    grid: TimeGrid,
    hurst: Hurst,
    d: usize,
    count: usize,
    seed: u64,
    stream: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Path) -> T + Sync,
{
    if d == 0 {
        return Err(invalid("d", "driving dimension must be positive"));
    }
    let gram = gram_cached(grid, hurst)?;
    let batches = count.div_ceil(BATCH);
    let out: Vec<Vec<T>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, substream(stream, b as u64));
            let mut scratch = Scratch::new(grid.n());
            let mut path = Path::zeros(grid, d);
            let len = BATCH.min(count - b * BATCH);
            (0..len)
                .map(|_| {
                    sample_path_into(&gram, &mut rng, &mut scratch, &mut path);
                    f(&path)
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// `count` i.i.d. `d`-dimensional discrete fBm paths on `grid`.
pub fn sample_paths(
    grid: TimeGrid,
    hurst: Hurst,
    d: usize,
    count: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Path>> {
    map_paths(grid, hurst, d, count, seed, stream, Path::clone)
}

/// Empirical covariance of component 0 of `paths` at node pairs `(i, j)`,
/// `1 <= i <= j <= n`, with the Monte Carlo standard error of each entry.
#[derive(Debug, Clone)]
pub struct CovarianceCheck {
    pub rows: Vec<CovarianceEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct CovarianceEntry {
    pub s: f64,
    pub t: f64,
    pub empirical: f64,
    pub exact: f64,
    pub stderr: f64,
}

impl CovarianceEntry {
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.exact).abs() / self.stderr
    }
}

impl CovarianceCheck {
    /// Streams `count` paths and accumulates centered cross-moments.
    pub fn run(grid: TimeGrid, hurst: Hurst, count: usize, seed: u64, stream: u64) -> Result<Self> {
        if count < 2 {
            return Err(invalid("count", "need at least two paths"));
        }
        let n = grid.n();
        let samples: Vec<Vec<f64>> = map_paths(grid, hurst, 1, count, seed, stream, |p| {
            p.values()[1..].to_vec()
        })?;
        let m = count as f64;
        let mut mean = vec![0.0; n];
        for s in &samples {
            for (acc, v) in mean.iter_mut().zip(s) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut rows = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for s in &samples {
                    let p = (s[i] - mean[i]) * (s[j] - mean[j]);
                    s1 += p;
                    s2 += p * p;
                }
                let emp = s1 / (m - 1.0);
                let var = (s2 / m - (s1 / m).powi(2)).max(0.0) * m / (m - 1.0);
                rows.push(CovarianceEntry {
                    s: grid.node(i + 1),
                    t: grid.node(j + 1),
                    empirical: emp,
                    exact: cov(grid.node(i + 1), grid.node(j + 1), hurst),
                    stderr: (var / m).sqrt(),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn max_z(&self) -> f64 {
        self.rows
            .iter()
            .map(CovarianceEntry::z_score)
            .fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.empirical - r.exact).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(v: f64) -> Hurst {
        Hurst::new(v).unwrap()
    }

    #[test]
    fn cov_examples() {
        for hv in [0.1, 0.5, 0.9] {
            assert_eq!(cov(1.0, 1.0, h(hv)), 1.0);
        }
        assert!((cov(0.3, 0.7, h(0.5)) - 0.3).abs() < 1e-15);
        assert!((cov(0.5, 0.5, h(0.25)) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn cov_symmetric(s in 0.0..=1.0f64, t in 0.0..=1.0f64, hv in 0.01..0.99f64) {
            prop_assert_eq!(cov(s, t, h(hv)), cov(t, s, h(hv)));
        }

        #[test]
        fn brownian_cov_is_min(s in 0.0..=1.0f64, t in 0.0..=1.0f64) {
            prop_assert!((cov(s, t, h(0.5)) - s.min(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn gram_small_examples() {
        let g = gram(TimeGrid::new(1).unwrap(), h(0.5)).unwrap();
        assert_eq!(g.matrix()[(0, 0)], 1.0);
        assert_eq!(g.chol()[(0, 0)], 1.0);
        let g = gram(TimeGrid::new(2).unwrap(), h(0.5)).unwrap();
        assert_eq!(
            g.matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 1.0])
        );
    }

    #[test]
    fn gram_factor_reconstructs() {
        let g = gram(TimeGrid::new(16).unwrap(), h(0.75)).unwrap();
        assert_eq!(g.jitter_used(), 0.0);
        let rec = g.chol() * g.chol().transpose();
        let err = (rec - g.matrix()).abs().max();
        assert!(err < 1e-10, "{err}");
        // causality: strictly upper part vanishes
        for i in 0..16 {
            for j in i + 1..16 {
                assert_eq!(g.chol()[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn increment_cov_sums_to_gram() {
        let grid = TimeGrid::new(8).unwrap();
        let hv = h(0.3);
        // Var(B_1) = Σ_{ij} Cov(ΔB_i, ΔB_j) = 1
        let mut total = 0.0;
        for i in 0..8i64 {
            for j in 0..8i64 {
                total += increment_cov(i - j, grid.dt(), hv);
            }
        }
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn sampling_is_deterministic_and_starts_at_zero() {
        let grid = TimeGrid::new(8).unwrap();
        let a = sample_paths(grid, h(0.6), 2, 1500, 42, 0).unwrap();
        let b = sample_paths(grid, h(0.6), 2, 1500, 42, 0).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.start() == [0.0, 0.0]));
        let c = sample_paths(grid, h(0.6), 2, 10, 42, 1).unwrap();
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn endpoint_moments() {
        let grid = TimeGrid::new(4).unwrap();
        let count = 100_000;
        for hv in [0.5, 0.75] {
            let ends: Vec<(f64, f64)> = map_paths(grid, h(hv), 1, count, 9, 0, |p| {
                (p.values()[2], p.values()[4])
            })
            .unwrap();
            let m = count as f64;
            let var1 = ends.iter().map(|e| e.1 * e.1).sum::<f64>() / m;
            let cov_half = ends.iter().map(|e| e.0 * e.1).sum::<f64>() / m;
            assert!((var1 - 1.0).abs() < 0.02, "{var1}");
            // oracle: the covariance function itself
            assert!((cov_half - cov(0.5, 1.0, h(hv))).abs() < 0.02, "{cov_half}");
        }
    }
}
