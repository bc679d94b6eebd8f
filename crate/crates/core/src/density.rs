//! Monte Carlo transition densities `p(t, x, y)` of `dX = V(X) dB`.
//!
//! By self-similarity of fBm, `X_t` has the law of `Φ_1(x; t^H B)`, so every
//! horizon is simulated on `[0, 1]` with the driver scaled by `ε = t^H`
//! (a drift picks up `ε^{1/H} Δt = t Δt`). Densities are product-Gaussian
//! kernel estimates with Silverman bandwidths; standard errors come from
//! batch means over [`KDE_BATCHES`] contiguous batches.
//!
//! All experiments at different horizons reuse the same fBm draws (common
//! random numbers), which keeps ratios across `t` stable.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::distance::{distance_optimize, DistanceResult, OptimizeOptions};
use crate::error::{invalid, Error, Result};
use crate::fbm::{gram_on_times, map_paths, BATCH};
use crate::fields::VectorFieldSet;
use crate::grid::{Hurst, Path, TimeGrid};
use crate::rng::{stream_rng, substream};
use crate::sde::{sde_endpoint, Scheme};

pub const DENSITY_STREAM: u64 = 7;
pub const DIRECT_STREAM: u64 = 8;
pub const KDE_BATCHES: usize = 10;
pub const MIN_KDE_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    /// Per-dimension kernel widths.
    pub bandwidth: Vec<f64>,
    pub sample_count: usize,
    pub mc_stderr: f64,
    pub y: Vec<f64>,
    pub t: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub hurst: Option<Hurst>,
}

impl DensityEstimate {
    pub fn with_context(mut self, t: f64, x: &[f64], hurst: Hurst) -> Self {
        self.t = Some(t);
        self.x = Some(x.to_vec());
        self.hurst = Some(hurst);
        self
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(invalid("t", format!("horizon {t} is not in (0, 1]")))
    }
}

fn check_state(x: &[f64], v: &VectorFieldSet) -> Result<()> {
    if x.len() != v.state_dim() {
        return Err(Error::Dimension(format!(
            "x has {} components, field `{}` acts on R^{}",
            x.len(),
            v.name(),
            v.state_dim()
        )));
    }
    Ok(())
}

/// `count` draws of `Φ_1(x; t^H B)` (drift included when `v` has one).
#[allow(clippy::too_many_arguments)]
pub fn sample_endpoints(
    t: f64,
    x: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    count: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Vec<f64>>> {
    check_horizon(t)?;
    check_state(x, v)?;
    Scheme::for_hurst(hurst)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let eps = t.powf(hurst.value());
    map_paths(grid, hurst, v.noise_dim(), count, seed, stream, |b| {
        if eps == 1.0 {
            sde_endpoint(x, b, v, hurst, eps)
        } else {
            sde_endpoint(x, &b.scaled(eps), v, hurst, eps)
        }
    })?
    .into_iter()
    .collect()
}

/// `count` draws of `X_t` from fBm sampled directly at `t k / n`.
#[allow(clippy::too_many_arguments)]
pub fn sample_endpoints_direct(
    t: f64,
    x: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    count: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Vec<f64>>> {
    check_horizon(t)?;
    check_state(x, v)?;
    Scheme::for_hurst(hurst)?;
    let n = grid.n();
    let d = v.noise_dim();
    let times: Vec<f64> = (1..=n).map(|k| t * grid.node(k)).collect();
    let (_, chol, _) = gram_on_times(&times, hurst)?;
    // the drift step is ε^{1/H} Δt = t / n with ε = t^H
    let eps = t.powf(hurst.value());
    let batches = count.div_ceil(BATCH);
    let out: Vec<Vec<Result<Vec<f64>>>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, substream(stream, b as u64));
            let mut xi = vec![0.0; n];
            let mut path = Path::zeros(grid, d);
            let len = BATCH.min(count - b * BATCH);
            (0..len)
                .map(|_| {
                    for j in 0..d {
                        xi.iter_mut().for_each(|z| *z = rng.sample(StandardNormal));
                        for i in 0..n {
                            let row = chol.row(i);
                            let s: f64 = (0..=i).map(|c| row[c] * xi[c]).sum();
                            path.at_mut(i + 1)[j] = s;
                        }
                    }
                    sde_endpoint(x, &path, v, hurst, eps)
                })
                .collect()
        })
        .collect();
    out.into_iter().flatten().collect()
}

fn silverman_factor(dim: usize) -> f64 {
    let nd = dim as f64;
    (4.0 / (nd + 2.0)).powf(1.0 / (nd + 4.0))
}

/// Product-Gaussian kernel estimate of the sample density at `y`.
pub fn kde_at(samples: &[Vec<f64>], y: &[f64]) -> Result<DensityEstimate> {
    let count = samples.len();
    if count < MIN_KDE_SAMPLES {
        return Err(invalid(
            "count",
            format!("kernel estimate needs at least {MIN_KDE_SAMPLES} samples, got {count}"),
        ));
    }
    let dim = y.len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Dimension(format!(
            "samples and y must live in R^{dim}"
        )));
    }
    let m = count as f64;
    let mut bandwidth = Vec::with_capacity(dim);
    for j in 0..dim {
        let mean = samples.iter().map(|s| s[j]).sum::<f64>() / m;
        let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let sd = var.sqrt();
        if !(sd > 1e-12 * (1.0 + mean.abs())) {
            return Err(Error::Degenerate(format!(
                "sample standard deviation {sd:e} in dimension {j}"
            )));
        }
        bandwidth.push(silverman_factor(dim) * sd * m.powf(-1.0 / (dim as f64 + 4.0)));
    }
    let norm: f64 = bandwidth
        .iter()
        .map(|b| 1.0 / (b * (2.0 * std::f64::consts::PI).sqrt()))
        .product();
    let kernel = |s: &Vec<f64>| -> f64 {
        let q: f64 = (0..dim)
            .map(|j| ((y[j] - s[j]) / bandwidth[j]).powi(2))
            .sum();
        norm * (-0.5 * q).exp()
    };
    let values: Vec<f64> = samples.iter().map(kernel).collect();
    let value = values.iter().sum::<f64>() / m;
    let per = count / KDE_BATCHES;
    let means: Vec<f64> = (0..KDE_BATCHES)
        .map(|b| {
            let end = if b + 1 == KDE_BATCHES {
                count
            } else {
                (b + 1) * per
            };
            let chunk = &values[b * per..end];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let bm = means.iter().sum::<f64>() / KDE_BATCHES as f64;
    let bvar = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (KDE_BATCHES as f64 - 1.0);
    Ok(DensityEstimate {
        value,
        bandwidth,
        sample_count: count,
        mc_stderr: (bvar / KDE_BATCHES as f64).sqrt(),
        y: y.to_vec(),
        t: None,
        x: None,
        hurst: None,
    })
}

#[derive(Debug, Clone)]
pub struct LowerBoundRow {
    pub t: f64,
    /// `|y - x| = t^H`.
    pub y_offset: f64,
    pub estimate: DensityEstimate,
    /// `p̂ t^{NH}`.
    pub scaled: f64,
    pub scaled_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct LowerBoundTable {
    pub rows: Vec<LowerBoundRow>,
    pub state_dim: usize,
}

impl LowerBoundTable {
    /// `min_t (p̂ t^{NH} - 3 se)`.
    pub fn min_lower(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.scaled - 3.0 * r.scaled_stderr)
            .fold(f64::INFINITY, f64::min)
    }

    /// `p̂ t^{NH}` at the last horizon over the first.
    pub fn last_over_first(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.scaled / a.scaled,
            _ => f64::NAN,
        }
    }

    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.min_lower() > 0.0 && self.last_over_first() >= 0.5
    }
}

/// `p̂(t, x, x + t^H u) t^{NH}` for each `t` in `t_list`.
#[allow(clippy::too_many_arguments)]
pub fn lower_bound_check(
    x: &[f64],
    u: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    t_list: &[f64],
    count: usize,
    seed: u64,
) -> Result<LowerBoundTable> {
    check_state(x, v)?;
    let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
    if u.len() != x.len() || (norm - 1.0).abs() > 1e-9 {
        return Err(invalid(
            "u",
            "direction must be a unit vector in the state space",
        ));
    }
    let nh = x.len() as f64 * hurst.value();
    let rows = t_list
        .iter()
        .map(|&t| {
            let samples = sample_endpoints(t, x, v, grid, hurst, count, seed, DENSITY_STREAM)?;
            let offset = t.powf(hurst.value());
            let y: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + offset * b).collect();
            let estimate = kde_at(&samples, &y)?.with_context(t, x, hurst);
            let scale = t.powf(nh);
            Ok(LowerBoundRow {
                t,
                y_offset: offset,
                scaled: estimate.value * scale,
                scaled_stderr: estimate.mc_stderr * scale,
                estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LowerBoundTable {
        rows,
        state_dim: x.len(),
    })
}

#[derive(Debug, Clone)]
pub struct VaradhanRow {
    pub t: f64,
    pub estimate: DensityEstimate,
    /// `t^{2H} log p̂`; `None` when `p̂ = 0`.
    pub scaled_log: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VaradhanTable {
    pub rows: Vec<VaradhanRow>,
    pub distance: DistanceResult,
    /// `-d̂(x, y)² / 2` from the optimized distance.
    pub target: f64,
}

/// `t^{2H} log p̂(t, x, y)` against `-d̂(x, y)²/2`.
#[allow(clippy::too_many_arguments)]
pub fn varadhan_diagnostic(
    x: &[f64],
    y: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    t_list: &[f64],
    count: usize,
    seed: u64,
    opts: &OptimizeOptions,
) -> Result<VaradhanTable> {
    let distance = distance_optimize(x, y, v, grid, hurst, opts)?;
    let rows = t_list
        .iter()
        .map(|&t| {
            let samples = sample_endpoints(t, x, v, grid, hurst, count, seed, DENSITY_STREAM)?;
            let estimate = kde_at(&samples, y)?.with_context(t, x, hurst);
            let scaled_log =
                (estimate.value > 0.0).then(|| t.powf(2.0 * hurst.value()) * estimate.value.ln());
            Ok(VaradhanRow {
                t,
                estimate,
                scaled_log,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VaradhanTable {
        target: -0.5 * distance.optimized.powi(2),
        distance,
        rows,
    })
}

/// Sample mean and covariance with standard errors.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub cov_se: DMatrix<f64>,
}

impl Moments {
    pub fn of(samples: &[Vec<f64>]) -> Result<Self> {
        let m = samples.len();
        if m < 2 {
            return Err(invalid("count", "moments need at least two samples"));
        }
        let dim = samples[0].len();
        let mf = m as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / mf)
            .collect();
        let mut cov = DMatrix::zeros(dim, dim);
        let mut cov_se = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let prods: Vec<f64> = samples
                    .iter()
                    .map(|s| (s[i] - mean[i]) * (s[j] - mean[j]))
                    .collect();
                let c = prods.iter().sum::<f64>() / (mf - 1.0);
                let var = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (mf - 1.0);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
                cov_se[(i, j)] = (var / mf).sqrt();
                cov_se[(j, i)] = cov_se[(i, j)];
            }
        }
        let mean_se = (0..dim).map(|j| (cov[(j, j)] / mf).sqrt()).collect();
        Ok(Self {
            mean,
            mean_se,
            cov,
            cov_se,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScalingCheck {
    pub t: f64,
    pub scaled: Moments,
    pub direct: Moments,
    /// Largest `|a - b| / sqrt(se_a² + se_b²)` over means and covariances.
    pub max_z: f64,
}

impl ScalingCheck {
    pub fn passed(&self) -> bool {
        self.max_z <= 3.0
    }
}

/// Compares moments of `Φ_1(x; t^H B)` with a direct solve on `[0, t]`,
/// each from `count` independent draws.
#[allow(clippy::too_many_arguments)]
pub fn scaling_check(
    t: f64,
    x: &[f64],
    v: &VectorFieldSet,
    grid: TimeGrid,
    hurst: Hurst,
    count: usize,
    seed: u64,
) -> Result<ScalingCheck> {
    let a = Moments::of(&sample_endpoints(
        t,
        x,
        v,
        grid,
        hurst,
        count,
        seed,
        DENSITY_STREAM,
    )?)?;
    let b = Moments::of(&sample_endpoints_direct(
        t,
        x,
        v,
        grid,
        hurst,
        count,
        seed,
        DIRECT_STREAM,
    )?)?;
    let z = |u: f64, w: f64, su: f64, sw: f64| (u - w).abs() / (su * su + sw * sw).sqrt();
    let dim = x.len();
    let mut max_z = 0.0f64;
    for i in 0..dim {
        max_z = max_z.max(z(a.mean[i], b.mean[i], a.mean_se[i], b.mean_se[i]));
        for j in i..dim {
            max_z = max_z.max(z(
                a.cov[(i, j)],
                b.cov[(i, j)],
                a.cov_se[(i, j)],
                b.cov_se[(i, j)],
            ));
        }
    }
    Ok(ScalingCheck {
        t,
        scaled: a,
        direct: b,
        max_z,
    })
}
